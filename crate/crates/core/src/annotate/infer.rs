use alloc::vec::Vec;

use super::{AnnotateError, Poi, PoiActivityProfile, TemporalPrior};
use crate::math;
use crate::staypoint::{haversine_m, local_day, StayPoint};
use crate::{ActivityCode, NUM_ACTIVITY_TYPES, SLOT_MINUTES};

#[derive(Clone, Debug, PartialEq)]
pub struct Inference {
    pub code: ActivityCode,
    /// Normalized over the 15 codes.
    pub posterior: [f64; NUM_ACTIVITY_TYPES],
    /// Set when no evidence reached the stay and the answer is the fallback.
    pub low_confidence: bool,
}

impl Inference {
    fn fallback() -> Self {
        Self {
            code: ActivityCode::OTHER,
            posterior: [1.0 / NUM_ACTIVITY_TYPES as f64; NUM_ACTIVITY_TYPES],
            low_confidence: true,
        }
    }
}

/// score(T) = Σ w · P(T | poi) · P(slot | T), normalized. Ties go to the
/// lower code.
pub fn posterior_from_weights(
    evidence: &[(f64, &PoiActivityProfile)],
    slot: usize,
    prior: &TemporalPrior,
) -> Inference {
    let mut score = [0.0; NUM_ACTIVITY_TYPES];
    for &(w, profile) in evidence {
        for c in &profile.candidates {
            score[c.code.index()] += w * c.probability;
        }
    }
    for code in ActivityCode::all() {
        score[code.index()] *= prior.likelihood(code, slot);
    }
    let total: f64 = score.iter().sum();
    if !(total > 0.0 && total.is_finite()) {
        return Inference::fallback();
    }
    let mut best = 0;
    for i in 1..NUM_ACTIVITY_TYPES {
        if score[i] > score[best] {
            best = i;
        }
    }
    score.iter_mut().for_each(|s| *s /= total);
    Inference {
        code: ActivityCode::from_index(best),
        posterior: score,
        low_confidence: false,
    }
}

/// Distance-weighted Bayesian pick for one stay. POIs farther than
/// `radius_m` are ignored; the rest weigh `exp(-d / (radius_m / 2))`.
/// The stay's slot is its local arrival time.
pub fn infer_activity(
    stay: &StayPoint,
    nearby: &[(&Poi, &PoiActivityProfile)],
    prior: &TemporalPrior,
    radius_m: f64,
    utc_offset_s: i64,
) -> Result<Inference, AnnotateError> {
    if !(radius_m > 0.0 && radius_m.is_finite()) {
        return Err(AnnotateError::InvalidRadius(radius_m));
    }
    let sigma = radius_m / 2.0;
    let evidence: Vec<(f64, &PoiActivityProfile)> = nearby
        .iter()
        .filter_map(|&(poi, profile)| {
            let d = haversine_m(stay.centroid(), (poi.lat, poi.lon));
            (d <= radius_m).then(|| (math::exp(-d / sigma), profile))
        })
        .collect();
    if evidence.is_empty() {
        return Ok(Inference::fallback());
    }
    Ok(posterior_from_weights(
        &evidence,
        arrival_slot(stay, utc_offset_s),
        prior,
    ))
}

pub(crate) fn arrival_slot(stay: &StayPoint, utc_offset_s: i64) -> usize {
    let (day, _) = local_day(stay.arrive, utc_offset_s);
    let since_midnight = stay.arrive + utc_offset_s - day * 86_400;
    (since_midnight / 60 / i64::from(SLOT_MINUTES)) as usize
}
