//! Planted-label recovery on a generated population, and random cases for
//! the weight-rescaling property of the posterior.

use std::collections::BTreeMap;

use mobfuse_core::annotate::{
    build_temporal_prior, infer_activity, posterior_from_weights, Candidate, PoiActivityProfile,
    PoiIndex, TemporalPrior,
};
use mobfuse_core::staypoint::{detect_stays, ExtractConfig, GpsPoint};
use mobfuse_core::synth::{gen_population, SyntheticPopulationSpec};
use mobfuse_core::ActivityCode;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub struct Recovery {
    pub stays: usize,
    pub recovered: usize,
    pub unmatched: usize,
}

/// Detect stays in the generated traces, label each with the planted visit
/// it overlaps most and count how often the inferred code agrees. The
/// temporal prior comes from the generated chains themselves.
pub fn planted_recovery(agents: usize, days: usize, seed: u64, radius_m: f64) -> Recovery {
    let spec = SyntheticPopulationSpec::default_la(agents, days);
    let pop = gen_population(&spec, seed).unwrap();
    let prior = build_temporal_prior(&pop.chains()).unwrap();
    let index = PoiIndex::new(pop.pois.iter().map(|p| (p.lat, p.lon)).collect(), radius_m);
    let cfg = ExtractConfig {
        utc_offset_hours: f64::from(spec.utc_offset_hours),
        ..ExtractConfig::default()
    };
    let offset_s = i64::from(spec.utc_offset_hours) * 3600;

    let mut traces: BTreeMap<&str, Vec<GpsPoint>> = BTreeMap::new();
    for p in &pop.gps {
        traces
            .entry(p.agent_id.as_str())
            .or_default()
            .push(p.clone());
    }
    let mut out = Recovery {
        stays: 0,
        recovered: 0,
        unmatched: 0,
    };
    for (agent, points) in traces {
        let visits: Vec<_> = pop.visits.iter().filter(|v| v.agent_id == agent).collect();
        for stay in detect_stays(&points, &cfg).unwrap() {
            let overlap = |s: i64, e: i64| (stay.depart.min(e) - stay.arrive.max(s)).max(0);
            let Some(visit) = visits
                .iter()
                .filter(|v| overlap(v.start, v.end) > 0)
                .max_by_key(|v| overlap(v.start, v.end))
            else {
                out.unmatched += 1;
                continue;
            };
            let near: Vec<_> = index
                .within(stay.centroid_lat, stay.centroid_lon, radius_m)
                .into_iter()
                .map(|(i, _)| (&pop.pois[i], &pop.profiles[i]))
                .collect();
            let inf = infer_activity(&stay, &near, &prior, radius_m, offset_s).unwrap();
            out.stays += 1;
            out.recovered += usize::from(inf.code == visit.code);
        }
    }
    out
}

/// Scaling every evidence weight by the same positive factor must not
/// change the chosen code. Returns the two codes.
pub fn rescaling_case(seed: u64) -> (ActivityCode, ActivityCode) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let profiles: Vec<PoiActivityProfile> = (0..rng.random_range(1..6))
        .map(|i| {
            let n = rng.random_range(1..=3);
            let mut left = 1.0;
            let candidates = (0..n)
                .map(|j| {
                    let probability = if j + 1 == n {
                        left
                    } else {
                        rng.random_range(0.0..left)
                    };
                    left -= probability;
                    Candidate {
                        code: ActivityCode::from_index(rng.random_range(0..15)),
                        probability,
                    }
                })
                .collect();
            PoiActivityProfile {
                poi_id: format!("p{i}"),
                candidates,
            }
        })
        .collect();
    let weights: Vec<f64> = profiles
        .iter()
        .map(|_| rng.random_range(0.01..1.0))
        .collect();
    let prior = TemporalPrior::from_weights(
        (0..15)
            .map(|_| std::array::from_fn(|_| rng.random_range(0.1..5.0)))
            .collect(),
    )
    .unwrap();
    let slot = rng.random_range(0..96);
    let scale = 10f64.powf(rng.random_range(-3.0..3.0));
    let ev = |s: f64| -> Vec<(f64, &PoiActivityProfile)> {
        weights.iter().map(|w| w * s).zip(&profiles).collect()
    };
    (
        posterior_from_weights(&ev(1.0), slot, &prior).code,
        posterior_from_weights(&ev(scale), slot, &prior).code,
    )
}
