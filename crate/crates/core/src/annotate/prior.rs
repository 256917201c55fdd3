use alloc::collections::BTreeMap;
use alloc::string::{String, ToString};
use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use super::AnnotateError;
use crate::{ActivityChain, ActivityCode, NUM_ACTIVITY_TYPES, SLOTS_PER_DAY, SLOT_MINUTES};

/// P(start slot | activity type), one normalized 96-vector per code.
///
/// Serialized as `{"1": [96 floats], …, "15": [...]}`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(
    try_from = "BTreeMap<String, Vec<f64>>",
    into = "BTreeMap<String, Vec<f64>>"
)]
pub struct TemporalPrior {
    rows: Vec<[f64; SLOTS_PER_DAY]>,
}

impl TemporalPrior {
    pub fn flat() -> Self {
        Self {
            rows: vec![[1.0 / SLOTS_PER_DAY as f64; SLOTS_PER_DAY]; NUM_ACTIVITY_TYPES],
        }
    }

    /// Build from unnormalized non-negative weights; each row is normalized.
    pub fn from_weights(rows: Vec<[f64; SLOTS_PER_DAY]>) -> Result<Self, AnnotateError> {
        if rows.len() != NUM_ACTIVITY_TYPES {
            return Err(AnnotateError::InvalidPrior(
                "need one row per activity code",
            ));
        }
        let mut rows = rows;
        for row in rows.iter_mut() {
            if row.iter().any(|v| !v.is_finite() || *v < 0.0) {
                return Err(AnnotateError::InvalidPrior(
                    "weights must be finite and non-negative",
                ));
            }
            let sum: f64 = row.iter().sum();
            if sum <= 0.0 {
                return Err(AnnotateError::InvalidPrior("row has zero mass"));
            }
            row.iter_mut().for_each(|v| *v /= sum);
        }
        Ok(Self { rows })
    }

    pub fn likelihood(&self, code: ActivityCode, slot: usize) -> f64 {
        self.rows[code.index()][slot]
    }

    pub fn row(&self, code: ActivityCode) -> &[f64; SLOTS_PER_DAY] {
        &self.rows[code.index()]
    }
}

impl TryFrom<BTreeMap<String, Vec<f64>>> for TemporalPrior {
    type Error = AnnotateError;

    fn try_from(map: BTreeMap<String, Vec<f64>>) -> Result<Self, Self::Error> {
        let mut rows = vec![[0.0; SLOTS_PER_DAY]; NUM_ACTIVITY_TYPES];
        let mut seen = [false; NUM_ACTIVITY_TYPES];
        for (key, values) in map {
            let code = key
                .parse::<u16>()
                .ok()
                .and_then(|c| ActivityCode::new(c).ok())
                .ok_or(AnnotateError::InvalidPrior(
                    "keys must be activity codes 1..=15",
                ))?;
            if values.len() != SLOTS_PER_DAY {
                return Err(AnnotateError::InvalidPrior("rows must have 96 entries"));
            }
            rows[code.index()].copy_from_slice(&values);
            seen[code.index()] = true;
        }
        if seen.iter().any(|s| !s) {
            return Err(AnnotateError::InvalidPrior("missing activity code"));
        }
        for row in &rows {
            if row.iter().any(|v| !v.is_finite() || *v < 0.0) {
                return Err(AnnotateError::InvalidPrior(
                    "weights must be finite and non-negative",
                ));
            }
            if (row.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
                return Err(AnnotateError::InvalidPrior("row does not sum to 1"));
            }
        }
        Ok(Self { rows })
    }
}

impl From<TemporalPrior> for BTreeMap<String, Vec<f64>> {
    fn from(p: TemporalPrior) -> Self {
        ActivityCode::all()
            .map(|c| (c.code().to_string(), p.rows[c.index()].to_vec()))
            .collect()
    }
}

/// Start-slot histograms with add-one smoothing.
pub fn build_temporal_prior(chains: &[ActivityChain]) -> Result<TemporalPrior, AnnotateError> {
    if chains.is_empty() {
        return Err(AnnotateError::EmptyInput);
    }
    let mut rows = vec![[1.0; SLOTS_PER_DAY]; NUM_ACTIVITY_TYPES];
    for chain in chains {
        for a in &chain.activities {
            rows[a.kind.index()][usize::from(a.start / SLOT_MINUTES)] += 1.0;
        }
    }
    TemporalPrior::from_weights(rows)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::Activity;

    #[test]
    fn work_peaks_at_nine() {
        let chains: Vec<_> = (0..10)
            .map(|i| {
                ActivityChain::new(
                    alloc::format!("a{i}"),
                    0,
                    vec![
                        Activity::new(ActivityCode::HOME, 0, 540),
                        Activity::new(ActivityCode::WORK, 540, 1020),
                        Activity::new(ActivityCode::HOME, 1020, 1440),
                    ],
                )
                .unwrap()
            })
            .collect();
        let p = build_temporal_prior(&chains).unwrap();
        let work = p.row(ActivityCode::WORK);
        // 10 observations at slot 36 plus one pseudo-count per slot.
        assert!((work[36] - 11.0 / 106.0).abs() < 1e-15);
        assert!((work[0] - 1.0 / 106.0).abs() < 1e-15);
        assert!(work.iter().all(|&v| v > 0.0));
        let worship = p.row(ActivityCode::WORSHIP);
        assert!(worship.iter().all(|&v| (v - 1.0 / 96.0).abs() < 1e-15));
        for c in ActivityCode::all() {
            assert!((p.row(c).iter().sum::<f64>() - 1.0).abs() < 1e-9);
        }
        assert_eq!(build_temporal_prior(&[]), Err(AnnotateError::EmptyInput));
    }

    #[test]
    fn json_roundtrip() {
        let p = TemporalPrior::flat();
        let s = serde_json::to_string(&p).unwrap();
        let back: TemporalPrior = serde_json::from_str(&s).unwrap();
        assert_eq!(back, p);
        assert!(serde_json::from_str::<TemporalPrior>(r#"{"1":[1.0]}"#).is_err());
    }
}
