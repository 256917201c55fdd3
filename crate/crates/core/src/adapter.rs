//! Per-group additive logit adapters that pull a frozen model's average
//! slot posterior toward a group's time-use shares.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::math;
use crate::recon::{Model, ProbTensor};
use crate::rng::{derive, rng_from};
use crate::{DemographicGroup, SlotGrid, NUM_ACTIVITY_TYPES, SLOTS_PER_DAY};

const C: usize = NUM_ACTIVITY_TYPES;
const K: usize = SLOTS_PER_DAY;
const KL_CLAMP: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum AdapterError {
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("invalid target for {group}: {reason}")]
    InvalidTarget { group: String, reason: String },
    #[error("invalid adapter configuration: {0}")]
    Config(String),
    #[error("no evaluation inputs")]
    NoInputs,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TargetDistribution {
    pub group: DemographicGroup,
    pub d: [f64; C],
}

impl TargetDistribution {
    pub fn new(group: DemographicGroup, d: [f64; C]) -> Result<Self, AdapterError> {
        let bad = |reason: &str| AdapterError::InvalidTarget {
            group: group.key(),
            reason: reason.into(),
        };
        if d.iter().any(|v| !(*v >= 0.0) || !v.is_finite()) {
            return Err(bad("shares must be finite and non-negative"));
        }
        if (d.iter().sum::<f64>() - 1.0).abs() > 1e-6 {
            return Err(bad("shares must sum to 1"));
        }
        Ok(Self { group, d })
    }

    /// From minutes per day keyed by activity code ("1".."15"). Minutes
    /// are divided by their total, which is 1440 for a complete day.
    pub fn from_minutes(
        group: DemographicGroup,
        minutes: &BTreeMap<String, f64>,
    ) -> Result<Self, AdapterError> {
        let bad = |reason: String| AdapterError::InvalidTarget {
            group: group.key(),
            reason,
        };
        let mut d = [0.0; C];
        for (code, m) in minutes {
            let c: usize = code
                .trim()
                .parse()
                .ok()
                .filter(|c| (1..=C).contains(c))
                .ok_or_else(|| bad(format!("unknown activity code {code:?}")))?;
            if !(*m >= 0.0) || !m.is_finite() {
                return Err(bad(format!("minutes for code {code} must be non-negative")));
            }
            d[c - 1] += m;
        }
        let total: f64 = d.iter().sum();
        if !(total > 0.0) {
            return Err(bad("no minutes recorded".into()));
        }
        d.iter_mut().for_each(|v| *v /= total);
        Self::new(group, d)
    }
}

/// Load every group of a `{group_key: {code: minutes}}` table.
pub fn targets_from_minutes(
    table: &BTreeMap<String, BTreeMap<String, f64>>,
) -> Result<Vec<TargetDistribution>, AdapterError> {
    table
        .iter()
        .map(|(key, minutes)| {
            let group = key.parse().map_err(|_| AdapterError::InvalidTarget {
                group: key.clone(),
                reason: "unknown group key".into(),
            })?;
            TargetDistribution::from_minutes(group, minutes)
        })
        .collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdapterVector {
    pub group: DemographicGroup,
    pub a: [f64; C],
}

impl AdapterVector {
    pub fn ones(group: DemographicGroup) -> Self {
        Self { group, a: [1.0; C] }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AdapterTrainConfig {
    pub alpha: f64,
    pub beta: f64,
    pub eta: f64,
    /// Stop once the L2 distance to the target is at most this.
    pub delta: f64,
    pub max_epochs: usize,
    pub batch_size: usize,
    /// Lower and upper clip for adapter weights.
    pub eps: f64,
    pub max_w: f64,
    pub seed: u64,
}

impl Default for AdapterTrainConfig {
    fn default() -> Self {
        Self {
            alpha: 1.0,
            beta: 1.0,
            eta: 0.01,
            delta: 0.01,
            max_epochs: 1000,
            batch_size: 1500,
            eps: 0.01,
            max_w: 10.0,
            seed: 0,
        }
    }
}

impl AdapterTrainConfig {
    pub fn validate(&self) -> Result<(), AdapterError> {
        let pos = [
            self.alpha, self.beta, self.eta, self.delta, self.eps, self.max_w,
        ];
        if pos.iter().any(|v| !(*v > 0.0))
            || self.max_epochs == 0
            || self.batch_size == 0
            || self.eps > self.max_w
        {
            return Err(AdapterError::Config(
                "all parameters must be positive and eps <= max_w".into(),
            ));
        }
        Ok(())
    }
}

/// `softmax(Y + a)` over the code axis of every (sample, slot) row.
pub fn apply_adapter(
    batch: usize,
    logits: &[f64],
    a: &[f64; C],
) -> Result<ProbTensor, AdapterError> {
    if logits.len() != batch * K * C {
        return Err(AdapterError::Shape(format!(
            "{} logits for batch {batch}",
            logits.len()
        )));
    }
    let shifted: Vec<f64> = logits
        .chunks_exact(C)
        .flat_map(|row| row.iter().zip(a).map(|(y, b)| y + b))
        .collect();
    ProbTensor::from_logits(batch, &shifted).map_err(|e| AdapterError::Shape(format!("{e}")))
}

/// Mean posterior over all samples and slots.
pub fn empirical_distribution(p: &ProbTensor) -> [f64; C] {
    let mut out = [0.0; C];
    let rows = p.values.len() / C;
    if rows == 0 {
        return out;
    }
    for row in p.values.chunks_exact(C) {
        for c in 0..C {
            out[c] += row[c];
        }
    }
    out.iter_mut().for_each(|v| *v /= rows as f64);
    out
}

pub fn rmse(p: &[f64; C], d: &[f64; C]) -> f64 {
    math::sqrt(p.iter().zip(d).map(|(a, b)| (a - b) * (a - b)).sum::<f64>() / C as f64)
}

pub fn l2_distance(p: &[f64; C], d: &[f64; C]) -> f64 {
    math::sqrt(p.iter().zip(d).map(|(a, b)| (a - b) * (a - b)).sum::<f64>())
}

/// `exp(-alpha * RMSE(P, D)) + beta * KL(P || D)`, with D clamped at 1e-12
/// inside the log and 0 log 0 taken as 0.
pub fn adapter_loss(p: &[f64; C], d: &[f64; C], alpha: f64, beta: f64) -> f64 {
    let kl: f64 = p
        .iter()
        .zip(d)
        .filter(|(pc, _)| **pc > 0.0)
        .map(|(pc, dc)| pc * (math::ln(*pc) - math::ln_clamped(*dc, KL_CLAMP)))
        .sum();
    math::exp(-alpha * rmse(p, d)) + beta * kl
}

/// `clip(a + eta * loss * (D - P), eps, max_w)`.
pub fn adapter_step(
    a: &[f64; C],
    p: &[f64; C],
    d: &[f64; C],
    eta: f64,
    loss: f64,
    eps: f64,
    max_w: f64,
) -> [f64; C] {
    core::array::from_fn(|c| (a[c] + eta * loss * (d[c] - p[c])).clamp(eps, max_w))
}

/// Frozen-model posteriors prepared for repeated adapter evaluation: each
/// row holds `exp(Y - max Y)`, so an adapter only rescales by `exp(a)`.
#[derive(Clone, Debug)]
pub struct BasePosteriors {
    batch: usize,
    scaled: Vec<f32>,
}

impl BasePosteriors {
    pub fn from_logits(batch: usize, logits: &[f32]) -> Result<Self, AdapterError> {
        if logits.len() != batch * K * C {
            return Err(AdapterError::Shape(format!(
                "{} logits for batch {batch}",
                logits.len()
            )));
        }
        if batch == 0 {
            return Err(AdapterError::NoInputs);
        }
        let mut scaled = Vec::with_capacity(logits.len());
        for row in logits.chunks_exact(C) {
            let m = row.iter().copied().fold(f32::NEG_INFINITY, f32::max);
            scaled.extend(row.iter().map(|z| math::expf(z - m)));
        }
        Ok(Self { batch, scaled })
    }

    pub fn from_model(model: &Model, grids: &[SlotGrid]) -> Result<Self, AdapterError> {
        Self::from_logits(grids.len(), &model.logits(grids))
    }

    pub fn batch(&self) -> usize {
        self.batch
    }

    /// Mean adapted posterior over the given samples.
    pub fn distribution(&self, samples: &[usize], a: &[f64; C]) -> [f64; C] {
        let amax = a.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let w: [f64; C] = core::array::from_fn(|c| math::exp(a[c] - amax));
        let mut acc = [0.0f64; C];
        let mut q = [0.0f64; C];
        for &s in samples {
            for row in self.scaled[s * K * C..(s + 1) * K * C].chunks_exact(C) {
                let mut z = 0.0;
                for c in 0..C {
                    q[c] = w[c] * f64::from(row[c]);
                    z += q[c];
                }
                for c in 0..C {
                    acc[c] += q[c] / z;
                }
            }
        }
        let n = (samples.len() * K) as f64;
        acc.iter_mut().for_each(|v| *v /= n);
        acc
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdapterEpoch {
    pub epoch: usize,
    /// Full-set L2 distance and RMSE at the start of the epoch.
    pub distance: f64,
    pub rmse: f64,
    pub loss: f64,
    /// Extremes of the adapter weights over every step of the epoch.
    pub min_weight: f64,
    pub max_weight: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdapterFit {
    /// The adapter with the lowest RMSE seen.
    pub adapter: AdapterVector,
    pub converged: bool,
    pub distance: f64,
    pub rmse: f64,
    /// Epochs whose update steps ran.
    pub epochs: usize,
    pub log: Vec<AdapterEpoch>,
}

/// Fit one group's adapter. An epoch is one pass over shuffled minibatches
/// with one update per minibatch; the full-set distance is checked before
/// each epoch.
pub fn fit_adapter(
    base: &BasePosteriors,
    target: &TargetDistribution,
    cfg: &AdapterTrainConfig,
) -> Result<AdapterFit, AdapterError> {
    cfg.validate()?;
    let d = &target.d;
    let all: Vec<usize> = (0..base.batch).collect();
    let mut order = all.clone();
    let mut rng = rng_from(derive(cfg.seed, target.group.index() as u64));
    let mut a = AdapterVector::ones(target.group).a;
    let mut best: Option<([f64; C], f64, f64)> = None;
    let mut log = Vec::new();
    let mut converged = false;
    let mut epochs = 0;

    for epoch in 0..=cfg.max_epochs {
        let p = base.distribution(&all, &a);
        let (dist, r) = (l2_distance(&p, d), rmse(&p, d));
        if best.as_ref().is_none_or(|b| r < b.2) {
            best = Some((a, dist, r));
        }
        let mut entry = AdapterEpoch {
            epoch,
            distance: dist,
            rmse: r,
            loss: adapter_loss(&p, d, cfg.alpha, cfg.beta),
            min_weight: a.iter().copied().fold(f64::INFINITY, f64::min),
            max_weight: a.iter().copied().fold(f64::NEG_INFINITY, f64::max),
        };
        if dist <= cfg.delta {
            converged = true;
            log.push(entry);
            break;
        }
        if epoch == cfg.max_epochs {
            log.push(entry);
            break;
        }
        order.shuffle(&mut rng);
        for chunk in order.chunks(cfg.batch_size) {
            let p = base.distribution(chunk, &a);
            let loss = adapter_loss(&p, d, cfg.alpha, cfg.beta);
            a = adapter_step(&a, &p, d, cfg.eta, loss, cfg.eps, cfg.max_w);
            for w in a {
                assert!(
                    (cfg.eps..=cfg.max_w).contains(&w),
                    "adapter weight {w} left its bounds"
                );
                entry.min_weight = entry.min_weight.min(w);
                entry.max_weight = entry.max_weight.max(w);
            }
        }
        epochs += 1;
        log.push(entry);
    }

    let (a, distance, rmse) = best.ok_or(AdapterError::NoInputs)?;
    Ok(AdapterFit {
        adapter: AdapterVector {
            group: target.group,
            a,
        },
        converged,
        distance,
        rmse,
        epochs,
        log,
    })
}

/// Fit one adapter per target on the model's posteriors for `eval_inputs`.
pub fn optimize_adapters(
    model: &Model,
    targets: &[TargetDistribution],
    cfg: &AdapterTrainConfig,
    eval_inputs: &[SlotGrid],
) -> Result<Vec<AdapterFit>, AdapterError> {
    if eval_inputs.is_empty() {
        return Err(AdapterError::NoInputs);
    }
    let base = BasePosteriors::from_model(model, eval_inputs)?;
    targets.iter().map(|t| fit_adapter(&base, t, cfg)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    fn group() -> DemographicGroup {
        DemographicGroup::all()[3]
    }

    #[test]
    fn closed_form_cases() {
        let mut a = [0.0; C];
        a[0] = 5.0;
        let p = apply_adapter(1, &vec![0.0; K * C], &a).unwrap();
        let e5 = math::exp(5.0);
        assert!((p.row(0, 7)[0] - e5 / (e5 + 14.0)).abs() < 1e-12);

        let u = [1.0 / 15.0; C];
        assert_eq!(adapter_loss(&u, &u, 1.0, 1.0), 1.0);

        let mut d = u;
        d[0] += 0.5;
        let a1 = adapter_step(&[1.0; C], &u, &d, 0.01, 1.2, 0.01, 10.0);
        assert!((a1[0] - 1.006).abs() < 1e-12);
        assert_eq!(
            adapter_step(&[20.0; C], &u, &u, 0.01, 1.0, 0.01, 10.0),
            [10.0; C]
        );
    }

    #[test]
    fn empirical_two_slots() {
        let mut values = vec![0.0; K * C];
        for k in 0..K {
            values[k * C] = if k % 2 == 0 { 1.0 } else { 0.5 };
            values[k * C + 1] = if k % 2 == 0 { 0.0 } else { 0.5 };
        }
        let p = ProbTensor { batch: 1, values };
        let e = empirical_distribution(&p);
        assert!((e[0] - 0.75).abs() < 1e-12 && (e[1] - 0.25).abs() < 1e-12);
    }

    #[test]
    fn minutes_loader_normalizes() {
        let m = BTreeMap::from([("1".into(), 1080.0), ("2".into(), 360.0)]);
        let t = TargetDistribution::from_minutes(group(), &m).unwrap();
        assert_eq!(t.d[0], 0.75);
        assert_eq!(t.d[1], 0.25);
        let bad = BTreeMap::from([("16".into(), 10.0)]);
        assert!(TargetDistribution::from_minutes(group(), &bad).is_err());
        let table = BTreeMap::from([
            ("young_male_worker".into(), m),
            ("nobody".into(), BTreeMap::new()),
        ]);
        assert!(targets_from_minutes(&table).is_err());
    }

    #[test]
    fn target_equal_to_base_converges_immediately() {
        let logits: Vec<f32> = (0..3 * K * C)
            .map(|i| ((i * 7919) % 23) as f32 * 0.1)
            .collect();
        let base = BasePosteriors::from_logits(3, &logits).unwrap();
        let p = base.distribution(&[0, 1, 2], &[0.0; C]);
        let t = TargetDistribution::new(group(), p).unwrap();
        let fit = fit_adapter(&base, &t, &AdapterTrainConfig::default()).unwrap();
        assert!(fit.converged);
        assert_eq!(fit.epochs, 0);
    }

    #[test]
    fn fast_path_matches_softmax() {
        let logits: Vec<f32> = (0..2 * K * C)
            .map(|i| ((i * 31) % 17) as f32 * 0.3 - 2.0)
            .collect();
        let base = BasePosteriors::from_logits(2, &logits).unwrap();
        let a: [f64; C] = core::array::from_fn(|c| 0.5 + c as f64 * 0.2);
        let wide: Vec<f64> = logits.iter().map(|v| f64::from(*v)).collect();
        let slow = empirical_distribution(&apply_adapter(2, &wide, &a).unwrap());
        let fast = base.distribution(&[0, 1], &a);
        for c in 0..C {
            assert!((slow[c] - fast[c]).abs() < 1e-6);
        }
    }
}
