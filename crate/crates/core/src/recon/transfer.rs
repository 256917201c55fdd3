use alloc::vec::Vec;

use rand::seq::index::sample;
use serde::{Deserialize, Serialize};

use super::{
    complete_batch, train, LossWeights, Model, ReconError, TrainConfig, TrainSample, TrainSchedule,
};
use crate::eval::{jsd_by_kind, MarginalKind};
use crate::math;
use crate::rng::{derive, derive_tag, rng_from};
use crate::{ActivityChain, Slot, SlotGrid, SLOTS_PER_DAY};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TransferConfig {
    pub max_iters: usize,
    /// Share of the previous iteration's completions mixed into training.
    pub retention: f64,
    /// Stop once mean JSD improves by less than this.
    pub tolerance: f64,
    /// Fine-tuning schedule for each iteration.
    pub fine_tune: TrainSchedule,
    pub weights: LossWeights,
    pub progressive_unfreeze: bool,
    pub seed: u64,
}

impl Default for TransferConfig {
    fn default() -> Self {
        Self {
            max_iters: 6,
            retention: 0.2,
            tolerance: 5e-4,
            fine_tune: TrainSchedule {
                total_epochs: 4,
                warmup_fraction: 0.0,
                intermediate_fraction: 0.0,
                batch_size: 64,
                learning_rate: 5e-4,
                patience: 0,
                ..TrainSchedule::default()
            },
            weights: LossWeights::default(),
            progressive_unfreeze: true,
            seed: 0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TransferRow {
    pub iteration: usize,
    pub jsd_type: f64,
    pub jsd_start: f64,
    pub jsd_end: f64,
    pub mean: f64,
    /// Records used to train the next model (0 once the loop stops).
    pub train_size: usize,
    /// Of which carried over from the previous iteration.
    pub retained: usize,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopReason {
    Converged,
    /// Mean JSD was worse than the best for two iterations in a row.
    CollapseGuard,
    MaxIters,
}

#[derive(Clone, Debug)]
pub struct TransferOutcome {
    /// Completions produced by the selected model.
    pub synthetic: Vec<SlotGrid>,
    pub model: Model,
    pub table: Vec<TransferRow>,
    pub best_iteration: usize,
    pub stop: StopReason,
}

/// Number of previous-iteration records kept: `round(retention * len)`.
pub fn retained_count(prev_len: usize, retention: f64) -> usize {
    (math::round(retention * prev_len as f64) as usize).min(prev_len)
}

fn evidence(grids: &[SlotGrid]) -> Vec<ActivityChain> {
    grids.iter().map(|g| g.evidence_chain("")).collect()
}

/// Iterative self-training on incomplete target-region days. Each round
/// completes `raw` with the current model, scores the completions against
/// the raw evidence (type, start and end marginals) and fine-tunes on the
/// completions, observed slots counting as real. The model from the round
/// with the lowest mean JSD is returned, round 0 being `base` itself.
pub fn semi_supervised_transfer(
    base: &Model,
    raw: &[SlotGrid],
    cfg: &TransferConfig,
) -> Result<TransferOutcome, ReconError> {
    if raw.is_empty() {
        return Err(ReconError::NoData);
    }
    if raw.iter().any(|g| g.observed_count() == 0) {
        return Err(ReconError::FullyMasked);
    }
    if !(0.0..=1.0).contains(&cfg.retention) || !(cfg.tolerance >= 0.0) {
        return Err(ReconError::Config(
            "retention must lie in [0, 1] and tolerance be non-negative".into(),
        ));
    }
    cfg.fine_tune.validate()?;

    let truth = evidence(raw);
    let real: Vec<[bool; SLOTS_PER_DAY]> = raw
        .iter()
        .map(|g| core::array::from_fn(|k| matches!(g.slots[k], Slot::Act(_))))
        .collect();
    let kinds = [
        MarginalKind::Type,
        MarginalKind::StartTime,
        MarginalKind::EndTime,
    ];
    let train_cfg = TrainConfig {
        schedule: cfg.fine_tune.clone(),
        weights: cfg.weights.clone(),
        progressive_unfreeze: cfg.progressive_unfreeze,
    };

    let mut model = base.clone();
    let mut prev: Option<Vec<TrainSample>> = None;
    let mut table: Vec<TransferRow> = Vec::new();
    let mut best: Option<(f64, usize, Model, Vec<SlotGrid>)> = None;
    let mut worse = 0usize;
    let mut stop = StopReason::MaxIters;

    for n in 0..=cfg.max_iters {
        let completed: Vec<SlotGrid> = complete_batch(&model, raw, None)
            .into_iter()
            .map(|r| r.completed)
            .collect();
        let j = jsd_by_kind(&evidence(&completed), &truth, &kinds)?;
        let mean = (j[0] + j[1] + j[2]) / 3.0;
        table.push(TransferRow {
            iteration: n,
            jsd_type: j[0],
            jsd_start: j[1],
            jsd_end: j[2],
            mean,
            train_size: 0,
            retained: 0,
        });

        let improvement = if n == 0 {
            f64::INFINITY
        } else {
            table[n - 1].mean - mean
        };
        match &best {
            Some((b, ..)) if mean >= *b => worse += 1,
            _ => {
                best = Some((mean, n, model.clone(), completed.clone()));
                worse = 0;
            }
        }
        if worse >= 2 {
            stop = StopReason::CollapseGuard;
            break;
        }
        if (0.0..cfg.tolerance).contains(&improvement) {
            stop = StopReason::Converged;
            break;
        }
        if n == cfg.max_iters {
            break;
        }

        let current: Vec<TrainSample> = completed
            .into_iter()
            .zip(&real)
            .map(|(target, r)| TrainSample { target, real: *r })
            .collect();
        let mut data = current.clone();
        let mut retained = 0;
        if let Some(p) = &prev {
            retained = retained_count(p.len(), cfg.retention);
            let mut rng = rng_from(derive(derive_tag(cfg.seed, "retain"), n as u64));
            let mut picks = sample(&mut rng, p.len(), retained).into_vec();
            picks.sort_unstable();
            data.extend(picks.into_iter().map(|i| p[i].clone()));
        }
        table[n].train_size = data.len();
        table[n].retained = retained;
        model = train(model, &data, &train_cfg, derive(cfg.seed, n as u64))?.model;
        prev = Some(current);
    }

    let (_, best_iteration, model, synthetic) = best.ok_or(ReconError::NoData)?;
    Ok(TransferOutcome {
        synthetic,
        model,
        table,
        best_iteration,
        stop,
    })
}
