use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use rand::seq::SliceRandom;
use rand::Rng as _;
use serde::{Deserialize, Serialize};

use super::{
    complete_batch, loss_and_grad, Adam, FreezeState, LossParts, LossWeights, Model, ReconError,
};
use crate::activity::{apply_mask, MaskKind};
use crate::eval::{jsd_by_kind, MarginalKind};
use crate::math;
use crate::rng::{derive, derive_tag, rng_from, Rng};
use crate::{ActivityChain, Slot, SlotGrid, NUM_ACTIVITY_TYPES, SLOTS_PER_DAY};

const K: usize = SLOTS_PER_DAY;
const C: usize = NUM_ACTIVITY_TYPES;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainSchedule {
    pub total_epochs: usize,
    /// Share of epochs trained on unmasked input.
    pub warmup_fraction: f64,
    /// Share of epochs trained at `intermediate_mask`.
    pub intermediate_fraction: f64,
    pub intermediate_mask: f64,
    pub final_mask: f64,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub l2: f64,
    /// Final-phase epochs without validation improvement before stopping.
    pub patience: usize,
    pub validation_fraction: f64,
}

impl Default for TrainSchedule {
    fn default() -> Self {
        Self {
            total_epochs: 120,
            warmup_fraction: 0.1,
            intermediate_fraction: 0.3,
            intermediate_mask: 0.4,
            final_mask: 0.7,
            batch_size: 512,
            learning_rate: 1e-3,
            l2: 1e-5,
            patience: 10,
            validation_fraction: 0.1,
        }
    }
}

impl TrainSchedule {
    pub fn validate(&self) -> Result<(), ReconError> {
        let fr = [self.warmup_fraction, self.intermediate_fraction];
        if fr.iter().any(|f| !(0.0..=1.0).contains(f)) || fr[0] + fr[1] > 1.0 {
            return Err(ReconError::Config(
                "phase fractions must be in [0,1] and sum to at most 1".into(),
            ));
        }
        if self.total_epochs == 0 || self.batch_size == 0 || !(self.learning_rate > 0.0) {
            return Err(ReconError::Config(
                "epochs, batch size and learning rate must be positive".into(),
            ));
        }
        let masks = [self.intermediate_mask, self.final_mask];
        if masks.iter().any(|m| !(0.0..=1.0).contains(m)) {
            return Err(ReconError::Config("mask fractions must be in [0,1]".into()));
        }
        if !(0.0..1.0).contains(&self.validation_fraction) || !(self.l2 >= 0.0) {
            return Err(ReconError::Config(
                "validation fraction must be in [0,1), l2 non-negative".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Phase {
    Warmup,
    Intermediate,
    Final,
}

impl Phase {
    pub fn name(self) -> &'static str {
        match self {
            Phase::Warmup => "warmup",
            Phase::Intermediate => "intermediate",
            Phase::Final => "final",
        }
    }
}

/// Epoch counts of the warmup, intermediate and final phases.
pub fn phase_lengths(s: &TrainSchedule) -> (usize, usize, usize) {
    let e = s.total_epochs as f64;
    let w = math::round(s.warmup_fraction * e) as usize;
    let i = (math::round(s.intermediate_fraction * e) as usize)
        .min(s.total_epochs - w.min(s.total_epochs));
    let w = w.min(s.total_epochs);
    (w, i, s.total_epochs - w - i)
}

pub fn phase_of(epoch: usize, s: &TrainSchedule) -> Phase {
    let (w, i, _) = phase_lengths(s);
    if epoch < w {
        Phase::Warmup
    } else if epoch < w + i {
        Phase::Intermediate
    } else {
        Phase::Final
    }
}

/// A complete day to learn from. `real` marks slots backed by observation;
/// the others were produced by a model and are weighted as synthetic.
#[derive(Clone, Debug, PartialEq)]
pub struct TrainSample {
    pub target: SlotGrid,
    pub real: [bool; K],
}

impl TrainSample {
    pub fn observed(target: SlotGrid) -> Self {
        Self {
            target,
            real: [true; K],
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
#[derive(Default)]
pub struct TrainConfig {
    pub schedule: TrainSchedule,
    pub weights: LossWeights,
    /// Release layer groups gradually over the run instead of training all.
    pub progressive_unfreeze: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochMetrics {
    pub epoch: usize,
    pub phase: Phase,
    pub loss_ce: f64,
    pub loss_tr: f64,
    pub loss_dtw: f64,
    pub total: f64,
    pub val_jsd_type: f64,
    pub val_jsd_start: f64,
    pub val_jsd_end: f64,
    pub val_ce: f64,
    pub val_total: f64,
}

#[derive(Clone, Debug)]
pub struct TrainOutcome {
    pub model: Model,
    pub log: Vec<EpochMetrics>,
    /// Epoch whose parameters were kept (lowest validation CE).
    pub best_epoch: usize,
    pub stopped_early: bool,
}

fn mask_sample(target: &SlotGrid, fraction: f64, rng: &mut Rng) -> SlotGrid {
    if fraction <= 0.0 {
        return target.clone();
    }
    let kind = MaskKind::ALL[rng.random_range(0..MaskKind::ALL.len())];
    apply_mask(target, kind, fraction, rng)
}

fn score_mask(targets: &[&SlotGrid]) -> Vec<bool> {
    targets
        .iter()
        .flat_map(|t| t.slots.iter().map(|s| matches!(s, Slot::Act(_))))
        .collect()
}

/// Loss and slot-major logit gradient for one batch, given the model's
/// slot-major logits.
fn batch_loss(
    logits_slot_major: &[f32],
    targets: &[&SlotGrid],
    real: &[&[bool; K]],
    weights: &LossWeights,
    want_grad: bool,
) -> Result<(LossParts, Vec<f32>), ReconError> {
    let b = targets.len();
    let mut logits = vec![0.0f64; b * K * C];
    for k in 0..K {
        for s in 0..b {
            let src = &logits_slot_major[(k * b + s) * C..(k * b + s + 1) * C];
            let dst = &mut logits[(s * K + k) * C..(s * K + k + 1) * C];
            for c in 0..C {
                dst[c] = f64::from(src[c]);
            }
        }
    }
    let owned: Vec<SlotGrid> = targets.iter().map(|t| (*t).clone()).collect();
    let score = score_mask(targets);
    let real_mask: Vec<bool> = real.iter().flat_map(|r| r.iter().copied()).collect();
    let mut grad = vec![0.0f64; logits.len()];
    let parts = loss_and_grad(b, &logits, &owned, &score, &real_mask, weights, &mut grad)?;
    let mut out = Vec::new();
    if want_grad {
        out = vec![0.0f32; logits.len()];
        for k in 0..K {
            for s in 0..b {
                for c in 0..C {
                    out[(k * b + s) * C + c] = grad[(s * K + k) * C + c] as f32;
                }
            }
        }
    }
    Ok((parts, out))
}

struct Validation {
    inputs: Vec<SlotGrid>,
    indices: Vec<usize>,
    truth: Vec<ActivityChain>,
}

fn evaluate(
    model: &Model,
    data: &[TrainSample],
    val: &Validation,
    weights: &LossWeights,
) -> Result<(LossParts, [f64; 3]), ReconError> {
    const CHUNK: usize = 256;
    let mut sum = LossParts::default();
    let mut completed = Vec::with_capacity(val.inputs.len());
    for (inputs, idx) in val.inputs.chunks(CHUNK).zip(val.indices.chunks(CHUNK)) {
        let cache = model.forward(inputs, None);
        let targets: Vec<&SlotGrid> = idx.iter().map(|&i| &data[i].target).collect();
        let real: Vec<&[bool; K]> = idx.iter().map(|&i| &data[i].real).collect();
        let (p, _) = batch_loss(&cache.logits, &targets, &real, weights, false)?;
        let w = inputs.len() as f64;
        sum.ce += p.ce * w;
        sum.total += p.total * w;
        completed.extend(
            complete_batch(model, inputs, None)
                .into_iter()
                .map(|r| r.completed.evidence_chain("")),
        );
    }
    let n = val.inputs.len() as f64;
    sum.ce /= n;
    sum.total /= n;
    let kinds = [
        MarginalKind::Type,
        MarginalKind::StartTime,
        MarginalKind::EndTime,
    ];
    let j = jsd_by_kind(&completed, &val.truth, &kinds)?;
    Ok((sum, [j[0], j[1], j[2]]))
}

/// Three-phase masked training. Validation always uses the final-phase
/// masking strength so epochs are comparable; the parameters with the
/// lowest validation CE are returned.
pub fn train(
    model: Model,
    data: &[TrainSample],
    cfg: &TrainConfig,
    seed: u64,
) -> Result<TrainOutcome, ReconError> {
    let s = &cfg.schedule;
    s.validate()?;
    cfg.weights.validate()?;
    if data.is_empty() {
        return Err(ReconError::NoData);
    }
    let mut model = model;

    let mut order: Vec<usize> = (0..data.len()).collect();
    order.shuffle(&mut rng_from(derive_tag(seed, "split")));
    let n_val =
        (math::round(s.validation_fraction * data.len() as f64) as usize).min(data.len() - 1);
    let (val_idx, train_idx) = order.split_at(n_val);
    let val_idx: Vec<usize> = if val_idx.is_empty() {
        train_idx.to_vec()
    } else {
        val_idx.to_vec()
    };
    let mut train_idx = train_idx.to_vec();
    train_idx.sort_unstable();

    let mut vrng = rng_from(derive_tag(seed, "validation"));
    let val = Validation {
        inputs: val_idx
            .iter()
            .map(|&i| mask_sample(&data[i].target, s.final_mask, &mut vrng))
            .collect(),
        truth: val_idx
            .iter()
            .map(|&i| data[i].target.evidence_chain(""))
            .collect(),
        indices: val_idx,
    };

    let mut opt = Adam::new(model.param_count(), s.learning_rate as f32, s.l2 as f32);
    let mut grads = vec![0.0f32; model.param_count()];
    let mut log = Vec::with_capacity(s.total_epochs);
    let mut best = (f64::INFINITY, 0usize, model.params().to_vec());
    let mut since_best = 0usize;
    let mut stopped_early = false;

    for epoch in 0..s.total_epochs {
        let phase = phase_of(epoch, s);
        let fraction = match phase {
            Phase::Warmup => 0.0,
            Phase::Intermediate => s.intermediate_mask,
            Phase::Final => s.final_mask,
        };
        let freeze = if cfg.progressive_unfreeze {
            super::progressive_unfreeze(epoch, s.total_epochs)
        } else {
            FreezeState::ALL_TRAINABLE
        };
        let trainable = freeze.ranges(&model);

        let mut rng = rng_from(derive(seed, epoch as u64));
        train_idx.shuffle(&mut rng);
        let mut acc = LossParts::default();
        for (bi, batch) in train_idx.chunks(s.batch_size).enumerate() {
            let inputs: Vec<SlotGrid> = batch
                .iter()
                .map(|&i| mask_sample(&data[i].target, fraction, &mut rng))
                .collect();
            let targets: Vec<&SlotGrid> = batch.iter().map(|&i| &data[i].target).collect();
            let real: Vec<&[bool; K]> = batch.iter().map(|&i| &data[i].real).collect();
            let cache = model.forward(&inputs, Some(&mut rng));
            let (parts, dlogits) = batch_loss(&cache.logits, &targets, &real, &cfg.weights, true)?;
            if !parts.total.is_finite() || dlogits.iter().any(|g| !g.is_finite()) {
                return Err(ReconError::Diverged {
                    epoch,
                    batch: bi,
                    loss: parts.total,
                });
            }
            model.backward(&cache, &dlogits, &mut grads);
            if grads.iter().any(|g| !g.is_finite()) {
                return Err(ReconError::Diverged {
                    epoch,
                    batch: bi,
                    loss: parts.total,
                });
            }
            opt.step(model.params_mut(), &grads, &trainable);
            let w = batch.len() as f64;
            acc.ce += parts.ce * w;
            acc.tr += parts.tr * w;
            acc.dtw += parts.dtw * w;
            acc.total += parts.total * w;
        }
        let n = train_idx.len().max(1) as f64;
        let (vp, vj) = evaluate(&model, data, &val, &cfg.weights)?;
        if !vp.ce.is_finite() {
            return Err(ReconError::Diverged {
                epoch,
                batch: usize::MAX,
                loss: vp.ce,
            });
        }
        log.push(EpochMetrics {
            epoch,
            phase,
            loss_ce: acc.ce / n,
            loss_tr: acc.tr / n,
            loss_dtw: acc.dtw / n,
            total: acc.total / n,
            val_jsd_type: vj[0],
            val_jsd_start: vj[1],
            val_jsd_end: vj[2],
            val_ce: vp.ce,
            val_total: vp.total,
        });

        if vp.ce < best.0 {
            best = (vp.ce, epoch, model.params().to_vec());
            since_best = 0;
        } else if phase == Phase::Final {
            since_best += 1;
            if s.patience > 0 && since_best >= s.patience {
                stopped_early = true;
                break;
            }
        }
    }

    let (_, best_epoch, params) = best;
    model.params_mut().copy_from_slice(&params);
    Ok(TrainOutcome {
        model,
        log,
        best_epoch,
        stopped_early,
    })
}

/// Render a metrics log as CSV with a header row.
pub fn metrics_csv(log: &[EpochMetrics]) -> alloc::string::String {
    let mut out = alloc::string::String::from(
        "epoch,phase,loss_ce,loss_tr,loss_dtw,total,val_jsd_type,val_jsd_start,val_jsd_end,val_ce,val_total\n",
    );
    for m in log {
        out.push_str(&format!(
            "{},{},{},{},{},{},{},{},{},{},{}\n",
            m.epoch,
            m.phase.name(),
            m.loss_ce,
            m.loss_tr,
            m.loss_dtw,
            m.total,
            m.val_jsd_type,
            m.val_jsd_start,
            m.val_jsd_end,
            m.val_ce,
            m.val_total
        ));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn phase_arithmetic() {
        let s = TrainSchedule {
            total_epochs: 10,
            ..TrainSchedule::default()
        };
        assert_eq!(phase_lengths(&s), (1, 3, 6));
        assert_eq!(phase_of(0, &s), Phase::Warmup);
        assert_eq!(phase_of(1, &s), Phase::Intermediate);
        assert_eq!(phase_of(3, &s), Phase::Intermediate);
        assert_eq!(phase_of(4, &s), Phase::Final);
        assert_eq!(phase_of(9, &s), Phase::Final);
        let d = TrainSchedule::default();
        assert_eq!(phase_lengths(&d), (12, 36, 72));
    }

    #[test]
    fn rejects_bad_schedule() {
        let s = TrainSchedule {
            warmup_fraction: 0.8,
            intermediate_fraction: 0.3,
            ..TrainSchedule::default()
        };
        assert!(s.validate().is_err());
    }
}
