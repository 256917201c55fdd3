use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use super::{loss_dtw, ReconError};
use crate::math;
use crate::{Slot, SlotGrid, NUM_ACTIVITY_TYPES, SLOTS_PER_DAY};

const C: usize = NUM_ACTIVITY_TYPES;
const K: usize = SLOTS_PER_DAY;
const CLAMP: f64 = 1e-12;

/// Per-slot probability vectors for a batch, laid out `[sample][slot][code]`.
#[derive(Clone, Debug, PartialEq)]
pub struct ProbTensor {
    pub batch: usize,
    pub values: Vec<f64>,
}

impl ProbTensor {
    pub fn from_logits(batch: usize, logits: &[f64]) -> Result<Self, ReconError> {
        if logits.len() != batch * K * C {
            return Err(ReconError::Shape(format!(
                "{} logits for batch {batch}",
                logits.len()
            )));
        }
        let mut values = vec![0.0; logits.len()];
        for (z, p) in logits.chunks_exact(C).zip(values.chunks_exact_mut(C)) {
            math::softmax_into(z, p);
        }
        Ok(Self { batch, values })
    }

    pub fn row(&self, sample: usize, slot: usize) -> &[f64] {
        let at = (sample * K + slot) * C;
        &self.values[at..at + C]
    }

    /// Index of the largest entry; ties go to the lower code.
    pub fn argmax(&self, sample: usize, slot: usize) -> usize {
        argmax(self.row(sample, slot))
    }
}

pub(crate) fn argmax(row: &[f64]) -> usize {
    let mut best = 0;
    for i in 1..row.len() {
        if row[i] > row[best] {
            best = i;
        }
    }
    best
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LossWeights {
    pub w1: f64,
    pub w2: f64,
    pub w3: f64,
    pub class_weights: [f64; C],
    pub w_l: f64,
    pub w_s: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        Self {
            w1: 0.7,
            w2: 0.15,
            w3: 0.15,
            class_weights: [1.0; C],
            w_l: 2.0,
            w_s: 1.0,
        }
    }
}

impl LossWeights {
    pub fn validate(&self) -> Result<(), ReconError> {
        let ws = [self.w1, self.w2, self.w3, self.w_l, self.w_s];
        if ws.iter().any(|w| !(w.is_finite() && *w >= 0.0)) || self.w1 + self.w2 + self.w3 <= 0.0 {
            return Err(ReconError::Config(
                "loss weights must be non-negative with w1+w2+w3 > 0".into(),
            ));
        }
        if self
            .class_weights
            .iter()
            .any(|w| !(w.is_finite() && *w > 0.0))
        {
            return Err(ReconError::Config("class weights must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct LossParts {
    /// Mean weighted cross-entropy over all scored slots.
    pub ce: f64,
    pub ce_real: f64,
    pub ce_syn: f64,
    pub tr: f64,
    pub dtw: f64,
    pub total: f64,
}

fn check(batch: usize, targets: &[SlotGrid], score_mask: &[bool]) -> Result<(), ReconError> {
    if targets.len() != batch || score_mask.len() != batch * K {
        return Err(ReconError::Shape(format!(
            "batch {batch}, {} targets, {} mask entries",
            targets.len(),
            score_mask.len()
        )));
    }
    for (b, t) in targets.iter().enumerate() {
        for k in 0..K {
            if score_mask[b * K + k] && !matches!(t.slots[k], Slot::Act(_)) {
                return Err(ReconError::UnscoredTarget { sample: b, slot: k });
            }
        }
    }
    Ok(())
}

#[inline]
fn target_index(t: &SlotGrid, k: usize) -> usize {
    match t.slots[k] {
        Slot::Act(c) => c.index(),
        _ => unreachable!("checked by caller"),
    }
}

/// Mean over scored slots of `-w_y · ln p_y`, with `p_y` clamped at 1e-12.
pub fn loss_ce(
    pred: &ProbTensor,
    targets: &[SlotGrid],
    score_mask: &[bool],
    class_weights: &[f64; C],
) -> Result<f64, ReconError> {
    check(pred.batch, targets, score_mask)?;
    let (mut sum, mut n) = (0.0, 0usize);
    for (b, t) in targets.iter().enumerate() {
        for k in 0..K {
            if score_mask[b * K + k] {
                let y = target_index(t, k);
                sum += -class_weights[y] * math::ln_clamped(pred.row(b, k)[y], CLAMP);
                n += 1;
            }
        }
    }
    Ok(if n == 0 { 0.0 } else { sum / n as f64 })
}

/// Binary cross-entropy between observed code changes and the soft change
/// probability `1 - Σ_c p_i,c p_{i+1},c`, averaged over boundaries whose two
/// slots are both scored.
pub fn loss_transition(
    pred: &ProbTensor,
    targets: &[SlotGrid],
    score_mask: &[bool],
) -> Result<f64, ReconError> {
    check(pred.batch, targets, score_mask)?;
    let (mut sum, mut n) = (0.0, 0usize);
    for (b, t) in targets.iter().enumerate() {
        for k in 0..K - 1 {
            if score_mask[b * K + k] && score_mask[b * K + k + 1] {
                let change = target_index(t, k) != target_index(t, k + 1);
                let s: f64 = pred
                    .row(b, k)
                    .iter()
                    .zip(pred.row(b, k + 1))
                    .map(|(x, y)| x * y)
                    .sum();
                sum += if change {
                    -math::ln_clamped(1.0 - s, CLAMP)
                } else {
                    -math::ln_clamped(s, CLAMP)
                };
                n += 1;
            }
        }
    }
    Ok(if n == 0 { 0.0 } else { sum / n as f64 })
}

/// Mean DTW between each sample's argmax path and its target, both taken
/// over the scored slots only.
fn batch_dtw(
    pred: &ProbTensor,
    targets: &[SlotGrid],
    score_mask: &[bool],
) -> Result<f64, ReconError> {
    let (mut sum, mut n) = (0.0, 0usize);
    let mut p = Vec::with_capacity(K);
    let mut y = Vec::with_capacity(K);
    for (b, t) in targets.iter().enumerate() {
        p.clear();
        y.clear();
        for k in 0..K {
            if score_mask[b * K + k] {
                p.push(pred.argmax(b, k));
                y.push(target_index(t, k));
            }
        }
        if !p.is_empty() {
            sum += loss_dtw(&p, &y)?;
            n += 1;
        }
    }
    Ok(if n == 0 { 0.0 } else { sum / n as f64 })
}

/// `w1 (w_l L_real + w_s L_syn) + w2 L_TR + w3 L_DTW`. `real_mask` marks
/// slots backed by observations; the rest count as synthetic.
pub fn loss_total(
    pred: &ProbTensor,
    targets: &[SlotGrid],
    score_mask: &[bool],
    weights: &LossWeights,
    real_mask: &[bool],
) -> Result<LossParts, ReconError> {
    check(pred.batch, targets, score_mask)?;
    if real_mask.len() != score_mask.len() {
        return Err(ReconError::Shape("real mask length".into()));
    }
    let mut parts = LossParts::default();
    let (mut nr, mut ns) = (0usize, 0usize);
    for (b, t) in targets.iter().enumerate() {
        for k in 0..K {
            let i = b * K + k;
            if score_mask[i] {
                let y = target_index(t, k);
                let l = -weights.class_weights[y] * math::ln_clamped(pred.row(b, k)[y], CLAMP);
                parts.ce += l;
                if real_mask[i] {
                    parts.ce_real += l;
                    nr += 1;
                } else {
                    parts.ce_syn += l;
                    ns += 1;
                }
            }
        }
    }
    finish_ce(&mut parts, nr, ns);
    parts.tr = loss_transition(pred, targets, score_mask)?;
    parts.dtw = batch_dtw(pred, targets, score_mask)?;
    parts.total = combine(&parts, weights);
    Ok(parts)
}

fn finish_ce(parts: &mut LossParts, nr: usize, ns: usize) {
    let n = nr + ns;
    parts.ce = if n == 0 { 0.0 } else { parts.ce / n as f64 };
    parts.ce_real = if nr == 0 {
        0.0
    } else {
        parts.ce_real / nr as f64
    };
    parts.ce_syn = if ns == 0 {
        0.0
    } else {
        parts.ce_syn / ns as f64
    };
}

fn combine(p: &LossParts, w: &LossWeights) -> f64 {
    w.w1 * (w.w_l * p.ce_real + w.w_s * p.ce_syn) + w.w2 * p.tr + w.w3 * p.dtw
}

/// Composite loss from logits together with its gradient with respect to
/// those logits. The DTW term is reported but has no gradient.
pub fn loss_and_grad(
    batch: usize,
    logits: &[f64],
    targets: &[SlotGrid],
    score_mask: &[bool],
    real_mask: &[bool],
    weights: &LossWeights,
    grad: &mut [f64],
) -> Result<LossParts, ReconError> {
    let pred = ProbTensor::from_logits(batch, logits)?;
    check(batch, targets, score_mask)?;
    if real_mask.len() != score_mask.len() || grad.len() != logits.len() {
        return Err(ReconError::Shape("mask or gradient length".into()));
    }
    grad.iter_mut().for_each(|g| *g = 0.0);

    let (mut nr, mut ns) = (0usize, 0usize);
    for (&s, &r) in score_mask.iter().zip(real_mask) {
        if s {
            if r {
                nr += 1;
            } else {
                ns += 1;
            }
        }
    }
    let scale_r = if nr == 0 {
        0.0
    } else {
        weights.w1 * weights.w_l / nr as f64
    };
    let scale_s = if ns == 0 {
        0.0
    } else {
        weights.w1 * weights.w_s / ns as f64
    };

    // dL/dp accumulated per slot, pushed through the softmax at the end.
    let mut dp = vec![0.0; logits.len()];
    let mut parts = LossParts::default();
    for (b, t) in targets.iter().enumerate() {
        for k in 0..K {
            let i = b * K + k;
            if !score_mask[i] {
                continue;
            }
            let y = target_index(t, k);
            let p = pred.row(b, k)[y];
            let l = -weights.class_weights[y] * math::ln_clamped(p, CLAMP);
            parts.ce += l;
            let scale = if real_mask[i] {
                parts.ce_real += l;
                scale_r
            } else {
                parts.ce_syn += l;
                scale_s
            };
            if p >= CLAMP {
                dp[i * C + y] += -scale * weights.class_weights[y] / p;
            }
        }
    }
    finish_ce(&mut parts, nr, ns);

    let mut nb = 0usize;
    for b in 0..batch {
        for k in 0..K - 1 {
            nb += usize::from(score_mask[b * K + k] && score_mask[b * K + k + 1]);
        }
    }
    if nb > 0 {
        let scale = weights.w2 / nb as f64;
        let mut tr = 0.0;
        for (b, t) in targets.iter().enumerate() {
            for k in 0..K - 1 {
                let i = b * K + k;
                if !(score_mask[i] && score_mask[i + 1]) {
                    continue;
                }
                let change = target_index(t, k) != target_index(t, k + 1);
                let (pa, pb) = (pred.row(b, k), pred.row(b, k + 1));
                let s: f64 = pa.iter().zip(pb).map(|(x, y)| x * y).sum();
                // dL/ds for the BCE term; zero where the clamp is active.
                let dl_ds = if change {
                    tr += -math::ln_clamped(1.0 - s, CLAMP);
                    if 1.0 - s >= CLAMP {
                        1.0 / (1.0 - s)
                    } else {
                        0.0
                    }
                } else {
                    tr += -math::ln_clamped(s, CLAMP);
                    if s >= CLAMP {
                        -1.0 / s
                    } else {
                        0.0
                    }
                };
                let g = scale * dl_ds;
                for c in 0..C {
                    dp[i * C + c] += g * pb[c];
                    dp[(i + 1) * C + c] += g * pa[c];
                }
            }
        }
        parts.tr = tr / nb as f64;
    }

    for ((g, d), p) in grad
        .chunks_exact_mut(C)
        .zip(dp.chunks_exact(C))
        .zip(pred.values.chunks_exact(C))
    {
        let dot: f64 = d.iter().zip(p).map(|(a, b)| a * b).sum();
        for c in 0..C {
            g[c] = p[c] * (d[c] - dot);
        }
    }

    parts.dtw = batch_dtw(&pred, targets, score_mask)?;
    parts.total = combine(&parts, weights);
    Ok(parts)
}
