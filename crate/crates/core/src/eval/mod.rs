//! Distributional metrics: Jensen-Shannon divergence over activity-chain
//! marginals, cosine similarity of OD matrices and MAPE.

mod report;

pub use report::{build_report, CosineRow, JsdRow, NamedChains, NamedMatrix, Report};

use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::math;
use crate::{ActivityChain, NUM_ACTIVITY_TYPES, SLOTS_PER_DAY, SLOT_MINUTES};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum EvalError {
    #[error("marginal kinds or bin counts differ ({0:?} vs {1:?})")]
    BinMismatch(MarginalKind, MarginalKind),
    #[error("no chains or activities to summarize")]
    EmptyInput,
    #[error("matrix shapes differ")]
    ShapeMismatch,
    #[error("cosine similarity of an all-zero matrix is undefined")]
    ZeroMatrix,
    #[error("series lengths differ: {0} vs {1}")]
    LengthMismatch(usize, usize),
    #[error("every observed value is zero")]
    AllZeroObserved,
    #[error("logarithm base must be positive and not 1")]
    InvalidBase,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MarginalKind {
    ChainLength,
    Duration,
    Type,
    StartTime,
    EndTime,
}

impl MarginalKind {
    pub const ALL: [MarginalKind; 5] = [
        MarginalKind::ChainLength,
        MarginalKind::Duration,
        MarginalKind::Type,
        MarginalKind::StartTime,
        MarginalKind::EndTime,
    ];

    /// Lengths 1..=11 plus a 12+ bin; 15-minute duration bins; one bin per
    /// code; 96 start and end slots.
    pub fn bin_count(self) -> usize {
        match self {
            MarginalKind::ChainLength => 12,
            MarginalKind::Type => NUM_ACTIVITY_TYPES,
            MarginalKind::Duration | MarginalKind::StartTime | MarginalKind::EndTime => {
                SLOTS_PER_DAY
            }
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            MarginalKind::ChainLength => "chain_length",
            MarginalKind::Duration => "duration",
            MarginalKind::Type => "type",
            MarginalKind::StartTime => "start_time",
            MarginalKind::EndTime => "end_time",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Marginal {
    pub kind: MarginalKind,
    pub bins: Vec<f64>,
}

impl Marginal {
    /// Normalize raw counts. Fails when there is no mass.
    pub fn from_counts(kind: MarginalKind, counts: &[f64]) -> Result<Self, EvalError> {
        let total: f64 = counts.iter().sum();
        if !(total > 0.0) {
            return Err(EvalError::EmptyInput);
        }
        Ok(Self {
            kind,
            bins: counts.iter().map(|c| c / total).collect(),
        })
    }
}

/// Five normalized marginals in [`MarginalKind::ALL`] order.
pub fn marginals_from_chains(chains: &[ActivityChain]) -> Result<Vec<Marginal>, EvalError> {
    marginal_counts(chains.iter())
        .into_iter()
        .zip(MarginalKind::ALL)
        .map(|(counts, kind)| Marginal::from_counts(kind, &counts))
        .collect()
}

/// Raw histogram counts behind [`marginals_from_chains`]. Empty chains add
/// nothing.
pub fn marginal_counts<'a>(chains: impl Iterator<Item = &'a ActivityChain>) -> Vec<Vec<f64>> {
    let mut counts: Vec<Vec<f64>> = MarginalKind::ALL
        .iter()
        .map(|k| vec![0.0; k.bin_count()])
        .collect();
    for chain in chains {
        if chain.is_empty() {
            continue;
        }
        counts[0][chain.len().min(12) - 1] += 1.0;
        for a in &chain.activities {
            let slot = usize::from(SLOT_MINUTES);
            let d = usize::from(a.duration());
            counts[1][(d.div_ceil(slot) - 1).min(SLOTS_PER_DAY - 1)] += 1.0;
            counts[2][a.kind.index()] += 1.0;
            counts[3][usize::from(a.start) / slot] += 1.0;
            counts[4][(usize::from(a.end) - 1) / slot] += 1.0;
        }
    }
    counts
}

/// JSD between two chain sets for each requested marginal.
pub fn jsd_by_kind(
    a: &[ActivityChain],
    b: &[ActivityChain],
    kinds: &[MarginalKind],
) -> Result<Vec<f64>, EvalError> {
    let ca = marginal_counts(a.iter());
    let cb = marginal_counts(b.iter());
    kinds
        .iter()
        .map(|&kind| {
            let i = MarginalKind::ALL
                .iter()
                .position(|k| *k == kind)
                .unwrap_or(0);
            let p = Marginal::from_counts(kind, &ca[i])?;
            let q = Marginal::from_counts(kind, &cb[i])?;
            jsd(&p, &q)
        })
        .collect()
}

/// Jensen-Shannon divergence with natural log.
pub fn jsd(p: &Marginal, q: &Marginal) -> Result<f64, EvalError> {
    if p.kind != q.kind || p.bins.len() != q.bins.len() {
        return Err(EvalError::BinMismatch(p.kind, q.kind));
    }
    Ok(jsd_slices(&p.bins, &q.bins))
}

/// JSD in an arbitrary log base (2 bounds the value by 1).
pub fn jsd_base(p: &Marginal, q: &Marginal, base: f64) -> Result<f64, EvalError> {
    if !(base > 0.0) || base == 1.0 {
        return Err(EvalError::InvalidBase);
    }
    Ok(jsd(p, q)? / math::ln(base))
}

/// JSD of two equal-length probability vectors. Each bin's contribution is
/// formed symmetrically, so swapping the arguments gives the same bits.
pub fn jsd_slices(p: &[f64], q: &[f64]) -> f64 {
    debug_assert_eq!(p.len(), q.len());
    let mut total = 0.0;
    for (&a, &b) in p.iter().zip(q) {
        let m = 0.5 * (a + b);
        total += 0.5 * xlogx_over(a, m) + 0.5 * xlogx_over(b, m);
    }
    total.clamp(0.0, core::f64::consts::LN_2)
}

#[inline]
fn xlogx_over(x: f64, m: f64) -> f64 {
    if x > 0.0 {
        x * math::ln(x / m)
    } else {
        0.0
    }
}

/// Flattened cosine similarity of two equally shaped matrices.
pub fn cosine_sim(a: &[Vec<f64>], b: &[Vec<f64>]) -> Result<f64, EvalError> {
    if a.len() != b.len() || a.iter().zip(b).any(|(ra, rb)| ra.len() != rb.len()) {
        return Err(EvalError::ShapeMismatch);
    }
    let (mut dot, mut na, mut nb) = (0.0, 0.0, 0.0);
    for (ra, rb) in a.iter().zip(b) {
        for (&x, &y) in ra.iter().zip(rb) {
            dot += x * y;
            na += x * x;
            nb += y * y;
        }
    }
    if na == 0.0 || nb == 0.0 {
        return Err(EvalError::ZeroMatrix);
    }
    Ok(dot / (math::sqrt(na) * math::sqrt(nb)))
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Mape {
    pub percent: f64,
    /// Pairs left out because the observed value was zero.
    pub skipped: usize,
}

pub fn mape(observed: &[f64], simulated: &[f64]) -> Result<Mape, EvalError> {
    if observed.len() != simulated.len() {
        return Err(EvalError::LengthMismatch(observed.len(), simulated.len()));
    }
    let mut sum = 0.0;
    let mut n = 0usize;
    for (&o, &s) in observed.iter().zip(simulated) {
        if o == 0.0 {
            continue;
        }
        sum += (o - s).abs() / o.abs();
        n += 1;
    }
    if n == 0 {
        return Err(EvalError::AllZeroObserved);
    }
    Ok(Mape {
        percent: 100.0 * sum / n as f64,
        skipped: observed.len() - n,
    })
}
