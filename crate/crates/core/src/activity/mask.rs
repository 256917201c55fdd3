//! The three training masks: whole activities, contiguous periods and
//! scattered slots. All are pure functions of (grid, parameters, seed).

use alloc::vec::Vec;

use rand::seq::index;
use rand::Rng as _;

use super::{Slot, SlotGrid, SLOTS_PER_DAY};
use crate::math;
use crate::rng::{rng_from, Rng};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum MaskKind {
    ActivityBased,
    Period,
    SlotBased,
}

impl MaskKind {
    pub const ALL: [MaskKind; 3] = [
        MaskKind::ActivityBased,
        MaskKind::Period,
        MaskKind::SlotBased,
    ];
}

/// Parameters of continuous-period masking.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PeriodMask {
    pub min_len: usize,
    pub max_len: usize,
    pub max_segments: usize,
    pub coverage: f64,
}

impl PeriodMask {
    /// 8-20 slots per segment, at most 8 segments.
    pub fn with_coverage(coverage: f64) -> Self {
        Self {
            min_len: 8,
            max_len: 20,
            max_segments: 8,
            coverage,
        }
    }
}

/// Hide `ceil(fraction * runs)` whole activity runs chosen uniformly.
pub fn mask_activity_based(grid: &SlotGrid, fraction: f64, seed: u64) -> SlotGrid {
    mask_activity_based_with(grid, fraction, &mut rng_from(seed))
}

pub(crate) fn mask_activity_based_with(grid: &SlotGrid, fraction: f64, rng: &mut Rng) -> SlotGrid {
    let fraction = fraction.clamp(0.0, 1.0);
    let runs = grid.activity_runs();
    let count = (math::ceil_tolerant(fraction * runs.len() as f64) as usize).min(runs.len());
    let mut out = grid.clone();
    if count == 0 {
        return out;
    }
    for i in index::sample(rng, runs.len(), count) {
        let (_, s, e) = runs[i];
        out.slots[s..e].fill(Slot::Masked);
    }
    out
}

/// Mask contiguous segments until at least `coverage * 96` slots are masked
/// or `max_segments` segments have been placed.
///
/// Segment lengths are drawn uniformly from `[min_len, max_len]`, raised when
/// needed so the remaining segments can still reach the coverage target.
/// Segments are placed on fully unmasked stretches when one is long enough,
/// otherwise where they cover the most unmasked slots.
pub fn mask_period(grid: &SlotGrid, params: PeriodMask, seed: u64) -> SlotGrid {
    mask_period_with(grid, params, &mut rng_from(seed))
}

pub(crate) fn mask_period_with(grid: &SlotGrid, params: PeriodMask, rng: &mut Rng) -> SlotGrid {
    let mut out = grid.clone();
    let max_len = params.max_len.clamp(1, SLOTS_PER_DAY);
    let min_len = params.min_len.clamp(1, max_len);
    let target = (math::ceil_tolerant(params.coverage.clamp(0.0, 1.0) * SLOTS_PER_DAY as f64)
        as usize)
        .min(SLOTS_PER_DAY);
    let mut masked = out.masked_count();
    let mut starts: Vec<usize> = Vec::with_capacity(SLOTS_PER_DAY);
    for placed in 0..params.max_segments {
        if masked >= target {
            break;
        }
        let left = params.max_segments - placed;
        let needed = (target - masked).div_ceil(left);
        let lo = min_len.max(needed).min(max_len);
        let len = rng.random_range(lo..=max_len);

        starts.clear();
        for s in 0..=SLOTS_PER_DAY - len {
            if out.slots[s..s + len].iter().all(|x| !x.is_masked()) {
                starts.push(s);
            }
        }
        if starts.is_empty() {
            let fresh = |s: usize| {
                out.slots[s..s + len]
                    .iter()
                    .filter(|x| !x.is_masked())
                    .count()
            };
            let best = (0..=SLOTS_PER_DAY - len).map(fresh).max().unwrap_or(0);
            if best == 0 {
                break;
            }
            starts.extend((0..=SLOTS_PER_DAY - len).filter(|&s| fresh(s) == best));
        }
        let start = starts[rng.random_range(0..starts.len())];
        for slot in &mut out.slots[start..start + len] {
            if !slot.is_masked() {
                *slot = Slot::Masked;
                masked += 1;
            }
        }
    }
    out
}

/// Mask exactly `round(fraction * 96)` uniformly chosen slots.
pub fn mask_slot_based(grid: &SlotGrid, fraction: f64, seed: u64) -> SlotGrid {
    mask_slot_based_with(grid, fraction, &mut rng_from(seed))
}

pub(crate) fn mask_slot_based_with(grid: &SlotGrid, fraction: f64, rng: &mut Rng) -> SlotGrid {
    let count = math::round(fraction.clamp(0.0, 1.0) * SLOTS_PER_DAY as f64) as usize;
    let mut out = grid.clone();
    for k in index::sample(rng, SLOTS_PER_DAY, count) {
        out.slots[k] = Slot::Masked;
    }
    out
}

/// Apply one of the three masks at the given strength. Period masking uses
/// the default 8-20 slot segments with `fraction` as coverage.
pub(crate) fn apply_mask(
    grid: &SlotGrid,
    kind: MaskKind,
    fraction: f64,
    rng: &mut Rng,
) -> SlotGrid {
    match kind {
        MaskKind::ActivityBased => mask_activity_based_with(grid, fraction, rng),
        MaskKind::Period => mask_period_with(grid, PeriodMask::with_coverage(fraction), rng),
        MaskKind::SlotBased => mask_slot_based_with(grid, fraction, rng),
    }
}
