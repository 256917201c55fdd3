use alloc::vec::Vec;

use super::loss::argmax;
use super::{Model, ReconError};
use crate::{ActivityCode, Slot, SlotGrid, NUM_ACTIVITY_TYPES, SLOTS_PER_DAY};

const C: usize = NUM_ACTIVITY_TYPES;

#[derive(Clone, Debug, PartialEq)]
pub struct Reconstruction {
    /// Posterior per slot, `[slot][code]`, each row summing to 1.
    pub probs: Vec<f64>,
    /// Input with every masked slot replaced by its argmax code.
    pub completed: SlotGrid,
}

/// Fill the masked slots of one grid, conditioning on `day_of_week`.
pub fn reconstruct(
    model: &Model,
    masked: &SlotGrid,
    day_of_week: u8,
) -> Result<Reconstruction, ReconError> {
    if masked.masked_count() == SLOTS_PER_DAY {
        return Err(ReconError::FullyMasked);
    }
    let mut g = masked.clone();
    g.day_of_week = day_of_week;
    Ok(complete_batch(model, core::slice::from_ref(&g), None).remove(0))
}

/// Batched [`reconstruct`]; each grid uses its own day of week.
pub fn reconstruct_batch(
    model: &Model,
    grids: &[SlotGrid],
) -> Result<Vec<Reconstruction>, ReconError> {
    if grids.iter().any(|g| g.masked_count() == SLOTS_PER_DAY) {
        return Err(ReconError::FullyMasked);
    }
    Ok(complete_batch(model, grids, None))
}

/// Completion with an optional additive logit bias per code (a demographic
/// adapter). Fully masked grids are allowed here.
pub fn complete_batch(
    model: &Model,
    grids: &[SlotGrid],
    bias: Option<&[f64; C]>,
) -> Vec<Reconstruction> {
    let logits = model.logits(grids);
    let mut out = Vec::with_capacity(grids.len());
    let mut z = [0.0f64; C];
    for (b, g) in grids.iter().enumerate() {
        let mut probs = alloc::vec![0.0; SLOTS_PER_DAY * C];
        let mut completed = g.clone();
        for k in 0..SLOTS_PER_DAY {
            let row = &logits[(b * SLOTS_PER_DAY + k) * C..(b * SLOTS_PER_DAY + k + 1) * C];
            for c in 0..C {
                z[c] = f64::from(row[c]) + bias.map_or(0.0, |a| a[c]);
            }
            let p = &mut probs[k * C..(k + 1) * C];
            crate::math::softmax_into(&z, p);
            if g.slots[k].is_masked() {
                completed.slots[k] = Slot::Act(ActivityCode::from_index(argmax(p)));
            }
        }
        out.push(Reconstruction { probs, completed });
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::recon::Architecture;

    #[test]
    fn preserves_observed_slots() {
        let m = Model::new(
            Architecture {
                width: 8,
                blocks: 1,
                hidden: 8,
                dropout: 0.0,
            },
            4,
        )
        .unwrap();
        let mut g = SlotGrid::filled(Slot::Act(ActivityCode::HOME), 1);
        let r = reconstruct(&m, &g, 1).unwrap();
        assert_eq!(r.completed, g);
        for k in 10..50 {
            g.slots[k] = Slot::Masked;
        }
        g.slots[60] = Slot::Empty;
        let r = reconstruct(&m, &g, 1).unwrap();
        for k in 0..SLOTS_PER_DAY {
            if !g.slots[k].is_masked() {
                assert_eq!(r.completed.slots[k], g.slots[k]);
            } else {
                assert!(matches!(r.completed.slots[k], Slot::Act(_)));
            }
            let s: f64 = r.probs[k * C..(k + 1) * C].iter().sum();
            assert!((s - 1.0).abs() < 1e-9);
        }
        assert_eq!(
            reconstruct(&m, &SlotGrid::filled(Slot::Masked, 0), 0),
            Err(ReconError::FullyMasked)
        );
    }
}
