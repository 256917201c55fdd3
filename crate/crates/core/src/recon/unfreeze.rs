use alloc::vec::Vec;
use core::ops::Range;

use serde::{Deserialize, Serialize};

use super::{LayerGroup, Model};

/// Which layer groups receive updates.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct FreezeState {
    pub embedding: bool,
    pub input_near: bool,
    pub middle: bool,
    pub output_head: bool,
}

impl FreezeState {
    pub const ALL_TRAINABLE: FreezeState = FreezeState {
        embedding: true,
        input_near: true,
        middle: true,
        output_head: true,
    };

    pub fn is_trainable(&self, group: LayerGroup) -> bool {
        match group {
            LayerGroup::Embedding => self.embedding,
            LayerGroup::InputNear => self.input_near,
            LayerGroup::Middle => self.middle,
            LayerGroup::OutputHead => self.output_head,
        }
    }

    pub(crate) fn ranges(&self, model: &Model) -> Vec<Range<usize>> {
        LayerGroup::ALL
            .iter()
            .filter(|g| self.is_trainable(**g))
            .map(|g| model.group_range(*g))
            .filter(|r| !r.is_empty())
            .collect()
    }
}

/// First quarter: embedding and output head. Second quarter: plus the
/// input-near blocks. Second half: everything.
pub fn progressive_unfreeze(epoch: usize, total_epochs: usize) -> FreezeState {
    let quarter = 4 * epoch < total_epochs;
    let half = 2 * epoch < total_epochs;
    FreezeState {
        embedding: true,
        output_head: true,
        input_near: !quarter,
        middle: !half,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn phases() {
        let s = progressive_unfreeze(0, 100);
        assert!(s.embedding && s.output_head && !s.input_near && !s.middle);
        let s = progressive_unfreeze(30, 100);
        assert!(s.input_near && !s.middle);
        assert_eq!(progressive_unfreeze(99, 100), FreezeState::ALL_TRAINABLE);
        assert!(!progressive_unfreeze(24, 100).input_near);
        assert!(progressive_unfreeze(25, 100).input_near);
        assert!(!progressive_unfreeze(49, 100).middle);
        assert!(progressive_unfreeze(50, 100).middle);
    }

    #[test]
    fn monotone() {
        for total in 1..60 {
            let mut prev = progressive_unfreeze(0, total);
            for e in 1..total {
                let s = progressive_unfreeze(e, total);
                for g in LayerGroup::ALL {
                    assert!(!prev.is_trainable(g) || s.is_trainable(g));
                }
                prev = s;
            }
        }
    }
}
