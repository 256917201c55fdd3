//! Activity taxonomy, day encoding on the 96-slot grid, training masks and
//! demographic groups.

mod chain;
mod code;
mod demographic;
mod grid;
mod mask;

pub use chain::{Activity, ActivityChain};
pub use code::{ActivityCode, NUM_ACTIVITY_TYPES};
pub use demographic::{enumerate_groups, AgeBand, DemographicGroup, Employment, Sex};
pub use grid::{
    decode_grid, encode_chain, Slot, SlotGrid, MINUTES_PER_DAY, SLOTS_PER_DAY, SLOT_MINUTES,
};
pub(crate) use mask::apply_mask;
pub use mask::{mask_activity_based, mask_period, mask_slot_based, MaskKind, PeriodMask};

use alloc::string::String;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ActivityError {
    #[error("activity code {0} outside 1..=15")]
    InvalidCode(u16),
    #[error("unknown activity name {0:?}")]
    UnknownName(String),
    #[error("activity {index} has invalid bounds [{start}, {end})")]
    InvalidBounds { index: usize, start: u16, end: u16 },
    #[error("activities {first} and {second} overlap")]
    Overlap { first: usize, second: usize },
    #[error("activities are not sorted by start at index {0}")]
    Unsorted(usize),
    #[error("day of week {0} outside 0..=6")]
    InvalidDay(u8),
    #[error("grid slot {0} is masked")]
    MaskedSlot(usize),
    #[error("grid must have exactly 96 slots, got {0}")]
    GridLength(usize),
    #[error("dimension list is empty")]
    NoDimensions,
    #[error("dimension {0} has zero categories")]
    EmptyDimension(usize),
    #[error("unknown demographic group key {0:?}")]
    UnknownGroup(String),
}
