use alloc::string::String;
use alloc::vec::Vec;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use super::{Activity, ActivityChain, ActivityCode, ActivityError};

pub const SLOTS_PER_DAY: usize = 96;
pub const SLOT_MINUTES: u16 = 15;
pub const MINUTES_PER_DAY: u16 = 1440;

/// State of one 15-minute slot.
///
/// `Empty` is recorded absence of activity and is a valid reconstruction
/// target; `Masked` is hidden from the model and never scored as-is.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Slot {
    Act(ActivityCode),
    Masked,
    Empty,
}

impl Slot {
    pub const EMPTY_TOKEN: usize = 15;
    pub const MASK_TOKEN: usize = 16;
    pub const VOCAB: usize = 17;

    /// Input token for the slot classifier: 0..15 activity classes, then
    /// EMPTY and MASKED.
    pub fn token(self) -> usize {
        match self {
            Slot::Act(c) => c.index(),
            Slot::Empty => Self::EMPTY_TOKEN,
            Slot::Masked => Self::MASK_TOKEN,
        }
    }

    pub fn activity(self) -> Option<ActivityCode> {
        match self {
            Slot::Act(c) => Some(c),
            _ => None,
        }
    }

    pub fn is_masked(self) -> bool {
        self == Slot::Masked
    }

    /// Wire encoding: 1..15 activity, 0 empty, -1 masked.
    pub fn to_i8(self) -> i8 {
        match self {
            Slot::Act(c) => c.code() as i8,
            Slot::Empty => 0,
            Slot::Masked => -1,
        }
    }

    pub fn from_i8(v: i8) -> Result<Self, ActivityError> {
        match v {
            0 => Ok(Slot::Empty),
            -1 => Ok(Slot::Masked),
            c if c > 0 => ActivityCode::new(c as u16).map(Slot::Act),
            c => Err(ActivityError::InvalidCode(c as u16)),
        }
    }
}

/// A day as 96 slots of 15 minutes.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct SlotGrid {
    pub slots: [Slot; SLOTS_PER_DAY],
    pub day_of_week: u8,
}

impl SlotGrid {
    pub fn filled(slot: Slot, day_of_week: u8) -> Self {
        Self {
            slots: [slot; SLOTS_PER_DAY],
            day_of_week,
        }
    }

    pub fn empty(day_of_week: u8) -> Self {
        Self::filled(Slot::Empty, day_of_week)
    }

    pub fn masked_count(&self) -> usize {
        self.slots.iter().filter(|s| s.is_masked()).count()
    }

    /// Slots that carry an activity code.
    pub fn observed_count(&self) -> usize {
        self.slots.iter().filter(|s| s.activity().is_some()).count()
    }

    pub fn contains(&self, code: ActivityCode) -> bool {
        self.slots.contains(&Slot::Act(code))
    }

    /// Maximal runs of equal activity codes as `(code, first_slot, end_slot)`.
    /// Empty and masked slots break runs and never form one.
    pub fn activity_runs(&self) -> Vec<(ActivityCode, usize, usize)> {
        let mut runs = Vec::new();
        let mut k = 0;
        while k < SLOTS_PER_DAY {
            if let Slot::Act(code) = self.slots[k] {
                let start = k;
                while k < SLOTS_PER_DAY && self.slots[k] == Slot::Act(code) {
                    k += 1;
                }
                runs.push((code, start, k));
            } else {
                k += 1;
            }
        }
        runs
    }

    /// Observed activity runs as activities, treating masked slots like
    /// gaps. This is the evidence view of an incomplete day.
    pub fn evidence_chain(&self, agent_id: impl Into<String>) -> ActivityChain {
        ActivityChain {
            agent_id: agent_id.into(),
            day_of_week: self.day_of_week,
            activities: runs_to_activities(&self.activity_runs()),
        }
    }
}

fn runs_to_activities(runs: &[(ActivityCode, usize, usize)]) -> Vec<Activity> {
    runs.iter()
        .map(|&(code, s, e)| Activity::new(code, s as u16 * SLOT_MINUTES, e as u16 * SLOT_MINUTES))
        .collect()
}

impl Serialize for SlotGrid {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        #[derive(Serialize)]
        struct Wire<'a> {
            day_of_week: u8,
            slots: &'a [i8],
        }
        let slots: Vec<i8> = self.slots.iter().map(|s| s.to_i8()).collect();
        Wire {
            day_of_week: self.day_of_week,
            slots: &slots,
        }
        .serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for SlotGrid {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        #[derive(Deserialize)]
        struct Wire {
            day_of_week: u8,
            slots: Vec<i8>,
        }
        let wire = Wire::deserialize(deserializer)?;
        if wire.slots.len() != SLOTS_PER_DAY {
            return Err(serde::de::Error::custom(ActivityError::GridLength(
                wire.slots.len(),
            )));
        }
        if wire.day_of_week > 6 {
            return Err(serde::de::Error::custom(ActivityError::InvalidDay(
                wire.day_of_week,
            )));
        }
        let mut grid = SlotGrid::empty(wire.day_of_week);
        for (dst, &v) in grid.slots.iter_mut().zip(&wire.slots) {
            *dst = Slot::from_i8(v).map_err(serde::de::Error::custom)?;
        }
        Ok(grid)
    }
}

/// Place a chain on the 96-slot grid. Slot `k` takes the activity covering
/// minute `15k`; slots nothing covers stay empty.
pub fn encode_chain(chain: &ActivityChain) -> Result<SlotGrid, ActivityError> {
    chain.validate()?;
    let mut grid = SlotGrid::empty(chain.day_of_week);
    for a in &chain.activities {
        let first = usize::from(a.start.div_ceil(SLOT_MINUTES));
        let end = usize::from(a.end.div_ceil(SLOT_MINUTES)).min(SLOTS_PER_DAY);
        for slot in &mut grid.slots[first.min(end)..end] {
            *slot = Slot::Act(a.kind);
        }
    }
    Ok(grid)
}

/// Inverse of [`encode_chain`]: each maximal run of one code becomes an
/// activity, empty runs vanish.
pub fn decode_grid(
    grid: &SlotGrid,
    agent_id: impl Into<String>,
) -> Result<ActivityChain, ActivityError> {
    if let Some(k) = grid.slots.iter().position(|s| s.is_masked()) {
        return Err(ActivityError::MaskedSlot(k));
    }
    Ok(grid.evidence_chain(agent_id))
}
