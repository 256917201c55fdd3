use core::fmt;

use serde::{Deserialize, Serialize};

use super::ActivityError;

pub const NUM_ACTIVITY_TYPES: usize = 15;

const NAMES: [&str; NUM_ACTIVITY_TYPES] = [
    "Home",
    "Work",
    "School",
    "Caregiving",
    "Shop goods",
    "Shop services",
    "Meals out",
    "Errands",
    "Leisure",
    "Exercise",
    "Social",
    "Healthcare",
    "Worship",
    "Other",
    "Pickup/Drop",
];

/// One of the 15 activity categories, stored as its 1-based code.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(try_from = "u16", into = "u16")]
pub struct ActivityCode(u8);

impl ActivityCode {
    pub const HOME: Self = Self(1);
    pub const WORK: Self = Self(2);
    pub const SCHOOL: Self = Self(3);
    pub const CAREGIVING: Self = Self(4);
    pub const SHOP_GOODS: Self = Self(5);
    pub const SHOP_SERVICES: Self = Self(6);
    pub const MEALS_OUT: Self = Self(7);
    pub const ERRANDS: Self = Self(8);
    pub const LEISURE: Self = Self(9);
    pub const EXERCISE: Self = Self(10);
    pub const SOCIAL: Self = Self(11);
    pub const HEALTHCARE: Self = Self(12);
    pub const WORSHIP: Self = Self(13);
    pub const OTHER: Self = Self(14);
    pub const PICKUP_DROP: Self = Self(15);

    pub fn new(code: u16) -> Result<Self, ActivityError> {
        if (1..=NUM_ACTIVITY_TYPES as u16).contains(&code) {
            Ok(Self(code as u8))
        } else {
            Err(ActivityError::InvalidCode(code))
        }
    }

    /// Code from a zero-based class index. Panics on index >= 15.
    pub fn from_index(index: usize) -> Self {
        assert!(
            index < NUM_ACTIVITY_TYPES,
            "class index {index} out of range"
        );
        Self(index as u8 + 1)
    }

    pub fn code(self) -> u8 {
        self.0
    }

    /// Zero-based class index used by tensors.
    pub fn index(self) -> usize {
        usize::from(self.0 - 1)
    }

    pub fn name(self) -> &'static str {
        NAMES[self.index()]
    }

    pub fn from_name(name: &str) -> Result<Self, ActivityError> {
        NAMES
            .iter()
            .position(|n| n.eq_ignore_ascii_case(name))
            .map(Self::from_index)
            .ok_or_else(|| ActivityError::UnknownName(name.into()))
    }

    pub fn all() -> impl Iterator<Item = Self> {
        (0..NUM_ACTIVITY_TYPES).map(Self::from_index)
    }

    /// Work and school anchor the location assignment.
    pub fn is_mandatory(self) -> bool {
        self == Self::WORK || self == Self::SCHOOL
    }
}

impl TryFrom<u16> for ActivityCode {
    type Error = ActivityError;

    fn try_from(value: u16) -> Result<Self, Self::Error> {
        Self::new(value)
    }
}

impl From<ActivityCode> for u16 {
    fn from(value: ActivityCode) -> Self {
        u16::from(value.0)
    }
}

impl fmt::Display for ActivityCode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} ({})", self.0, self.name())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fifteen_codes_round_trip() {
        assert_eq!(ActivityCode::all().count(), 15);
        for code in ActivityCode::all() {
            assert_eq!(ActivityCode::new(u16::from(code.code())).unwrap(), code);
            assert_eq!(ActivityCode::from_name(code.name()).unwrap(), code);
            assert_eq!(ActivityCode::from_index(code.index()), code);
        }
        assert_eq!(
            ActivityCode::from_name("pickup/drop").unwrap(),
            ActivityCode::PICKUP_DROP
        );
    }

    #[test]
    fn table_names() {
        assert_eq!(ActivityCode::HOME.name(), "Home");
        assert_eq!(ActivityCode::MEALS_OUT.name(), "Meals out");
        assert_eq!(ActivityCode::WORSHIP.name(), "Worship");
        assert_eq!(ActivityCode::new(15).unwrap().name(), "Pickup/Drop");
    }

    #[test]
    fn rejects_out_of_range() {
        assert!(ActivityCode::new(0).is_err());
        assert!(ActivityCode::new(16).is_err());
        assert!(ActivityCode::from_name("Napping").is_err());
    }

    #[test]
    fn serde_as_integer() {
        let json = serde_json::to_string(&ActivityCode::WORK).unwrap();
        assert_eq!(json, "2");
        let back: ActivityCode = serde_json::from_str("7").unwrap();
        assert_eq!(back, ActivityCode::MEALS_OUT);
        assert!(serde_json::from_str::<ActivityCode>("16").is_err());
    }
}
