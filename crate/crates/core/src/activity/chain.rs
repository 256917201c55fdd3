use alloc::string::String;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use super::{ActivityCode, ActivityError, MINUTES_PER_DAY};

/// A typed activity occupying `[start, end)` minutes after local midnight.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Activity {
    #[serde(rename = "type")]
    pub kind: ActivityCode,
    pub start: u16,
    pub end: u16,
}

impl Activity {
    pub fn new(kind: ActivityCode, start: u16, end: u16) -> Self {
        Self { kind, start, end }
    }

    pub fn duration(&self) -> u16 {
        self.end - self.start
    }

    fn bounds_ok(&self) -> bool {
        self.start < self.end && self.end <= MINUTES_PER_DAY
    }
}

/// One agent-day: activities sorted by start and pairwise disjoint.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "RawChain")]
pub struct ActivityChain {
    pub agent_id: String,
    pub day_of_week: u8,
    pub activities: Vec<Activity>,
}

#[derive(Deserialize)]
struct RawChain {
    agent_id: String,
    day_of_week: u8,
    activities: Vec<Activity>,
}

impl TryFrom<RawChain> for ActivityChain {
    type Error = ActivityError;

    fn try_from(raw: RawChain) -> Result<Self, Self::Error> {
        ActivityChain::new(raw.agent_id, raw.day_of_week, raw.activities)
    }
}

impl ActivityChain {
    pub fn new(
        agent_id: impl Into<String>,
        day_of_week: u8,
        activities: Vec<Activity>,
    ) -> Result<Self, ActivityError> {
        let chain = Self {
            agent_id: agent_id.into(),
            day_of_week,
            activities,
        };
        chain.validate()?;
        Ok(chain)
    }

    pub fn validate(&self) -> Result<(), ActivityError> {
        if self.day_of_week > 6 {
            return Err(ActivityError::InvalidDay(self.day_of_week));
        }
        for (i, a) in self.activities.iter().enumerate() {
            if !a.bounds_ok() {
                return Err(ActivityError::InvalidBounds {
                    index: i,
                    start: a.start,
                    end: a.end,
                });
            }
        }
        for (i, pair) in self.activities.windows(2).enumerate() {
            if pair[1].start < pair[0].start {
                return Err(ActivityError::Unsorted(i + 1));
            }
            if pair[1].start < pair[0].end {
                return Err(ActivityError::Overlap {
                    first: i,
                    second: i + 1,
                });
            }
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.activities.len()
    }

    pub fn is_empty(&self) -> bool {
        self.activities.is_empty()
    }

    pub fn contains(&self, kind: ActivityCode) -> bool {
        self.activities.iter().any(|a| a.kind == kind)
    }

    /// Minutes spent in each activity class.
    pub fn minutes_by_type(&self) -> [u32; super::NUM_ACTIVITY_TYPES] {
        let mut out = [0u32; super::NUM_ACTIVITY_TYPES];
        for a in &self.activities {
            out[a.kind.index()] += u32::from(a.duration());
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    fn act(code: u16, s: u16, e: u16) -> Activity {
        Activity::new(ActivityCode::new(code).unwrap(), s, e)
    }

    #[test]
    fn rejects_overlap_and_order() {
        let err = ActivityChain::new("a", 0, vec![act(1, 0, 600), act(2, 540, 1020)]).unwrap_err();
        assert_eq!(
            err,
            ActivityError::Overlap {
                first: 0,
                second: 1
            }
        );
        let err = ActivityChain::new("a", 0, vec![act(2, 540, 1020), act(1, 0, 500)]).unwrap_err();
        assert_eq!(err, ActivityError::Unsorted(1));
        assert!(ActivityChain::new("a", 7, vec![]).is_err());
        assert!(ActivityChain::new("a", 0, vec![act(1, 10, 10)]).is_err());
        assert!(ActivityChain::new("a", 0, vec![act(1, 10, 1441)]).is_err());
    }

    #[test]
    fn json_lines_shape() {
        let chain =
            ActivityChain::new("agent-1", 2, vec![act(1, 0, 480), act(2, 480, 1020)]).unwrap();
        let json = serde_json::to_string(&chain).unwrap();
        assert_eq!(
            json,
            r#"{"agent_id":"agent-1","day_of_week":2,"activities":[{"type":1,"start":0,"end":480},{"type":2,"start":480,"end":1020}]}"#
        );
        let back: ActivityChain = serde_json::from_str(&json).unwrap();
        assert_eq!(back, chain);
        let bad = r#"{"agent_id":"x","day_of_week":0,"activities":[{"type":1,"start":0,"end":600},{"type":2,"start":500,"end":700}]}"#;
        assert!(serde_json::from_str::<ActivityChain>(bad).is_err());
    }
}
