use alloc::string::String;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use super::{ExtractConfig, StayPoint};

const DAY_S: i64 = 86_400;

/// Stays of one agent on one local calendar day.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AgentDay {
    pub agent_id: String,
    /// Local days since 1970-01-01.
    pub day: i64,
    /// 0 = Monday.
    pub day_of_week: u8,
    pub stays: Vec<StayPoint>,
    /// Stay time inside the day divided by 24 h.
    pub coverage: f64,
}

impl AgentDay {
    /// UTC second of local midnight starting this day.
    pub fn midnight_utc(&self, utc_offset_s: i64) -> i64 {
        self.day * DAY_S - utc_offset_s
    }
}

/// Local day index and weekday (Monday = 0) of a UTC timestamp.
pub fn local_day(ts: i64, utc_offset_s: i64) -> (i64, u8) {
    let day = (ts + utc_offset_s).div_euclid(DAY_S);
    // 1970-01-01 was a Thursday.
    let dow = (day + 3).rem_euclid(7) as u8;
    (day, dow)
}

/// Group one agent's time-ordered stays by local arrival day and keep the
/// days whose stay coverage and stay count meet the thresholds. Stay time is
/// clipped to the day it is attributed to.
pub fn quality_filter(stays: &[StayPoint], cfg: &ExtractConfig) -> Vec<AgentDay> {
    let offset = cfg.utc_offset_seconds();
    let mut days: Vec<AgentDay> = Vec::new();
    for stay in stays {
        let (day, dow) = local_day(stay.arrive, offset);
        match days.last_mut() {
            Some(d) if d.day == day && d.agent_id == stay.agent_id => d.stays.push(stay.clone()),
            _ => days.push(AgentDay {
                agent_id: stay.agent_id.clone(),
                day,
                day_of_week: dow,
                stays: alloc::vec![stay.clone()],
                coverage: 0.0,
            }),
        }
    }
    days.retain_mut(|d| {
        let start = d.midnight_utc(offset);
        let end = start + DAY_S;
        let covered: i64 = d
            .stays
            .iter()
            .map(|s| (s.depart.min(end) - s.arrive.max(start)).max(0))
            .sum();
        d.coverage = covered as f64 / DAY_S as f64;
        d.coverage >= cfg.min_coverage && d.stays.len() >= cfg.min_daily_activities
    });
    days
}
