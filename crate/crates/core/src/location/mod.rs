//! Zone assignment for activity chains: anchored commute-distance sampling
//! for work and school, distance plus heading matching for everything else,
//! travel-time feasibility, and calibration of the distance profiles
//! against observed per-region activity frequencies.

mod assign;
mod od;
mod profiles;
mod refine;

pub use assign::{
    anchor_spans, assign_chain, assign_mandatory, assign_nonmandatory, heading_deviation,
    select_mandatory, select_nonmandatory, unflagged_violations, ActivityPlacement, AnchorSpan,
    NonMandatoryChoice,
};
pub use od::{od_matrix, OdMatrix, RegionFrequencies};
pub use profiles::{
    AngleCell, LogNormal, MandatoryCell, SamplingProfiles, TypeCell, WrappedNormal,
};
pub use refine::{
    refine_profiles, refine_profiles_with, CalibrationCase, RefineConfig, RefineOutcome,
    RefineRound, RefineStop,
};

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::math;
use crate::staypoint::haversine_m;
use crate::ActivityCode;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum LocationError {
    #[error("zone graph is empty")]
    EmptyGraph,
    #[error("unknown zone {0:?}")]
    UnknownZone(String),
    #[error("duplicate zone {0:?}")]
    DuplicateZone(String),
    #[error("invalid zone {zone_id:?}: {reason}")]
    InvalidZone { zone_id: String, reason: String },
    #[error("no zone accepts activity {0}")]
    NoCompatibleZone(ActivityCode),
    #[error("{0} is not a mandatory activity")]
    NotMandatory(ActivityCode),
    #[error("no sampling profile for activity {code} in sub-region {sub_region:?}")]
    MissingProfile {
        code: ActivityCode,
        sub_region: String,
    },
    #[error("invalid sampling profile: {0}")]
    InvalidProfile(String),
    #[error("invalid travel time: {0}")]
    InvalidTravelTime(String),
    #[error("invalid input: {0}")]
    Input(String),
    #[error(transparent)]
    Eval(#[from] crate::eval::EvalError),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Zone {
    pub zone_id: String,
    pub lat: f64,
    pub lon: f64,
    pub sub_region: String,
    /// Suitability per activity code; missing codes weigh 0.
    #[serde(default)]
    pub land_use: BTreeMap<ActivityCode, f64>,
}

impl Zone {
    pub fn weight(&self, code: ActivityCode) -> f64 {
        self.land_use.get(&code).copied().unwrap_or(0.0)
    }

    fn validate(&self) -> Result<(), LocationError> {
        let bad = |reason: &str| LocationError::InvalidZone {
            zone_id: self.zone_id.clone(),
            reason: reason.into(),
        };
        if !(-90.0..=90.0).contains(&self.lat) || !(-180.0..=180.0).contains(&self.lon) {
            return Err(bad("centroid out of range"));
        }
        if self.land_use.values().any(|w| !w.is_finite() || *w < 0.0) {
            return Err(bad("land-use weights must be finite and non-negative"));
        }
        Ok(())
    }
}

/// Zones plus a travel-time function: a supplied matrix where present,
/// otherwise great-circle distance at a fixed speed.
#[derive(Clone, Debug)]
pub struct ZoneGraph {
    zones: Vec<Zone>,
    by_id: BTreeMap<String, usize>,
    regions: Vec<String>,
    region_of: Vec<usize>,
    speed_kmh: f64,
    times: BTreeMap<(usize, usize), f64>,
}

pub const DEFAULT_SPEED_KMH: f64 = 30.0;

impl ZoneGraph {
    pub fn new(zones: Vec<Zone>) -> Result<Self, LocationError> {
        if zones.is_empty() {
            return Err(LocationError::EmptyGraph);
        }
        let mut by_id = BTreeMap::new();
        for (i, z) in zones.iter().enumerate() {
            z.validate()?;
            if by_id.insert(z.zone_id.clone(), i).is_some() {
                return Err(LocationError::DuplicateZone(z.zone_id.clone()));
            }
        }
        let mut regions: Vec<String> = zones.iter().map(|z| z.sub_region.clone()).collect();
        regions.sort();
        regions.dedup();
        let region_of = zones
            .iter()
            .map(|z| regions.binary_search(&z.sub_region).unwrap_or(0))
            .collect();
        Ok(Self {
            zones,
            by_id,
            regions,
            region_of,
            speed_kmh: DEFAULT_SPEED_KMH,
            times: BTreeMap::new(),
        })
    }

    pub fn with_speed(mut self, speed_kmh: f64) -> Result<Self, LocationError> {
        if !(speed_kmh > 0.0) || !speed_kmh.is_finite() {
            return Err(LocationError::InvalidTravelTime(format!(
                "speed {speed_kmh} km/h"
            )));
        }
        self.speed_kmh = speed_kmh;
        Ok(self)
    }

    /// Override travel times with `(from, to, minutes)` entries. Entries
    /// apply in the given direction only; pairs without an entry keep the
    /// distance-based default.
    pub fn with_travel_times(
        mut self,
        entries: &[(String, String, f64)],
    ) -> Result<Self, LocationError> {
        for (a, b, m) in entries {
            if !m.is_finite() || *m < 0.0 {
                return Err(LocationError::InvalidTravelTime(format!("{a} -> {b}: {m}")));
            }
            let (i, j) = (self.index(a)?, self.index(b)?);
            if i == j && *m != 0.0 {
                return Err(LocationError::InvalidTravelTime(format!(
                    "{a} -> {a} must be 0"
                )));
            }
            self.times.insert((i, j), *m);
        }
        Ok(self)
    }

    pub fn zones(&self) -> &[Zone] {
        &self.zones
    }

    pub fn len(&self) -> usize {
        self.zones.len()
    }

    pub fn is_empty(&self) -> bool {
        self.zones.is_empty()
    }

    pub fn index(&self, zone_id: &str) -> Result<usize, LocationError> {
        self.by_id
            .get(zone_id)
            .copied()
            .ok_or_else(|| LocationError::UnknownZone(zone_id.into()))
    }

    /// Sorted distinct sub-region names.
    pub fn regions(&self) -> &[String] {
        &self.regions
    }

    /// Position of a zone's sub-region in [`ZoneGraph::regions`].
    pub fn region_of(&self, zone: usize) -> usize {
        self.region_of[zone]
    }

    pub fn distance_km(&self, a: usize, b: usize) -> f64 {
        if a == b {
            return 0.0;
        }
        let (za, zb) = (&self.zones[a], &self.zones[b]);
        haversine_m((za.lat, za.lon), (zb.lat, zb.lon)) / 1000.0
    }

    /// Minutes from `a` to `b`.
    pub fn travel_time(&self, a: usize, b: usize) -> f64 {
        if a == b {
            return 0.0;
        }
        match self.times.get(&(a, b)) {
            Some(m) => *m,
            None => self.distance_km(a, b) / self.speed_kmh * 60.0,
        }
    }

    /// Initial great-circle bearing from `a` to `b` in degrees [0, 360);
    /// 0 when the zones coincide.
    pub fn bearing_deg(&self, a: usize, b: usize) -> f64 {
        let (za, zb) = (&self.zones[a], &self.zones[b]);
        if a == b || (za.lat == zb.lat && za.lon == zb.lon) {
            return 0.0;
        }
        let (p1, p2) = (za.lat.to_radians(), zb.lat.to_radians());
        let dl = (zb.lon - za.lon).to_radians();
        let y = math::sin(dl) * math::cos(p2);
        let x = math::cos(p1) * math::sin(p2) - math::sin(p1) * math::cos(p2) * math::cos(dl);
        let deg = math::atan2(y, x).to_degrees();
        if deg < 0.0 {
            deg + 360.0
        } else {
            deg
        }
    }
}
