//! Stay-point extraction: sequential dual-threshold clustering with running
//! centroids, regional bounds, hexagonal cell mapping, a speed filter for
//! passing trajectories and per-day coverage screening.

mod detect;
mod geo;
mod hexcell;
mod quality;

pub use detect::{detect_stays, GpsPoint, StayPoint};
pub use geo::{bearing_deg, haversine_m, EARTH_RADIUS_M};
pub use hexcell::{cell_edge_m, cell_index, CellId};
pub use quality::{local_day, quality_filter, AgentDay};

use alloc::string::String;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ExtractError {
    #[error("timestamps not strictly increasing at point {index} ({prev} -> {next})")]
    Unsorted { index: usize, prev: i64, next: i64 },
    #[error("point {index} belongs to agent {found:?}, expected {expected:?}")]
    MixedAgents {
        index: usize,
        expected: String,
        found: String,
    },
    #[error("point {index} has invalid coordinates ({lat}, {lon})")]
    InvalidCoordinate { index: usize, lat: f64, lon: f64 },
    #[error("invalid extraction config: {0}")]
    Config(&'static str),
}

/// Latitude/longitude rectangle, inclusive.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Bounds {
    pub lat_min: f64,
    pub lat_max: f64,
    pub lon_min: f64,
    pub lon_max: f64,
}

impl Bounds {
    /// Los Angeles County study box.
    pub const LA_COUNTY: Bounds = Bounds {
        lat_min: 33.5,
        lat_max: 34.5,
        lon_min: -118.8,
        lon_max: -118.0,
    };

    pub fn contains(&self, lat: f64, lon: f64) -> bool {
        (self.lat_min..=self.lat_max).contains(&lat) && (self.lon_min..=self.lon_max).contains(&lon)
    }
}

impl Default for Bounds {
    fn default() -> Self {
        Self::LA_COUNTY
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExtractConfig {
    /// Minimum dwell, seconds.
    pub temporal_threshold: f64,
    /// Maximum member distance from the centroid, meters.
    pub spatial_threshold: f64,
    /// Implied speed above which a candidate counts as passing, km/h.
    pub speed_threshold: f64,
    /// Minimum fraction of the day covered by stays.
    pub min_coverage: f64,
    pub min_daily_activities: usize,
    pub bounds: Bounds,
    pub cell_resolution: u8,
    /// Offset of local time from UTC, hours. Used for day boundaries.
    pub utc_offset_hours: f64,
    /// Keep member coordinates on emitted stays (debugging only).
    pub retain_members: bool,
}

impl Default for ExtractConfig {
    fn default() -> Self {
        Self {
            temporal_threshold: 300.0,
            spatial_threshold: 300.0,
            speed_threshold: 30.0,
            min_coverage: 0.33,
            min_daily_activities: 2,
            bounds: Bounds::LA_COUNTY,
            cell_resolution: 10,
            utc_offset_hours: -8.0,
            retain_members: false,
        }
    }
}

impl ExtractConfig {
    pub fn validate(&self) -> Result<(), ExtractError> {
        let positive = [
            self.temporal_threshold,
            self.spatial_threshold,
            self.speed_threshold,
            self.min_coverage,
        ];
        if positive.iter().any(|v| !(v.is_finite() && *v > 0.0)) {
            return Err(ExtractError::Config(
                "thresholds must be finite and positive",
            ));
        }
        if self.min_daily_activities == 0 {
            return Err(ExtractError::Config(
                "min_daily_activities must be positive",
            ));
        }
        let b = &self.bounds;
        if !(b.lat_min < b.lat_max && b.lon_min < b.lon_max) {
            return Err(ExtractError::Config("bounds are not well ordered"));
        }
        if self.cell_resolution > hexcell::MAX_RESOLUTION {
            return Err(ExtractError::Config("cell_resolution above 15"));
        }
        Ok(())
    }

    pub fn utc_offset_seconds(&self) -> i64 {
        crate::math::round(self.utc_offset_hours * 3600.0) as i64
    }
}
