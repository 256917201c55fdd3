//! Hierarchical hexagonal cells.
//!
//! Points are projected with the sinusoidal equal-area projection and
//! binned into a pointy-top hexagonal lattice. Edge length follows an
//! aperture-7 ladder anchored at about 65.9 m for resolution 10, so cell
//! sizes track the public H3 resolutions even though the identifiers are
//! not H3 indexes. Cells are only used for grouping.

use core::fmt;
use core::str::FromStr;

use serde::{Deserialize, Serialize};

use super::EARTH_RADIUS_M;
use crate::math::{cos, round, sqrt};

pub const MAX_RESOLUTION: u8 = 15;
const RES10_EDGE_M: f64 = 65.907_807;
const AXIS_BITS: u32 = 30;
const AXIS_MASK: u64 = (1 << AXIS_BITS) - 1;

/// Cell identifier: 4 bits resolution, then two zigzag-encoded 30-bit
/// axial coordinates.
#[derive(
    Clone, Copy, Debug, Default, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize,
)]
#[serde(into = "alloc::string::String", try_from = "alloc::string::String")]
pub struct CellId(u64);

impl CellId {
    pub fn raw(self) -> u64 {
        self.0
    }

    pub fn resolution(self) -> u8 {
        (self.0 >> 60) as u8
    }

    /// Axial (q, r) coordinates on this resolution's lattice.
    pub fn axial(self) -> (i64, i64) {
        let q = unzigzag((self.0 >> AXIS_BITS) & AXIS_MASK);
        let r = unzigzag(self.0 & AXIS_MASK);
        (q, r)
    }
}

impl fmt::Display for CellId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:016x}", self.0)
    }
}

impl FromStr for CellId {
    type Err = core::num::ParseIntError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        u64::from_str_radix(s, 16).map(CellId)
    }
}

impl From<CellId> for alloc::string::String {
    fn from(c: CellId) -> Self {
        alloc::format!("{c}")
    }
}

impl TryFrom<alloc::string::String> for CellId {
    type Error = core::num::ParseIntError;

    fn try_from(s: alloc::string::String) -> Result<Self, Self::Error> {
        s.parse()
    }
}

/// Hexagon edge length in meters at `resolution`.
pub fn cell_edge_m(resolution: u8) -> f64 {
    let steps = 10 - i32::from(resolution.min(MAX_RESOLUTION));
    RES10_EDGE_M * libm::pow(7.0, f64::from(steps) / 2.0)
}

fn zigzag(v: i64) -> u64 {
    (((v << 1) ^ (v >> 63)) as u64) & AXIS_MASK
}

fn unzigzag(v: u64) -> i64 {
    ((v >> 1) as i64) ^ -((v & 1) as i64)
}

/// Cell containing (lat, lon) at `resolution` (clamped to 0..=15).
pub fn cell_index(lat: f64, lon: f64, resolution: u8) -> CellId {
    let res = resolution.min(MAX_RESOLUTION);
    let phi = lat.to_radians();
    let x = EARTH_RADIUS_M * lon.to_radians() * cos(phi);
    let y = EARTH_RADIUS_M * phi;
    let size = cell_edge_m(res);
    let fq = (sqrt(3.0) / 3.0 * x - y / 3.0) / size;
    let fr = (2.0 / 3.0 * y) / size;
    let (q, r) = cube_round(fq, fr);
    CellId((u64::from(res) << 60) | (zigzag(q) << AXIS_BITS) | zigzag(r))
}

fn cube_round(fq: f64, fr: f64) -> (i64, i64) {
    let fs = -fq - fr;
    let (mut q, mut r, s) = (round(fq), round(fr), round(fs));
    let (dq, dr, ds) = ((q - fq).abs(), (r - fr).abs(), (s - fs).abs());
    if dq > dr && dq > ds {
        q = -r - s;
    } else if dr > ds {
        r = -q - s;
    }
    (q as i64, r as i64)
}
