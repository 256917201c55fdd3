use alloc::string::String;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use super::{cell_index, haversine_m, CellId, ExtractConfig, ExtractError};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GpsPoint {
    pub agent_id: String,
    /// UTC seconds.
    pub timestamp: i64,
    pub lat: f64,
    pub lon: f64,
}

impl GpsPoint {
    pub fn valid_coordinates(&self) -> bool {
        (-90.0..=90.0).contains(&self.lat) && (-180.0..=180.0).contains(&self.lon)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StayPoint {
    pub agent_id: String,
    pub centroid_lat: f64,
    pub centroid_lon: f64,
    /// UTC seconds of the first member point.
    pub arrive: i64,
    /// UTC seconds of the last member point.
    pub depart: i64,
    pub point_count: usize,
    pub cell_id: CellId,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub members: Option<Vec<(f64, f64)>>,
}

impl StayPoint {
    pub fn duration_s(&self) -> i64 {
        self.depart - self.arrive
    }

    pub fn centroid(&self) -> (f64, f64) {
        (self.centroid_lat, self.centroid_lon)
    }
}

/// Cluster under construction. The centroid is `sum / n`, accumulated in
/// arrival order.
struct OpenCluster {
    first_ts: i64,
    last_ts: i64,
    sum_lat: f64,
    sum_lon: f64,
    members: Vec<(f64, f64)>,
    lat_lo: f64,
    lat_hi: f64,
    lon_lo: f64,
    lon_hi: f64,
}

impl OpenCluster {
    fn start(p: &GpsPoint) -> Self {
        let mut members = Vec::with_capacity(16);
        members.push((p.lat, p.lon));
        Self {
            first_ts: p.timestamp,
            last_ts: p.timestamp,
            sum_lat: p.lat,
            sum_lon: p.lon,
            members,
            lat_lo: p.lat,
            lat_hi: p.lat,
            lon_lo: p.lon,
            lon_hi: p.lon,
        }
    }

    fn centroid(&self) -> (f64, f64) {
        let n = self.members.len() as f64;
        (self.sum_lat / n, self.sum_lon / n)
    }

    /// Join `p` if it lies within `radius` of the current centroid and the
    /// updated centroid keeps every member (including `p`) within `radius`.
    fn try_join(&mut self, p: &GpsPoint, radius: f64) -> bool {
        if haversine_m(self.centroid(), (p.lat, p.lon)) > radius {
            return false;
        }
        let n = (self.members.len() + 1) as f64;
        let sum_lat = self.sum_lat + p.lat;
        let sum_lon = self.sum_lon + p.lon;
        let c = (sum_lat / n, sum_lon / n);
        let lat_lo = self.lat_lo.min(p.lat);
        let lat_hi = self.lat_hi.max(p.lat);
        let lon_lo = self.lon_lo.min(p.lon);
        let lon_hi = self.lon_hi.max(p.lon);
        // Corners bound the farthest member for sub-kilometre boxes; fall
        // back to the exact scan when the bound is not conclusive.
        let corner_max = [
            (lat_lo, lon_lo),
            (lat_lo, lon_hi),
            (lat_hi, lon_lo),
            (lat_hi, lon_hi),
        ]
        .into_iter()
        .map(|q| haversine_m(c, q))
        .fold(0.0, f64::max);
        if corner_max > radius * 0.999 {
            let far = self
                .members
                .iter()
                .chain(core::iter::once(&(p.lat, p.lon)))
                .any(|&q| haversine_m(c, q) > radius);
            if far {
                return false;
            }
        }
        self.sum_lat = sum_lat;
        self.sum_lon = sum_lon;
        self.members.push((p.lat, p.lon));
        self.last_ts = p.timestamp;
        self.lat_lo = lat_lo;
        self.lat_hi = lat_hi;
        self.lon_lo = lon_lo;
        self.lon_hi = lon_hi;
        true
    }
}

/// Extract stay points from one agent's time-sorted GPS points.
///
/// Points are clustered sequentially: a point joins the open cluster when it
/// is within `spatial_threshold` of the running centroid and the updated
/// centroid still holds every member within the threshold; otherwise the
/// cluster closes and a new one starts. Closed clusters lasting at least
/// `temporal_threshold` become candidates. Candidates outside `bounds` are
/// dropped, then a candidate is classified as passing (and dropped) when
/// reaching it from the previous kept stay implies more than
/// `speed_threshold` km/h.
pub fn detect_stays(
    points: &[GpsPoint],
    cfg: &ExtractConfig,
) -> Result<Vec<StayPoint>, ExtractError> {
    cfg.validate()?;
    let Some(first) = points.first() else {
        return Ok(Vec::new());
    };
    for (i, p) in points.iter().enumerate() {
        if !p.valid_coordinates() || !p.lat.is_finite() || !p.lon.is_finite() {
            return Err(ExtractError::InvalidCoordinate {
                index: i,
                lat: p.lat,
                lon: p.lon,
            });
        }
        if p.agent_id != first.agent_id {
            return Err(ExtractError::MixedAgents {
                index: i,
                expected: first.agent_id.clone(),
                found: p.agent_id.clone(),
            });
        }
        if i > 0 && p.timestamp <= points[i - 1].timestamp {
            return Err(ExtractError::Unsorted {
                index: i,
                prev: points[i - 1].timestamp,
                next: p.timestamp,
            });
        }
    }

    let mut stays = Vec::new();
    let mut open = OpenCluster::start(first);
    for p in &points[1..] {
        if !open.try_join(p, cfg.spatial_threshold) {
            let done = core::mem::replace(&mut open, OpenCluster::start(p));
            emit(done, &first.agent_id, cfg, &mut stays);
        }
    }
    emit(open, &first.agent_id, cfg, &mut stays);
    Ok(stays)
}

fn emit(cluster: OpenCluster, agent_id: &str, cfg: &ExtractConfig, stays: &mut Vec<StayPoint>) {
    if ((cluster.last_ts - cluster.first_ts) as f64) < cfg.temporal_threshold {
        return;
    }
    let (lat, lon) = cluster.centroid();
    if !cfg.bounds.contains(lat, lon) {
        return;
    }
    if let Some(prev) = stays.last() {
        let meters = haversine_m(prev.centroid(), (lat, lon));
        let hours = (cluster.first_ts - prev.depart) as f64 / 3600.0;
        if meters / 1000.0 > cfg.speed_threshold * hours {
            return;
        }
    }
    stays.push(StayPoint {
        agent_id: String::from(agent_id),
        centroid_lat: lat,
        centroid_lon: lon,
        arrive: cluster.first_ts,
        depart: cluster.last_ts,
        point_count: cluster.members.len(),
        cell_id: cell_index(lat, lon, cfg.cell_resolution),
        members: cfg.retain_members.then_some(cluster.members),
    })
}
