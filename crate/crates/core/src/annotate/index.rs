use alloc::collections::BTreeMap;
use alloc::vec::Vec;

use crate::math;
use crate::staypoint::haversine_m;

const M_PER_DEG: f64 = 111_195.0;

/// Uniform lat/lon bucket grid over POI positions for radius queries.
#[derive(Clone, Debug)]
pub struct PoiIndex {
    points: Vec<(f64, f64)>,
    cell_deg_lat: f64,
    cell_deg_lon: f64,
    buckets: BTreeMap<(i64, i64), Vec<usize>>,
}

impl PoiIndex {
    /// `cell_m` is the bucket edge; pick it close to the query radius.
    pub fn new(points: Vec<(f64, f64)>, cell_m: f64) -> Self {
        let cell_m = if cell_m > 0.0 { cell_m } else { 250.0 };
        let ref_lat = if points.is_empty() {
            0.0
        } else {
            points.iter().map(|p| p.0).sum::<f64>() / points.len() as f64
        };
        let cos = math::cos(ref_lat.abs().min(85.0).to_radians());
        let cell_deg_lat = cell_m / M_PER_DEG;
        let cell_deg_lon = cell_deg_lat / cos;
        let mut buckets: BTreeMap<(i64, i64), Vec<usize>> = BTreeMap::new();
        for (i, &(lat, lon)) in points.iter().enumerate() {
            let key = (
                math::floor(lat / cell_deg_lat) as i64,
                math::floor(lon / cell_deg_lon) as i64,
            );
            buckets.entry(key).or_default().push(i);
        }
        Self {
            points,
            cell_deg_lat,
            cell_deg_lon,
            buckets,
        }
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Indices and distances of every point within `radius_m`, by index.
    pub fn within(&self, lat: f64, lon: f64, radius_m: f64) -> Vec<(usize, f64)> {
        let dlat = radius_m / M_PER_DEG;
        let worst = (lat.abs() + dlat).min(89.0);
        let dlon = (dlat / math::cos(worst.to_radians())).min(360.0);
        let lat_lo = math::floor((lat - dlat) / self.cell_deg_lat) as i64;
        let lat_hi = math::floor((lat + dlat) / self.cell_deg_lat) as i64;
        let lon_lo = math::floor((lon - dlon) / self.cell_deg_lon) as i64;
        let lon_hi = math::floor((lon + dlon) / self.cell_deg_lon) as i64;
        let mut out = Vec::new();
        for (&(_, cx), members) in self.buckets.range((lat_lo, i64::MIN)..=(lat_hi, i64::MAX)) {
            if cx < lon_lo || cx > lon_hi {
                continue;
            }
            for &i in members {
                let d = haversine_m((lat, lon), self.points[i]);
                if d <= radius_m {
                    out.push((i, d));
                }
            }
        }
        out.sort_by_key(|&(i, _)| i);
        out
    }
}
