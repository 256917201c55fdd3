//! Brute-force reference for stay detection plus a random trace generator.
//!
//! The reference recomputes every centroid from the full member list and
//! rescans all members on every candidate point, so it is quadratic in the
//! cluster size and shares no code with the incremental extractor.

use mobfuse_core::staypoint::{haversine_m, ExtractConfig, GpsPoint};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

#[derive(Debug, Clone, PartialEq)]
pub struct RefStay {
    pub arrive: i64,
    pub depart: i64,
    pub point_count: usize,
    pub lat: f64,
    pub lon: f64,
}

fn mean(points: &[GpsPoint], members: &[usize]) -> (f64, f64) {
    let mut lat = 0.0;
    let mut lon = 0.0;
    for &m in members {
        lat += points[m].lat;
        lon += points[m].lon;
    }
    let n = members.len() as f64;
    (lat / n, lon / n)
}

pub fn reference_stays(points: &[GpsPoint], cfg: &ExtractConfig) -> Vec<RefStay> {
    let mut clusters: Vec<Vec<usize>> = Vec::new();
    if points.is_empty() {
        return Vec::new();
    }
    let mut current = vec![0usize];
    for i in 1..points.len() {
        let p = (points[i].lat, points[i].lon);
        let mut joined = false;
        if haversine_m(mean(points, &current), p) <= cfg.spatial_threshold {
            let mut candidate = current.clone();
            candidate.push(i);
            let c = mean(points, &candidate);
            if candidate
                .iter()
                .all(|&m| haversine_m(c, (points[m].lat, points[m].lon)) <= cfg.spatial_threshold)
            {
                current = candidate;
                joined = true;
            }
        }
        if !joined {
            clusters.push(std::mem::replace(&mut current, vec![i]));
        }
    }
    clusters.push(current);

    let mut out: Vec<RefStay> = Vec::new();
    for members in clusters {
        let arrive = points[members[0]].timestamp;
        let depart = points[*members.last().unwrap()].timestamp;
        if ((depart - arrive) as f64) < cfg.temporal_threshold {
            continue;
        }
        let (lat, lon) = mean(points, &members);
        if !cfg.bounds.contains(lat, lon) {
            continue;
        }
        if let Some(prev) = out.last() {
            let km = haversine_m((prev.lat, prev.lon), (lat, lon)) / 1000.0;
            let hours = (arrive - prev.depart) as f64 / 3600.0;
            if km > cfg.speed_threshold * hours {
                continue;
            }
        }
        out.push(RefStay {
            arrive,
            depart,
            point_count: members.len(),
            lat,
            lon,
        });
    }
    out
}

/// A trace alternating dwell episodes (jittered points around a center) and
/// moves at 5-80 km/h, occasionally leaving the study box.
pub fn random_trace(seed: u64, max_points: usize) -> Vec<GpsPoint> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = rng.random_range(1..=max_points);
    let mut pts = Vec::with_capacity(n);
    let mut t: i64 = 1_700_000_000 + rng.random_range(0..86_400);
    let mut lat = rng.random_range(33.4..34.6);
    let mut lon = rng.random_range(-118.9..-117.9);
    while pts.len() < n {
        if rng.random_bool(0.6) {
            let jitter_m: f64 = rng.random_range(5.0..250.0);
            let k = rng.random_range(1..60);
            let dt_max = rng.random_range(20..400);
            for _ in 0..k {
                if pts.len() >= n {
                    break;
                }
                t += rng.random_range(1..=dt_max);
                let dlat = rng.random_range(-1.0..1.0) * jitter_m / 111_195.0;
                let dlon = rng.random_range(-1.0..1.0) * jitter_m / 92_000.0;
                pts.push(GpsPoint {
                    agent_id: "agent".into(),
                    timestamp: t,
                    lat: lat + dlat,
                    lon: lon + dlon,
                });
            }
        } else {
            let speed_ms = rng.random_range(5.0..80.0) / 3.6;
            let heading: f64 = rng.random_range(0.0..std::f64::consts::TAU);
            let k = rng.random_range(1..20);
            for _ in 0..k {
                if pts.len() >= n {
                    break;
                }
                let dt = rng.random_range(5..120);
                t += dt;
                let step = speed_ms * dt as f64;
                lat += step * heading.cos() / 111_195.0;
                lon += step * heading.sin() / 92_000.0;
                lat = lat.clamp(-89.0, 89.0);
                pts.push(GpsPoint {
                    agent_id: "agent".into(),
                    timestamp: t,
                    lat,
                    lon,
                });
            }
        }
    }
    pts
}
