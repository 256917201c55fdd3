//! Exhaustive zone selection: score every zone, sort the full candidate
//! list by (objective, -land use, zone id) and take the head.

use mobfuse_core::location::{heading_deviation, ZoneGraph};
use mobfuse_core::ActivityCode;

fn head(mut c: Vec<(f64, f64, String, usize)>) -> Option<usize> {
    c.sort_by(|a, b| {
        a.0.total_cmp(&b.0)
            .then(b.1.total_cmp(&a.1))
            .then(a.2.cmp(&b.2))
    });
    c.first().map(|x| x.3)
}

pub fn oracle_mandatory(
    graph: &ZoneGraph,
    home: usize,
    code: ActivityCode,
    d_hat: f64,
) -> Option<usize> {
    let c = graph
        .zones()
        .iter()
        .enumerate()
        .filter(|(_, z)| z.weight(code) > 0.0)
        .map(|(i, z)| {
            (
                (graph.distance_km(home, i) - d_hat).abs(),
                z.weight(code),
                z.zone_id.clone(),
                i,
            )
        })
        .collect();
    head(c)
}

#[allow(clippy::too_many_arguments)]
pub fn oracle_nonmandatory(
    graph: &ZoneGraph,
    prev: usize,
    next: usize,
    code: ActivityCode,
    d_hat: f64,
    theta_hat: f64,
    window: f64,
    alpha: f64,
    beta: f64,
) -> Option<(usize, bool)> {
    let mut feasible = Vec::new();
    let mut all = Vec::new();
    for (i, z) in graph.zones().iter().enumerate() {
        if z.weight(code) <= 0.0 {
            continue;
        }
        let obj = alpha * (graph.distance_km(prev, i) - d_hat).abs()
            + beta * (heading_deviation(graph, prev, i, next) - theta_hat).abs();
        let entry = (obj, z.weight(code), z.zone_id.clone(), i);
        if graph.travel_time(prev, i) + graph.travel_time(i, next) <= window {
            feasible.push(entry.clone());
        }
        all.push(entry);
    }
    match head(feasible) {
        Some(z) => Some((z, false)),
        None => head(all).map(|z| (z, true)),
    }
}
