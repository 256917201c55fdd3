use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use super::{anchor_spans, ActivityPlacement, LocationError, ZoneGraph};
use crate::{ActivityCode, NUM_ACTIVITY_TYPES};

/// Trips between consecutive activities, counted by sub-region pair.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OdMatrix {
    pub regions: Vec<String>,
    pub counts: Vec<Vec<f64>>,
    /// Each row divided by its sum (zero rows stay zero).
    pub normalized: Vec<Vec<f64>>,
}

fn zone_indices(p: &ActivityPlacement, graph: &ZoneGraph) -> Result<Vec<usize>, LocationError> {
    if p.zones.len() != p.chain.activities.len() {
        return Err(LocationError::Input(
            "placement and chain lengths differ".into(),
        ));
    }
    p.zones.iter().map(|z| graph.index(z)).collect()
}

fn row_normalize(rows: &[Vec<f64>]) -> Vec<Vec<f64>> {
    rows.iter()
        .map(|r| {
            let s: f64 = r.iter().sum();
            r.iter()
                .map(|v| if s > 0.0 { v / s } else { 0.0 })
                .collect()
        })
        .collect()
}

pub fn od_matrix(
    placements: &[ActivityPlacement],
    graph: &ZoneGraph,
) -> Result<OdMatrix, LocationError> {
    if placements.is_empty() {
        return Err(LocationError::Input("no placements".into()));
    }
    let r = graph.regions().len();
    let mut counts = vec![vec![0.0; r]; r];
    for p in placements {
        let z = zone_indices(p, graph)?;
        for w in z.windows(2) {
            counts[graph.region_of(w[0])][graph.region_of(w[1])] += 1.0;
        }
    }
    Ok(OdMatrix {
        regions: graph.regions().to_vec(),
        normalized: row_normalize(&counts),
        counts,
    })
}

/// Where activities of each type take place relative to their anchor:
/// for every activity code, a sub-region by sub-region table whose row is
/// the anchor's sub-region (home for work and school, the preceding anchor
/// otherwise) and whose column is the activity's sub-region. Each non-empty
/// row is normalized. Home activities are not counted.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RegionFrequencies {
    pub regions: Vec<String>,
    pub flows: Vec<Vec<Vec<f64>>>,
}

/// Anchor zone of every activity of a placement, `None` for Home.
pub(crate) fn anchor_zones(
    p: &ActivityPlacement,
    zones: &[usize],
    home: usize,
) -> Vec<Option<usize>> {
    let spans = anchor_spans(&p.chain);
    p.chain
        .activities
        .iter()
        .zip(spans)
        .map(|(a, span)| {
            if a.kind == ActivityCode::HOME {
                None
            } else if a.kind.is_mandatory() {
                Some(home)
            } else {
                Some(span.and_then(|s| s.prev).map_or(home, |j| zones[j]))
            }
        })
        .collect()
}

impl RegionFrequencies {
    /// `homes[i]` is the home zone of placement `i`; chains without a Home
    /// activity need it, others may pass their first Home zone.
    pub fn from_placements(
        placements: &[ActivityPlacement],
        homes: &[usize],
        graph: &ZoneGraph,
    ) -> Result<Self, LocationError> {
        if homes.len() != placements.len() {
            return Err(LocationError::Input(
                "one home zone per placement is required".into(),
            ));
        }
        let r = graph.regions().len();
        let mut flows = vec![vec![vec![0.0; r]; r]; NUM_ACTIVITY_TYPES];
        for (p, &home) in placements.iter().zip(homes) {
            let zones = zone_indices(p, graph)?;
            for ((a, z), anchor) in p
                .chain
                .activities
                .iter()
                .zip(&zones)
                .zip(anchor_zones(p, &zones, home))
            {
                if let Some(o) = anchor {
                    flows[a.kind.index()][graph.region_of(o)][graph.region_of(*z)] += 1.0;
                }
            }
        }
        Ok(Self {
            regions: graph.regions().to_vec(),
            flows: flows.iter().map(|t| row_normalize(t)).collect(),
        })
    }

    pub fn validate(&self) -> Result<(), LocationError> {
        let r = self.regions.len();
        if self.flows.len() != NUM_ACTIVITY_TYPES
            || self
                .flows
                .iter()
                .any(|t| t.len() != r || t.iter().any(|row| row.len() != r))
        {
            return Err(LocationError::Input(
                "frequency table needs 15 square tables over the sub-regions".into(),
            ));
        }
        for row in self.flows.iter().flatten() {
            let s: f64 = row.iter().sum();
            if row.iter().any(|v| !(*v >= 0.0)) || (s != 0.0 && (s - 1.0).abs() > 1e-6) {
                return Err(LocationError::Input(
                    "frequency rows must be normalized".into(),
                ));
            }
        }
        Ok(())
    }

    /// Largest absolute per-cell difference.
    pub fn max_gap(&self, other: &Self) -> f64 {
        self.cells()
            .zip(other.cells())
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }

    fn cells(&self) -> impl Iterator<Item = f64> + '_ {
        self.flows.iter().flatten().flatten().copied()
    }

    /// All tables stacked as matrix rows, for similarity scores.
    pub fn stacked(&self) -> Vec<Vec<f64>> {
        self.flows.iter().flatten().cloned().collect()
    }
}
