use alloc::collections::BTreeMap;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use super::{LocationError, SamplingProfiles, ZoneGraph};
use crate::math;
use crate::rng::{derive, rng_from};
use crate::{ActivityChain, ActivityCode};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ActivityPlacement {
    pub chain: ActivityChain,
    /// Zone of each activity, in chain order.
    pub zones: Vec<String>,
    /// Set where no zone met the travel-time window and it was dropped.
    pub relaxed: Vec<bool>,
}

impl ActivityPlacement {
    pub fn relaxed_count(&self) -> usize {
        self.relaxed.iter().filter(|r| **r).count()
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct NonMandatoryChoice {
    pub zone: usize,
    pub relaxed: bool,
}

/// Anchors around a non-mandatory activity: the nearest Home or mandatory
/// activity on each side (`None` means the home zone at the start or end of
/// the day) and the minutes between them.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct AnchorSpan {
    pub prev: Option<usize>,
    pub next: Option<usize>,
    pub window: u16,
}

fn is_anchor(code: ActivityCode) -> bool {
    code == ActivityCode::HOME || code.is_mandatory()
}

/// One entry per activity; `Some` for the non-mandatory ones.
pub fn anchor_spans(chain: &ActivityChain) -> Vec<Option<AnchorSpan>> {
    let acts = &chain.activities;
    (0..acts.len())
        .map(|i| {
            if is_anchor(acts[i].kind) {
                return None;
            }
            let prev = (0..i).rev().find(|&j| is_anchor(acts[j].kind));
            let next = (i + 1..acts.len()).find(|&j| is_anchor(acts[j].kind));
            let from = prev.map_or(0, |j| acts[j].end);
            let to = next.map_or(1440, |j| acts[j].start);
            Some(AnchorSpan {
                prev,
                next,
                window: to.saturating_sub(from),
            })
        })
        .collect()
}

/// Absolute angle at `prev` between the headings to `z` and to `next`,
/// in degrees [0, 180].
pub fn heading_deviation(graph: &ZoneGraph, prev: usize, z: usize, next: usize) -> f64 {
    let d = math::rem_euclid(
        graph.bearing_deg(prev, z) - graph.bearing_deg(prev, next),
        360.0,
    );
    if d > 180.0 {
        360.0 - d
    } else {
        d
    }
}

/// Lower objective wins; ties go to higher land-use weight, then to the
/// lexicographically smaller zone id.
fn better(graph: &ZoneGraph, code: ActivityCode, a: (f64, usize), b: (f64, usize)) -> bool {
    if a.0 != b.0 {
        return a.0 < b.0;
    }
    let (za, zb) = (&graph.zones()[a.1], &graph.zones()[b.1]);
    let (wa, wb) = (za.weight(code), zb.weight(code));
    if wa != wb {
        return wa > wb;
    }
    za.zone_id < zb.zone_id
}

fn compatible(graph: &ZoneGraph, code: ActivityCode) -> impl Iterator<Item = usize> + '_ {
    (0..graph.len()).filter(move |&z| graph.zones()[z].weight(code) > 0.0)
}

/// Zone whose distance from `home` is closest to `d_hat` km, among zones
/// that accept `code`.
pub fn select_mandatory(
    graph: &ZoneGraph,
    home: usize,
    code: ActivityCode,
    d_hat: f64,
) -> Result<usize, LocationError> {
    let mut best: Option<(f64, usize)> = None;
    for z in compatible(graph, code) {
        let cand = ((graph.distance_km(home, z) - d_hat).abs(), z);
        if best.is_none_or(|b| better(graph, code, cand, b)) {
            best = Some(cand);
        }
    }
    best.map(|b| b.1)
        .ok_or(LocationError::NoCompatibleZone(code))
}

/// Minimizer of `alpha |d(prev, z) - d_hat| + beta |theta - theta_hat|`
/// over zones accepting `code` whose detour `prev -> z -> next` fits in
/// `window` minutes; if none fits, over all accepting zones, flagged.
#[allow(clippy::too_many_arguments)]
pub fn select_nonmandatory(
    graph: &ZoneGraph,
    prev: usize,
    next: usize,
    code: ActivityCode,
    d_hat: f64,
    theta_hat: f64,
    window: f64,
    alpha: f64,
    beta: f64,
) -> Result<NonMandatoryChoice, LocationError> {
    let mut feasible: Option<(f64, usize)> = None;
    let mut any: Option<(f64, usize)> = None;
    for z in compatible(graph, code) {
        let obj = alpha * (graph.distance_km(prev, z) - d_hat).abs()
            + beta * (heading_deviation(graph, prev, z, next) - theta_hat).abs();
        let cand = (obj, z);
        if any.is_none_or(|b| better(graph, code, cand, b)) {
            any = Some(cand);
        }
        let fits = graph.travel_time(prev, z) + graph.travel_time(z, next) <= window;
        if fits && feasible.is_none_or(|b| better(graph, code, cand, b)) {
            feasible = Some(cand);
        }
    }
    match (feasible, any) {
        (Some(f), _) => Ok(NonMandatoryChoice {
            zone: f.1,
            relaxed: false,
        }),
        (None, Some(a)) => Ok(NonMandatoryChoice {
            zone: a.1,
            relaxed: true,
        }),
        (None, None) => Err(LocationError::NoCompatibleZone(code)),
    }
}

/// Sample a commute distance for `code` and pick the matching zone.
pub fn assign_mandatory(
    home: usize,
    code: ActivityCode,
    graph: &ZoneGraph,
    profiles: &SamplingProfiles,
    seed: u64,
) -> Result<usize, LocationError> {
    if !code.is_mandatory() {
        return Err(LocationError::NotMandatory(code));
    }
    if home >= graph.len() {
        return Err(LocationError::Input("home zone index out of range".into()));
    }
    let region = &graph.regions()[graph.region_of(home)];
    let cell = profiles.mandatory_cell(code, region)?;
    let d_hat = profiles
        .mandatory_distance(cell)
        .sample(&mut rng_from(seed));
    select_mandatory(graph, home, code, d_hat)
}

/// Sample distance and heading deviation for `code` and pick a zone
/// between the anchors. The window is capped at the profiles' `t_max`.
pub fn assign_nonmandatory(
    prev: usize,
    next: usize,
    code: ActivityCode,
    graph: &ZoneGraph,
    profiles: &SamplingProfiles,
    time_window_min: f64,
    seed: u64,
) -> Result<NonMandatoryChoice, LocationError> {
    if prev >= graph.len() || next >= graph.len() {
        return Err(LocationError::Input(
            "anchor zone index out of range".into(),
        ));
    }
    let mut rng = rng_from(seed);
    let d_hat = profiles
        .nonmandatory_distance(profiles.nonmandatory_cell(code)?)
        .sample(&mut rng);
    let theta_hat = profiles.angle(code)?.sample(&mut rng);
    let window = time_window_min.min(profiles.t_max);
    select_nonmandatory(
        graph,
        prev,
        next,
        code,
        d_hat,
        theta_hat,
        window,
        profiles.alpha_w,
        profiles.beta_w,
    )
}

/// Home activities go to `home`, each mandatory type gets one zone per
/// chain, then every other activity is placed between its anchors.
/// Activity `i` draws from the stream `derive(seed, i)`.
pub fn assign_chain(
    chain: &ActivityChain,
    home: usize,
    graph: &ZoneGraph,
    profiles: &SamplingProfiles,
    seed: u64,
) -> Result<ActivityPlacement, LocationError> {
    if home >= graph.len() {
        return Err(LocationError::Input("home zone index out of range".into()));
    }
    let acts = &chain.activities;
    let mut zones: Vec<Option<usize>> = vec![None; acts.len()];
    let mut relaxed = vec![false; acts.len()];
    let mut per_type: BTreeMap<ActivityCode, usize> = BTreeMap::new();
    for (i, a) in acts.iter().enumerate() {
        if a.kind == ActivityCode::HOME {
            zones[i] = Some(home);
        } else if a.kind.is_mandatory() {
            let z = match per_type.get(&a.kind) {
                Some(z) => *z,
                None => {
                    let z =
                        assign_mandatory(home, a.kind, graph, profiles, derive(seed, i as u64))?;
                    per_type.insert(a.kind, z);
                    z
                }
            };
            zones[i] = Some(z);
        }
    }
    for (i, span) in anchor_spans(chain).into_iter().enumerate() {
        let Some(span) = span else { continue };
        let prev = span.prev.and_then(|j| zones[j]).unwrap_or(home);
        let next = span.next.and_then(|j| zones[j]).unwrap_or(home);
        let choice = assign_nonmandatory(
            prev,
            next,
            acts[i].kind,
            graph,
            profiles,
            f64::from(span.window),
            derive(seed, i as u64),
        )?;
        zones[i] = Some(choice.zone);
        relaxed[i] = choice.relaxed;
    }
    Ok(ActivityPlacement {
        chain: chain.clone(),
        zones: zones
            .into_iter()
            .map(|z| graph.zones()[z.unwrap_or(home)].zone_id.clone())
            .collect(),
        relaxed,
    })
}

/// Indices of non-mandatory activities whose detour between their placed
/// anchors exceeds the (capped) window without being flagged as relaxed.
pub fn unflagged_violations(
    placement: &ActivityPlacement,
    home: usize,
    graph: &ZoneGraph,
    profiles: &SamplingProfiles,
) -> Result<Vec<usize>, LocationError> {
    let chain = &placement.chain;
    if placement.zones.len() != chain.activities.len()
        || placement.relaxed.len() != chain.activities.len()
    {
        return Err(LocationError::Input(
            "placement and chain lengths differ".into(),
        ));
    }
    let zones: Vec<usize> = placement
        .zones
        .iter()
        .map(|z| graph.index(z))
        .collect::<Result<_, _>>()?;
    if home >= graph.len() {
        return Err(LocationError::Input("home zone index out of range".into()));
    }
    let mut out = Vec::new();
    for (i, span) in anchor_spans(chain).into_iter().enumerate() {
        let Some(span) = span else { continue };
        if placement.relaxed[i] {
            continue;
        }
        let prev = span.prev.map_or(home, |j| zones[j]);
        let next = span.next.map_or(home, |j| zones[j]);
        let window = f64::from(span.window).min(profiles.t_max);
        if graph.travel_time(prev, zones[i]) + graph.travel_time(zones[i], next) > window {
            out.push(i);
        }
    }
    Ok(out)
}
