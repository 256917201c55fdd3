use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use super::od::anchor_zones;
use super::{
    assign_chain, od_matrix, ActivityPlacement, LocationError, OdMatrix, RegionFrequencies,
    SamplingProfiles, ZoneGraph,
};
use crate::eval::cosine_sim;
use crate::math;
use crate::ActivityChain;

/// One chain of the calibration batch. The seed is reused every round so
/// that rounds differ only through the profiles.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CalibrationCase {
    pub chain: ActivityChain,
    pub home: usize,
    pub seed: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RefineConfig {
    pub eta: f64,
    /// Converged once every frequency differs from its target by less.
    pub epsilon: f64,
    pub max_rounds: usize,
    /// Stop after this many rounds without a better similarity.
    pub patience: usize,
    pub min_mu_km: f64,
    pub max_mu_km: f64,
}

impl Default for RefineConfig {
    fn default() -> Self {
        Self {
            eta: 1.0,
            epsilon: 0.01,
            max_rounds: 30,
            patience: 3,
            min_mu_km: 0.05,
            max_mu_km: 500.0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RefineRound {
    pub round: usize,
    pub max_gap: f64,
    pub cosine_freq: f64,
    pub cosine_od: Option<f64>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RefineStop {
    Converged,
    Stalled,
    MaxRounds,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RefineOutcome {
    /// Profiles of the best round.
    pub profiles: SamplingProfiles,
    pub log: Vec<RefineRound>,
    pub best_round: usize,
    pub stop: RefineStop,
}

/// [`refine_profiles_with`] using sequential [`assign_chain`] calls.
pub fn refine_profiles(
    profiles: &SamplingProfiles,
    cases: &[CalibrationCase],
    graph: &ZoneGraph,
    target: &RegionFrequencies,
    target_od: Option<&OdMatrix>,
    cfg: &RefineConfig,
) -> Result<RefineOutcome, LocationError> {
    refine_profiles_with(profiles, cases, graph, target, target_od, cfg, |p| {
        cases
            .iter()
            .map(|c| assign_chain(&c.chain, c.home, graph, p, c.seed))
            .collect()
    })
}

/// Calibrate distance medians so that per-type anchor-to-activity
/// sub-region frequencies approach `target`. Each round places the whole
/// batch with `assign`, then moves `ln mu_km` of every distance cell by
/// `-eta * sum_s a(s) * (target[t][s][s] - current[t][s][s])`, where `a` is
/// the share of the cell's activities anchored in sub-region `s`: too few
/// activities staying in their anchor's sub-region pulls distances in. Similarity is the
/// OD cosine when `target_od` is given, else the frequency cosine; the
/// best round's profiles are returned.
pub fn refine_profiles_with<F>(
    profiles: &SamplingProfiles,
    cases: &[CalibrationCase],
    graph: &ZoneGraph,
    target: &RegionFrequencies,
    target_od: Option<&OdMatrix>,
    cfg: &RefineConfig,
    mut assign: F,
) -> Result<RefineOutcome, LocationError>
where
    F: FnMut(&SamplingProfiles) -> Result<Vec<ActivityPlacement>, LocationError>,
{
    profiles.validate()?;
    target.validate()?;
    if target.regions != graph.regions() {
        return Err(LocationError::Input(
            "target sub-regions differ from the zone graph".into(),
        ));
    }
    if cases.is_empty() {
        return Err(LocationError::Input("empty calibration batch".into()));
    }
    if !(cfg.eta > 0.0
        && cfg.epsilon > 0.0
        && cfg.min_mu_km > 0.0
        && cfg.min_mu_km <= cfg.max_mu_km)
    {
        return Err(LocationError::InvalidProfile(
            "refinement needs eta, epsilon > 0 and a valid mu range".into(),
        ));
    }

    let homes: Vec<usize> = cases.iter().map(|c| c.home).collect();
    let mut current = profiles.clone();
    let mut log = Vec::new();
    let mut best: Option<(f64, usize, SamplingProfiles)> = None;
    let mut since_best = 0;
    let mut stop = RefineStop::MaxRounds;

    for round in 0..=cfg.max_rounds {
        let placements = assign(&current)?;
        if placements.len() != cases.len() {
            return Err(LocationError::Input(
                "assigner returned a different batch size".into(),
            ));
        }
        let freq = RegionFrequencies::from_placements(&placements, &homes, graph)?;
        let gap = freq.max_gap(target);
        let cosine_freq = cosine_sim(&freq.stacked(), &target.stacked())?;
        let cosine_od = match target_od {
            Some(t) => Some(cosine_sim(
                &od_matrix(&placements, graph)?.counts,
                &t.counts,
            )?),
            None => None,
        };
        let score = cosine_od.unwrap_or(cosine_freq);
        log.push(RefineRound {
            round,
            max_gap: gap,
            cosine_freq,
            cosine_od,
        });
        if best.as_ref().is_none_or(|b| score > b.0) {
            best = Some((score, round, current.clone()));
            since_best = 0;
        } else {
            since_best += 1;
        }
        if gap < cfg.epsilon {
            stop = RefineStop::Converged;
            break;
        }
        if since_best >= cfg.patience {
            stop = RefineStop::Stalled;
            break;
        }
        if round == cfg.max_rounds {
            break;
        }

        let mut sum_m = vec![(0.0, 0usize); current.mandatory.len()];
        let mut sum_n = vec![(0.0, 0usize); current.nonmandatory.len()];
        for (case, p) in cases.iter().zip(&placements) {
            let zones: Vec<usize> = p
                .zones
                .iter()
                .map(|z| graph.index(z))
                .collect::<Result<_, _>>()?;
            let home_region = graph.region_of(case.home);
            for (a, anchor) in p
                .chain
                .activities
                .iter()
                .zip(anchor_zones(p, &zones, case.home))
            {
                let Some(o) = anchor else { continue };
                let o = graph.region_of(o);
                let t = a.kind.index();
                let gap = target.flows[t][o][o] - freq.flows[t][o][o];
                let slot = if a.kind.is_mandatory() {
                    &mut sum_m[current.mandatory_cell(a.kind, &graph.regions()[home_region])?]
                } else {
                    &mut sum_n[current.nonmandatory_cell(a.kind)?]
                };
                slot.0 += gap;
                slot.1 += 1;
            }
        }
        let shift = |mu: &mut f64, (g, n): (f64, usize)| {
            if n > 0 {
                let next = math::exp(math::ln(*mu) - cfg.eta * g / n as f64);
                *mu = next.clamp(cfg.min_mu_km, cfg.max_mu_km);
            }
        };
        for (c, s) in current.mandatory.iter_mut().zip(sum_m) {
            shift(&mut c.mu_km, s);
        }
        for (c, s) in current.nonmandatory.iter_mut().zip(sum_n) {
            shift(&mut c.mu_km, s);
        }
    }

    let (_, best_round, profiles) =
        best.ok_or_else(|| LocationError::Input("no refinement round ran".into()))?;
    Ok(RefineOutcome {
        profiles,
        log,
        best_round,
        stop,
    })
}
