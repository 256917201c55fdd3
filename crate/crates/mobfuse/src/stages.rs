//! In-memory stage drivers: the core algorithms fanned out over agents,
//! stays, groups and chains with rayon. Outputs are in a deterministic
//! order regardless of thread count.

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use mobfuse_core::activity::{encode_chain, ActivityError};
use mobfuse_core::adapter::{
    fit_adapter, AdapterError, AdapterFit, AdapterTrainConfig, BasePosteriors, TargetDistribution,
};
use mobfuse_core::annotate::{
    infer_activity, AnnotateError, Poi, PoiActivityProfile, PoiIndex, TemporalPrior,
};
use mobfuse_core::infer::{infer_population, Donor, InferConfig, InferredDay, ObservedDay};
use mobfuse_core::location::{
    assign_chain, od_matrix, refine_profiles_with, unflagged_violations, ActivityPlacement,
    CalibrationCase, LocationError, OdMatrix, RefineConfig, RefineOutcome, RegionFrequencies,
    SamplingProfiles, ZoneGraph,
};
use mobfuse_core::recon::{
    train, Architecture, Model, ReconError, TrainConfig, TrainOutcome, TrainSample,
};
use mobfuse_core::rng::{derive, derive_tag, rng_from};
use mobfuse_core::staypoint::{
    detect_stays, local_day, quality_filter, ExtractConfig, ExtractError, GpsPoint, StayPoint,
};
use mobfuse_core::{
    Activity, ActivityChain, ActivityCode, DemographicGroup, Slot, SlotGrid, NUM_ACTIVITY_TYPES,
};

/// A stay that survived the daily quality filter, tagged with its local day.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DayStay {
    #[serde(flatten)]
    pub stay: StayPoint,
    pub day: i64,
    pub day_of_week: u8,
}

/// Detect stays per agent in parallel and keep the days that pass the
/// quality filter. Points are sorted by time within each agent.
pub fn extract(points: Vec<GpsPoint>, cfg: &ExtractConfig) -> Result<Vec<DayStay>, ExtractError> {
    cfg.validate()?;
    let mut by_agent: BTreeMap<String, Vec<GpsPoint>> = BTreeMap::new();
    for p in points {
        by_agent.entry(p.agent_id.clone()).or_default().push(p);
    }
    let agents: Vec<Vec<GpsPoint>> = by_agent.into_values().collect();
    let per_agent: Vec<Vec<DayStay>> = agents
        .into_par_iter()
        .map(|mut pts| {
            pts.sort_by_key(|p| p.timestamp);
            let stays = detect_stays(&pts, cfg)?;
            Ok(quality_filter(&stays, cfg)
                .into_iter()
                .flat_map(|d| {
                    let (day, dow) = (d.day, d.day_of_week);
                    d.stays.into_iter().map(move |stay| DayStay {
                        stay,
                        day,
                        day_of_week: dow,
                    })
                })
                .collect())
        })
        .collect::<Result<_, ExtractError>>()?;
    Ok(per_agent.into_iter().flatten().collect())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AnnotatedStay {
    #[serde(flatten)]
    pub stay: DayStay,
    pub code: ActivityCode,
    pub posterior: Vec<f64>,
    pub low_confidence: bool,
}

/// Label every stay from the POIs within `radius_m`.
pub fn annotate(
    stays: &[DayStay],
    pois: &[Poi],
    profiles: &[PoiActivityProfile],
    prior: &TemporalPrior,
    radius_m: f64,
    utc_offset_s: i64,
) -> Result<Vec<AnnotatedStay>, AnnotateError> {
    for p in pois {
        p.validate()?;
    }
    let index = PoiIndex::new(
        pois.iter().map(|p| (p.lat, p.lon)).collect(),
        radius_m.max(1.0),
    );
    stays
        .par_iter()
        .map(|s| {
            let near = index.within(s.stay.centroid_lat, s.stay.centroid_lon, radius_m);
            let nearby: Vec<(&Poi, &PoiActivityProfile)> = near
                .iter()
                .map(|&(i, _)| (&pois[i], &profiles[i]))
                .collect();
            let inf = infer_activity(&s.stay, &nearby, prior, radius_m, utc_offset_s)?;
            Ok(AnnotatedStay {
                stay: s.clone(),
                code: inf.code,
                posterior: inf.posterior.to_vec(),
                low_confidence: inf.low_confidence,
            })
        })
        .collect()
}

/// An observed agent-day rebuilt from labelled stays.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ObservedChain {
    #[serde(flatten)]
    pub chain: ActivityChain,
    pub day: i64,
}

/// Stays become activities on their local day, clipped to midnight and
/// floored to whole minutes. Time between stays stays unobserved.
pub fn observed_chains(
    stays: &[AnnotatedStay],
    utc_offset_s: i64,
) -> Result<Vec<ObservedChain>, ActivityError> {
    let mut days: BTreeMap<(String, i64), (u8, Vec<Activity>)> = BTreeMap::new();
    for s in stays {
        let midnight = s.stay.day * 86_400 - utc_offset_s;
        let start = ((s.stay.stay.arrive - midnight).max(0) / 60).min(1440) as u16;
        let end = ((s.stay.stay.depart - midnight).max(0) / 60).min(1440) as u16;
        debug_assert_eq!(local_day(s.stay.stay.arrive, utc_offset_s).0, s.stay.day);
        let e = days
            .entry((s.stay.stay.agent_id.clone(), s.stay.day))
            .or_insert((s.stay.day_of_week, Vec::new()));
        if start < end {
            e.1.push(Activity::new(s.code, start, end));
        }
    }
    days.into_iter()
        .map(|((agent, day), (dow, mut acts))| {
            acts.sort_by_key(|a| a.start);
            // Merge touching stays of the same type into one activity.
            let mut merged: Vec<Activity> = Vec::with_capacity(acts.len());
            for a in acts {
                match merged.last_mut() {
                    Some(m) if m.kind == a.kind && m.end >= a.start => m.end = m.end.max(a.end),
                    Some(m) if m.end > a.start => {
                        let start = m.end;
                        if start < a.end {
                            merged.push(Activity::new(a.kind, start, a.end));
                        }
                    }
                    _ => merged.push(a),
                }
            }
            Ok(ObservedChain {
                chain: ActivityChain::new(agent, dow, merged)?,
                day,
            })
        })
        .collect()
}

/// Observed slots as activities, everything else unknown.
pub fn observed_day(c: &ObservedChain) -> Result<ObservedDay, ActivityError> {
    Ok(ObservedDay {
        agent_id: c.chain.agent_id.clone(),
        grid: encode_chain(&c.chain)?,
    })
}

/// Unknown slots of an observed grid marked as masked (model input form).
pub fn as_model_input(grid: &SlotGrid) -> SlotGrid {
    let mut g = grid.clone();
    for s in g.slots.iter_mut() {
        if !matches!(s, Slot::Act(_)) {
            *s = Slot::Masked;
        }
    }
    g
}

/// Adapter evaluation inputs: one fully masked grid per observed day, so
/// the posteriors are the model's generation prior with the observed
/// weekday mix.
pub fn adapter_inputs(days: &[SlotGrid]) -> Vec<SlotGrid> {
    days.iter()
        .map(|g| SlotGrid::filled(Slot::Masked, g.day_of_week))
        .collect()
}

/// A survey chain, optionally labelled with the respondent's group.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SurveyChain {
    #[serde(flatten)]
    pub chain: ActivityChain,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub group: Option<DemographicGroup>,
}

/// Full-day survey chains as training samples; chains with uncovered time
/// cannot be scored and are skipped.
pub fn survey_samples(chains: &[SurveyChain]) -> Result<Vec<TrainSample>, ActivityError> {
    let mut out = Vec::with_capacity(chains.len());
    for c in chains {
        let g = encode_chain(&c.chain)?;
        if g.slots.iter().all(|s| matches!(s, Slot::Act(_))) {
            out.push(TrainSample::observed(g));
        }
    }
    Ok(out)
}

pub fn train_base(
    samples: &[TrainSample],
    arch: Architecture,
    cfg: &TrainConfig,
    seed: u64,
) -> Result<TrainOutcome, ReconError> {
    let model = Model::new(arch, derive_tag(seed, "init"))?;
    train(model, samples, cfg, derive_tag(seed, "train"))
}

/// Fit all adapters against one shared set of frozen posteriors, one group
/// per task.
pub fn adapt(
    model: &Model,
    targets: &[TargetDistribution],
    cfg: &AdapterTrainConfig,
    inputs: &[SlotGrid],
) -> Result<Vec<AdapterFit>, AdapterError> {
    cfg.validate()?;
    if inputs.is_empty() {
        return Err(AdapterError::NoInputs);
    }
    let base = BasePosteriors::from_model(model, inputs)?;
    targets
        .par_iter()
        .map(|t| fit_adapter(&base, t, cfg))
        .collect()
}

/// Adapter collection as stored on disk: `{group_key: [15 weights], …,
/// "metadata": {…}}`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdapterFile {
    pub metadata: AdapterMetadata,
    #[serde(flatten)]
    pub adapters: BTreeMap<String, Vec<f64>>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdapterMetadata {
    pub config: AdapterTrainConfig,
    pub groups: BTreeMap<String, AdapterSummary>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdapterSummary {
    pub distance: f64,
    pub rmse: f64,
    pub epochs: usize,
    pub converged: bool,
}

impl AdapterFile {
    pub fn from_fits(fits: &[AdapterFit], cfg: &AdapterTrainConfig) -> Self {
        Self {
            metadata: AdapterMetadata {
                config: cfg.clone(),
                groups: fits
                    .iter()
                    .map(|f| {
                        (
                            f.adapter.group.key(),
                            AdapterSummary {
                                distance: f.distance,
                                rmse: f.rmse,
                                epochs: f.epochs,
                                converged: f.converged,
                            },
                        )
                    })
                    .collect(),
            },
            adapters: fits
                .iter()
                .map(|f| (f.adapter.group.key(), f.adapter.a.to_vec()))
                .collect(),
        }
    }

    pub fn biases(&self) -> Result<BTreeMap<DemographicGroup, [f64; NUM_ACTIVITY_TYPES]>, String> {
        self.adapters
            .iter()
            .map(|(k, v)| {
                let g: DemographicGroup = k.parse().map_err(|e| format!("{e}"))?;
                let a: [f64; NUM_ACTIVITY_TYPES] = v
                    .as_slice()
                    .try_into()
                    .map_err(|_| format!("adapter {k} needs 15 weights"))?;
                Ok((g, a))
            })
            .collect()
    }
}

pub fn donors(chains: &[SurveyChain]) -> Result<Vec<Donor>, ActivityError> {
    chains
        .iter()
        .filter_map(|c| c.group.map(|g| (g, c)))
        .map(|(group, c)| {
            Ok(Donor {
                group,
                grid: encode_chain(&c.chain)?,
            })
        })
        .collect()
}

pub fn infer(
    model: &Model,
    adapters: &BTreeMap<DemographicGroup, [f64; NUM_ACTIVITY_TYPES]>,
    observed: &[ObservedDay],
    donors: &[Donor],
    cfg: &InferConfig,
) -> Result<Vec<InferredDay>, ReconError> {
    infer_population(model, adapters, observed, donors, cfg)
}

/// Home zone per agent, drawn with probability proportional to the zones'
/// Home land-use weight from a stream keyed by the agent id.
pub fn sample_home(graph: &ZoneGraph, agent_id: &str, seed: u64) -> Result<usize, LocationError> {
    let w: Vec<f64> = graph
        .zones()
        .iter()
        .map(|z| z.weight(ActivityCode::HOME))
        .collect();
    let total: f64 = w.iter().sum();
    if !(total > 0.0) {
        return Err(LocationError::NoCompatibleZone(ActivityCode::HOME));
    }
    let mut u = rand::Rng::random::<f64>(&mut rng_from(derive_tag(seed, agent_id))) * total;
    for (i, wi) in w.iter().enumerate() {
        if u < *wi {
            return Ok(i);
        }
        u -= wi;
    }
    Ok(w.iter().rposition(|x| *x > 0.0).expect("positive total"))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Placed {
    #[serde(flatten)]
    pub placement: ActivityPlacement,
    pub home: String,
}

/// Place every chain; case `i` draws from `derive(seed, i)`.
pub fn place_all(
    cases: &[CalibrationCase],
    graph: &ZoneGraph,
    profiles: &SamplingProfiles,
) -> Result<Vec<ActivityPlacement>, LocationError> {
    cases
        .par_iter()
        .map(|c| assign_chain(&c.chain, c.home, graph, profiles, c.seed))
        .collect()
}

pub fn calibration_cases(
    chains: &[ActivityChain],
    homes: &[usize],
    seed: u64,
) -> Vec<CalibrationCase> {
    chains
        .iter()
        .zip(homes)
        .enumerate()
        .map(|(i, (c, &home))| CalibrationCase {
            chain: c.clone(),
            home,
            seed: derive(seed, i as u64),
        })
        .collect()
}

/// Targets for profile calibration.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CalibrationTargets {
    pub frequencies: RegionFrequencies,
    #[serde(default)]
    pub od: Option<OdMatrix>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AssignSummary {
    pub chains: usize,
    pub activities: usize,
    pub relaxed: usize,
    pub unflagged_violations: usize,
    pub calibration: Option<RefineOutcome>,
}

pub struct Assigned {
    pub placements: Vec<ActivityPlacement>,
    pub od: OdMatrix,
    pub profiles: SamplingProfiles,
    pub summary: AssignSummary,
}

/// Optionally calibrate the profiles, then place every chain and audit the
/// travel-time windows.
pub fn assign(
    chains: &[ActivityChain],
    homes: &[usize],
    graph: &ZoneGraph,
    profiles: &SamplingProfiles,
    calibrate: Option<(&CalibrationTargets, &RefineConfig)>,
    seed: u64,
) -> Result<Assigned, LocationError> {
    profiles.validate()?;
    let cases = calibration_cases(chains, homes, seed);
    let (profiles, calibration) = match calibrate {
        Some((t, cfg)) => {
            let out = refine_profiles_with(
                profiles,
                &cases,
                graph,
                &t.frequencies,
                t.od.as_ref(),
                cfg,
                |p| place_all(&cases, graph, p),
            )?;
            (out.profiles.clone(), Some(out))
        }
        None => (profiles.clone(), None),
    };
    let placements = place_all(&cases, graph, &profiles)?;
    let mut violations = 0;
    for (p, c) in placements.iter().zip(&cases) {
        violations += unflagged_violations(p, c.home, graph, &profiles)?.len();
    }
    let od = od_matrix(&placements, graph)?;
    let summary = AssignSummary {
        chains: placements.len(),
        activities: placements.iter().map(|p| p.zones.len()).sum(),
        relaxed: placements.iter().map(|p| p.relaxed_count()).sum(),
        unflagged_violations: violations,
        calibration,
    };
    Ok(Assigned {
        placements,
        od,
        profiles,
        summary,
    })
}
