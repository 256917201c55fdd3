//! Population synthesis from observed days: complete days with enough
//! evidence, regenerate the rest from a heavily masked donor day, each
//! under the adapter of a rule-assigned demographic group.

use alloc::collections::BTreeMap;
use alloc::string::String;
use alloc::vec::Vec;

use rand::seq::index;
use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::activity::decode_grid;
use crate::math;
use crate::recon::{complete_batch, Model, ReconError};
use crate::rng::{derive, derive_tag, rng_from, Rng};
use crate::{
    ActivityChain, ActivityCode, AgeBand, DemographicGroup, Employment, Slot, SlotGrid,
    NUM_ACTIVITY_TYPES, SLOTS_PER_DAY,
};

const K: usize = SLOTS_PER_DAY;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct InferConfig {
    pub passes_weekday: usize,
    pub passes_weekend: usize,
    /// Largest share of slots hidden on the generation path.
    pub generation_mask_cap: f64,
    /// Observed share at or above which a day is completed rather than
    /// regenerated.
    pub completeness_threshold: f64,
    /// Share of observed slots hidden from the model on completion passes
    /// after the first, so that passes differ.
    pub evidence_dropout: f64,
    /// Census-style weights for sampling unknown demographic dimensions;
    /// empty means uniform.
    pub group_prior: BTreeMap<DemographicGroup, f64>,
    pub seed: u64,
}

impl Default for InferConfig {
    fn default() -> Self {
        Self {
            passes_weekday: 5,
            passes_weekend: 2,
            generation_mask_cap: 0.8,
            completeness_threshold: 0.33,
            evidence_dropout: 0.25,
            group_prior: BTreeMap::new(),
            seed: 0,
        }
    }
}

/// What the rule engine could tell from a day.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DemographicTag {
    Worker,
    Young,
    YoungWorker,
    Unclassified,
}

/// Work marks a worker, School marks a young person.
pub fn classify_demographic(grid: &SlotGrid) -> DemographicTag {
    match (
        grid.contains(ActivityCode::WORK),
        grid.contains(ActivityCode::SCHOOL),
    ) {
        (true, true) => DemographicTag::YoungWorker,
        (true, false) => DemographicTag::Worker,
        (false, true) => DemographicTag::Young,
        (false, false) => DemographicTag::Unclassified,
    }
}

fn compatible(tag: DemographicTag, g: &DemographicGroup) -> bool {
    match tag {
        DemographicTag::Worker => g.employment == Employment::Worker,
        DemographicTag::Young => g.age_band == AgeBand::Young,
        DemographicTag::YoungWorker => {
            g.employment == Employment::Worker && g.age_band == AgeBand::Young
        }
        DemographicTag::Unclassified => true,
    }
}

/// Draw a group consistent with `tag`, weighting by `prior`.
pub fn sample_group(
    tag: DemographicTag,
    prior: &BTreeMap<DemographicGroup, f64>,
    rng: &mut Rng,
) -> DemographicGroup {
    let cands: Vec<(DemographicGroup, f64)> = DemographicGroup::all()
        .into_iter()
        .filter(|g| compatible(tag, g))
        .map(|g| {
            (
                g,
                if prior.is_empty() {
                    1.0
                } else {
                    prior.get(&g).copied().unwrap_or(0.0)
                },
            )
        })
        .collect();
    let total: f64 = cands.iter().map(|c| c.1).sum();
    if !(total > 0.0) {
        return cands[rng.random_range(0..cands.len())].0;
    }
    let mut u = rng.random::<f64>() * total;
    for (g, w) in &cands {
        if u < *w {
            return *g;
        }
        u -= w;
    }
    cands[cands.len() - 1].0
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ObservedDay {
    pub agent_id: String,
    /// Observed slots hold activities; everything else is unknown.
    pub grid: SlotGrid,
}

impl ObservedDay {
    pub fn completeness(&self) -> f64 {
        self.grid
            .slots
            .iter()
            .filter(|s| matches!(s, Slot::Act(_)))
            .count() as f64
            / K as f64
    }
}

/// A complete day of a known group, used to seed generation.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Donor {
    pub group: DemographicGroup,
    pub grid: SlotGrid,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InferPath {
    Completion,
    Generation,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InferredDay {
    pub agent_id: String,
    /// Index of the observed day this came from.
    pub source: usize,
    pub pass: usize,
    pub group: DemographicGroup,
    pub tag: DemographicTag,
    pub path: InferPath,
    /// Slots the model saw.
    pub input: SlotGrid,
    pub completed: SlotGrid,
    pub chain: ActivityChain,
}

struct Job {
    source: usize,
    pass: usize,
    group: DemographicGroup,
    tag: DemographicTag,
    path: InferPath,
    input: SlotGrid,
}

fn unknown_as_masked(grid: &SlotGrid) -> SlotGrid {
    let mut g = grid.clone();
    for s in g.slots.iter_mut() {
        if !matches!(s, Slot::Act(_)) {
            *s = Slot::Masked;
        }
    }
    g
}

fn generation_input(day: &SlotGrid, donor: &SlotGrid, cap: f64, rng: &mut Rng) -> SlotGrid {
    let observed: Vec<usize> = (0..K)
        .filter(|&k| matches!(day.slots[k], Slot::Act(_)))
        .collect();
    let seeds_needed = (math::ceil_tolerant((1.0 - cap) * K as f64) as usize)
        .max(observed.len())
        .min(K);
    let mut input = SlotGrid::filled(Slot::Masked, day.day_of_week);
    for &k in &observed {
        input.slots[k] = day.slots[k];
    }
    let free: Vec<usize> = (0..K)
        .filter(|&k| {
            !matches!(day.slots[k], Slot::Act(_)) && matches!(donor.slots[k], Slot::Act(_))
        })
        .collect();
    let extra = (seeds_needed - observed.len()).min(free.len());
    for i in index::sample(rng, free.len(), extra) {
        input.slots[free[i]] = donor.slots[free[i]];
    }
    input
}

/// Synthesize `passes_weekday` (or `passes_weekend`) days per observed day.
/// Days with at least `completeness_threshold` observed slots are completed
/// with their observations kept verbatim; the others are regenerated from
/// a donor day of the same group with at most `generation_mask_cap` of the
/// slots hidden (their own observations always kept). Missing adapters mean
/// no bias for that group.
pub fn infer_population(
    model: &Model,
    adapters: &BTreeMap<DemographicGroup, [f64; NUM_ACTIVITY_TYPES]>,
    observed: &[ObservedDay],
    donors: &[Donor],
    cfg: &InferConfig,
) -> Result<Vec<InferredDay>, ReconError> {
    if !(0.0..=1.0).contains(&cfg.generation_mask_cap)
        || !(0.0..=1.0).contains(&cfg.completeness_threshold)
        || !(0.0..1.0).contains(&cfg.evidence_dropout)
    {
        return Err(ReconError::Config(
            "mask cap, threshold and dropout must lie in [0, 1]".into(),
        ));
    }
    let mut jobs = Vec::new();
    for (i, day) in observed.iter().enumerate() {
        let mut rng = rng_from(derive(derive_tag(cfg.seed, "infer"), i as u64));
        let tag = classify_demographic(&day.grid);
        let group = sample_group(tag, &cfg.group_prior, &mut rng);
        let passes = if day.grid.day_of_week < 5 {
            cfg.passes_weekday
        } else {
            cfg.passes_weekend
        };
        let complete = day.completeness() >= cfg.completeness_threshold;
        if !complete && donors.is_empty() {
            return Err(ReconError::NoData);
        }
        let pool: Vec<&Donor> = donors.iter().filter(|d| d.group == group).collect();
        for pass in 0..passes {
            let input = if complete {
                let mut g = unknown_as_masked(&day.grid);
                if pass > 0 && cfg.evidence_dropout > 0.0 {
                    let obs: Vec<usize> = (0..K)
                        .filter(|&k| matches!(g.slots[k], Slot::Act(_)))
                        .collect();
                    let hide = (math::floor(cfg.evidence_dropout * obs.len() as f64) as usize)
                        .min(obs.len().saturating_sub(1));
                    for j in index::sample(&mut rng, obs.len(), hide) {
                        g.slots[obs[j]] = Slot::Masked;
                    }
                }
                g
            } else {
                let donor = if pool.is_empty() {
                    &donors[rng.random_range(0..donors.len())]
                } else {
                    pool[rng.random_range(0..pool.len())]
                };
                generation_input(&day.grid, &donor.grid, cfg.generation_mask_cap, &mut rng)
            };
            jobs.push(Job {
                source: i,
                pass,
                group,
                tag,
                path: if complete {
                    InferPath::Completion
                } else {
                    InferPath::Generation
                },
                input,
            });
        }
    }

    // Batch by group so each batch shares one adapter bias.
    let mut order: Vec<usize> = (0..jobs.len()).collect();
    order.sort_by_key(|&j| (jobs[j].group, j));
    let mut completed: Vec<Option<SlotGrid>> = alloc::vec![None; jobs.len()];
    for chunk in order.chunk_by(|a, b| jobs[*a].group == jobs[*b].group) {
        let bias = adapters.get(&jobs[chunk[0]].group);
        for part in chunk.chunks(256) {
            let grids: Vec<SlotGrid> = part.iter().map(|&j| jobs[j].input.clone()).collect();
            for (&j, r) in part.iter().zip(complete_batch(model, &grids, bias)) {
                completed[j] = Some(r.completed);
            }
        }
    }

    let mut out = Vec::with_capacity(jobs.len());
    for (job, done) in jobs.into_iter().zip(completed) {
        let mut grid = done.ok_or(ReconError::NoData)?;
        // Observations are authoritative even where evidence was withheld.
        let src = &observed[job.source].grid;
        for k in 0..K {
            if matches!(src.slots[k], Slot::Act(_)) {
                grid.slots[k] = src.slots[k];
            }
        }
        let agent_id = observed[job.source].agent_id.clone();
        let chain = decode_grid(&grid, agent_id.clone())
            .map_err(|e| ReconError::Shape(alloc::format!("{e}")))?;
        out.push(InferredDay {
            agent_id,
            source: job.source,
            pass: job.pass,
            group: job.group,
            tag: job.tag,
            path: job.path,
            input: job.input,
            completed: grid,
            chain,
        });
    }
    Ok(out)
}
