//! Desk-scale scenario generator: a target population with GPS, POIs and
//! recorded classifier answers, a separately drawn survey population for
//! base training, zones with homes and calibration targets, and a pipeline
//! config tying them together.

use std::path::Path;

use serde::{Deserialize, Serialize};

use mobfuse_core::annotate::RemoteCandidate;
use mobfuse_core::annotate::RemoteResponse;
use mobfuse_core::location::{od_matrix, RegionFrequencies, SamplingProfiles, ZoneGraph};
use mobfuse_core::rng::derive_tag;
use mobfuse_core::synth::{
    default_profiles, gen_population, gen_zones, Population, SyntheticPopulationSpec,
};
use mobfuse_core::ActivityChain;

use crate::io;
use crate::pipeline::HomeRow;
use crate::stages::{self, CalibrationTargets, SurveyChain};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FixtureSpec {
    pub agents: usize,
    pub days: usize,
    pub survey_agents: usize,
    pub zones: usize,
    pub regions: usize,
    pub ping_interval_s: i64,
    /// Factor applied to every distance median of the shipped profiles, so
    /// that calibration has something to recover.
    pub profile_distortion: f64,
    pub seed: u64,
}

impl Default for FixtureSpec {
    fn default() -> Self {
        Self {
            agents: 500,
            days: 2,
            survey_agents: 500,
            zones: 50,
            regions: 4,
            ping_interval_s: 600,
            profile_distortion: 2.0,
            seed: 7,
        }
    }
}

/// Settings sized so that `run` finishes in well under a minute.
const PIPELINE_TOML: &str = r#"# Pipeline for the generated desk-scale fixture.
seed = 11

[paths]
gps = "gps.csv.gz"
pois = "pois.jsonl"
survey = "survey.jsonl"
tus = "tus.json"
zones = "zones.jsonl"
profiles = "profiles.json"
homes = "homes.csv"
calibration_targets = "targets.json"
truth = "truth.jsonl"
od_reference = "od_reference.csv"
out = "artifacts"

[classifier]
mode = "fixture"
dir = "classifier"

[annotate]
radius_m = 150.0

[train.schedule]
total_epochs = 30
batch_size = 32
patience = 0

[train.architecture]
width = 32
blocks = 2
hidden = 64
dropout = 0.0

[transfer]
enabled = true
max_iters = 3

[transfer.fine_tune]
total_epochs = 2
warmup_fraction = 0.0
intermediate_fraction = 0.0
batch_size = 64
learning_rate = 0.0005
patience = 0

[adapter]
max_epochs = 300
eta = 2.0
batch_size = 100

[infer]
passes_weekday = 5
passes_weekend = 2

[assign]
calibrate = true

[assign.refine]
max_rounds = 8
"#;

fn distorted(p: &SamplingProfiles, factor: f64) -> SamplingProfiles {
    let mut p = p.clone();
    p.mandatory.iter_mut().for_each(|c| c.mu_km *= factor);
    p.nonmandatory.iter_mut().for_each(|c| c.mu_km *= factor);
    p
}

fn survey_records(pop: &Population) -> Vec<SurveyChain> {
    pop.days
        .iter()
        .map(|d| SurveyChain {
            chain: d.chain.clone(),
            group: Some(d.group),
        })
        .collect()
}

/// Write the whole scenario into `dir`. Output is a pure function of `spec`.
pub fn write_fixture(dir: &Path, spec: &FixtureSpec) -> Result<(), String> {
    let e = |x: &dyn std::fmt::Display| x.to_string();
    let mut target = SyntheticPopulationSpec::default_la(spec.agents, spec.days);
    target.ping_interval_s = spec.ping_interval_s;
    let pop = gen_population(&target, derive_tag(spec.seed, "target")).map_err(|x| e(&x))?;

    let mut survey_spec = SyntheticPopulationSpec::default_la(spec.survey_agents, spec.days);
    survey_spec.emit_gps = false;
    let survey =
        gen_population(&survey_spec, derive_tag(spec.seed, "survey")).map_err(|x| e(&x))?;

    io::write_gps(&dir.join("gps.csv.gz"), &pop.gps).map_err(|x| e(&x))?;
    io::write_jsonl(&dir.join("pois.jsonl"), &pop.pois).map_err(|x| e(&x))?;
    let cdir = dir.join("classifier");
    std::fs::create_dir_all(&cdir).map_err(|x| e(&x))?;
    for p in &pop.profiles {
        let resp = RemoteResponse {
            candidates: p
                .candidates
                .iter()
                .map(|c| RemoteCandidate {
                    code: i64::from(c.code.code()),
                    probability: c.probability,
                })
                .collect(),
        };
        io::write_json(&cdir.join(format!("{}.json", p.poi_id)), &resp).map_err(|x| e(&x))?;
    }
    io::write_jsonl(&dir.join("survey.jsonl"), &survey_records(&survey)).map_err(|x| e(&x))?;
    io::write_jsonl(&dir.join("truth.jsonl"), &survey_records(&pop)).map_err(|x| e(&x))?;
    io::write_json(&dir.join("tus.json"), &pop.tus_minutes()).map_err(|x| e(&x))?;

    let zones = gen_zones(
        spec.zones,
        spec.regions,
        &target.region,
        derive_tag(spec.seed, "zones"),
    );
    io::write_jsonl(&dir.join("zones.jsonl"), &zones).map_err(|x| e(&x))?;
    let graph = ZoneGraph::new(zones).map_err(|x| e(&x))?;
    let home_seed = derive_tag(spec.seed, "homes");
    let mut homes = Vec::with_capacity(pop.agents.len());
    let mut rows = Vec::with_capacity(pop.agents.len());
    for a in &pop.agents {
        let h = stages::sample_home(&graph, &a.agent_id, home_seed).map_err(|x| e(&x))?;
        rows.push(HomeRow {
            agent_id: a.agent_id.clone(),
            zone_id: graph.zones()[h].zone_id.clone(),
        });
        homes.push((a.agent_id.clone(), h));
    }
    io::write_rows(&dir.join("homes.csv"), &rows).map_err(|x| e(&x))?;

    // Reference placements: true chains under the true profiles.
    let truth = default_profiles();
    let chains: Vec<ActivityChain> = pop.chains();
    let home_of: std::collections::BTreeMap<&str, usize> =
        homes.iter().map(|(a, h)| (a.as_str(), *h)).collect();
    let chain_homes: Vec<usize> = chains
        .iter()
        .map(|c| home_of[c.agent_id.as_str()])
        .collect();
    let cases =
        stages::calibration_cases(&chains, &chain_homes, derive_tag(spec.seed, "reference"));
    let placements = stages::place_all(&cases, &graph, &truth).map_err(|x| e(&x))?;
    let od = od_matrix(&placements, &graph).map_err(|x| e(&x))?;
    let frequencies =
        RegionFrequencies::from_placements(&placements, &chain_homes, &graph).map_err(|x| e(&x))?;
    io::write_json(
        &dir.join("targets.json"),
        &CalibrationTargets {
            frequencies,
            od: Some(od.clone()),
        },
    )
    .map_err(|x| e(&x))?;
    io::write_od(&dir.join("od_reference.csv"), &od.regions, &od.counts).map_err(|x| e(&x))?;
    io::write_json(
        &dir.join("profiles.json"),
        &distorted(&truth, spec.profile_distortion),
    )
    .map_err(|x| e(&x))?;
    io::write_json(&dir.join("fixture.json"), spec).map_err(|x| e(&x))?;
    io::write_bytes(&dir.join("pipeline.toml"), PIPELINE_TOML.as_bytes()).map_err(|x| e(&x))?;
    Ok(())
}
