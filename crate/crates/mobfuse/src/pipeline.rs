//! Stage orchestration with manifests.
//!
//! Every stage writes its outputs into the artifacts directory together
//! with `manifests/<stage>.json`, which records the input and output
//! hashes, the stage's config hash and its seed. A stage whose manifest
//! still matches its inputs, config and outputs is skipped.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use mobfuse_core::adapter::targets_from_minutes;
use mobfuse_core::annotate::{build_temporal_prior, PoiActivityProfile};
use mobfuse_core::eval::{build_report, NamedChains, NamedMatrix};
use mobfuse_core::infer::{DemographicTag, InferConfig, InferPath};
use mobfuse_core::location::{LocationError, SamplingProfiles, Zone, ZoneGraph};
use mobfuse_core::recon::{metrics_csv, semi_supervised_transfer, TransferConfig};
use mobfuse_core::rng::derive_tag;
use mobfuse_core::{ActivityChain, DemographicGroup};

use crate::checkpoint;
use crate::classifier::{Classified, Classifier, ClassifierConfig};
use crate::config::{ConfigError, PipelineConfig};
use crate::io;
use crate::stages::{
    self, AdapterFile, CalibrationTargets, DayStay, ObservedChain, Placed, SurveyChain,
};

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Stage {
    Extract,
    Annotate,
    TrainBase,
    Transfer,
    Adapt,
    Infer,
    Assign,
    Evaluate,
}

impl Stage {
    pub const ALL: [Stage; 8] = [
        Stage::Extract,
        Stage::Annotate,
        Stage::TrainBase,
        Stage::Transfer,
        Stage::Adapt,
        Stage::Infer,
        Stage::Assign,
        Stage::Evaluate,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Stage::Extract => "extract",
            Stage::Annotate => "annotate",
            Stage::TrainBase => "train-base",
            Stage::Transfer => "transfer",
            Stage::Adapt => "adapt",
            Stage::Infer => "infer",
            Stage::Assign => "assign",
            Stage::Evaluate => "evaluate",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|st| st.name() == s)
    }
}

#[derive(Debug, thiserror::Error)]
pub enum PipelineError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("stage {stage} failed: {msg}")]
    Stage { stage: &'static str, msg: String },
}

impl PipelineError {
    pub fn exit_code(&self) -> i32 {
        match self {
            PipelineError::Config(_) => 2,
            PipelineError::Stage { .. } => 3,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Manifest {
    pub stage: String,
    pub seed: u64,
    pub config_sha256: String,
    pub inputs: BTreeMap<String, String>,
    pub outputs: BTreeMap<String, String>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StageStatus {
    Ran,
    Skipped,
}

#[derive(Clone, Debug, Default)]
pub struct RunOptions {
    /// Only these stages may run; the others must already be up to date.
    pub only: Option<Vec<Stage>>,
    /// Rerun the selected stages even when their manifests match.
    pub force: bool,
}

pub struct StageCtx<'a> {
    pub cfg: &'a PipelineConfig,
    pub out: &'a Path,
    pub seed: u64,
}

impl StageCtx<'_> {
    pub fn path(&self, name: &str) -> PathBuf {
        self.out.join(name)
    }
}

type Fail = String;

fn fail<E: std::fmt::Display>(e: E) -> Fail {
    e.to_string()
}

/// Hash of a file, or of every file under a directory (by relative name).
fn hash_path(path: &Path) -> Result<String, Fail> {
    if !path.is_dir() {
        return io::file_sha256(path).map_err(fail);
    }
    let mut entries: Vec<(String, String)> = Vec::new();
    let mut stack = vec![path.to_path_buf()];
    while let Some(dir) = stack.pop() {
        for e in fs::read_dir(&dir).map_err(fail)? {
            let p = e.map_err(fail)?.path();
            if p.is_dir() {
                stack.push(p);
            } else {
                let rel = p
                    .strip_prefix(path)
                    .expect("under root")
                    .to_string_lossy()
                    .replace('\\', "/");
                entries.push((rel, io::file_sha256(&p).map_err(fail)?));
            }
        }
    }
    entries.sort();
    Ok(io::sha256_hex(
        serde_json::to_string(&entries).expect("strings").as_bytes(),
    ))
}

pub struct Pipeline<'a> {
    cfg: &'a PipelineConfig,
    opts: RunOptions,
    pub statuses: Vec<(Stage, StageStatus)>,
}

impl<'a> Pipeline<'a> {
    pub fn new(cfg: &'a PipelineConfig, opts: RunOptions) -> Self {
        Self {
            cfg,
            opts,
            statuses: Vec::new(),
        }
    }

    fn out(&self) -> &Path {
        &self.cfg.paths.out
    }

    fn manifest_path(&self, stage: Stage) -> PathBuf {
        self.out()
            .join("manifests")
            .join(format!("{}.json", stage.name()))
    }

    fn up_to_date(&self, stage: Stage, expected: &Manifest) -> bool {
        let Ok(old) = io::read_json::<Manifest>(&self.manifest_path(stage)) else {
            return false;
        };
        old.stage == expected.stage
            && old.seed == expected.seed
            && old.config_sha256 == expected.config_sha256
            && old.inputs == expected.inputs
            && old
                .outputs
                .iter()
                .all(|(name, h)| hash_path(&self.out().join(name)).is_ok_and(|x| &x == h))
    }

    fn stage<F>(
        &mut self,
        stage: Stage,
        inputs: &[(&str, PathBuf)],
        config: Value,
        body: F,
    ) -> Result<StageStatus, PipelineError>
    where
        F: FnOnce(&StageCtx<'_>) -> Result<Vec<String>, Fail>,
    {
        let err = |msg: String| PipelineError::Stage {
            stage: stage.name(),
            msg,
        };
        let seed = derive_tag(self.cfg.seed, stage.name());
        let mut input_hashes = BTreeMap::new();
        for (name, path) in inputs {
            let h = hash_path(path).map_err(|m| err(format!("input {name}: {m}")))?;
            input_hashes.insert(name.to_string(), h);
        }
        let config_sha256 = io::sha256_hex(
            serde_json::to_string(
                &json!({"stage": stage.name(), "seed": self.cfg.seed, "config": config}),
            )
            .expect("json")
            .as_bytes(),
        );
        let mut manifest = Manifest {
            stage: stage.name().into(),
            seed,
            config_sha256,
            inputs: input_hashes,
            outputs: BTreeMap::new(),
        };
        let allowed = self.opts.only.as_ref().is_none_or(|o| o.contains(&stage));
        if !(self.opts.force && allowed) && self.up_to_date(stage, &manifest) {
            log::info!("{}: up to date", stage.name());
            self.statuses.push((stage, StageStatus::Skipped));
            return Ok(StageStatus::Skipped);
        }
        if !allowed {
            return Err(err(
                "not selected to run and its manifest is missing or stale".into(),
            ));
        }
        log::info!("{}: running", stage.name());
        let _ = fs::remove_file(self.manifest_path(stage));
        let ctx = StageCtx {
            cfg: self.cfg,
            out: self.out(),
            seed,
        };
        let outputs = body(&ctx).map_err(err)?;
        for name in outputs {
            let h = hash_path(&self.out().join(&name))
                .map_err(|m| err(format!("output {name}: {m}")))?;
            manifest.outputs.insert(name, h);
        }
        io::write_json(&self.manifest_path(stage), &manifest).map_err(|e| err(e.to_string()))?;
        self.statuses.push((stage, StageStatus::Ran));
        Ok(StageStatus::Ran)
    }

    /// Run every stage in order, skipping those already up to date.
    pub fn run(&mut self) -> Result<(), PipelineError> {
        let cfg = self.cfg;
        let p = &cfg.paths;
        fs::create_dir_all(self.out()).map_err(|e| PipelineError::Stage {
            stage: "setup",
            msg: e.to_string(),
        })?;
        let out = self.out().to_path_buf();
        let o = |n: &str| out.join(n);

        self.stage(
            Stage::Extract,
            &[("gps", p.gps.clone())],
            json!(cfg.extract),
            |c| {
                let pts = io::read_gps(&p.gps).map_err(fail)?;
                let stays = stages::extract(pts, &c.cfg.extract).map_err(fail)?;
                io::write_jsonl(&c.path("stays.jsonl"), &stays).map_err(fail)?;
                Ok(vec!["stays.jsonl".into()])
            },
        )?;

        let mut ann_inputs = vec![
            ("stays", o("stays.jsonl")),
            ("pois", p.pois.clone()),
            ("survey", p.survey.clone()),
        ];
        if let ClassifierConfig::Fixture { dir } = &cfg.classifier {
            ann_inputs.push(("classifier_fixtures", dir.clone()));
        }
        // Fixture contents are hashed as an input; keep the location itself
        // out of the config hash.
        let classifier_cfg = match &cfg.classifier {
            ClassifierConfig::Fixture { .. } => json!({"mode": "fixture"}),
            other => json!(other),
        };
        self.stage(
            Stage::Annotate,
            &ann_inputs,
            json!({"classifier": classifier_cfg, "annotate": cfg.annotate, "extract": cfg.extract}),
            |c| {
                let stays: Vec<DayStay> = io::read_jsonl(&c.path("stays.jsonl")).map_err(fail)?;
                let pois = io::read_jsonl(&p.pois).map_err(fail)?;
                let survey: Vec<SurveyChain> = io::read_jsonl(&p.survey).map_err(fail)?;
                let chains: Vec<ActivityChain> = survey.into_iter().map(|s| s.chain).collect();
                let prior = build_temporal_prior(&chains).map_err(fail)?;
                let classified: Vec<Classified> =
                    Classifier::new(c.cfg.classifier.clone()).classify_all(&pois);
                let profiles: Vec<PoiActivityProfile> =
                    classified.iter().map(|x| x.profile.clone()).collect();
                let offset = c.cfg.extract.utc_offset_seconds();
                let annotated = stages::annotate(
                    &stays,
                    &pois,
                    &profiles,
                    &prior,
                    c.cfg.annotate.radius_m,
                    offset,
                )
                .map_err(fail)?;
                let observed = stages::observed_chains(&annotated, offset).map_err(fail)?;
                io::write_jsonl(&c.path("poi_profiles.jsonl"), &classified).map_err(fail)?;
                io::write_jsonl(&c.path("annotated.jsonl"), &annotated).map_err(fail)?;
                io::write_jsonl(&c.path("observed.jsonl"), &observed).map_err(fail)?;
                Ok(vec![
                    "poi_profiles.jsonl".into(),
                    "annotated.jsonl".into(),
                    "observed.jsonl".into(),
                ])
            },
        )?;

        self.stage(
            Stage::TrainBase,
            &[("survey", p.survey.clone())],
            json!(cfg.train),
            |c| {
                let survey: Vec<SurveyChain> = io::read_jsonl(&p.survey).map_err(fail)?;
                let samples = stages::survey_samples(&survey).map_err(fail)?;
                let outcome = stages::train_base(
                    &samples,
                    c.cfg.train.architecture,
                    &c.cfg.train.train,
                    c.seed,
                )
                .map_err(fail)?;
                checkpoint::save(
                    &c.path("base.ckpt"),
                    &outcome.model,
                    json!(c.cfg.train),
                    c.seed,
                )
                .map_err(fail)?;
                io::write_bytes(
                    &c.path("train_metrics.csv"),
                    metrics_csv(&outcome.log).as_bytes(),
                )
                .map_err(fail)?;
                Ok(vec!["base.ckpt".into(), "train_metrics.csv".into()])
            },
        )?;

        self.stage(
            Stage::Transfer,
            &[("base", o("base.ckpt")), ("observed", o("observed.jsonl"))],
            json!(cfg.transfer),
            |c| {
                let (base, _) = checkpoint::load(&c.path("base.ckpt")).map_err(fail)?;
                let observed = read_observed(&c.path("observed.jsonl"))?;
                let raw: Vec<_> = observed
                    .iter()
                    .map(|d| stages::as_model_input(&d.grid))
                    .collect();
                if c.cfg.transfer.enabled {
                    let tcfg = TransferConfig {
                        seed: c.seed,
                        ..c.cfg.transfer.transfer.clone()
                    };
                    let outcome = semi_supervised_transfer(&base, &raw, &tcfg).map_err(fail)?;
                    checkpoint::save(
                        &c.path("model.ckpt"),
                        &outcome.model,
                        json!({"transfer": tcfg, "best_iteration": outcome.best_iteration}),
                        c.seed,
                    )
                    .map_err(fail)?;
                    io::write_rows(&c.path("transfer.csv"), &outcome.table).map_err(fail)?;
                    log::info!(
                        "transfer: best iteration {} ({:?})",
                        outcome.best_iteration,
                        outcome.stop
                    );
                } else {
                    fs::copy(c.path("base.ckpt"), c.path("model.ckpt")).map_err(fail)?;
                    io::write_bytes(&c.path("transfer.csv"), b"").map_err(fail)?;
                }
                Ok(vec!["model.ckpt".into(), "transfer.csv".into()])
            },
        )?;

        self.stage(
            Stage::Adapt,
            &[
                ("model", o("model.ckpt")),
                ("tus", p.tus.clone()),
                ("observed", o("observed.jsonl")),
            ],
            json!(cfg.adapter),
            |c| {
                let (model, _) = checkpoint::load(&c.path("model.ckpt")).map_err(fail)?;
                let tus: BTreeMap<String, BTreeMap<String, f64>> =
                    io::read_json(&p.tus).map_err(fail)?;
                let targets = targets_from_minutes(&tus).map_err(fail)?;
                let observed = read_observed(&c.path("observed.jsonl"))?;
                let grids: Vec<_> = observed.iter().map(|d| d.grid.clone()).collect();
                let inputs = stages::adapter_inputs(&grids);
                let acfg = mobfuse_core::adapter::AdapterTrainConfig {
                    seed: c.seed,
                    ..c.cfg.adapter.clone()
                };
                let fits = stages::adapt(&model, &targets, &acfg, &inputs).map_err(fail)?;
                for f in fits.iter().filter(|f| !f.converged) {
                    log::warn!(
                        "adapter {} stopped at distance {:.4}",
                        f.adapter.group,
                        f.distance
                    );
                }
                io::write_json(
                    &c.path("adapters.json"),
                    &AdapterFile::from_fits(&fits, &acfg),
                )
                .map_err(fail)?;
                Ok(vec!["adapters.json".into()])
            },
        )?;

        self.stage(
            Stage::Infer,
            &[
                ("model", o("model.ckpt")),
                ("adapters", o("adapters.json")),
                ("observed", o("observed.jsonl")),
                ("survey", p.survey.clone()),
            ],
            json!(cfg.infer),
            |c| {
                let (model, _) = checkpoint::load(&c.path("model.ckpt")).map_err(fail)?;
                let adapters: AdapterFile =
                    io::read_json(&c.path("adapters.json")).map_err(fail)?;
                let observed_chains: Vec<ObservedChain> =
                    io::read_jsonl(&c.path("observed.jsonl")).map_err(fail)?;
                let observed = read_observed(&c.path("observed.jsonl"))?;
                let survey: Vec<SurveyChain> = io::read_jsonl(&p.survey).map_err(fail)?;
                let donors = stages::donors(&survey).map_err(fail)?;
                let icfg = InferConfig {
                    seed: c.seed,
                    ..c.cfg.infer.clone()
                };
                let days = stages::infer(&model, &adapters.biases()?, &observed, &donors, &icfg)
                    .map_err(fail)?;
                let records: Vec<SyntheticRecord> = days
                    .into_iter()
                    .map(|d| SyntheticRecord {
                        day: observed_chains[d.source].day,
                        source: d.source,
                        pass: d.pass,
                        group: d.group,
                        tag: d.tag,
                        path: d.path,
                        chain: d.chain,
                    })
                    .collect();
                io::write_jsonl(&c.path("synthetic.jsonl"), &records).map_err(fail)?;
                Ok(vec!["synthetic.jsonl".into()])
            },
        )?;

        let mut assign_inputs = vec![
            ("synthetic", o("synthetic.jsonl")),
            ("zones", p.zones.clone()),
            ("profiles", p.profiles.clone()),
        ];
        for (n, path) in [
            ("travel_times", &p.travel_times),
            ("homes", &p.homes),
            ("calibration_targets", &p.calibration_targets),
        ] {
            if let Some(path) = path {
                assign_inputs.push((n, path.clone()));
            }
        }
        self.stage(Stage::Assign, &assign_inputs, json!(cfg.assign), |c| {
            let records: Vec<SyntheticRecord> =
                io::read_jsonl(&c.path("synthetic.jsonl")).map_err(fail)?;
            let graph = load_graph(&p.zones, p.travel_times.as_deref())?;
            let profiles: SamplingProfiles = io::read_json(&p.profiles).map_err(fail)?;
            let chains: Vec<ActivityChain> = records.into_iter().map(|r| r.chain).collect();
            let homes = resolve_homes(&chains, &graph, p.homes.as_deref(), c.seed)?;
            let targets: Option<CalibrationTargets> =
                match (&p.calibration_targets, c.cfg.assign.calibrate) {
                    (Some(t), true) => Some(io::read_json(t).map_err(fail)?),
                    _ => None,
                };
            let assigned = stages::assign(
                &chains,
                &homes,
                &graph,
                &profiles,
                targets.as_ref().map(|t| (t, &c.cfg.assign.refine)),
                c.seed,
            )
            .map_err(fail)?;
            if assigned.summary.unflagged_violations > 0 {
                return Err(format!(
                    "{} unflagged travel-time violations",
                    assigned.summary.unflagged_violations
                ));
            }
            let placed: Vec<Placed> = assigned
                .placements
                .into_iter()
                .zip(&homes)
                .map(|(placement, &h)| Placed {
                    placement,
                    home: graph.zones()[h].zone_id.clone(),
                })
                .collect();
            io::write_jsonl(&c.path("placements.jsonl"), &placed).map_err(fail)?;
            io::write_od(&c.path("od.csv"), &assigned.od.regions, &assigned.od.counts)
                .map_err(fail)?;
            io::write_json(&c.path("profiles_calibrated.json"), &assigned.profiles)
                .map_err(fail)?;
            io::write_json(&c.path("assign_summary.json"), &assigned.summary).map_err(fail)?;
            Ok(vec![
                "placements.jsonl".into(),
                "od.csv".into(),
                "profiles_calibrated.json".into(),
                "assign_summary.json".into(),
            ])
        })?;

        let mut eval_inputs = vec![
            ("observed", o("observed.jsonl")),
            ("synthetic", o("synthetic.jsonl")),
            ("od", o("od.csv")),
        ];
        for (n, path) in [("truth", &p.truth), ("od_reference", &p.od_reference)] {
            if let Some(path) = path {
                eval_inputs.push((n, path.clone()));
            }
        }
        self.stage(Stage::Evaluate, &eval_inputs, Value::Null, |c| {
            let mut sets: Vec<(String, Vec<ActivityChain>)> = Vec::new();
            if let Some(t) = &p.truth {
                let truth: Vec<SurveyChain> = io::read_jsonl(t).map_err(fail)?;
                sets.push(("truth".into(), truth.into_iter().map(|s| s.chain).collect()));
            }
            let observed: Vec<ObservedChain> =
                io::read_jsonl(&c.path("observed.jsonl")).map_err(fail)?;
            sets.push((
                "observed".into(),
                observed.into_iter().map(|o| o.chain).collect(),
            ));
            let synthetic: Vec<SyntheticRecord> =
                io::read_jsonl(&c.path("synthetic.jsonl")).map_err(fail)?;
            sets.push((
                "synthetic".into(),
                synthetic.into_iter().map(|s| s.chain).collect(),
            ));
            let (regions, od) = io::read_od(&c.path("od.csv")).map_err(fail)?;
            let mut matrices = vec![("assigned".to_string(), od)];
            if let Some(r) = &p.od_reference {
                let (ref_regions, reference) = io::read_od(r).map_err(fail)?;
                matrices.push((
                    "reference".into(),
                    align(&ref_regions, &reference, &regions),
                ));
            }
            let named: Vec<NamedChains<'_>> = sets
                .iter()
                .map(|(n, c)| NamedChains { name: n, chains: c })
                .collect();
            let mats: Vec<NamedMatrix<'_>> = matrices
                .iter()
                .map(|(n, m)| NamedMatrix { name: n, matrix: m })
                .collect();
            let report = build_report(&named, &mats).map_err(fail)?;
            io::write_json(&c.path("report.json"), &report).map_err(fail)?;
            Ok(vec!["report.json".into()])
        })?;
        Ok(())
    }
}

/// Reorder `m` (over `from`) onto the `to` region list; missing regions are
/// zero.
pub fn align(from: &[String], m: &[Vec<f64>], to: &[String]) -> Vec<Vec<f64>> {
    let pos: Vec<Option<usize>> = to
        .iter()
        .map(|r| from.iter().position(|f| f == r))
        .collect();
    pos.iter()
        .map(|i| {
            pos.iter()
                .map(|j| match (i, j) {
                    (Some(i), Some(j)) => m[*i][*j],
                    _ => 0.0,
                })
                .collect()
        })
        .collect()
}

/// One synthesized agent-day as written by the infer stage.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SyntheticRecord {
    #[serde(flatten)]
    pub chain: ActivityChain,
    pub day: i64,
    pub source: usize,
    pub pass: usize,
    pub group: DemographicGroup,
    pub tag: DemographicTag,
    pub path: InferPath,
}

pub fn read_observed(path: &Path) -> Result<Vec<mobfuse_core::infer::ObservedDay>, Fail> {
    let chains: Vec<ObservedChain> = io::read_jsonl(path).map_err(fail)?;
    chains
        .iter()
        .map(|c| stages::observed_day(c).map_err(fail))
        .collect()
}

pub fn load_graph(zones: &Path, travel_times: Option<&Path>) -> Result<ZoneGraph, Fail> {
    let zones: Vec<Zone> = io::read_jsonl(zones).map_err(fail)?;
    let mut g = ZoneGraph::new(zones).map_err(fail)?;
    if let Some(t) = travel_times {
        g = g
            .with_travel_times(&io::read_travel_times(t).map_err(fail)?)
            .map_err(fail)?;
    }
    Ok(g)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HomeRow {
    pub agent_id: String,
    pub zone_id: String,
}

/// Home zone index for each chain, from a CSV table or sampled by Home
/// land-use weight.
pub fn resolve_homes(
    chains: &[ActivityChain],
    graph: &ZoneGraph,
    table: Option<&Path>,
    seed: u64,
) -> Result<Vec<usize>, Fail> {
    let known: BTreeMap<String, String> = match table {
        Some(t) => io::read_rows::<HomeRow>(t)
            .map_err(fail)?
            .into_iter()
            .map(|r| (r.agent_id, r.zone_id))
            .collect(),
        None => BTreeMap::new(),
    };
    let home_seed = derive_tag(seed, "homes");
    chains
        .iter()
        .map(|c| match known.get(&c.agent_id) {
            Some(z) => graph.index(z),
            None => stages::sample_home(graph, &c.agent_id, home_seed),
        })
        .collect::<Result<Vec<_>, LocationError>>()
        .map_err(fail)
}

/// Load and run; the error carries the exit code.
pub fn run_pipeline(
    config_path: &Path,
    opts: RunOptions,
) -> Result<Vec<(Stage, StageStatus)>, PipelineError> {
    let cfg = PipelineConfig::load(config_path)?;
    let mut p = Pipeline::new(&cfg, opts);
    p.run()?;
    Ok(p.statuses)
}
