// Validation uses `!(x > 0.0)` on purpose so that NaN is rejected.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use serde::de::DeserializeOwned;
use serde_json::json;

use mobfuse::checkpoint;
use mobfuse::classifier::{Classifier, ClassifierConfig};
use mobfuse::config::{TrainSection, TransferSection};
use mobfuse::fixture::{write_fixture, FixtureSpec};
use mobfuse::io;
use mobfuse::pipeline::{self, align, RunOptions, Stage, SyntheticRecord};
use mobfuse::stages::{
    self, AdapterFile, CalibrationTargets, DayStay, ObservedChain, Placed, SurveyChain,
};
use mobfuse_core::adapter::{targets_from_minutes, AdapterTrainConfig};
use mobfuse_core::annotate::{build_temporal_prior, PoiActivityProfile, TemporalPrior};
use mobfuse_core::eval::{build_report, cosine_sim, NamedChains};
use mobfuse_core::infer::InferConfig;
use mobfuse_core::location::{RefineConfig, SamplingProfiles};
use mobfuse_core::recon::{metrics_csv, semi_supervised_transfer, TransferConfig};
use mobfuse_core::staypoint::ExtractConfig;
use mobfuse_core::{ActivityChain, SlotGrid};

#[derive(Parser)]
#[command(
    name = "mobfuse",
    version,
    about = "Mobility data fusion: stays, activity chains, adapters, locations"
)]
struct Cli {
    /// Base seed (overrides the config file's seed for `run`).
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    jobs: Option<usize>,
    /// More log output; repeat for more.
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Detect stay points in raw GPS and keep days passing the quality filter.
    ExtractStays {
        #[arg(long)]
        input: PathBuf,
        /// TOML with extraction settings.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        output: PathBuf,
    },
    /// Label stays with activity types from nearby POIs.
    Annotate {
        #[arg(long)]
        stays: PathBuf,
        #[arg(long)]
        pois: PathBuf,
        /// A prior JSON file, or `build-from:<chains.jsonl>`.
        #[arg(long)]
        prior: String,
        #[arg(long)]
        output: PathBuf,
        /// TOML with the classifier section (`mode = "heuristic" | "fixture" | "remote"`).
        #[arg(long)]
        classifier: Option<PathBuf>,
        #[arg(long, default_value_t = 150.0)]
        radius_m: f64,
        #[arg(long, default_value_t = -8.0, allow_hyphen_values = true)]
        utc_offset_hours: f64,
        /// Also write the observed day chains here.
        #[arg(long)]
        observed: Option<PathBuf>,
    },
    /// Train the reconstruction model on complete survey chains.
    TrainBase {
        #[arg(long)]
        chains: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// TOML with training settings and `[architecture]`.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        metrics: Option<PathBuf>,
    },
    /// Adapt a model to incomplete target-region days by self-training.
    Transfer {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        observed: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        table: Option<PathBuf>,
    },
    /// Fit one adapter per demographic group to time-use targets.
    AdaptDemographics {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        targets: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Observed days whose weekdays set the evaluation mix (default: one
        /// day per weekday). Every slot is masked before evaluation.
        #[arg(long)]
        inputs: Option<PathBuf>,
        #[arg(long)]
        config: Option<PathBuf>,
    },
    /// Synthesize complete days from observed ones.
    Infer {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        adapters: Option<PathBuf>,
        #[arg(long)]
        observed: PathBuf,
        /// Group-labelled complete chains used to seed sparse days.
        #[arg(long)]
        donors: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        config: Option<PathBuf>,
    },
    /// Place activities in zones.
    AssignLocations {
        #[arg(long)]
        chains: PathBuf,
        #[arg(long)]
        zones: PathBuf,
        #[arg(long)]
        profiles: PathBuf,
        #[arg(long)]
        calibrate: bool,
        #[arg(long, required_if_eq("calibrate", "true"))]
        targets: Option<PathBuf>,
        #[arg(long)]
        travel_times: Option<PathBuf>,
        #[arg(long)]
        homes: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        od_out: Option<PathBuf>,
        /// TOML with refinement settings.
        #[arg(long)]
        config: Option<PathBuf>,
    },
    /// Compare two chain sets.
    Evaluate {
        #[arg(long)]
        a: PathBuf,
        #[arg(long)]
        b: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Cosine similarity of two OD matrices.
    EvaluateOd {
        #[arg(long)]
        a: PathBuf,
        #[arg(long)]
        b: PathBuf,
    },
    /// Write a synthetic scenario with a ready-to-run pipeline.toml.
    GenFixture {
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 500)]
        agents: usize,
        #[arg(long, default_value_t = 2)]
        days: usize,
        #[arg(long)]
        survey_agents: Option<usize>,
        #[arg(long, default_value_t = 600)]
        ping_interval_s: i64,
    },
    /// Run every stage of a pipeline config.
    Run {
        #[arg(long)]
        config: PathBuf,
        /// Run only these stages; the rest must be up to date.
        #[arg(long, value_delimiter = ',')]
        only: Vec<String>,
        /// Rerun the selected stages even when their manifests match.
        #[arg(long)]
        force: bool,
    },
}

struct Failure {
    code: u8,
    msg: String,
}

fn config_err(msg: impl std::fmt::Display) -> Failure {
    Failure {
        code: 2,
        msg: msg.to_string(),
    }
}

fn stage_err(msg: impl std::fmt::Display) -> Failure {
    Failure {
        code: 3,
        msg: msg.to_string(),
    }
}

fn require(paths: &[&Path]) -> Result<(), Failure> {
    for p in paths {
        if !p.exists() {
            return Err(config_err(format!("{} does not exist", p.display())));
        }
    }
    Ok(())
}

fn load_toml<T: DeserializeOwned + Default>(path: Option<&Path>) -> Result<T, Failure> {
    match path {
        None => Ok(T::default()),
        Some(p) => {
            let text = std::fs::read_to_string(p)
                .map_err(|e| config_err(format!("{}: {e}", p.display())))?;
            toml::from_str(&text).map_err(|e| config_err(format!("{}: {e}", p.display())))
        }
    }
}

fn read_chains(path: &Path) -> Result<Vec<ActivityChain>, Failure> {
    io::read_jsonl(path).map_err(stage_err)
}

fn observed_grids(path: &Path) -> Result<Vec<mobfuse_core::infer::ObservedDay>, Failure> {
    pipeline::read_observed(path).map_err(stage_err)
}

fn execute(cli: Cli) -> Result<(), Failure> {
    let seed = cli.seed.unwrap_or(0);
    match cli.cmd {
        Cmd::ExtractStays {
            input,
            config,
            output,
        } => {
            require(&[&input])?;
            let cfg: ExtractConfig = load_toml(config.as_deref())?;
            cfg.validate().map_err(config_err)?;
            let stays = stages::extract(io::read_gps(&input).map_err(stage_err)?, &cfg)
                .map_err(stage_err)?;
            log::info!("{} stays on qualifying days", stays.len());
            io::write_jsonl(&output, &stays).map_err(stage_err)
        }
        Cmd::Annotate {
            stays,
            pois,
            prior,
            output,
            classifier,
            radius_m,
            utc_offset_hours,
            observed,
        } => {
            require(&[&stays, &pois])?;
            let ccfg: ClassifierConfig = load_toml(classifier.as_deref())?;
            let prior: TemporalPrior = match prior.strip_prefix("build-from:") {
                Some(chains) => {
                    require(&[Path::new(chains)])?;
                    build_temporal_prior(&read_chains(Path::new(chains))?).map_err(stage_err)?
                }
                None => {
                    require(&[Path::new(&prior)])?;
                    io::read_json(Path::new(&prior)).map_err(config_err)?
                }
            };
            if !(radius_m > 0.0) {
                return Err(config_err("--radius-m must be positive"));
            }
            let stays: Vec<DayStay> = io::read_jsonl(&stays).map_err(stage_err)?;
            let pois = io::read_jsonl(&pois).map_err(stage_err)?;
            let profiles: Vec<PoiActivityProfile> = Classifier::new(ccfg)
                .classify_all(&pois)
                .into_iter()
                .map(|c| c.profile)
                .collect();
            let offset = (utc_offset_hours * 3600.0).round() as i64;
            let annotated = stages::annotate(&stays, &pois, &profiles, &prior, radius_m, offset)
                .map_err(stage_err)?;
            io::write_jsonl(&output, &annotated).map_err(stage_err)?;
            if let Some(obs) = observed {
                io::write_jsonl(
                    &obs,
                    &stages::observed_chains(&annotated, offset).map_err(stage_err)?,
                )
                .map_err(stage_err)?;
            }
            Ok(())
        }
        Cmd::TrainBase {
            chains,
            out,
            config,
            metrics,
        } => {
            require(&[&chains])?;
            let cfg: TrainSection = load_toml(config.as_deref())?;
            cfg.architecture.validate().map_err(config_err)?;
            cfg.train.schedule.validate().map_err(config_err)?;
            let survey: Vec<SurveyChain> = io::read_jsonl(&chains).map_err(stage_err)?;
            let samples = stages::survey_samples(&survey).map_err(stage_err)?;
            let outcome = stages::train_base(&samples, cfg.architecture, &cfg.train, seed)
                .map_err(stage_err)?;
            checkpoint::save(&out, &outcome.model, json!(cfg), seed).map_err(stage_err)?;
            if let Some(m) = metrics {
                io::write_bytes(&m, metrics_csv(&outcome.log).as_bytes()).map_err(stage_err)?;
            }
            Ok(())
        }
        Cmd::Transfer {
            model,
            observed,
            out,
            config,
            table,
        } => {
            require(&[&model, &observed])?;
            let section: TransferSection = load_toml(config.as_deref())?;
            let cfg = TransferConfig {
                seed,
                ..section.transfer
            };
            let (base, _) = checkpoint::load(&model).map_err(stage_err)?;
            let raw: Vec<SlotGrid> = observed_grids(&observed)?
                .iter()
                .map(|d| stages::as_model_input(&d.grid))
                .collect();
            let outcome = semi_supervised_transfer(&base, &raw, &cfg).map_err(stage_err)?;
            log::info!(
                "best iteration {} ({:?})",
                outcome.best_iteration,
                outcome.stop
            );
            checkpoint::save(
                &out,
                &outcome.model,
                json!({"transfer": cfg, "best_iteration": outcome.best_iteration}),
                seed,
            )
            .map_err(stage_err)?;
            if let Some(t) = table {
                io::write_rows(&t, &outcome.table).map_err(stage_err)?;
            }
            Ok(())
        }
        Cmd::AdaptDemographics {
            model,
            targets,
            out,
            inputs,
            config,
        } => {
            require(&[&model, &targets])?;
            let cfg = AdapterTrainConfig {
                seed,
                ..load_toml(config.as_deref())?
            };
            cfg.validate().map_err(config_err)?;
            let (model, _) = checkpoint::load(&model).map_err(stage_err)?;
            let tus: BTreeMap<String, BTreeMap<String, f64>> =
                io::read_json(&targets).map_err(config_err)?;
            let targets = targets_from_minutes(&tus).map_err(config_err)?;
            let grids: Vec<SlotGrid> = match inputs {
                Some(p) => stages::adapter_inputs(
                    &observed_grids(&p)?
                        .into_iter()
                        .map(|d| d.grid)
                        .collect::<Vec<_>>(),
                ),
                None => (0..7)
                    .map(|d| SlotGrid::filled(mobfuse_core::Slot::Masked, d))
                    .collect(),
            };
            let fits = stages::adapt(&model, &targets, &cfg, &grids).map_err(stage_err)?;
            io::write_json(&out, &AdapterFile::from_fits(&fits, &cfg)).map_err(stage_err)
        }
        Cmd::Infer {
            model,
            adapters,
            observed,
            donors,
            out,
            config,
        } => {
            require(&[&model, &observed])?;
            let cfg = InferConfig {
                seed,
                ..load_toml(config.as_deref())?
            };
            let (model, _) = checkpoint::load(&model).map_err(stage_err)?;
            let biases = match adapters {
                Some(a) => io::read_json::<AdapterFile>(&a)
                    .map_err(config_err)?
                    .biases()
                    .map_err(config_err)?,
                None => BTreeMap::new(),
            };
            let donors = match donors {
                Some(d) => stages::donors(&io::read_jsonl::<SurveyChain>(&d).map_err(stage_err)?)
                    .map_err(stage_err)?,
                None => Vec::new(),
            };
            let chains: Vec<ObservedChain> = io::read_jsonl(&observed).map_err(stage_err)?;
            let days = stages::infer(&model, &biases, &observed_grids(&observed)?, &donors, &cfg)
                .map_err(stage_err)?;
            let records: Vec<SyntheticRecord> = days
                .into_iter()
                .map(|d| SyntheticRecord {
                    day: chains[d.source].day,
                    source: d.source,
                    pass: d.pass,
                    group: d.group,
                    tag: d.tag,
                    path: d.path,
                    chain: d.chain,
                })
                .collect();
            io::write_jsonl(&out, &records).map_err(stage_err)
        }
        Cmd::AssignLocations {
            chains,
            zones,
            profiles,
            calibrate,
            targets,
            travel_times,
            homes,
            out,
            od_out,
            config,
        } => {
            require(&[&chains, &zones, &profiles])?;
            for p in [&targets, &travel_times, &homes].into_iter().flatten() {
                require(&[p])?;
            }
            let refine: RefineConfig = load_toml(config.as_deref())?;
            let graph =
                pipeline::load_graph(&zones, travel_times.as_deref()).map_err(config_err)?;
            let profiles: SamplingProfiles = io::read_json(&profiles).map_err(config_err)?;
            let targets: Option<CalibrationTargets> = match (calibrate, &targets) {
                (true, Some(t)) => Some(io::read_json(t).map_err(config_err)?),
                _ => None,
            };
            let chains = read_chains(&chains)?;
            let homes = pipeline::resolve_homes(&chains, &graph, homes.as_deref(), seed)
                .map_err(stage_err)?;
            let assigned = stages::assign(
                &chains,
                &homes,
                &graph,
                &profiles,
                targets.as_ref().map(|t| (t, &refine)),
                seed,
            )
            .map_err(stage_err)?;
            log::info!(
                "{} activities placed, {} relaxed, {} unflagged violations",
                assigned.summary.activities,
                assigned.summary.relaxed,
                assigned.summary.unflagged_violations
            );
            let placed: Vec<Placed> = assigned
                .placements
                .into_iter()
                .zip(&homes)
                .map(|(placement, &h)| Placed {
                    placement,
                    home: graph.zones()[h].zone_id.clone(),
                })
                .collect();
            io::write_jsonl(&out, &placed).map_err(stage_err)?;
            if let Some(o) = od_out {
                io::write_od(&o, &assigned.od.regions, &assigned.od.counts).map_err(stage_err)?;
            }
            Ok(())
        }
        Cmd::Evaluate { a, b, out } => {
            require(&[&a, &b])?;
            let (ca, cb) = (read_chains(&a)?, read_chains(&b)?);
            let report = build_report(
                &[
                    NamedChains {
                        name: "a",
                        chains: &ca,
                    },
                    NamedChains {
                        name: "b",
                        chains: &cb,
                    },
                ],
                &[],
            )
            .map_err(stage_err)?;
            io::write_json(&out, &report).map_err(stage_err)
        }
        Cmd::EvaluateOd { a, b } => {
            require(&[&a, &b])?;
            let (ra, ma) = io::read_od(&a).map_err(stage_err)?;
            let (rb, mb) = io::read_od(&b).map_err(stage_err)?;
            let mut regions: Vec<String> = ra.iter().chain(&rb).cloned().collect();
            regions.sort();
            regions.dedup();
            let cos = cosine_sim(&align(&ra, &ma, &regions), &align(&rb, &mb, &regions))
                .map_err(stage_err)?;
            println!("{}", json!({ "cosine": cos }));
            Ok(())
        }
        Cmd::GenFixture {
            out,
            agents,
            days,
            survey_agents,
            ping_interval_s,
        } => {
            let spec = FixtureSpec {
                agents,
                days,
                survey_agents: survey_agents.unwrap_or(agents),
                ping_interval_s,
                seed: cli.seed.unwrap_or(FixtureSpec::default().seed),
                ..FixtureSpec::default()
            };
            if agents == 0 || days == 0 || ping_interval_s <= 0 {
                return Err(config_err(
                    "agents, days and ping interval must be positive",
                ));
            }
            write_fixture(&out, &spec).map_err(stage_err)
        }
        Cmd::Run {
            config,
            only,
            force,
        } => {
            let mut stages = Vec::new();
            for s in &only {
                stages
                    .push(Stage::parse(s).ok_or_else(|| config_err(format!("unknown stage {s}")))?);
            }
            let mut cfg = mobfuse::config::PipelineConfig::load(&config).map_err(config_err)?;
            if let Some(s) = cli.seed {
                cfg.seed = s;
            }
            let opts = RunOptions {
                only: (!stages.is_empty()).then_some(stages),
                force,
            };
            let mut p = pipeline::Pipeline::new(&cfg, opts);
            p.run().map_err(|e| Failure {
                code: e.exit_code() as u8,
                msg: e.to_string(),
            })?;
            for (stage, status) in &p.statuses {
                log::info!("{}: {:?}", stage.name(), status);
            }
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        2 => "debug",
        _ => "trace",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    if let Some(j) = cli.jobs {
        if let Err(e) = rayon::ThreadPoolBuilder::new()
            .num_threads(j.max(1))
            .build_global()
        {
            eprintln!("error: {e}");
            return ExitCode::from(2);
        }
    }
    match execute(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.msg);
            ExitCode::from(f.code)
        }
    }
}
