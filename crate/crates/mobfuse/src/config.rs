//! Pipeline configuration, read from TOML. Relative paths resolve against
//! the directory holding the config file.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use mobfuse_core::adapter::AdapterTrainConfig;
use mobfuse_core::infer::InferConfig;
use mobfuse_core::location::RefineConfig;
use mobfuse_core::recon::{Architecture, TrainConfig, TransferConfig};
use mobfuse_core::staypoint::ExtractConfig;

use crate::classifier::ClassifierConfig;

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("{path}: {msg}")]
    Read { path: PathBuf, msg: String },
    #[error("invalid configuration: {0}")]
    Invalid(String),
    #[error("{name} path {path} does not exist")]
    MissingPath { name: &'static str, path: PathBuf },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Paths {
    /// Raw GPS points (CSV or JSON lines, optionally gzipped).
    pub gps: PathBuf,
    pub pois: PathBuf,
    /// Complete survey chains for base training, with group labels.
    pub survey: PathBuf,
    /// Per-group minutes per day by activity code.
    pub tus: PathBuf,
    pub zones: PathBuf,
    pub profiles: PathBuf,
    #[serde(default)]
    pub travel_times: Option<PathBuf>,
    /// Agent to home zone (`agent_id,zone_id`); sampled when absent.
    #[serde(default)]
    pub homes: Option<PathBuf>,
    #[serde(default)]
    pub calibration_targets: Option<PathBuf>,
    /// Ground-truth chains to compare against in the report.
    #[serde(default)]
    pub truth: Option<PathBuf>,
    /// Reference OD counts (`origin,destination,count`).
    #[serde(default)]
    pub od_reference: Option<PathBuf>,
    /// Where artifacts and manifests go.
    pub out: PathBuf,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AnnotateSection {
    pub radius_m: f64,
}

impl Default for AnnotateSection {
    fn default() -> Self {
        Self { radius_m: 150.0 }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainSection {
    pub architecture: Architecture,
    #[serde(flatten)]
    pub train: TrainConfig,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TransferSection {
    pub enabled: bool,
    #[serde(flatten)]
    pub transfer: TransferConfig,
}

impl Default for TransferSection {
    fn default() -> Self {
        Self {
            enabled: true,
            transfer: TransferConfig::default(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AssignSection {
    pub calibrate: bool,
    pub refine: RefineConfig,
}

impl Default for AssignSection {
    fn default() -> Self {
        Self {
            calibrate: true,
            refine: RefineConfig::default(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PipelineConfig {
    #[serde(default)]
    pub seed: u64,
    pub paths: Paths,
    #[serde(default)]
    pub extract: ExtractConfig,
    #[serde(default)]
    pub classifier: ClassifierConfig,
    #[serde(default)]
    pub annotate: AnnotateSection,
    #[serde(default)]
    pub train: TrainSection,
    #[serde(default)]
    pub transfer: TransferSection,
    #[serde(default)]
    pub adapter: AdapterTrainConfig,
    #[serde(default)]
    pub infer: InferConfig,
    #[serde(default)]
    pub assign: AssignSection,
}

impl PipelineConfig {
    /// Parse a TOML document. Keys that no section understands are an error,
    /// including keys inside flattened and nested tables.
    pub fn from_toml(text: &str) -> Result<Self, ConfigError> {
        let raw: toml::Table =
            toml::from_str(text).map_err(|e| ConfigError::Invalid(e.to_string()))?;
        let cfg: Self = toml::from_str(text).map_err(|e| ConfigError::Invalid(e.to_string()))?;
        let known = toml::Table::try_from(&cfg).map_err(|e| ConfigError::Invalid(e.to_string()))?;
        let mut unknown = Vec::new();
        unknown_keys(&raw, &known, "", &mut unknown);
        if !unknown.is_empty() {
            return Err(ConfigError::Invalid(format!(
                "unknown key(s): {}",
                unknown.join(", ")
            )));
        }
        Ok(cfg)
    }

    /// Parse, resolve relative paths and validate.
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|e| ConfigError::Read {
            path: path.to_path_buf(),
            msg: e.to_string(),
        })?;
        let mut cfg = Self::from_toml(&text).map_err(|e| ConfigError::Read {
            path: path.to_path_buf(),
            msg: e.to_string(),
        })?;
        cfg.resolve(path.parent().unwrap_or(Path::new(".")));
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn resolve(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        let p = &mut self.paths;
        for path in [
            &mut p.gps,
            &mut p.pois,
            &mut p.survey,
            &mut p.tus,
            &mut p.zones,
            &mut p.profiles,
            &mut p.out,
        ] {
            fix(path);
        }
        for path in [
            &mut p.travel_times,
            &mut p.homes,
            &mut p.calibration_targets,
            &mut p.truth,
            &mut p.od_reference,
        ]
        .into_iter()
        .flatten()
        {
            fix(path);
        }
        if let ClassifierConfig::Fixture { dir } = &mut self.classifier {
            fix(dir);
        }
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let p = &self.paths;
        let required = [
            ("gps", &p.gps),
            ("pois", &p.pois),
            ("survey", &p.survey),
            ("tus", &p.tus),
            ("zones", &p.zones),
            ("profiles", &p.profiles),
        ];
        let optional = [
            ("travel_times", &p.travel_times),
            ("homes", &p.homes),
            ("calibration_targets", &p.calibration_targets),
            ("truth", &p.truth),
            ("od_reference", &p.od_reference),
        ];
        for (name, path) in required.into_iter().chain(
            optional
                .into_iter()
                .filter_map(|(n, p)| p.as_ref().map(|p| (n, p))),
        ) {
            if !path.exists() {
                return Err(ConfigError::MissingPath {
                    name,
                    path: path.clone(),
                });
            }
        }
        if let ClassifierConfig::Fixture { dir } = &self.classifier {
            if !dir.is_dir() {
                return Err(ConfigError::MissingPath {
                    name: "classifier fixture dir",
                    path: dir.clone(),
                });
            }
        }
        let inv = |e: &dyn std::fmt::Display| ConfigError::Invalid(e.to_string());
        self.extract.validate().map_err(|e| inv(&e))?;
        if !(self.annotate.radius_m > 0.0) {
            return Err(ConfigError::Invalid(
                "annotate.radius_m must be positive".into(),
            ));
        }
        self.train.architecture.validate().map_err(|e| inv(&e))?;
        self.train.train.schedule.validate().map_err(|e| inv(&e))?;
        self.train.train.weights.validate().map_err(|e| inv(&e))?;
        self.transfer
            .transfer
            .fine_tune
            .validate()
            .map_err(|e| inv(&e))?;
        self.adapter.validate().map_err(|e| inv(&e))?;
        if self.assign.calibrate && p.calibration_targets.is_none() {
            return Err(ConfigError::Invalid(
                "assign.calibrate needs paths.calibration_targets".into(),
            ));
        }
        Ok(())
    }
}

fn unknown_keys(raw: &toml::Table, known: &toml::Table, prefix: &str, out: &mut Vec<String>) {
    for (k, v) in raw {
        let path = if prefix.is_empty() {
            k.clone()
        } else {
            format!("{prefix}.{k}")
        };
        match (v, known.get(k)) {
            (_, None) => out.push(path),
            (toml::Value::Table(r), Some(toml::Value::Table(n))) => unknown_keys(r, n, &path, out),
            _ => {}
        }
    }
}
