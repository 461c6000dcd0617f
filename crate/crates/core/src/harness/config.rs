use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::HarnessError;
use crate::dvae::ModelConfig;
use crate::estimators::TwoStageConfig;

/// Overrides `output_dir` of every experiment when set.
pub const OUT_DIR_ENV: &str = "CIVREP_OUT_DIR";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "source", rename_all = "lowercase", deny_unknown_fields)]
pub enum DataSource {
    Synthetic { n: usize },
    Csv { path: PathBuf, schema: PathBuf },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EstimatorKind {
    DvaeCiv,
    Naive,
    OracleCiv,
}

impl EstimatorKind {
    pub fn tag(self) -> &'static str {
        match self {
            EstimatorKind::DvaeCiv => "dvae_civ",
            EstimatorKind::Naive => "naive",
            EstimatorKind::OracleCiv => "oracle_civ",
        }
    }

    pub fn parse(s: &str) -> Result<EstimatorKind, HarnessError> {
        match s.trim() {
            "dvae_civ" => Ok(EstimatorKind::DvaeCiv),
            "naive" => Ok(EstimatorKind::Naive),
            "oracle_civ" => Ok(EstimatorKind::OracleCiv),
            other => Err(HarnessError::Config(format!(
                "unknown estimator `{other}` (expected dvae_civ, naive or oracle_civ)"
            ))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub data: DataSource,
    #[serde(default = "defaults::replications")]
    pub replications: usize,
    #[serde(default = "defaults::train_fraction")]
    pub train_fraction: f64,
    #[serde(default)]
    pub base_seed: u64,
    #[serde(default = "defaults::estimators")]
    pub estimators: Vec<EstimatorKind>,
    #[serde(default = "defaults::output_dir")]
    pub output_dir: PathBuf,
    /// Worker threads for replications; 0 uses one per core.
    #[serde(default)]
    pub workers: usize,
    #[serde(default = "defaults::yes")]
    pub save_checkpoints: bool,
    #[serde(default)]
    pub model: ModelConfig,
    #[serde(default)]
    pub two_stage: TwoStageConfig,
}

mod defaults {
    use super::EstimatorKind;
    use std::path::PathBuf;

    pub fn replications() -> usize {
        10
    }
    pub fn train_fraction() -> f64 {
        0.7
    }
    pub fn estimators() -> Vec<EstimatorKind> {
        vec![EstimatorKind::DvaeCiv, EstimatorKind::Naive, EstimatorKind::OracleCiv]
    }
    pub fn output_dir() -> PathBuf {
        PathBuf::from("runs")
    }
    pub fn yes() -> bool {
        true
    }
}

impl ExperimentConfig {
    pub fn synthetic(n: usize) -> ExperimentConfig {
        toml::from_str(&format!("[data]\nsource = \"synthetic\"\nn = {n}\n")).expect("static config parses")
    }

    pub fn validate(&self) -> Result<(), HarnessError> {
        let bad = |m: String| Err(HarnessError::Config(m));
        if self.replications == 0 {
            return bad("replications must be at least 1".into());
        }
        if !(self.train_fraction > 0.0 && self.train_fraction < 1.0) {
            return bad(format!("train_fraction {} must lie in (0, 1)", self.train_fraction));
        }
        if self.estimators.is_empty() {
            return bad("no estimators configured".into());
        }
        match &self.data {
            DataSource::Synthetic { n } if *n < 2 => return bad("synthetic n must be at least 2".into()),
            DataSource::Csv { path, schema } => {
                for p in [path, schema] {
                    if !p.is_file() {
                        return bad(format!("file not found: {}", p.display()));
                    }
                }
            }
            _ => {}
        }
        self.model
            .validate()
            .map_err(|e| HarnessError::Config(e.to_string()))?;
        Ok(())
    }

    /// SHA-256 over the canonical JSON form of the config.
    pub fn hash(&self) -> String {
        let json = serde_json::to_vec(self).expect("config serializes");
        hex::encode(Sha256::digest(&json))
    }

    /// Applies the output-directory environment override.
    pub fn apply_env(&mut self) {
        if let Some(dir) = std::env::var_os(OUT_DIR_ENV).filter(|v| !v.is_empty()) {
            self.output_dir = PathBuf::from(dir);
        }
    }
}

/// Reads a TOML experiment config. Relative data paths are resolved against
/// the config file's directory; the environment override is applied.
pub fn load_experiment_config(path: &Path) -> Result<ExperimentConfig, HarnessError> {
    let text = fs::read_to_string(path).map_err(|e| HarnessError::Config(format!("{}: {e}", path.display())))?;
    let mut cfg: ExperimentConfig = toml::from_str(&text).map_err(|e| HarnessError::Config(e.to_string()))?;
    let base = path.parent().unwrap_or(Path::new("."));
    if let DataSource::Csv { path, schema } = &mut cfg.data {
        for p in [path, schema] {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
    }
    cfg.apply_env();
    Ok(cfg)
}
