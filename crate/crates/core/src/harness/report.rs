use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::metrics::mean_std;
use super::{ExperimentConfig, HarnessError};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Fold {
    WithinSample,
    OutOfSample,
}

impl Fold {
    pub fn as_str(self) -> &'static str {
        match self {
            Fold::WithinSample => "within_sample",
            Fold::OutOfSample => "out_of_sample",
        }
    }
}

/// One estimator on one fold of one replication.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ResultRow {
    pub replication: usize,
    pub seed: u64,
    pub estimator: String,
    pub fold: Fold,
    pub ace: f64,
    pub eps_ace: Option<f64>,
    pub sqrt_pehe: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Failure {
    pub replication: usize,
    pub seed: u64,
    pub stage: String,
    pub error: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Aggregate {
    pub estimator: String,
    pub fold: Fold,
    pub metric: String,
    pub count: usize,
    pub mean: f64,
    /// Sample standard deviation; absent for a single replication.
    pub std: Option<f64>,
}

/// Row-index audit of one replication's split.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FoldAudit {
    pub replication: usize,
    pub train_rows: usize,
    pub test_rows: usize,
    /// Rows present in both folds.
    pub overlap: usize,
    /// Test rows that reached any fitting routine.
    pub leaked: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Timing {
    pub replication: usize,
    pub seconds: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EffectReport {
    pub schema_version: u32,
    pub config_hash: String,
    pub config: ExperimentConfig,
    pub true_ace: Option<f64>,
    pub rows: Vec<ResultRow>,
    pub failures: Vec<Failure>,
    pub aggregates: Vec<Aggregate>,
    pub audits: Vec<FoldAudit>,
    /// Wall-clock seconds; the only field that varies between identical runs.
    pub timings: Vec<Timing>,
    /// Files written, relative to the output directory.
    pub artifacts: Vec<String>,
}

/// Mean and sample std of every metric per (estimator, fold).
pub fn aggregate(rows: &[ResultRow]) -> Vec<Aggregate> {
    let mut groups: BTreeMap<(String, Fold, &'static str), Vec<f64>> = BTreeMap::new();
    for r in rows {
        let mut push = |metric: &'static str, v: Option<f64>| {
            if let Some(v) = v {
                groups.entry((r.estimator.clone(), r.fold, metric)).or_default().push(v);
            }
        };
        push("ace", Some(r.ace));
        push("eps_ace", r.eps_ace);
        push("sqrt_pehe", r.sqrt_pehe);
    }
    groups
        .into_iter()
        .map(|((estimator, fold, metric), values)| {
            let (mean, std) = mean_std(&values);
            Aggregate {
                estimator,
                fold,
                metric: metric.to_string(),
                count: values.len(),
                mean,
                std,
            }
        })
        .collect()
}

impl EffectReport {
    pub fn aggregate_for(&self, estimator: &str, fold: Fold, metric: &str) -> Option<&Aggregate> {
        self.aggregates
            .iter()
            .find(|a| a.estimator == estimator && a.fold == fold && a.metric == metric)
    }

    /// Rows of one estimator and fold, in replication order.
    pub fn rows_for(&self, estimator: &str, fold: Fold) -> Vec<&ResultRow> {
        self.rows
            .iter()
            .filter(|r| r.estimator == estimator && r.fold == fold)
            .collect()
    }

    /// Checks structural invariants: schema version and aggregates equal to
    /// a recomputation from the rows.
    pub fn check_consistency(&self) -> Result<(), HarnessError> {
        if self.schema_version != SCHEMA_VERSION {
            return Err(HarnessError::Invalid(format!("schema version {}", self.schema_version)));
        }
        if aggregate(&self.rows) != self.aggregates {
            return Err(HarnessError::Invalid("aggregates differ from row recomputation".into()));
        }
        Ok(())
    }

    pub fn write_json(&self, path: &Path) -> Result<(), HarnessError> {
        fs::write(path, serde_json::to_string_pretty(self)?)?;
        Ok(())
    }

    pub fn read_json(path: &Path) -> Result<EffectReport, HarnessError> {
        Ok(serde_json::from_str(&fs::read_to_string(path)?)?)
    }

    /// One line per result row.
    pub fn write_csv(&self, path: &Path) -> Result<(), HarnessError> {
        let mut out = csv::Writer::from_path(path)?;
        out.write_record(["replication", "seed", "estimator", "fold", "ace", "eps_ace", "sqrt_pehe"])?;
        let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
        for r in &self.rows {
            out.write_record([
                r.replication.to_string(),
                r.seed.to_string(),
                r.estimator.clone(),
                r.fold.as_str().to_string(),
                r.ace.to_string(),
                opt(r.eps_ace),
                opt(r.sqrt_pehe),
            ])?;
        }
        out.flush()?;
        Ok(())
    }
}
