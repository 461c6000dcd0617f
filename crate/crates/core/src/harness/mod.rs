//! Experiment orchestration, metrics and reports.

mod config;
mod estimate;
mod metrics;
mod report;
mod run;

pub use config::{load_experiment_config, DataSource, EstimatorKind, ExperimentConfig, OUT_DIR_ENV};
pub use estimate::{run_estimate, EstimateReport};
pub use metrics::{mean_std, metric_ace_error, metric_pehe};
pub use report::{aggregate, Aggregate, EffectReport, Failure, Fold, FoldAudit, ResultRow, Timing, SCHEMA_VERSION};
pub use run::run_experiment;

use thiserror::Error;

use crate::data::DataError;
use crate::dvae::DvaeError;
use crate::estimators::EstimatorError;
use crate::graph::GraphError;

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("configuration: {0}")]
    Config(String),
    #[error("metric unavailable: {0}")]
    MetricUnavailable(&'static str),
    #[error("{0}")]
    Invalid(String),
    #[error(transparent)]
    Data(#[from] DataError),
    #[error(transparent)]
    Model(#[from] DvaeError),
    #[error(transparent)]
    Estimator(#[from] EstimatorError),
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

/// Process exit status classes.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ErrorClass {
    Usage = 1,
    Data = 2,
    Numeric = 3,
}

impl ErrorClass {
    pub fn name(self) -> &'static str {
        match self {
            ErrorClass::Usage => "usage",
            ErrorClass::Data => "data",
            ErrorClass::Numeric => "numeric",
        }
    }
}

fn classify_model(e: &DvaeError) -> ErrorClass {
    match e {
        DvaeError::Config(_) => ErrorClass::Usage,
        DvaeError::NonFiniteLoss { .. } | DvaeError::Num(_) => ErrorClass::Numeric,
        DvaeError::Dim { .. } | DvaeError::Checkpoint(_) | DvaeError::Data(_) | DvaeError::Io(_) => ErrorClass::Data,
    }
}

impl HarnessError {
    pub fn class(&self) -> ErrorClass {
        match self {
            HarnessError::Config(_) => ErrorClass::Usage,
            HarnessError::Model(e) => classify_model(e),
            HarnessError::Estimator(e) => match e {
                EstimatorError::Num(_) | EstimatorError::RankDeficient { .. } | EstimatorError::WeakInstrument { .. } => {
                    ErrorClass::Numeric
                }
                EstimatorError::Model(m) => classify_model(m),
                _ => ErrorClass::Data,
            },
            HarnessError::Graph(
                GraphError::UnknownNode(_) | GraphError::Precondition(_) | GraphError::MissingEdge { .. },
            ) => ErrorClass::Usage,
            _ => ErrorClass::Data,
        }
    }
}
