//! Effect estimators: two-stage IV on learned or given representations, the
//! conditional Wald ratio, and regression/oracle baselines.

mod baselines;
mod linalg;
mod two_stage;
mod wald;

pub use baselines::{
    naive_regression_ace, oracle_civ_estimate, DvaeCivFit, NaiveFit, OracleCivFit, ORACLE_CONDITIONING, ORACLE_INSTRUMENT,
};
pub use linalg::ols;
pub use two_stage::{cace, fit_two_stage, TwoStageConfig, TwoStageDiagnostics, TwoStageModel};
pub use wald::{wald_conditional, WaldAdjustment, WEAK_INSTRUMENT_THRESHOLD};

use std::collections::BTreeMap;

use ndarray::Array1;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::data::DataError;
use crate::diffnum::NumError;
use crate::dvae::DvaeError;

#[derive(Debug, Error)]
pub enum EstimatorError {
    #[error("treatment is degenerate ({treated} of {n} rows treated)")]
    DegenerateTreatment { treated: usize, n: usize },
    #[error("weak instrument in stratum {stratum}: first-stage difference {denominator:.4} below {threshold}")]
    WeakInstrument {
        stratum: String,
        denominator: f64,
        threshold: f64,
    },
    #[error("design matrix is rank deficient (rank {rank} of {cols})")]
    RankDeficient { rank: usize, cols: usize },
    #[error("{what} width mismatch: expected {expected}, got {actual}")]
    Dim {
        what: &'static str,
        expected: usize,
        actual: usize,
    },
    #[error("invalid input: {0}")]
    Input(String),
    #[error(transparent)]
    Num(#[from] NumError),
    #[error(transparent)]
    Data(#[from] DataError),
    #[error(transparent)]
    Model(#[from] DvaeError),
}

/// Average and conditional effects on some evaluation rows.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EffectEstimate {
    pub tag: String,
    pub ace: f64,
    pub cace: Vec<f64>,
    pub diagnostics: BTreeMap<String, f64>,
}

impl EffectEstimate {
    /// Builds an estimate whose `ace` is the mean of `cace`.
    pub fn from_cace(tag: &str, cace: Array1<f64>, diagnostics: BTreeMap<String, f64>) -> Result<Self, EstimatorError> {
        if cace.is_empty() {
            return Err(EstimatorError::Input("no evaluation rows".into()));
        }
        if cace.iter().any(|v| !v.is_finite()) {
            return Err(NumError::NonFinite(format!("{tag} effects")).into());
        }
        Ok(EffectEstimate {
            tag: tag.to_string(),
            ace: cace.sum() / cace.len() as f64,
            cace: cace.to_vec(),
            diagnostics,
        })
    }

    /// Constant effect repeated over `n` rows.
    pub fn constant(tag: &str, effect: f64, n: usize, diagnostics: BTreeMap<String, f64>) -> Result<Self, EstimatorError> {
        Self::from_cace(tag, Array1::from_elem(n, effect), diagnostics)
    }
}
