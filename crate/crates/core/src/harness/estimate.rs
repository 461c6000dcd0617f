use serde::{Deserialize, Serialize};

use super::metrics::{metric_ace_error, metric_pehe};
use super::report::{Fold, ResultRow, SCHEMA_VERSION};
use super::{EstimatorKind, HarnessError};
use crate::data::Dataset;
use crate::dvae::{ModelParams, TrainHistory};
use crate::estimators::{DvaeCivFit, EffectEstimate, NaiveFit, OracleCivFit, TwoStageConfig};

/// Result of running estimators on a single dataset (no splitting).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EstimateReport {
    pub schema_version: u32,
    pub rows: Vec<ResultRow>,
    pub estimates: Vec<EffectEstimate>,
}

/// Fits each estimator on `ds` and evaluates it on the same rows. The
/// learned-representation estimator needs `params` from a prior training run.
pub fn run_estimate(
    ds: &Dataset,
    params: Option<&ModelParams>,
    kinds: &[EstimatorKind],
    cfg: &TwoStageConfig,
    true_ace: Option<f64>,
) -> Result<EstimateReport, HarnessError> {
    let mut estimates = Vec::new();
    for &kind in kinds {
        let est = match kind {
            EstimatorKind::Naive => NaiveFit::fit(ds)?.estimate(ds)?,
            EstimatorKind::OracleCiv => OracleCivFit::fit(ds, cfg)?.estimate(ds)?,
            EstimatorKind::DvaeCiv => {
                let p = params.ok_or_else(|| HarnessError::Config("dvae_civ needs a checkpoint".into()))?;
                DvaeCivFit::from_params(p.clone(), TrainHistory::default(), ds, cfg)?.estimate(ds)?
            }
        };
        estimates.push(est);
    }
    let (y1, y0) = (
        ds.y1.as_ref().map(|v| v.to_vec()),
        ds.y0.as_ref().map(|v| v.to_vec()),
    );
    let rows = estimates
        .iter()
        .map(|e| {
            Ok(ResultRow {
                replication: 0,
                seed: cfg.seed,
                estimator: e.tag.clone(),
                fold: Fold::WithinSample,
                ace: e.ace,
                eps_ace: true_ace.map(|t| metric_ace_error(e.ace, t)),
                sqrt_pehe: match metric_pehe(&e.cace, y1.as_deref(), y0.as_deref()) {
                    Ok(v) => Some(v),
                    Err(HarnessError::MetricUnavailable(_)) => None,
                    Err(other) => return Err(other),
                },
            })
        })
        .collect::<Result<_, HarnessError>>()?;
    Ok(EstimateReport {
        schema_version: SCHEMA_VERSION,
        rows,
        estimates,
    })
}
