use std::collections::BTreeMap;

use ndarray::{concatenate, Axis};

use super::{cace, fit_two_stage, ols, EffectEstimate, EstimatorError, TwoStageConfig, TwoStageModel};
use crate::data::Dataset;
use crate::diffnum::Matrix;
use crate::dvae::{extract_representations, train, ModelConfig, ModelParams, TrainHistory};

/// Known instrument and conditioning set of the synthetic generator.
pub const ORACLE_INSTRUMENT: &str = "S";
pub const ORACLE_CONDITIONING: [&str; 2] = ["X1", "X2"];

/// Least squares of `y` on `[1, w, x]`; the effect is the `w` coefficient.
#[derive(Clone, Debug, PartialEq)]
pub struct NaiveFit {
    pub coef_w: f64,
}

impl NaiveFit {
    pub fn fit(ds: &Dataset) -> Result<NaiveFit, EstimatorError> {
        let (n, p) = (ds.len(), ds.num_features());
        if n <= p + 2 {
            return Err(EstimatorError::Input(format!("{n} rows are too few for {p} covariates")));
        }
        let ones = Matrix::ones((n, 1));
        let w = ds.w.clone().insert_axis(Axis(1));
        let design = concatenate(Axis(1), &[ones.view(), w.view(), ds.x.view()]).expect("rows match");
        let coef = ols(&design, &ds.y)?;
        Ok(NaiveFit { coef_w: coef[1] })
    }

    pub fn estimate(&self, eval: &Dataset) -> Result<EffectEstimate, EstimatorError> {
        EffectEstimate::constant("naive", self.coef_w, eval.len(), BTreeMap::new())
    }
}

pub fn naive_regression_ace(ds: &Dataset) -> Result<EffectEstimate, EstimatorError> {
    NaiveFit::fit(ds)?.estimate(ds)
}

fn two_stage_diagnostics(m: &TwoStageModel) -> BTreeMap<String, f64> {
    let mut d = BTreeMap::new();
    if let Some(&l) = m.diagnostics.stage1_loss.last() {
        d.insert("stage1_loss".into(), l);
    }
    if let Some(&l) = m.diagnostics.stage2_loss.last() {
        d.insert("stage2_loss".into(), l);
    }
    d.insert("stage2_improved".into(), m.diagnostics.stage2_improved as u8 as f64);
    d
}

/// Two-stage fit on the true instrument and conditioning set.
#[derive(Clone, Debug)]
pub struct OracleCivFit {
    pub model: TwoStageModel,
}

impl OracleCivFit {
    pub fn fit(ds: &Dataset, cfg: &TwoStageConfig) -> Result<OracleCivFit, EstimatorError> {
        let s = ds.features(&[ORACLE_INSTRUMENT])?;
        let z = ds.features(&ORACLE_CONDITIONING)?;
        Ok(OracleCivFit {
            model: fit_two_stage(&s, &z, &ds.w, &ds.y, cfg)?,
        })
    }

    pub fn estimate(&self, eval: &Dataset) -> Result<EffectEstimate, EstimatorError> {
        let z = eval.features(&ORACLE_CONDITIONING)?;
        EffectEstimate::from_cace("oracle_civ", cace(&self.model, &z)?, two_stage_diagnostics(&self.model))
    }
}

pub fn oracle_civ_estimate(ds: &Dataset, cfg: &TwoStageConfig) -> Result<EffectEstimate, EstimatorError> {
    OracleCivFit::fit(ds, cfg)?.estimate(ds)
}

/// Learned representations fed to the two-stage estimator.
#[derive(Clone, Debug)]
pub struct DvaeCivFit {
    pub params: ModelParams,
    pub history: TrainHistory,
    pub model: TwoStageModel,
}

impl DvaeCivFit {
    pub fn fit(ds: &Dataset, model_cfg: &ModelConfig, cfg: &TwoStageConfig) -> Result<DvaeCivFit, EstimatorError> {
        let (params, history) = train(ds, model_cfg)?;
        Self::from_params(params, history, ds, cfg)
    }

    /// Second stage only, for an already trained representation model.
    pub fn from_params(
        params: ModelParams,
        history: TrainHistory,
        ds: &Dataset,
        cfg: &TwoStageConfig,
    ) -> Result<DvaeCivFit, EstimatorError> {
        let (s, z) = extract_representations(&params, &ds.x)?;
        let model = fit_two_stage(&s, &z, &ds.w, &ds.y, cfg)?;
        Ok(DvaeCivFit { params, history, model })
    }

    pub fn estimate(&self, eval: &Dataset) -> Result<EffectEstimate, EstimatorError> {
        let (_, z) = extract_representations(&self.params, &eval.x)?;
        let mut diag = two_stage_diagnostics(&self.model);
        if let Some(l) = self.history.final_loss() {
            diag.insert("dvae_final_loss".into(), l);
        }
        EffectEstimate::from_cace("dvae_civ", cace(&self.model, &z)?, diag)
    }
}
