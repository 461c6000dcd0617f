//! Conditional Wald ratio for a binary instrument:
//! `[E(Y|S=1,Z) - E(Y|S=0,Z)] / [E(W|S=1,Z) - E(W|S=0,Z)]`.

use std::collections::BTreeMap;

use ndarray::{concatenate, Array1, Axis};
use serde::{Deserialize, Serialize};

use super::{ols, EffectEstimate, EstimatorError};
use crate::data::Dataset;
use crate::diffnum::Matrix;

/// Below this first-stage difference the ratio is refused.
pub const WEAK_INSTRUMENT_THRESHOLD: f64 = 0.05;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum WaldAdjustment {
    /// Exact strata on the distinct values of `Z`.
    Strata,
    /// Linear conditional means in `Z` with a common instrument shift.
    Regression,
}

fn weak(stratum: String, denominator: f64) -> EstimatorError {
    EstimatorError::WeakInstrument {
        stratum,
        denominator,
        threshold: WEAK_INSTRUMENT_THRESHOLD,
    }
}

fn mean(v: impl Iterator<Item = f64>) -> Option<f64> {
    let (mut s, mut k) = (0.0, 0usize);
    for x in v {
        s += x;
        k += 1;
    }
    (k > 0).then(|| s / k as f64)
}

pub fn wald_conditional(
    ds: &Dataset,
    s_col: &str,
    z_cols: &[&str],
    adjustment: WaldAdjustment,
) -> Result<EffectEstimate, EstimatorError> {
    let s = ds.features(&[s_col])?.column(0).to_owned();
    if s.iter().any(|&v| v != 0.0 && v != 1.0) {
        return Err(EstimatorError::Input(format!("instrument `{s_col}` is not binary")));
    }
    if z_cols.contains(&s_col) {
        return Err(EstimatorError::Input("instrument listed in the conditioning set".into()));
    }
    let z = ds.features(z_cols)?;
    let n = ds.len();
    match adjustment {
        WaldAdjustment::Strata => strata(ds, &s, &z, z_cols, n),
        WaldAdjustment::Regression => regression(ds, &s, &z, n),
    }
}

fn strata(ds: &Dataset, s: &Array1<f64>, z: &Matrix, z_cols: &[&str], n: usize) -> Result<EffectEstimate, EstimatorError> {
    let mut groups: BTreeMap<Vec<u64>, Vec<usize>> = BTreeMap::new();
    for i in 0..n {
        let key = z.row(i).iter().map(|v| v.to_bits()).collect();
        groups.entry(key).or_default().push(i);
    }
    let mut cace = Array1::zeros(n);
    for rows in groups.values() {
        let label = if z_cols.is_empty() {
            "all rows".to_string()
        } else {
            z_cols
                .iter()
                .zip(z.row(rows[0]).iter())
                .map(|(c, v)| format!("{c}={v}"))
                .collect::<Vec<_>>()
                .join(", ")
        };
        let arm = |a: f64, col: &Array1<f64>| mean(rows.iter().filter(|&&i| s[i] == a).map(|&i| col[i]));
        let (Some(w1), Some(w0)) = (arm(1.0, &ds.w), arm(0.0, &ds.w)) else {
            return Err(weak(label, 0.0));
        };
        let den = w1 - w0;
        if den.abs() < WEAK_INSTRUMENT_THRESHOLD {
            return Err(weak(label, den));
        }
        let num = arm(1.0, &ds.y).expect("arm non-empty") - arm(0.0, &ds.y).expect("arm non-empty");
        for &i in rows {
            cace[i] = num / den;
        }
    }
    let diag = BTreeMap::from([("strata".to_string(), groups.len() as f64)]);
    EffectEstimate::from_cace("wald", cace, diag)
}

fn regression(ds: &Dataset, s: &Array1<f64>, z: &Matrix, n: usize) -> Result<EffectEstimate, EstimatorError> {
    let ones = Matrix::ones((n, 1));
    let scol = s.clone().insert_axis(Axis(1));
    let design = concatenate(Axis(1), &[ones.view(), scol.view(), z.view()]).expect("rows match");
    let den = ols(&design, &ds.w)?[1];
    if den.abs() < WEAK_INSTRUMENT_THRESHOLD {
        return Err(weak("regression-adjusted (all rows)".into(), den));
    }
    let num = ols(&design, &ds.y)?[1];
    let diag = BTreeMap::from([
        ("first_stage".to_string(), den),
        ("reduced_form".to_string(), num),
    ]);
    EffectEstimate::constant("wald", num / den, n, diag)
}
