use nalgebra::{DMatrix, DVector};
use ndarray::Array1;

use super::EstimatorError;
use crate::diffnum::Matrix;

/// Least-squares coefficients of `y` on the columns of `design` (no implicit
/// intercept). Rank is judged from the singular values.
pub fn ols(design: &Matrix, y: &Array1<f64>) -> Result<Vec<f64>, EstimatorError> {
    let (n, k) = design.dim();
    if y.len() != n {
        return Err(EstimatorError::Input(format!("design has {n} rows, outcome {}", y.len())));
    }
    if n < k || k == 0 {
        return Err(EstimatorError::RankDeficient { rank: n.min(k), cols: k });
    }
    let a = DMatrix::from_fn(n, k, |i, j| design[[i, j]]);
    let b = DVector::from_iterator(n, y.iter().copied());
    let svd = a.svd(true, true);
    let max_sv = svd.singular_values.max();
    let tol = max_sv * (n.max(k) as f64) * 1e-12;
    let rank = svd.rank(tol);
    if rank < k {
        return Err(EstimatorError::RankDeficient { rank, cols: k });
    }
    let coef = svd
        .solve(&b, tol)
        .map_err(|e| EstimatorError::Input(e.to_string()))?;
    Ok(coef.iter().copied().collect())
}
