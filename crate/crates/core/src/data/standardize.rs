use ndarray::{Array1, Array2, Axis};
use serde::{Deserialize, Serialize};

use super::DataError;

/// Per-column z-score. Constant columns get unit scale so they map to zero
/// instead of NaN.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Standardizer {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl Standardizer {
    pub fn fit(x: &Array2<f64>) -> Result<Self, DataError> {
        if x.nrows() == 0 {
            return Err(DataError::Config("cannot standardize an empty matrix".into()));
        }
        let mean = x.mean_axis(Axis(0)).expect("non-empty").to_vec();
        let std = x
            .std_axis(Axis(0), 0.0)
            .iter()
            .map(|&s| if s > 1e-12 { s } else { 1.0 })
            .collect();
        Ok(Standardizer { mean, std })
    }

    pub fn fit_vector(v: &Array1<f64>) -> Result<Self, DataError> {
        Self::fit(&v.view().insert_axis(Axis(1)).to_owned())
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    fn check(&self, cols: usize) -> Result<(), DataError> {
        if cols != self.dim() {
            return Err(DataError::Invariant(format!(
                "standardizer fitted on {} columns, applied to {cols}",
                self.dim()
            )));
        }
        Ok(())
    }

    pub fn transform(&self, x: &Array2<f64>) -> Result<Array2<f64>, DataError> {
        self.check(x.ncols())?;
        let mut out = x.clone();
        for (j, mut col) in out.axis_iter_mut(Axis(1)).enumerate() {
            col.mapv_inplace(|v| (v - self.mean[j]) / self.std[j]);
        }
        Ok(out)
    }

    pub fn inverse(&self, z: &Array2<f64>) -> Result<Array2<f64>, DataError> {
        self.check(z.ncols())?;
        let mut out = z.clone();
        for (j, mut col) in out.axis_iter_mut(Axis(1)).enumerate() {
            col.mapv_inplace(|v| v * self.std[j] + self.mean[j]);
        }
        Ok(out)
    }

    /// Single-column helpers for outcome scaling.
    pub fn transform_vector(&self, v: &Array1<f64>) -> Result<Array1<f64>, DataError> {
        self.check(1)?;
        Ok(v.mapv(|a| (a - self.mean[0]) / self.std[0]))
    }

    pub fn inverse_vector(&self, v: &Array1<f64>) -> Result<Array1<f64>, DataError> {
        self.check(1)?;
        Ok(v.mapv(|a| a * self.std[0] + self.mean[0]))
    }
}
