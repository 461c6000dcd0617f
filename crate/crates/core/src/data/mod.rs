//! Datasets: synthetic generation with known potential outcomes, CSV
//! ingestion for user data, train/test splitting and standardization.

mod csv_io;
mod split;
mod standardize;
mod synth;

pub use csv_io::{load_csv, read_schema, write_csv, write_schema, Role, Schema, HIDDEN_PREFIX, Y0_COLUMN, Y1_COLUMN};
pub use split::split;
pub use standardize::Standardizer;
pub use synth::{generate_synthetic, SynthConfig, SYNTHETIC_ACE, SYNTHETIC_FEATURES};

use ndarray::{Array1, Array2, Axis};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum DataError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("missing column `{0}`")]
    MissingColumn(String),
    #[error("row {row}: treatment value {value} is not binary")]
    NonBinaryTreatment { row: usize, value: f64 },
    #[error("row {row}, column `{column}`: cannot parse `{cell}`")]
    Parse { row: usize, column: String, cell: String },
    #[error("row {row}: expected {expected} cells, found {found}")]
    Ragged { row: usize, expected: usize, found: usize },
    #[error("schema: {0}")]
    Schema(String),
    #[error("dataset invariant violated: {0}")]
    Invariant(String),
    #[error("degenerate split: {0}")]
    DegenerateSplit(String),
    #[error("{path}: {message}")]
    Open { path: String, message: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct DatasetMeta {
    pub seed: Option<u64>,
    pub generator: String,
    /// Population average effect when it is known by construction.
    pub true_ace: Option<f64>,
}

/// Latent columns kept for diagnostics only; never part of `x`.
#[derive(Clone, Debug, PartialEq)]
pub struct Hidden {
    pub names: Vec<String>,
    pub values: Array2<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    pub feature_names: Vec<String>,
    pub x: Array2<f64>,
    pub w: Array1<f64>,
    pub y: Array1<f64>,
    pub y0: Option<Array1<f64>>,
    pub y1: Option<Array1<f64>>,
    pub hidden: Option<Hidden>,
    /// Original row index of every sample, preserved through splits.
    pub row_ids: Vec<usize>,
    pub meta: DatasetMeta,
}

impl Dataset {
    /// Checks the dataset invariants: binary finite treatment, finite
    /// columns, consistent lengths and `y` equal to the selected potential
    /// outcome when both are present.
    pub fn validate(&self) -> Result<(), DataError> {
        let n = self.x.nrows();
        let bad = |m: String| Err(DataError::Invariant(m));
        if self.feature_names.len() != self.x.ncols() {
            return bad(format!(
                "{} feature names for {} columns",
                self.feature_names.len(),
                self.x.ncols()
            ));
        }
        if self.w.len() != n || self.y.len() != n || self.row_ids.len() != n {
            return bad("column lengths differ".into());
        }
        if let Some((i, &v)) = self.w.iter().enumerate().find(|(_, &v)| v != 0.0 && v != 1.0) {
            return Err(DataError::NonBinaryTreatment { row: i + 1, value: v });
        }
        if self.x.iter().chain(self.y.iter()).any(|v| !v.is_finite()) {
            return bad("non-finite covariate or outcome".into());
        }
        match (&self.y0, &self.y1) {
            (Some(y0), Some(y1)) => {
                if y0.len() != n || y1.len() != n {
                    return bad("potential outcome length".into());
                }
                for i in 0..n {
                    let pick = if self.w[i] == 1.0 { y1[i] } else { y0[i] };
                    if pick != self.y[i] {
                        return bad(format!("row {}: observed outcome differs from potential outcome", i + 1));
                    }
                }
            }
            (None, None) => {}
            _ => return bad("only one potential outcome column present".into()),
        }
        if let Some(h) = &self.hidden {
            if h.values.nrows() != n || h.names.len() != h.values.ncols() {
                return bad("hidden column shape".into());
            }
            if h.names.iter().any(|name| self.feature_names.contains(name)) {
                return bad("hidden column listed as a feature".into());
            }
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.x.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.x.nrows() == 0
    }

    pub fn num_features(&self) -> usize {
        self.x.ncols()
    }

    pub fn has_potential_outcomes(&self) -> bool {
        self.y0.is_some() && self.y1.is_some()
    }

    pub fn feature_index(&self, name: &str) -> Result<usize, DataError> {
        self.feature_names
            .iter()
            .position(|n| n == name)
            .ok_or_else(|| DataError::MissingColumn(name.to_string()))
    }

    /// Feature columns by name, in the requested order.
    pub fn features(&self, names: &[&str]) -> Result<Array2<f64>, DataError> {
        let idx: Vec<usize> = names.iter().map(|n| self.feature_index(n)).collect::<Result<_, _>>()?;
        Ok(self.x.select(Axis(1), &idx))
    }

    /// Individual effects `y1 - y0`, when known.
    pub fn true_effects(&self) -> Option<Array1<f64>> {
        Some(self.y1.as_ref()? - self.y0.as_ref()?)
    }

    /// Sub-dataset made of the given positional rows.
    pub fn select_rows(&self, rows: &[usize]) -> Dataset {
        Dataset {
            feature_names: self.feature_names.clone(),
            x: self.x.select(Axis(0), rows),
            w: self.w.select(Axis(0), rows),
            y: self.y.select(Axis(0), rows),
            y0: self.y0.as_ref().map(|v| v.select(Axis(0), rows)),
            y1: self.y1.as_ref().map(|v| v.select(Axis(0), rows)),
            hidden: self.hidden.as_ref().map(|h| Hidden {
                names: h.names.clone(),
                values: h.values.select(Axis(0), rows),
            }),
            row_ids: rows.iter().map(|&r| self.row_ids[r]).collect(),
            meta: self.meta.clone(),
        }
    }
}
