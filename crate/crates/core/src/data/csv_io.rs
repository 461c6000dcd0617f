//! CSV reading and writing.
//!
//! Column roles come from a small TOML sidecar (`column = "role"`). The
//! generator additionally writes potential outcomes (`__y0`, `__y1`) and the
//! latent columns (`u_*`); the loader picks those up as diagnostics when they
//! are present and never treats them as features.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use ndarray::{Array1, Array2};
use serde::{Deserialize, Serialize};

use super::{DataError, Dataset, DatasetMeta, Hidden};

pub const Y0_COLUMN: &str = "__y0";
pub const Y1_COLUMN: &str = "__y1";
pub const HIDDEN_PREFIX: &str = "u_";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    Feature,
    Treatment,
    Outcome,
    Ignore,
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Schema {
    pub roles: BTreeMap<String, Role>,
}

impl Schema {
    /// Roles of a dataset's own columns, as written by [`write_csv`].
    pub fn for_dataset(ds: &Dataset) -> Schema {
        let mut roles: BTreeMap<String, Role> =
            ds.feature_names.iter().map(|n| (n.clone(), Role::Feature)).collect();
        roles.insert("W".into(), Role::Treatment);
        roles.insert("Y".into(), Role::Outcome);
        Schema { roles }
    }

    fn single(&self, role: Role) -> Result<&str, DataError> {
        let hits: Vec<&str> = self
            .roles
            .iter()
            .filter(|(_, &r)| r == role)
            .map(|(n, _)| n.as_str())
            .collect();
        match hits.as_slice() {
            [one] => Ok(one),
            [] => Err(DataError::Schema(format!("no column has role {role:?}"))),
            many => Err(DataError::Schema(format!("several columns have role {role:?}: {many:?}"))),
        }
    }
}

fn is_reserved(name: &str) -> bool {
    name == Y0_COLUMN || name == Y1_COLUMN || name.starts_with(HIDDEN_PREFIX)
}

fn open_error(path: &Path, e: impl std::fmt::Display) -> DataError {
    DataError::Open {
        path: path.display().to_string(),
        message: e.to_string(),
    }
}

pub fn read_schema(path: &Path) -> Result<Schema, DataError> {
    let text = fs::read_to_string(path).map_err(|e| open_error(path, e))?;
    toml::from_str(&text).map_err(|e| DataError::Schema(e.to_string()))
}

pub fn write_schema(schema: &Schema, path: &Path) -> Result<(), DataError> {
    let text = toml::to_string(schema).map_err(|e| DataError::Schema(e.to_string()))?;
    fs::write(path, text)?;
    Ok(())
}

/// Writes features, `W`, `Y`, then the diagnostic columns. Floats use the
/// shortest representation that parses back to the same bits.
pub fn write_csv(ds: &Dataset, path: &Path) -> Result<(), DataError> {
    if ds.feature_names.iter().any(|n| n == "W" || n == "Y" || is_reserved(n)) {
        return Err(DataError::Schema("feature name clashes with a reserved column".into()));
    }
    let mut out = csv::Writer::from_path(path)?;
    let mut header: Vec<String> = ds.feature_names.clone();
    header.extend(["W".to_string(), "Y".to_string()]);
    if ds.has_potential_outcomes() {
        header.extend([Y0_COLUMN.to_string(), Y1_COLUMN.to_string()]);
    }
    if let Some(h) = &ds.hidden {
        header.extend(h.names.iter().map(|n| format!("{HIDDEN_PREFIX}{n}")));
    }
    out.write_record(&header)?;

    let mut record: Vec<String> = Vec::with_capacity(header.len());
    for i in 0..ds.len() {
        record.clear();
        record.extend(ds.x.row(i).iter().map(|v| v.to_string()));
        record.push(if ds.w[i] == 1.0 { "1".into() } else { "0".into() });
        record.push(ds.y[i].to_string());
        if let (Some(y0), Some(y1)) = (&ds.y0, &ds.y1) {
            record.push(y0[i].to_string());
            record.push(y1[i].to_string());
        }
        if let Some(h) = &ds.hidden {
            record.extend(h.values.row(i).iter().map(|v| v.to_string()));
        }
        out.write_record(&record)?;
    }
    out.flush()?;
    Ok(())
}

fn parse_cell(cell: &str, row: usize, column: &str) -> Result<f64, DataError> {
    let err = || DataError::Parse {
        row,
        column: column.to_string(),
        cell: cell.to_string(),
    };
    let v: f64 = cell.trim().parse().map_err(|_| err())?;
    if v.is_finite() {
        Ok(v)
    } else {
        Err(err())
    }
}

/// Loads a CSV according to `schema`. Rows are numbered from 1 (the first
/// data line) in error messages. Feature order follows the file header.
pub fn load_csv(path: &Path, schema: &Schema) -> Result<Dataset, DataError> {
    let treatment = schema.single(Role::Treatment)?;
    let outcome = schema.single(Role::Outcome)?;
    if let Some(bad) = schema
        .roles
        .iter()
        .find(|(n, &r)| r == Role::Feature && is_reserved(n))
    {
        return Err(DataError::Schema(format!("reserved column `{}` cannot be a feature", bad.0)));
    }

    let mut reader = csv::ReaderBuilder::new().flexible(true).from_path(path).map_err(|e| open_error(path, e))?;
    let header: Vec<String> = reader.headers()?.iter().map(|s| s.trim().to_string()).collect();
    let find = |name: &str| header.iter().position(|h| h == name);
    for name in schema.roles.keys() {
        if find(name).is_none() {
            return Err(DataError::MissingColumn(name.clone()));
        }
    }

    let feature_cols: Vec<usize> = header
        .iter()
        .enumerate()
        .filter(|(_, h)| schema.roles.get(h.as_str()) == Some(&Role::Feature))
        .map(|(j, _)| j)
        .collect();
    let w_col = find(treatment).expect("checked above");
    let y_col = find(outcome).expect("checked above");
    let po_cols = match (find(Y0_COLUMN), find(Y1_COLUMN)) {
        (Some(a), Some(b)) => Some((a, b)),
        _ => None,
    };
    let hidden_cols: Vec<usize> = header
        .iter()
        .enumerate()
        .filter(|(_, h)| h.starts_with(HIDDEN_PREFIX))
        .map(|(j, _)| j)
        .collect();

    let mut xs = Vec::new();
    let (mut w, mut y, mut y0, mut y1, mut hs) = (vec![], vec![], vec![], vec![], vec![]);
    for (r, record) in reader.records().enumerate() {
        let record = record?;
        let row = r + 1;
        if record.len() != header.len() {
            return Err(DataError::Ragged {
                row,
                expected: header.len(),
                found: record.len(),
            });
        }
        let cell = |j: usize| parse_cell(&record[j], row, &header[j]);
        for &j in &feature_cols {
            xs.push(cell(j)?);
        }
        let wv = cell(w_col)?;
        if wv != 0.0 && wv != 1.0 {
            return Err(DataError::NonBinaryTreatment { row, value: wv });
        }
        w.push(wv);
        y.push(cell(y_col)?);
        if let Some((a, b)) = po_cols {
            y0.push(cell(a)?);
            y1.push(cell(b)?);
        }
        for &j in &hidden_cols {
            hs.push(cell(j)?);
        }
    }

    let n = w.len();
    let to_shape = |v: Vec<f64>, cols: usize| {
        Array2::from_shape_vec((n, cols), v).map_err(|e| DataError::Invariant(e.to_string()))
    };
    let ds = Dataset {
        feature_names: feature_cols.iter().map(|&j| header[j].clone()).collect(),
        x: to_shape(xs, feature_cols.len())?,
        w: Array1::from(w),
        y: Array1::from(y),
        y0: po_cols.map(|_| Array1::from(y0)),
        y1: po_cols.map(|_| Array1::from(y1)),
        hidden: (!hidden_cols.is_empty())
            .then(|| -> Result<Hidden, DataError> {
                Ok(Hidden {
                    names: hidden_cols
                        .iter()
                        .map(|&j| header[j][HIDDEN_PREFIX.len()..].to_string())
                        .collect(),
                    values: to_shape(hs, hidden_cols.len())?,
                })
            })
            .transpose()?,
        row_ids: (0..n).collect(),
        meta: DatasetMeta {
            seed: None,
            generator: format!("csv:{}", path.display()),
            true_ace: None,
        },
    };
    ds.validate()?;
    Ok(ds)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{generate_synthetic, SynthConfig};

    fn schema(pairs: &[(&str, Role)]) -> Schema {
        Schema {
            roles: pairs.iter().map(|(n, r)| (n.to_string(), *r)).collect(),
        }
    }

    fn basic() -> Schema {
        schema(&[("a", Role::Feature), ("b", Role::Feature), ("t", Role::Treatment), ("y", Role::Outcome)])
    }

    #[test]
    fn hand_written_three_rows() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("d.csv");
        fs::write(&p, "b,a,t,y,note\n1,2,0,3.5,x\n4,5,1,6,y\n7,8,0,-9e-1,z\n").unwrap();
        let s = schema(&[
            ("a", Role::Feature),
            ("b", Role::Feature),
            ("t", Role::Treatment),
            ("y", Role::Outcome),
            ("note", Role::Ignore),
        ]);
        let ds = load_csv(&p, &s).unwrap();
        assert_eq!(ds.len(), 3);
        assert_eq!(ds.feature_names, vec!["b", "a"]);
        assert_eq!(ds.x, ndarray::array![[1.0, 2.0], [4.0, 5.0], [7.0, 8.0]]);
        assert_eq!(ds.w.to_vec(), vec![0.0, 1.0, 0.0]);
        assert_eq!(ds.y.to_vec(), vec![3.5, 6.0, -0.9]);
        assert!(ds.y0.is_none() && ds.hidden.is_none());
    }

    #[test]
    fn non_binary_treatment_reports_row() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("d.csv");
        fs::write(&p, "a,b,t,y\n1,2,0,3\n1,2,2,3\n").unwrap();
        match load_csv(&p, &basic()) {
            Err(DataError::NonBinaryTreatment { row: 2, value }) => assert_eq!(value, 2.0),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn unparseable_cell_reports_row_and_column() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("d.csv");
        fs::write(&p, "a,b,t,y\n1,2,0,3\n1,oops,1,3\n").unwrap();
        match load_csv(&p, &basic()) {
            Err(DataError::Parse { row, column, cell }) => {
                assert_eq!((row, column.as_str(), cell.as_str()), (2, "b", "oops"));
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn missing_column() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("d.csv");
        fs::write(&p, "a,t,y\n1,0,3\n").unwrap();
        assert!(matches!(load_csv(&p, &basic()), Err(DataError::MissingColumn(c)) if c == "b"));
    }

    #[test]
    fn schema_needs_one_treatment() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("d.csv");
        fs::write(&p, "a,y\n1,3\n").unwrap();
        let s = schema(&[("a", Role::Feature), ("y", Role::Outcome)]);
        assert!(matches!(load_csv(&p, &s), Err(DataError::Schema(_))));
    }

    #[test]
    fn synthetic_round_trip_is_exact() {
        let dir = tempfile::tempdir().unwrap();
        let (p, sp) = (dir.path().join("s.csv"), dir.path().join("s.toml"));
        let ds = generate_synthetic(&SynthConfig { n: 200, seed: 9 }).unwrap();
        write_csv(&ds, &p).unwrap();
        write_schema(&Schema::for_dataset(&ds), &sp).unwrap();
        let back = load_csv(&p, &read_schema(&sp).unwrap()).unwrap();
        assert_eq!(back.feature_names, ds.feature_names);
        assert_eq!(back.x, ds.x);
        assert_eq!(back.w, ds.w);
        assert_eq!(back.y, ds.y);
        assert_eq!(back.y0, ds.y0);
        assert_eq!(back.y1, ds.y1);
        assert_eq!(back.hidden, ds.hidden);
    }

    #[test]
    fn schema_toml_shape() {
        let s: Schema = toml::from_str("S = \"feature\"\nW = \"treatment\"\nY = \"outcome\"\nid = \"ignore\"\n").unwrap();
        assert_eq!(s.roles["id"], Role::Ignore);
        assert!(toml::from_str::<Schema>("S = \"covariate\"").is_err());
    }
}
