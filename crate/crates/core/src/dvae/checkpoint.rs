//! Binary checkpoint format (all integers and floats little-endian):
//!
//! ```text
//! 8 bytes   magic "CIVCKPT1"
//! u64       length L of the JSON header
//! L bytes   JSON header {"config", "x_dim", "has_y_scaler", "num_values"}
//! f64 * K   every weight matrix (row-major) then bias, network by network in
//!           ModelParams::params order; then x mean, x std, and y mean, y std
//!           when an outcome scaler is present
//! ```
//!
//! The architecture is rebuilt from the config, so a header whose config does
//! not match the stored value count is rejected. Floats are stored as raw
//! bits, so a load returns exactly what was saved.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{init_model, DvaeError, ModelConfig, ModelParams};
use crate::data::Standardizer;

pub const CHECKPOINT_MAGIC: &[u8; 8] = b"CIVCKPT1";
const MAX_HEADER: u64 = 1 << 20;

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Header {
    config: ModelConfig,
    x_dim: usize,
    has_y_scaler: bool,
    num_values: usize,
}

fn scaler_values(params: &ModelParams) -> Vec<f64> {
    let mut v = Vec::new();
    v.extend(&params.x_scaler.mean);
    v.extend(&params.x_scaler.std);
    if let Some(y) = &params.y_scaler {
        v.extend(&y.mean);
        v.extend(&y.std);
    }
    v
}

pub fn write_checkpoint<W: Write>(params: &ModelParams, mut out: W) -> Result<(), DvaeError> {
    let scalers = scaler_values(params);
    let header = Header {
        config: params.config.clone(),
        x_dim: params.x_dim,
        has_y_scaler: params.y_scaler.is_some(),
        num_values: params.num_params() + scalers.len(),
    };
    let json = serde_json::to_vec(&header).map_err(|e| DvaeError::Checkpoint(e.to_string()))?;
    out.write_all(CHECKPOINT_MAGIC)?;
    out.write_all(&(json.len() as u64).to_le_bytes())?;
    out.write_all(&json)?;
    for m in params.params() {
        for v in m.iter() {
            out.write_all(&v.to_le_bytes())?;
        }
    }
    for v in scalers {
        out.write_all(&v.to_le_bytes())?;
    }
    out.flush()?;
    Ok(())
}

pub fn read_checkpoint<R: Read>(mut input: R) -> Result<ModelParams, DvaeError> {
    let bad = |m: &str| DvaeError::Checkpoint(m.to_string());
    let mut magic = [0u8; 8];
    input.read_exact(&mut magic).map_err(|_| bad("file too short"))?;
    if &magic != CHECKPOINT_MAGIC {
        return Err(bad("not a checkpoint (bad magic)"));
    }
    let mut len = [0u8; 8];
    input.read_exact(&mut len).map_err(|_| bad("truncated header length"))?;
    let len = u64::from_le_bytes(len);
    if len > MAX_HEADER {
        return Err(bad("header length out of range"));
    }
    let mut json = vec![0u8; len as usize];
    input.read_exact(&mut json).map_err(|_| bad("truncated header"))?;
    let header: Header = serde_json::from_slice(&json).map_err(|e| DvaeError::Checkpoint(e.to_string()))?;

    let mut params = init_model(&header.config, header.x_dim)?;
    let p = header.x_dim;
    let expected = params.num_params() + 2 * p + if header.has_y_scaler { 2 } else { 0 };
    if expected != header.num_values {
        return Err(DvaeError::Checkpoint(format!(
            "header declares {} values, architecture needs {expected}",
            header.num_values
        )));
    }

    let mut buf = [0u8; 8];
    let mut next = || -> Result<f64, DvaeError> {
        input.read_exact(&mut buf).map_err(|_| bad("truncated weights"))?;
        let v = f64::from_le_bytes(buf);
        if v.is_finite() {
            Ok(v)
        } else {
            Err(bad("non-finite stored value"))
        }
    };
    for m in params.params_mut() {
        for v in m.iter_mut() {
            *v = next()?;
        }
    }
    let mut take = |k: usize| (0..k).map(|_| next()).collect::<Result<Vec<f64>, _>>();
    params.x_scaler = Standardizer {
        mean: take(p)?,
        std: take(p)?,
    };
    if header.has_y_scaler {
        params.y_scaler = Some(Standardizer {
            mean: take(1)?,
            std: take(1)?,
        });
    }
    let mut rest = Vec::new();
    input.read_to_end(&mut rest)?;
    if !rest.is_empty() {
        return Err(bad("trailing bytes after weights"));
    }
    Ok(params)
}

pub fn save_checkpoint(params: &ModelParams, path: &Path) -> Result<(), DvaeError> {
    write_checkpoint(params, BufWriter::new(File::create(path)?))
}

pub fn load_checkpoint(path: &Path) -> Result<ModelParams, DvaeError> {
    read_checkpoint(BufReader::new(File::open(path)?))
}
