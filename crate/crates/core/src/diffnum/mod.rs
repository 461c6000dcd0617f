//! Minimal reverse-mode differentiation: tape, dense layers, optimizer, and
//! the Gaussian/Bernoulli terms needed by variational objectives.

mod adam;
mod dist;
mod mlp;
mod tape;

pub use adam::{AdamConfig, AdamState};
pub use dist::{
    bernoulli_logpmf, gaussian_logpdf, kl_diag_gaussians, kl_std_normal, reparameterize, DiagGaussian,
    GaussianVars, LOG_SIGMA_MAX, LOG_SIGMA_MIN, PROB_FLOOR,
};
pub use mlp::{mlp_forward, Activation, BoundMlp, Dense, Mlp, LEAKY_SLOPE};
pub use tape::{sigmoid, Matrix, Tape, Var};

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum NumError {
    #[error("shape mismatch in {op}: expected {expected:?}, got {actual:?}")]
    ShapeMismatch {
        op: &'static str,
        expected: (usize, usize),
        actual: (usize, usize),
    },
    #[error("backward requires a scalar loss, got shape {shape:?}")]
    NonScalarBackward { shape: (usize, usize) },
    #[error("non-finite value in {0}")]
    NonFinite(String),
    #[error("domain error: {0}")]
    Domain(String),
    #[error("empty input to {0}")]
    Empty(&'static str),
    #[error("expected {expected} parameter tensors, got {actual}")]
    ParamCount { expected: usize, actual: usize },
}
