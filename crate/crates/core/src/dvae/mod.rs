//! Disentangled VAE for learning a conditional instrument `S` and its
//! conditioning set `{C, F}` from covariates.
//!
//! Three encoders give `q(S|X)`, `q(C|X)`, `q(F|X)`; a conditional prior
//! network gives `p(C|X)`; the decoder reconstructs `X` from `(S, C, F)`.
//! A treatment head on `(S, C)` and an outcome head on `(W, C, F)` act as
//! auxiliary predictors that push treatment and outcome information into the
//! right latents.
//!
//! Model-space functions ([`encode`], [`elbo`], [`loss`]) take standardized
//! covariates. [`train`] and [`extract_representations`] take raw covariates
//! and apply the standardizer stored in [`ModelParams`].

mod checkpoint;
mod objective;
mod train;

pub use checkpoint::{load_checkpoint, read_checkpoint, save_checkpoint, write_checkpoint, CHECKPOINT_MAGIC};
pub use objective::{
    draw_noise, elbo, encode, loss, objective_with_grads, objective_with_noise, Batch, ElboTerms, LatentPosteriors,
    LossTerms, Noise,
};
pub use train::{extract_representations, train, EpochRecord, TrainHistory};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::data::{DataError, Standardizer};
use crate::diffnum::{Matrix, Mlp, NumError};

#[derive(Debug, Error)]
pub enum DvaeError {
    #[error("invalid model configuration: {0}")]
    Config(String),
    #[error("covariate dimension mismatch: model expects {expected}, got {actual}")]
    Dim { expected: usize, actual: usize },
    #[error("non-finite loss at epoch {epoch}, batch {batch}")]
    NonFiniteLoss { epoch: usize, batch: usize },
    #[error("checkpoint: {0}")]
    Checkpoint(String),
    #[error(transparent)]
    Num(#[from] NumError),
    #[error(transparent)]
    Data(#[from] DataError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OutcomeKind {
    #[default]
    Continuous,
    Binary,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelConfig {
    pub d_s: usize,
    pub d_c: usize,
    pub d_f: usize,
    pub hidden: Vec<usize>,
    pub alpha: f64,
    pub beta: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub seed: u64,
    pub outcome: OutcomeKind,
    /// Reparameterized draws per sample per step.
    pub mc_samples: usize,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            d_s: 1,
            d_c: 5,
            d_f: 5,
            hidden: vec![64, 64],
            alpha: 1.0,
            beta: 1.0,
            epochs: 200,
            batch_size: 256,
            learning_rate: 1e-3,
            seed: 0,
            outcome: OutcomeKind::Continuous,
            mc_samples: 1,
        }
    }
}

impl ModelConfig {
    pub fn validate(&self) -> Result<(), DvaeError> {
        let bad = |m: &str| Err(DvaeError::Config(m.to_string()));
        if self.d_s == 0 || self.d_c == 0 || self.d_f == 0 {
            return bad("latent dimensions must be at least 1");
        }
        if self.hidden.contains(&0) {
            return bad("hidden layer widths must be positive");
        }
        if !(self.alpha >= 0.0 && self.beta >= 0.0) || !self.alpha.is_finite() || !self.beta.is_finite() {
            return bad("alpha and beta must be finite and non-negative");
        }
        if self.batch_size == 0 || self.mc_samples == 0 {
            return bad("batch size and sample count must be at least 1");
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return bad("learning rate must be positive");
        }
        Ok(())
    }
}

/// Outcome networks: per-arm mean and log-scale nets on `(C, F)` for a
/// continuous outcome, or one logit net on `(W, C, F)` for a binary one.
#[derive(Clone, Debug, PartialEq)]
pub enum OutcomeHead {
    Continuous { mean1: Mlp, mean0: Mlp, scale1: Mlp, scale0: Mlp },
    Binary { logit: Mlp },
}

#[derive(Clone, Debug, PartialEq)]
pub struct ModelParams {
    pub config: ModelConfig,
    pub x_dim: usize,
    pub enc_s: Mlp,
    pub enc_c: Mlp,
    pub enc_f: Mlp,
    pub prior_c: Mlp,
    pub dec_x: Mlp,
    pub head_w: Mlp,
    pub head_y: OutcomeHead,
    /// Covariate scaling fitted on the training data.
    pub x_scaler: Standardizer,
    /// Outcome scaling for continuous outcomes.
    pub y_scaler: Option<Standardizer>,
}

impl ModelParams {
    /// Every network, in a fixed order shared by optimizers and checkpoints.
    pub fn nets(&self) -> Vec<&Mlp> {
        let mut v = vec![&self.enc_s, &self.enc_c, &self.enc_f, &self.prior_c, &self.dec_x, &self.head_w];
        match &self.head_y {
            OutcomeHead::Continuous { mean1, mean0, scale1, scale0 } => v.extend([mean1, mean0, scale1, scale0]),
            OutcomeHead::Binary { logit } => v.push(logit),
        }
        v
    }

    pub fn nets_mut(&mut self) -> Vec<&mut Mlp> {
        let mut v = vec![
            &mut self.enc_s,
            &mut self.enc_c,
            &mut self.enc_f,
            &mut self.prior_c,
            &mut self.dec_x,
            &mut self.head_w,
        ];
        match &mut self.head_y {
            OutcomeHead::Continuous { mean1, mean0, scale1, scale0 } => v.extend([mean1, mean0, scale1, scale0]),
            OutcomeHead::Binary { logit } => v.push(logit),
        }
        v
    }

    pub fn params(&self) -> Vec<&Matrix> {
        self.nets().into_iter().flat_map(|n| n.params()).collect()
    }

    pub fn params_mut(&mut self) -> Vec<&mut Matrix> {
        self.nets_mut().into_iter().flat_map(|n| n.params_mut()).collect()
    }

    pub fn num_params(&self) -> usize {
        self.nets().iter().map(|n| n.num_params()).sum()
    }

    pub fn is_finite(&self) -> bool {
        self.params().iter().all(|m| m.iter().all(|v| v.is_finite()))
    }

    pub fn check_x(&self, cols: usize) -> Result<(), DvaeError> {
        if cols != self.x_dim {
            return Err(DvaeError::Dim {
                expected: self.x_dim,
                actual: cols,
            });
        }
        Ok(())
    }
}

/// Seed-deterministic initialization for `x_dim` covariates. The scalers
/// start as the identity and are replaced by [`train`].
pub fn init_model(cfg: &ModelConfig, x_dim: usize) -> Result<ModelParams, DvaeError> {
    cfg.validate()?;
    if x_dim == 0 {
        return Err(DvaeError::Config("at least one covariate is required".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let h = &cfg.hidden;
    let (ds, dc, df) = (cfg.d_s, cfg.d_c, cfg.d_f);
    let mut net = |i: usize, o: usize| Mlp::new(i, h, o, &mut rng);
    let enc_s = net(x_dim, 2 * ds);
    let enc_c = net(x_dim, 2 * dc);
    let enc_f = net(x_dim, 2 * df);
    let prior_c = net(x_dim, 2 * dc);
    let dec_x = net(ds + dc + df, 2 * x_dim);
    let head_w = net(ds + dc, 1);
    let head_y = match cfg.outcome {
        OutcomeKind::Continuous => OutcomeHead::Continuous {
            mean1: net(dc + df, 1),
            mean0: net(dc + df, 1),
            scale1: net(dc + df, 1),
            scale0: net(dc + df, 1),
        },
        OutcomeKind::Binary => OutcomeHead::Binary { logit: net(1 + dc + df, 1) },
    };
    Ok(ModelParams {
        config: cfg.clone(),
        x_dim,
        enc_s,
        enc_c,
        enc_f,
        prior_c,
        dec_x,
        head_w,
        head_y,
        x_scaler: Standardizer {
            mean: vec![0.0; x_dim],
            std: vec![1.0; x_dim],
        },
        y_scaler: None,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_dims_give_expected_encoder_widths() {
        let p = init_model(&ModelConfig::default(), 6).unwrap();
        assert_eq!(p.enc_s.out_dim(), 2);
        assert_eq!(p.enc_c.out_dim(), 10);
        assert_eq!(p.enc_f.out_dim(), 10);
        assert_eq!(p.prior_c.out_dim(), 10);
        assert_eq!(p.dec_x.in_dim(), 11);
        assert_eq!(p.dec_x.out_dim(), 12);
        assert_eq!(p.head_w.in_dim(), 6);
        assert!(p.is_finite());
    }

    #[test]
    fn init_is_seed_deterministic() {
        let cfg = ModelConfig::default();
        assert_eq!(init_model(&cfg, 6).unwrap(), init_model(&cfg, 6).unwrap());
        let other = ModelConfig { seed: 1, ..cfg.clone() };
        assert_ne!(init_model(&cfg, 6).unwrap().enc_s, init_model(&other, 6).unwrap().enc_s);
    }

    #[test]
    fn binary_head_takes_treatment_input() {
        let cfg = ModelConfig {
            outcome: OutcomeKind::Binary,
            ..Default::default()
        };
        let p = init_model(&cfg, 3).unwrap();
        match &p.head_y {
            OutcomeHead::Binary { logit } => assert_eq!(logit.in_dim(), 11),
            _ => panic!("wrong head"),
        }
        assert_eq!(p.nets().len(), 7);
    }

    #[test]
    fn config_validation() {
        let bad = [
            ModelConfig { d_c: 0, ..Default::default() },
            ModelConfig { alpha: -1.0, ..Default::default() },
            ModelConfig { batch_size: 0, ..Default::default() },
            ModelConfig { beta: f64::NAN, ..Default::default() },
        ];
        for cfg in bad {
            assert!(matches!(init_model(&cfg, 4), Err(DvaeError::Config(_))), "{cfg:?}");
        }
        assert!(toml::from_str::<ModelConfig>("d_s = 2\nbogus = 1").is_err());
        let cfg: ModelConfig = toml::from_str("epochs = 5").unwrap();
        assert_eq!((cfg.epochs, cfg.d_c), (5, 5));
    }
}
