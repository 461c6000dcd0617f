use ndarray::{concatenate, Array1, Axis};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::objective::{draw_noise, encode, objective_with_grads, Batch, LossTerms};
use super::{init_model, DvaeError, ModelConfig, ModelParams, OutcomeKind};
use crate::data::{Dataset, Standardizer};
use crate::diffnum::{AdamConfig, AdamState, Matrix, NumError};

/// Sample-weighted means over one epoch.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub loss: f64,
    pub neg_elbo: f64,
    pub recon: f64,
    pub kl_s: f64,
    pub kl_c: f64,
    pub kl_f: f64,
    pub log_w: f64,
    pub log_y: f64,
}

impl EpochRecord {
    fn accumulate(&mut self, t: &LossTerms, weight: f64) {
        self.loss += weight * t.loss;
        self.neg_elbo -= weight * t.elbo.elbo;
        self.recon += weight * t.elbo.recon;
        self.kl_s += weight * t.elbo.kl_s;
        self.kl_c += weight * t.elbo.kl_c;
        self.kl_f += weight * t.elbo.kl_f;
        self.log_w += weight * t.log_w;
        self.log_y += weight * t.log_y;
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainHistory {
    pub epochs: Vec<EpochRecord>,
}

impl TrainHistory {
    pub fn len(&self) -> usize {
        self.epochs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.epochs.is_empty()
    }

    pub fn final_loss(&self) -> Option<f64> {
        self.epochs.last().map(|e| e.loss)
    }
}

/// Fits the model on raw covariates. Covariates (and a continuous outcome)
/// are standardized with statistics from `ds`, which are stored in the
/// returned parameters.
pub fn train(ds: &Dataset, cfg: &ModelConfig) -> Result<(ModelParams, TrainHistory), DvaeError> {
    cfg.validate()?;
    let n = ds.len();
    if n < cfg.batch_size {
        return Err(DvaeError::Config(format!(
            "{n} training rows is fewer than the batch size {}",
            cfg.batch_size
        )));
    }
    ds.validate()?;
    if cfg.outcome == OutcomeKind::Binary && ds.y.iter().any(|&v| v != 0.0 && v != 1.0) {
        return Err(DvaeError::Config("binary outcome head needs y in {0, 1}".into()));
    }

    let mut params = init_model(cfg, ds.num_features())?;
    params.x_scaler = Standardizer::fit(&ds.x)?;
    let x = params.x_scaler.transform(&ds.x)?;
    let y: Array1<f64> = match cfg.outcome {
        OutcomeKind::Continuous => {
            let sc = Standardizer::fit_vector(&ds.y)?;
            let y = sc.transform_vector(&ds.y)?;
            params.y_scaler = Some(sc);
            y
        }
        OutcomeKind::Binary => ds.y.clone(),
    };

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    // separate stream from the one used for initialization
    rng.set_stream(1);
    let adam_cfg = AdamConfig {
        lr: cfg.learning_rate,
        ..AdamConfig::default()
    };
    let mut adam = AdamState::new(adam_cfg, params.params());
    let mut history = TrainHistory::default();
    let mut order: Vec<usize> = (0..n).collect();

    for epoch in 0..cfg.epochs {
        order.shuffle(&mut rng);
        let mut rec = EpochRecord {
            epoch,
            loss: 0.0,
            neg_elbo: 0.0,
            recon: 0.0,
            kl_s: 0.0,
            kl_c: 0.0,
            kl_f: 0.0,
            log_w: 0.0,
            log_y: 0.0,
        };
        for (b, idx) in order.chunks(cfg.batch_size).enumerate() {
            let batch = Batch::new(
                x.select(Axis(0), idx),
                &ds.w.select(Axis(0), idx),
                &y.select(Axis(0), idx),
            )?;
            let noise = draw_noise(&mut rng, idx.len(), cfg);
            let (terms, grads) = objective_with_grads(&params, &batch, &noise, cfg.alpha, cfg.beta)?;
            let non_finite = DvaeError::NonFiniteLoss { epoch, batch: b };
            if !terms.loss.is_finite() {
                return Err(non_finite);
            }
            match adam.step(&mut params.params_mut(), &grads) {
                Err(NumError::NonFinite(_)) => return Err(non_finite),
                other => other?,
            }
            rec.accumulate(&terms, idx.len() as f64 / n as f64);
        }
        log::debug!("epoch {epoch}: loss {:.4}", rec.loss);
        history.epochs.push(rec);
    }
    Ok((params, history))
}

/// Posterior means for raw covariates: the instrument representation `s`
/// `[n x d_s]` and the conditioning representation `[n x (d_c + d_f)]`.
pub fn extract_representations(params: &ModelParams, x: &Matrix) -> Result<(Matrix, Matrix), DvaeError> {
    params.check_x(x.ncols())?;
    let xs = params.x_scaler.transform(x)?;
    let q = encode(params, &xs)?;
    let zrep = concatenate(Axis(1), &[q.qc.mu.view(), q.qf.mu.view()]).expect("equal row counts");
    Ok((q.qs.mu, zrep))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{generate_synthetic, SynthConfig};

    fn small_cfg(epochs: usize) -> ModelConfig {
        ModelConfig {
            hidden: vec![16],
            epochs,
            batch_size: 64,
            ..Default::default()
        }
    }

    #[test]
    fn zero_epochs_returns_init() {
        let ds = generate_synthetic(&SynthConfig { n: 100, seed: 0 }).unwrap();
        let cfg = small_cfg(0);
        let (p, h) = train(&ds, &cfg).unwrap();
        assert!(h.is_empty());
        assert_eq!(p.params(), init_model(&cfg, 6).unwrap().params());
    }

    #[test]
    fn deterministic_and_loss_decreases() {
        let ds = generate_synthetic(&SynthConfig { n: 300, seed: 2 }).unwrap();
        let cfg = small_cfg(15);
        let (p1, h1) = train(&ds, &cfg).unwrap();
        let (p2, h2) = train(&ds, &cfg).unwrap();
        assert_eq!(h1, h2);
        assert_eq!(p1, p2);
        assert!(h1.final_loss().unwrap() < h1.epochs[0].loss);
        assert!(h1.epochs.iter().all(|e| e.kl_s >= 0.0 && e.kl_c >= 0.0 && e.kl_f >= 0.0));
    }

    #[test]
    fn batch_larger_than_data_rejected() {
        let ds = generate_synthetic(&SynthConfig { n: 10, seed: 0 }).unwrap();
        assert!(matches!(train(&ds, &small_cfg(1)), Err(DvaeError::Config(_))));
    }

    #[test]
    fn representation_widths() {
        let ds = generate_synthetic(&SynthConfig { n: 64, seed: 0 }).unwrap();
        let (p, _) = train(&ds, &small_cfg(1)).unwrap();
        let (s, z) = extract_representations(&p, &ds.x).unwrap();
        assert_eq!(s.dim(), (64, 1));
        assert_eq!(z.dim(), (64, 10));
    }
}
