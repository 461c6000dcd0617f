//! Two-stage IV estimation for a binary treatment.
//!
//! Stage 1 fits `pi(s, z) = P(W = 1 | s, z)` by log-loss. Stage 2 fits
//! `h(w, z)` by minimizing `(y - [pi h(1, z) + (1 - pi) h(0, z)])^2`, the
//! exact expectation over the binary treatment. The effect for a row is
//! `h(1, z) - h(0, z)`.

use ndarray::{concatenate, s, Array1, Axis};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::EstimatorError;
use crate::data::Standardizer;
use crate::diffnum::{mlp_forward, sigmoid, AdamConfig, AdamState, Matrix, Mlp, Tape, PROB_FLOOR};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TwoStageConfig {
    pub hidden: Vec<usize>,
    /// Kept short on purpose: a stage-1 network trained to convergence
    /// memorizes `W` on the training rows and stage 2 then degrades towards
    /// plain regression.
    pub stage1_epochs: usize,
    pub stage2_epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub seed: u64,
}

impl Default for TwoStageConfig {
    fn default() -> Self {
        TwoStageConfig {
            hidden: vec![64, 64],
            stage1_epochs: 20,
            stage2_epochs: 100,
            batch_size: 256,
            learning_rate: 1e-3,
            seed: 0,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct TwoStageDiagnostics {
    /// Per-epoch mean log-loss of stage 1.
    pub stage1_loss: Vec<f64>,
    /// Per-epoch mean squared error of stage 2 (standardized outcome).
    pub stage2_loss: Vec<f64>,
    /// False when the last stage-2 epoch is no better than the first.
    pub stage2_improved: bool,
}

#[derive(Clone, Debug, PartialEq)]
pub struct TwoStageModel {
    pub stage1: Mlp,
    pub stage2: Mlp,
    pub s_dim: usize,
    pub z_dim: usize,
    /// Scaling of the stacked `[s | z]` inputs.
    pub input_scaler: Standardizer,
    pub y_scaler: Standardizer,
    pub diagnostics: TwoStageDiagnostics,
}

impl TwoStageModel {
    fn scale_z(&self, z: &Matrix) -> Result<Matrix, EstimatorError> {
        if z.ncols() != self.z_dim {
            return Err(EstimatorError::Dim {
                what: "conditioning representation",
                expected: self.z_dim,
                actual: z.ncols(),
            });
        }
        let mut out = z.clone();
        for (j, mut col) in out.axis_iter_mut(Axis(1)).enumerate() {
            let (m, sd) = (self.input_scaler.mean[self.s_dim + j], self.input_scaler.std[self.s_dim + j]);
            col.mapv_inplace(|v| (v - m) / sd);
        }
        Ok(out)
    }

    /// Fitted treatment probabilities, floored away from 0 and 1.
    pub fn treatment_probability(&self, s: &Matrix, z: &Matrix) -> Result<Array1<f64>, EstimatorError> {
        if s.ncols() != self.s_dim || s.nrows() != z.nrows() {
            return Err(EstimatorError::Dim {
                what: "instrument representation",
                expected: self.s_dim,
                actual: s.ncols(),
            });
        }
        let sz = concatenate(Axis(1), &[s.view(), z.view()]).expect("row counts checked");
        let x = self.input_scaler.transform(&sz)?;
        let logits = self.stage1.predict(&x)?;
        Ok(logits.column(0).mapv(|l| sigmoid(l).clamp(PROB_FLOOR, 1.0 - PROB_FLOOR)))
    }

    /// Outcome prediction `h(w, z)` on the original outcome scale.
    pub fn outcome(&self, w: f64, z: &Matrix) -> Result<Array1<f64>, EstimatorError> {
        let zs = self.scale_z(z)?;
        let wcol = Matrix::from_elem((zs.nrows(), 1), w);
        let input = concatenate(Axis(1), &[wcol.view(), zs.view()]).expect("row counts match");
        let h = self.stage2.predict(&input)?;
        Ok(h.column(0).mapv(|v| v * self.y_scaler.std[0] + self.y_scaler.mean[0]))
    }
}

fn check_inputs(s: &Matrix, z: &Matrix, w: &Array1<f64>, y: &Array1<f64>) -> Result<(), EstimatorError> {
    let n = s.nrows();
    if z.nrows() != n || w.len() != n || y.len() != n {
        return Err(EstimatorError::Input(format!(
            "row counts differ: s {n}, z {}, w {}, y {}",
            z.nrows(),
            w.len(),
            y.len()
        )));
    }
    if n == 0 || s.ncols() == 0 {
        return Err(EstimatorError::Input("empty instrument or sample".into()));
    }
    if w.iter().any(|&v| v != 0.0 && v != 1.0) {
        return Err(EstimatorError::Input("treatment must be binary".into()));
    }
    let treated = w.iter().filter(|&&v| v == 1.0).count();
    if treated == 0 || treated == n {
        return Err(EstimatorError::DegenerateTreatment { treated, n });
    }
    Ok(())
}

pub fn fit_two_stage(
    s: &Matrix,
    z: &Matrix,
    w: &Array1<f64>,
    y: &Array1<f64>,
    cfg: &TwoStageConfig,
) -> Result<TwoStageModel, EstimatorError> {
    check_inputs(s, z, w, y)?;
    if cfg.batch_size == 0 || cfg.hidden.contains(&0) || cfg.learning_rate.is_nan() || cfg.learning_rate <= 0.0 {
        return Err(EstimatorError::Input("invalid two-stage configuration".into()));
    }
    let n = s.nrows();
    let (s_dim, z_dim) = (s.ncols(), z.ncols());
    let sz = concatenate(Axis(1), &[s.view(), z.view()]).expect("row counts checked");
    let input_scaler = Standardizer::fit(&sz)?;
    let x1 = input_scaler.transform(&sz)?;
    let zs = x1.slice(s![.., s_dim..]).to_owned();
    let y_scaler = Standardizer::fit_vector(y)?;
    let yn = y_scaler.transform_vector(y)?.insert_axis(Axis(1));
    let wcol = w.clone().insert_axis(Axis(1));

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut stage1 = Mlp::new(s_dim + z_dim, &cfg.hidden, 1, &mut rng);
    let mut stage2 = Mlp::new(1 + z_dim, &cfg.hidden, 1, &mut rng);
    let adam_cfg = AdamConfig {
        lr: cfg.learning_rate,
        ..AdamConfig::default()
    };
    let mut order: Vec<usize> = (0..n).collect();
    let mut diagnostics = TwoStageDiagnostics::default();

    let mut adam = AdamState::new(adam_cfg, stage1.params());
    for _ in 0..cfg.stage1_epochs {
        order.shuffle(&mut rng);
        let mut total = 0.0;
        for idx in order.chunks(cfg.batch_size) {
            let mut tape = Tape::new();
            let net = stage1.bind(&mut tape);
            let x = tape.constant(x1.select(Axis(0), idx));
            let logits = mlp_forward(&mut tape, &net, x)?;
            let ll = tape.bernoulli_logpmf_logits(logits, &wcol.select(Axis(0), idx), PROB_FLOOR)?;
            let m = tape.mean(ll);
            let loss = tape.scale(m, -1.0);
            tape.backward(loss)?;
            total += tape.scalar(loss) * idx.len() as f64;
            adam.step(&mut stage1.params_mut(), &net.grads(&tape))?;
        }
        diagnostics.stage1_loss.push(total / n as f64);
    }

    let pi = stage1
        .predict(&x1)?
        .mapv(|l| sigmoid(l).clamp(PROB_FLOOR, 1.0 - PROB_FLOOR));
    let ones = Matrix::ones((n, 1));
    let zeros = Matrix::zeros((n, 1));
    let in1 = concatenate(Axis(1), &[ones.view(), zs.view()]).expect("rows match");
    let in0 = concatenate(Axis(1), &[zeros.view(), zs.view()]).expect("rows match");

    let mut adam = AdamState::new(adam_cfg, stage2.params());
    for _ in 0..cfg.stage2_epochs {
        order.shuffle(&mut rng);
        let mut total = 0.0;
        for idx in order.chunks(cfg.batch_size) {
            let mut tape = Tape::new();
            let net = stage2.bind(&mut tape);
            let a = tape.constant(in1.select(Axis(0), idx));
            let b = tape.constant(in0.select(Axis(0), idx));
            let p = pi.select(Axis(0), idx);
            let q = tape.constant(p.mapv(|v| 1.0 - v));
            let p = tape.constant(p);
            let h1 = mlp_forward(&mut tape, &net, a)?;
            let h0 = mlp_forward(&mut tape, &net, b)?;
            let t1 = tape.mul(p, h1)?;
            let t0 = tape.mul(q, h0)?;
            let pred = tape.add(t1, t0)?;
            let target = tape.constant(yn.select(Axis(0), idx));
            let r = tape.sub(target, pred)?;
            let r2 = tape.square(r);
            let loss = tape.mean(r2);
            tape.backward(loss)?;
            total += tape.scalar(loss) * idx.len() as f64;
            adam.step(&mut stage2.params_mut(), &net.grads(&tape))?;
        }
        diagnostics.stage2_loss.push(total / n as f64);
    }
    diagnostics.stage2_improved = match (diagnostics.stage2_loss.first(), diagnostics.stage2_loss.last()) {
        (Some(a), Some(b)) => b < a,
        _ => false,
    };

    Ok(TwoStageModel {
        stage1,
        stage2,
        s_dim,
        z_dim,
        input_scaler,
        y_scaler,
        diagnostics,
    })
}

/// Conditional effect `h(1, z) - h(0, z)` per row.
pub fn cace(model: &TwoStageModel, z: &Matrix) -> Result<Array1<f64>, EstimatorError> {
    let zs = model.scale_z(z)?;
    let n = zs.nrows();
    let ones = Matrix::ones((n, 1));
    let zeros = Matrix::zeros((n, 1));
    let h1 = model
        .stage2
        .predict(&concatenate(Axis(1), &[ones.view(), zs.view()]).expect("rows match"))?;
    let h0 = model
        .stage2
        .predict(&concatenate(Axis(1), &[zeros.view(), zs.view()]).expect("rows match"))?;
    Ok((h1 - h0).column(0).mapv(|d| d * model.y_scaler.std[0]))
}
