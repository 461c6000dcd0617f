use ndarray::{s, Array1};
use rand::Rng;
use rand_distr::StandardNormal;

use super::{DvaeError, ModelConfig, ModelParams, OutcomeHead};
use crate::diffnum::{
    mlp_forward, BoundMlp, DiagGaussian, GaussianVars, Matrix, Mlp, Tape, Var, LOG_SIGMA_MAX, LOG_SIGMA_MIN,
    PROB_FLOOR,
};

/// One mini-batch in model space: standardized `x [b x p]`, treatment and
/// outcome as `[b x 1]` columns.
#[derive(Clone, Debug)]
pub struct Batch {
    pub x: Matrix,
    pub w: Matrix,
    pub y: Matrix,
}

impl Batch {
    pub fn new(x: Matrix, w: &Array1<f64>, y: &Array1<f64>) -> Result<Batch, DvaeError> {
        let n = x.nrows();
        if w.len() != n || y.len() != n {
            return Err(DvaeError::Config(format!(
                "batch rows differ: x {n}, w {}, y {}",
                w.len(),
                y.len()
            )));
        }
        let col = |v: &Array1<f64>| v.clone().insert_axis(ndarray::Axis(1));
        Ok(Batch {
            x,
            w: col(w),
            y: col(y),
        })
    }

    pub fn rows(&self) -> usize {
        self.x.nrows()
    }
}

/// Standard-normal draws for the reparameterization, one `(s, c, f)` triple
/// per Monte-Carlo sample.
#[derive(Clone, Debug)]
pub struct Noise {
    pub draws: Vec<[Matrix; 3]>,
}

pub fn draw_noise<R: Rng + ?Sized>(rng: &mut R, rows: usize, cfg: &ModelConfig) -> Noise {
    let mut m = |d: usize| Matrix::from_shape_simple_fn((rows, d), || rng.sample(StandardNormal));
    let draws = (0..cfg.mc_samples.max(1))
        .map(|_| [m(cfg.d_s), m(cfg.d_c), m(cfg.d_f)])
        .collect();
    Noise { draws }
}

/// Batch of diagonal Gaussians, one per row.
#[derive(Clone, Debug, PartialEq)]
pub struct GaussianBatch {
    pub mu: Matrix,
    pub sigma: Matrix,
}

impl GaussianBatch {
    fn from_output(out: &Matrix, dim: usize) -> GaussianBatch {
        GaussianBatch {
            mu: out.slice(s![.., ..dim]).to_owned(),
            sigma: out
                .slice(s![.., dim..2 * dim])
                .mapv(|l| l.clamp(LOG_SIGMA_MIN, LOG_SIGMA_MAX).exp()),
        }
    }

    pub fn row(&self, i: usize) -> DiagGaussian {
        DiagGaussian::new(self.mu.row(i).to_vec(), self.sigma.row(i).to_vec())
            .expect("encoder output is finite with clamped scale")
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct LatentPosteriors {
    pub qs: GaussianBatch,
    pub qc: GaussianBatch,
    pub qf: GaussianBatch,
}

/// Posterior parameters for standardized covariates.
pub fn encode(params: &ModelParams, x: &Matrix) -> Result<LatentPosteriors, DvaeError> {
    params.check_x(x.ncols())?;
    let c = &params.config;
    Ok(LatentPosteriors {
        qs: GaussianBatch::from_output(&params.enc_s.predict(x)?, c.d_s),
        qc: GaussianBatch::from_output(&params.enc_c.predict(x)?, c.d_c),
        qf: GaussianBatch::from_output(&params.enc_f.predict(x)?, c.d_f),
    })
}

/// Batch means of the ELBO pieces.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct ElboTerms {
    pub elbo: f64,
    pub recon: f64,
    pub kl_s: f64,
    pub kl_c: f64,
    pub kl_f: f64,
}

#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct LossTerms {
    pub loss: f64,
    pub elbo: ElboTerms,
    /// Mean `log q(W | S, C)`.
    pub log_w: f64,
    /// Mean `log q(Y | W, C, F)`.
    pub log_y: f64,
}

struct Recorded {
    loss: Var,
    elbo: Var,
    recon: Var,
    kl_s: Var,
    kl_c: Var,
    kl_f: Var,
    log_w: Var,
    log_y: Var,
}

fn forward(
    tape: &mut Tape,
    params: &ModelParams,
    nets: &[BoundMlp],
    batch: &Batch,
    noise: &Noise,
    alpha: f64,
    beta: f64,
) -> Result<Recorded, DvaeError> {
    let cfg = &params.config;
    let (ds, dc, df) = (cfg.d_s, cfg.d_c, cfg.d_f);
    let x = tape.constant(batch.x.clone());
    let w = tape.constant(batch.w.clone());
    let not_w = tape.constant(batch.w.mapv(|v| 1.0 - v));
    let y = tape.constant(batch.y.clone());

    let head = |tape: &mut Tape, net: &BoundMlp, dim: usize| -> Result<GaussianVars, DvaeError> {
        let out = mlp_forward(tape, net, x)?;
        Ok(tape.gaussian_head(out, dim)?)
    };
    let qs = head(tape, &nets[0], ds)?;
    let qc = head(tape, &nets[1], dc)?;
    let qf = head(tape, &nets[2], df)?;
    let pc = head(tape, &nets[3], dc)?;

    let kl_s = tape.kl_std_normal_rows(qs);
    let kl_c = tape.kl_diag_rows(qc, pc)?;
    let kl_f = tape.kl_std_normal_rows(qf);

    let mut rec_acc: Option<Var> = None;
    let mut lw_acc: Option<Var> = None;
    let mut ly_acc: Option<Var> = None;
    let acc = |tape: &mut Tape, slot: &mut Option<Var>, v: Var| -> Result<(), DvaeError> {
        *slot = Some(match *slot {
            Some(a) => tape.add(a, v)?,
            None => v,
        });
        Ok(())
    };
    for [ns, nc, nf] in &noise.draws {
        let s = tape.reparameterize(qs, ns.clone())?;
        let c = tape.reparameterize(qc, nc.clone())?;
        let f = tape.reparameterize(qf, nf.clone())?;

        let scf = tape.concat(&[s, c, f])?;
        let dec = mlp_forward(tape, &nets[4], scf)?;
        let px = tape.gaussian_head(dec, params.x_dim)?;
        let rec = tape.gaussian_logpdf_rows(x, px)?;
        acc(tape, &mut rec_acc, rec)?;

        let sc = tape.concat(&[s, c])?;
        let logit_w = mlp_forward(tape, &nets[5], sc)?;
        let lw = tape.bernoulli_logpmf_logits(logit_w, &batch.w, PROB_FLOOR)?;
        acc(tape, &mut lw_acc, lw)?;

        let ly = match &params.head_y {
            OutcomeHead::Continuous { .. } => {
                let cf = tape.concat(&[c, f])?;
                let arm = |tape: &mut Tape, one: &BoundMlp, zero: &BoundMlp| -> Result<Var, DvaeError> {
                    let a = mlp_forward(tape, one, cf)?;
                    let b = mlp_forward(tape, zero, cf)?;
                    let a = tape.mul(w, a)?;
                    let b = tape.mul(not_w, b)?;
                    Ok(tape.add(a, b)?)
                };
                let mu = arm(tape, &nets[6], &nets[7])?;
                let raw = arm(tape, &nets[8], &nets[9])?;
                let log_sigma = tape.clamp(raw, LOG_SIGMA_MIN, LOG_SIGMA_MAX);
                tape.gaussian_logpdf_rows(y, GaussianVars { mu, log_sigma })?
            }
            OutcomeHead::Binary { .. } => {
                let wcf = tape.concat(&[w, c, f])?;
                let logit = mlp_forward(tape, &nets[6], wcf)?;
                tape.bernoulli_logpmf_logits(logit, &batch.y, PROB_FLOOR)?
            }
        };
        acc(tape, &mut ly_acc, ly)?;
    }
    let k = 1.0 / noise.draws.len() as f64;
    let mut mc_mean = |slot: Option<Var>| -> Result<Var, DvaeError> {
        let v = slot.ok_or(crate::diffnum::NumError::Empty("monte-carlo draws"))?;
        let v = tape.scale(v, k);
        Ok(tape.mean(v))
    };
    let recon = mc_mean(rec_acc)?;
    let log_w = mc_mean(lw_acc)?;
    let log_y = mc_mean(ly_acc)?;
    let kl_s = tape.mean(kl_s);
    let kl_c = tape.mean(kl_c);
    let kl_f = tape.mean(kl_f);

    let e = tape.sub(recon, kl_s)?;
    let e = tape.sub(e, kl_c)?;
    let elbo = tape.sub(e, kl_f)?;
    let neg = tape.scale(elbo, -1.0);
    let tw = tape.scale(log_w, -alpha);
    let ty = tape.scale(log_y, -beta);
    let l = tape.add(neg, tw)?;
    let loss = tape.add(l, ty)?;
    Ok(Recorded {
        loss,
        elbo,
        recon,
        kl_s,
        kl_c,
        kl_f,
        log_w,
        log_y,
    })
}

fn check_batch(params: &ModelParams, batch: &Batch) -> Result<(), DvaeError> {
    params.check_x(batch.x.ncols())?;
    if batch.rows() == 0 {
        return Err(DvaeError::Config("empty batch".into()));
    }
    Ok(())
}

fn read_terms(tape: &Tape, r: &Recorded) -> LossTerms {
    LossTerms {
        loss: tape.scalar(r.loss),
        elbo: ElboTerms {
            elbo: tape.scalar(r.elbo),
            recon: tape.scalar(r.recon),
            kl_s: tape.scalar(r.kl_s),
            kl_c: tape.scalar(r.kl_c),
            kl_f: tape.scalar(r.kl_f),
        },
        log_w: tape.scalar(r.log_w),
        log_y: tape.scalar(r.log_y),
    }
}

fn bind_all(tape: &mut Tape, params: &ModelParams) -> Vec<BoundMlp> {
    params.nets().into_iter().map(|n: &Mlp| n.bind(tape)).collect()
}

/// Objective on fixed noise, without gradients.
pub fn objective_with_noise(
    params: &ModelParams,
    batch: &Batch,
    noise: &Noise,
    alpha: f64,
    beta: f64,
) -> Result<LossTerms, DvaeError> {
    check_batch(params, batch)?;
    let mut tape = Tape::new();
    let nets = bind_all(&mut tape, params);
    let r = forward(&mut tape, params, &nets, batch, noise, alpha, beta)?;
    Ok(read_terms(&tape, &r))
}

/// Objective and its gradient with respect to every parameter, ordered as
/// [`ModelParams::params`].
pub fn objective_with_grads(
    params: &ModelParams,
    batch: &Batch,
    noise: &Noise,
    alpha: f64,
    beta: f64,
) -> Result<(LossTerms, Vec<Matrix>), DvaeError> {
    check_batch(params, batch)?;
    let mut tape = Tape::new();
    let nets = bind_all(&mut tape, params);
    let r = forward(&mut tape, params, &nets, batch, noise, alpha, beta)?;
    tape.backward(r.loss)?;
    let grads = nets.iter().flat_map(|n| n.grads(&tape)).collect();
    Ok((read_terms(&tape, &r), grads))
}

/// Single-draw (or `mc_samples`-draw) ELBO estimate on a standardized batch.
pub fn elbo<R: Rng + ?Sized>(params: &ModelParams, batch: &Batch, rng: &mut R) -> Result<ElboTerms, DvaeError> {
    let noise = draw_noise(rng, batch.rows(), &params.config);
    Ok(objective_with_noise(params, batch, &noise, 0.0, 0.0)?.elbo)
}

/// Training objective `-ELBO - alpha * log q(W|S,C) - beta * log q(Y|W,C,F)`
/// with weights and sample count taken from `cfg`.
pub fn loss<R: Rng + ?Sized>(
    params: &ModelParams,
    batch: &Batch,
    cfg: &ModelConfig,
    rng: &mut R,
) -> Result<LossTerms, DvaeError> {
    let noise = draw_noise(rng, batch.rows(), cfg);
    objective_with_noise(params, batch, &noise, cfg.alpha, cfg.beta)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::diffnum::kl_diag_gaussians;
    use crate::dvae::{init_model, ModelConfig};
    use ndarray::array;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn tiny() -> (ModelParams, Batch) {
        let cfg = ModelConfig {
            d_s: 1,
            d_c: 2,
            d_f: 2,
            hidden: vec![8],
            ..Default::default()
        };
        let p = init_model(&cfg, 3).unwrap();
        let x = array![[0.1, -0.4, 1.2], [0.7, 0.3, -0.9], [-1.1, 0.5, 0.2], [0.0, 2.0, -0.3]];
        let b = Batch::new(x, &array![1.0, 0.0, 1.0, 0.0], &array![0.5, -1.0, 2.0, 0.1]).unwrap();
        (p, b)
    }

    #[test]
    fn kl_terms_non_negative() {
        let (p, b) = tiny();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let e = elbo(&p, &b, &mut rng).unwrap();
        assert!(e.kl_s >= 0.0 && e.kl_c >= 0.0 && e.kl_f >= 0.0);
        assert!((e.elbo - (e.recon - e.kl_s - e.kl_c - e.kl_f)).abs() < 1e-12);
    }

    #[test]
    fn zero_weights_give_negative_elbo_exactly() {
        let (p, b) = tiny();
        let cfg = ModelConfig {
            alpha: 0.0,
            beta: 0.0,
            ..p.config.clone()
        };
        let l = loss(&p, &b, &cfg, &mut ChaCha8Rng::seed_from_u64(4)).unwrap();
        let e = elbo(&p, &b, &mut ChaCha8Rng::seed_from_u64(4)).unwrap();
        assert_eq!(l.loss, -e.elbo);
    }

    #[test]
    fn identical_prior_and_encoder_zero_kl_c() {
        let (mut p, b) = tiny();
        p.prior_c = p.enc_c.clone();
        let e = elbo(&p, &b, &mut ChaCha8Rng::seed_from_u64(1)).unwrap();
        assert!(e.kl_c.abs() < 1e-12, "{}", e.kl_c);
    }

    #[test]
    fn tape_kl_c_matches_direct_formula() {
        let (p, b) = tiny();
        let post = encode(&p, &b.x).unwrap();
        let prior = GaussianBatch::from_output(&p.prior_c.predict(&b.x).unwrap(), 2);
        let direct: f64 = (0..b.rows())
            .map(|i| kl_diag_gaussians(&post.qc.row(i), &prior.row(i)).unwrap())
            .sum::<f64>()
            / b.rows() as f64;
        let e = elbo(&p, &b, &mut ChaCha8Rng::seed_from_u64(1)).unwrap();
        assert!((e.kl_c - direct).abs() < 1e-12);
    }

    #[test]
    fn alpha_scales_treatment_head_gradient() {
        let (p, b) = tiny();
        let noise = draw_noise(&mut ChaCha8Rng::seed_from_u64(2), b.rows(), &p.config);
        let (_, g1) = objective_with_grads(&p, &b, &noise, 1.0, 1.0).unwrap();
        let (_, g3) = objective_with_grads(&p, &b, &noise, 3.0, 1.0).unwrap();
        // head_w is the sixth network; only the treatment term reaches it.
        let offset: usize = p.nets()[..5].iter().map(|n| n.params().len()).sum();
        for k in offset..offset + p.head_w.params().len() {
            let diff = &g3[k] - &(&g1[k] * 3.0);
            assert!(diff.iter().all(|d| d.abs() < 1e-10));
        }
        assert!(g1[offset].iter().any(|v| v.abs() > 0.0));
    }

    #[test]
    fn encode_duplicate_rows_and_clamp() {
        let (p, _) = tiny();
        let x = array![[0.3, 0.3, 0.3], [0.3, 0.3, 0.3], [50.0, -80.0, 400.0]];
        let q = encode(&p, &x).unwrap();
        assert_eq!(q.qc.mu.row(0), q.qc.mu.row(1));
        let (lo, hi) = (LOG_SIGMA_MIN.exp(), LOG_SIGMA_MAX.exp());
        for g in [&q.qs, &q.qc, &q.qf] {
            assert!(g.sigma.iter().all(|&s| s >= lo && s <= hi));
        }
        assert!(matches!(encode(&p, &array![[1.0, 2.0]]), Err(DvaeError::Dim { .. })));
    }

    #[test]
    fn binary_outcome_objective() {
        let cfg = ModelConfig {
            outcome: super::super::OutcomeKind::Binary,
            hidden: vec![4],
            ..Default::default()
        };
        let p = init_model(&cfg, 2).unwrap();
        let b = Batch::new(array![[0.0, 1.0], [1.0, 0.0]], &array![1.0, 0.0], &array![0.0, 1.0]).unwrap();
        let l = loss(&p, &b, &cfg, &mut ChaCha8Rng::seed_from_u64(0)).unwrap();
        assert!(l.loss.is_finite() && l.log_y < 0.0);
        let bad = Batch::new(array![[0.0, 1.0]], &array![1.0], &array![0.5]).unwrap();
        assert!(loss(&p, &bad, &cfg, &mut ChaCha8Rng::seed_from_u64(0)).is_err());
    }
}
