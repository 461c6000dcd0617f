//! Densities and KL terms for diagonal Gaussians and Bernoulli variables,
//! both as plain functions and as recorded tape operations.

use std::f64::consts::PI;

use super::tape::{Matrix, Tape, Var};
use super::NumError;

/// Floor applied to Bernoulli success probabilities: `p in [1e-6, 1 - 1e-6]`.
pub const PROB_FLOOR: f64 = 1e-6;
/// Networks emit `log sigma`, clamped to this range before exponentiation.
pub const LOG_SIGMA_MIN: f64 = -8.0;
pub const LOG_SIGMA_MAX: f64 = 5.0;

const HALF_LN_2PI: f64 = 0.918_938_533_204_672_8;

#[derive(Clone, Debug, PartialEq)]
pub struct DiagGaussian {
    mu: Vec<f64>,
    sigma: Vec<f64>,
}

impl DiagGaussian {
    pub fn new(mu: Vec<f64>, sigma: Vec<f64>) -> Result<Self, NumError> {
        if mu.len() != sigma.len() {
            return Err(NumError::ShapeMismatch {
                op: "DiagGaussian",
                expected: (mu.len(), 1),
                actual: (sigma.len(), 1),
            });
        }
        if let Some(s) = sigma.iter().find(|s| !(s.is_finite() && **s > 0.0)) {
            return Err(NumError::Domain(format!("standard deviation {s} must be positive and finite")));
        }
        if mu.iter().any(|m| !m.is_finite()) {
            return Err(NumError::NonFinite("gaussian mean".into()));
        }
        Ok(Self { mu, sigma })
    }

    pub fn standard(dim: usize) -> Self {
        Self {
            mu: vec![0.0; dim],
            sigma: vec![1.0; dim],
        }
    }

    pub fn dim(&self) -> usize {
        self.mu.len()
    }

    pub fn mu(&self) -> &[f64] {
        &self.mu
    }

    pub fn sigma(&self) -> &[f64] {
        &self.sigma
    }

    /// Log density of a point under the product of independent normals.
    pub fn log_density(&self, x: &[f64]) -> f64 {
        x.iter()
            .zip(self.mu.iter().zip(&self.sigma))
            .map(|(&x, (&m, &s))| -HALF_LN_2PI - s.ln() - 0.5 * ((x - m) / s).powi(2))
            .sum()
    }
}

/// `KL(q || N(0, I)) = 1/2 sum(mu^2 + sigma^2 - 1 - ln sigma^2)`.
pub fn kl_std_normal(q: &DiagGaussian) -> f64 {
    0.5 * q
        .mu
        .iter()
        .zip(&q.sigma)
        .map(|(&m, &s)| m * m + s * s - 1.0 - (s * s).ln())
        .sum::<f64>()
}

/// Closed-form `KL(q || p)` between diagonal Gaussians.
pub fn kl_diag_gaussians(q: &DiagGaussian, p: &DiagGaussian) -> Result<f64, NumError> {
    if q.dim() != p.dim() {
        return Err(NumError::ShapeMismatch {
            op: "kl_diag_gaussians",
            expected: (q.dim(), 1),
            actual: (p.dim(), 1),
        });
    }
    Ok(q.mu
        .iter()
        .zip(&q.sigma)
        .zip(p.mu.iter().zip(&p.sigma))
        .map(|((&mq, &sq), (&mp, &sp))| {
            (sp / sq).ln() + (sq * sq + (mq - mp).powi(2)) / (2.0 * sp * sp) - 0.5
        })
        .sum())
}

/// `mu + sigma * noise`.
pub fn reparameterize(q: &DiagGaussian, noise: &[f64]) -> Result<Vec<f64>, NumError> {
    if noise.len() != q.dim() {
        return Err(NumError::ShapeMismatch {
            op: "reparameterize",
            expected: (q.dim(), 1),
            actual: (noise.len(), 1),
        });
    }
    Ok(q.mu
        .iter()
        .zip(&q.sigma)
        .zip(noise)
        .map(|((m, s), e)| m + s * e)
        .collect())
}

pub fn bernoulli_logpmf(p: f64, k: u8) -> Result<f64, NumError> {
    if !(0.0..=1.0).contains(&p) {
        return Err(NumError::Domain(format!("probability {p} outside [0, 1]")));
    }
    let p = p.clamp(PROB_FLOOR, 1.0 - PROB_FLOOR);
    match k {
        1 => Ok(p.ln()),
        0 => Ok((1.0 - p).ln()),
        other => Err(NumError::Domain(format!("bernoulli outcome {other} not in {{0, 1}}"))),
    }
}

pub fn gaussian_logpdf(x: f64, mu: f64, sigma: f64) -> Result<f64, NumError> {
    if !(sigma > 0.0 && sigma.is_finite()) {
        return Err(NumError::Domain(format!("standard deviation {sigma} must be positive and finite")));
    }
    Ok(-0.5 * (2.0 * PI).ln() - sigma.ln() - 0.5 * ((x - mu) / sigma).powi(2))
}

/// Batch of diagonal Gaussians on a tape, parameterized by mean and clamped
/// log standard deviation, both `[batch x dim]`.
#[derive(Clone, Copy, Debug)]
pub struct GaussianVars {
    pub mu: Var,
    pub log_sigma: Var,
}

impl Tape {
    /// Splits a network output `[n x 2d]` into `(mu, clamped log sigma)`.
    pub fn gaussian_head(&mut self, out: Var, dim: usize) -> Result<GaussianVars, NumError> {
        let (_, cols) = self.shape(out);
        if cols != 2 * dim {
            return Err(NumError::ShapeMismatch {
                op: "gaussian_head",
                expected: (self.shape(out).0, 2 * dim),
                actual: self.shape(out),
            });
        }
        let mu = self.columns(out, 0, dim)?;
        let raw = self.columns(out, dim, 2 * dim)?;
        let log_sigma = self.clamp(raw, LOG_SIGMA_MIN, LOG_SIGMA_MAX);
        Ok(GaussianVars { mu, log_sigma })
    }

    /// Per-row `KL(q || N(0, I))`, shape `[n x 1]`.
    pub fn kl_std_normal_rows(&mut self, q: GaussianVars) -> Var {
        // 1/2 * sum(mu^2 + exp(2 ls) - 1 - 2 ls)
        let mu2 = self.square(q.mu);
        let ls2 = self.scale(q.log_sigma, 2.0);
        let var = self.exp(ls2);
        let a = self.add(mu2, var).expect("same shape");
        let b = self.sub(a, ls2).expect("same shape");
        let b = self.add_scalar(b, -1.0);
        let rows = self.sum_cols(b);
        self.scale(rows, 0.5)
    }

    /// Per-row `KL(q || p)` for diagonal Gaussians, shape `[n x 1]`.
    pub fn kl_diag_rows(&mut self, q: GaussianVars, p: GaussianVars) -> Result<Var, NumError> {
        // ls_p - ls_q + (exp(2 ls_q) + (mu_q - mu_p)^2) / (2 exp(2 ls_p)) - 1/2
        let log_ratio = self.sub(p.log_sigma, q.log_sigma)?;
        let q2 = self.scale(q.log_sigma, 2.0);
        let var_q = self.exp(q2);
        let diff = self.sub(q.mu, p.mu)?;
        let diff2 = self.square(diff);
        let num = self.add(var_q, diff2)?;
        let p2 = self.scale(p.log_sigma, -2.0);
        let inv_var_p = self.exp(p2);
        let frac = self.mul(num, inv_var_p)?;
        let frac = self.scale(frac, 0.5);
        let terms = self.add(log_ratio, frac)?;
        let terms = self.add_scalar(terms, -0.5);
        Ok(self.sum_cols(terms))
    }

    /// `mu + exp(log sigma) * noise`; `noise` is a constant draw.
    pub fn reparameterize(&mut self, q: GaussianVars, noise: Matrix) -> Result<Var, NumError> {
        let sigma = self.exp(q.log_sigma);
        let eps = self.constant(noise);
        let scaled = self.mul(sigma, eps)?;
        self.add(q.mu, scaled)
    }

    /// Per-row diagonal Gaussian log density of `x`, summed over columns.
    pub fn gaussian_logpdf_rows(&mut self, x: Var, q: GaussianVars) -> Result<Var, NumError> {
        let diff = self.sub(x, q.mu)?;
        let neg = self.scale(q.log_sigma, -1.0);
        let inv_sigma = self.exp(neg);
        let z = self.mul(diff, inv_sigma)?;
        let z2 = self.square(z);
        let half = self.scale(z2, -0.5);
        let t = self.sub(half, q.log_sigma)?;
        let t = self.add_scalar(t, -HALF_LN_2PI);
        Ok(self.sum_cols(t))
    }
}
