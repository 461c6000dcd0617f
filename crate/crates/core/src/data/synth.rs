use ndarray::{Array1, Array2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::{DataError, Dataset, DatasetMeta, Hidden};
use crate::diffnum::sigmoid;

/// Average treatment effect built into the generator.
pub const SYNTHETIC_ACE: f64 = 2.0;
pub const SYNTHETIC_FEATURES: [&str; 6] = ["S", "X1", "X2", "X3", "X4", "X5"];
const HIDDEN: [&str; 5] = ["U", "U1", "U2", "U3", "U4"];

/// Variance of the covariate noise terms (read as a variance, not a
/// standard deviation).
const COVARIATE_NOISE_VAR: f64 = 0.5;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SynthConfig {
    pub n: usize,
    pub seed: u64,
}

impl SynthConfig {
    pub fn validate(&self) -> Result<(), DataError> {
        if self.n < 2 {
            return Err(DataError::Config(format!("sample size {} must be at least 2", self.n)));
        }
        Ok(())
    }
}

/// Draws `cfg.n` samples from the conditional-instrument benchmark process:
///
/// ```text
/// U, U1..U4 ~ N(0, 1);  e1, e2, e3, es ~ N(0, 0.5)
/// X1 = N(0,1) + 0.5 U2 + e1      X2 = N(0,1) + 0.5 U3 + e2
/// X3 = N(0,1) + 0.5 U4 + e3      S  = N(0,1) + 2 U1 + 1.5 X1 + 1.5 X2 + es
/// X4 ~ N(1, 1)                   X5 ~ N(3, 1)
/// P(W = 1) = 1 / (1 + exp(2 - U - U1 - X3 - X4))
/// Y(w) = 2 + 2w + 2U + 2U3 + 2U4 + X4 + X5 + e_w,  e_0, e_1 ~ N(0, 1) independent
/// ```
///
/// `S` is a conditional instrument given `{X1, X2}` and `U` confounds
/// `W -> Y`. Both potential outcomes and the latent columns are retained.
pub fn generate_synthetic(cfg: &SynthConfig) -> Result<Dataset, DataError> {
    cfg.validate()?;
    let n = cfg.n;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let noise_sd = COVARIATE_NOISE_VAR.sqrt();

    let mut x = Array2::zeros((n, SYNTHETIC_FEATURES.len()));
    let mut hidden = Array2::zeros((n, HIDDEN.len()));
    let mut w = Array1::zeros(n);
    let mut y = Array1::zeros(n);
    let mut y0 = Array1::zeros(n);
    let mut y1 = Array1::zeros(n);

    for i in 0..n {
        let mut normal = || -> f64 { rng.sample(StandardNormal) };
        let u = [normal(), normal(), normal(), normal(), normal()];
        let [lat, u1, u2, u3, u4] = u;
        let (e1, e2, e3, es) = (
            noise_sd * normal(),
            noise_sd * normal(),
            noise_sd * normal(),
            noise_sd * normal(),
        );
        let x1 = normal() + 0.5 * u2 + e1;
        let x2 = normal() + 0.5 * u3 + e2;
        let x3 = normal() + 0.5 * u4 + e3;
        let s = normal() + 2.0 * u1 + 1.5 * x1 + 1.5 * x2 + es;
        let x4 = 1.0 + normal();
        let x5 = 3.0 + normal();
        let (eps0, eps1) = (normal(), normal());

        let p = sigmoid(-(2.0 - lat - u1 - x3 - x4));
        let treated = rng.random::<f64>() < p;

        let base = 2.0 + 2.0 * lat + 2.0 * u3 + 2.0 * u4 + x4 + x5;
        let po0 = base + eps0;
        let po1 = base + SYNTHETIC_ACE + eps1;

        x.row_mut(i).assign(&ndarray::arr1(&[s, x1, x2, x3, x4, x5]));
        hidden.row_mut(i).assign(&ndarray::arr1(&u));
        w[i] = if treated { 1.0 } else { 0.0 };
        y0[i] = po0;
        y1[i] = po1;
        y[i] = if treated { po1 } else { po0 };
    }

    let ds = Dataset {
        feature_names: SYNTHETIC_FEATURES.iter().map(|s| s.to_string()).collect(),
        x,
        w,
        y,
        y0: Some(y0),
        y1: Some(y1),
        hidden: Some(Hidden {
            names: HIDDEN.iter().map(|s| s.to_string()).collect(),
            values: hidden,
        }),
        row_ids: (0..n).collect(),
        meta: DatasetMeta {
            seed: Some(cfg.seed),
            generator: "civ-synthetic".into(),
            true_ace: Some(SYNTHETIC_ACE),
        },
    };
    ds.validate()?;
    Ok(ds)
}
