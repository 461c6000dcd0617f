use serde::{Deserialize, Serialize};

use super::tape::Matrix;
use super::NumError;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            lr: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// Bias-corrected adaptive-moment optimizer state for a fixed parameter list.
#[derive(Clone, Debug)]
pub struct AdamState {
    pub config: AdamConfig,
    first: Vec<Matrix>,
    second: Vec<Matrix>,
    step: u64,
}

impl AdamState {
    pub fn new<'a>(config: AdamConfig, params: impl IntoIterator<Item = &'a Matrix>) -> Self {
        let (first, second) = params
            .into_iter()
            .map(|p| (Matrix::zeros(p.dim()), Matrix::zeros(p.dim())))
            .unzip();
        Self {
            config,
            first,
            second,
            step: 0,
        }
    }

    pub fn steps_taken(&self) -> u64 {
        self.step
    }

    /// Applies one update. Nothing is modified when a shape or finiteness
    /// check fails.
    pub fn step(&mut self, params: &mut [&mut Matrix], grads: &[Matrix]) -> Result<(), NumError> {
        if params.len() != self.first.len() || grads.len() != self.first.len() {
            return Err(NumError::ParamCount {
                expected: self.first.len(),
                actual: params.len().min(grads.len()),
            });
        }
        for (i, ((p, g), m)) in params.iter().zip(grads).zip(&self.first).enumerate() {
            if p.dim() != g.dim() || p.dim() != m.dim() {
                return Err(NumError::ShapeMismatch {
                    op: "adam_step",
                    expected: m.dim(),
                    actual: g.dim(),
                });
            }
            if g.iter().any(|v| !v.is_finite()) {
                return Err(NumError::NonFinite(format!("gradient of parameter tensor {i}")));
            }
        }

        self.step += 1;
        let AdamConfig {
            lr,
            beta1,
            beta2,
            eps,
        } = self.config;
        let bc1 = 1.0 - beta1.powi(self.step as i32);
        let bc2 = 1.0 - beta2.powi(self.step as i32);
        for ((p, g), (m, v)) in params
            .iter_mut()
            .zip(grads)
            .zip(self.first.iter_mut().zip(self.second.iter_mut()))
        {
            ndarray::Zip::from(&mut **p)
                .and(g)
                .and(m)
                .and(v)
                .for_each(|p, &g, m, v| {
                    *m = beta1 * *m + (1.0 - beta1) * g;
                    *v = beta2 * *v + (1.0 - beta2) * g * g;
                    let m_hat = *m / bc1;
                    let v_hat = *v / bc2;
                    *p -= lr * m_hat / (v_hat.sqrt() + eps);
                });
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn zero_gradient_leaves_params() {
        let mut p = array![[1.0, -2.0]];
        let mut st = AdamState::new(AdamConfig::default(), [&p]);
        st.step(&mut [&mut p], &[array![[0.0, 0.0]]]).unwrap();
        assert_eq!(p, array![[1.0, -2.0]]);
        assert_eq!(st.steps_taken(), 1);
    }

    #[test]
    fn constant_gradient_moves_against_sign() {
        let mut p = array![[0.0]];
        let mut st = AdamState::new(AdamConfig::default(), [&p]);
        let mut prev = p[[0, 0]];
        for _ in 0..200 {
            st.step(&mut [&mut p], &[array![[2.5]]]).unwrap();
            assert!(p[[0, 0]] < prev);
            prev = p[[0, 0]];
        }
    }

    #[test]
    fn single_step_matches_hand_computation() {
        // loss = (p - 3)^2 at p = 1: g = -4.
        // m = 0.1 * -4 = -0.4, v = 0.001 * 16 = 0.016
        // m_hat = -4, v_hat = 16, update = -lr * -4 / (4 + eps)
        let mut p = array![[1.0]];
        let cfg = AdamConfig::default();
        let mut st = AdamState::new(cfg, [&p]);
        st.step(&mut [&mut p], &[array![[-4.0]]]).unwrap();
        let expected = 1.0 + 1e-3 * 4.0 / (4.0 + 1e-8);
        assert!((p[[0, 0]] - expected).abs() < 1e-15);
    }

    #[test]
    fn nan_gradient_aborts_without_update() {
        let mut p = array![[1.0]];
        let mut st = AdamState::new(AdamConfig::default(), [&p]);
        let err = st.step(&mut [&mut p], &[array![[f64::NAN]]]).unwrap_err();
        assert!(matches!(err, NumError::NonFinite(_)));
        assert_eq!(p, array![[1.0]]);
        assert_eq!(st.steps_taken(), 0);
    }
}
