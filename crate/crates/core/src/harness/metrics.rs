use super::HarnessError;

/// Absolute error of an average-effect estimate.
pub fn metric_ace_error(estimated: f64, truth: f64) -> f64 {
    (truth - estimated).abs()
}

/// Root mean squared difference between predicted and realized individual
/// effects `y1 - y0`.
pub fn metric_pehe(cace_hat: &[f64], y1: Option<&[f64]>, y0: Option<&[f64]>) -> Result<f64, HarnessError> {
    let (Some(y1), Some(y0)) = (y1, y0) else {
        return Err(HarnessError::MetricUnavailable("potential outcomes are not known for this data"));
    };
    let n = cace_hat.len();
    if y1.len() != n || y0.len() != n {
        return Err(HarnessError::Invalid(format!(
            "length mismatch: {n} effects, {} and {} potential outcomes",
            y1.len(),
            y0.len()
        )));
    }
    if n == 0 {
        return Err(HarnessError::Invalid("no rows to evaluate".into()));
    }
    let sse: f64 = (0..n).map(|i| ((y1[i] - y0[i]) - cace_hat[i]).powi(2)).sum();
    Ok((sse / n as f64).sqrt())
}

/// Mean and sample standard deviation (`n - 1`); the latter is `None` for a
/// single value.
pub fn mean_std(values: &[f64]) -> (f64, Option<f64>) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let std = (values.len() > 1).then(|| {
        let ss: f64 = values.iter().map(|v| (v - mean).powi(2)).sum();
        (ss / (n - 1.0)).sqrt()
    });
    (mean, std)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ace_error_examples() {
        assert_eq!(metric_ace_error(2.5, 2.0), 0.5);
        assert_eq!(metric_ace_error(2.0, 2.0), 0.0);
        assert_eq!(metric_ace_error(1.0, 4.0), metric_ace_error(4.0, 1.0));
    }

    #[test]
    fn pehe_hand_computed() {
        // effects (1, 2, 3), predictions (1, 1, 5): sqrt((0 + 1 + 4) / 3)
        let y1 = [2.0, 3.0, 4.0];
        let y0 = [1.0, 1.0, 1.0];
        let v = metric_pehe(&[1.0, 1.0, 5.0], Some(&y1), Some(&y0)).unwrap();
        assert!((v - (5.0f64 / 3.0).sqrt()).abs() < 1e-15);
        assert_eq!(metric_pehe(&[1.0, 2.0, 3.0], Some(&y1), Some(&y0)).unwrap(), 0.0);
    }

    #[test]
    fn pehe_needs_potential_outcomes() {
        assert!(matches!(
            metric_pehe(&[1.0], None, None),
            Err(HarnessError::MetricUnavailable(_))
        ));
        assert!(metric_pehe(&[1.0], Some(&[1.0, 2.0]), Some(&[0.0, 0.0])).is_err());
    }

    #[test]
    fn sample_std() {
        let (m, s) = mean_std(&[1.0, 2.0, 3.0, 4.0]);
        assert_eq!(m, 2.5);
        assert!((s.unwrap() - (5.0f64 / 3.0).sqrt()).abs() < 1e-15);
        assert_eq!(mean_std(&[7.0]), (7.0, None));
    }
}
