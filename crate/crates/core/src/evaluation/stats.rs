use super::EvalError;

/// Annualized Sharpe ratio of `returns` in excess of `rf` (zero when absent),
/// using the sample standard deviation.
pub fn sharpe(returns: &[f64], rf: Option<&[f64]>, periods_per_year: u32) -> Result<f64, EvalError> {
    if returns.len() < 2 {
        return Err(EvalError::InvalidArgument(format!(
            "sharpe needs 2 observations, got {}",
            returns.len()
        )));
    }
    let excess: Vec<f64> = match rf {
        Some(rf) if rf.len() != returns.len() => {
            return Err(EvalError::InvalidArgument(format!(
                "{} returns against {} risk-free rates",
                returns.len(),
                rf.len()
            )))
        }
        Some(rf) => returns.iter().zip(rf).map(|(r, f)| r - f).collect(),
        None => returns.to_vec(),
    };
    let n = excess.len() as f64;
    let mean = excess.iter().sum::<f64>() / n;
    let var = excess.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    let sd = var.sqrt();
    if !(sd > 1e-15 * mean.abs().max(f64::MIN_POSITIVE)) {
        return Err(EvalError::ZeroVariance);
    }
    Ok(mean / sd * f64::from(periods_per_year).sqrt())
}

/// Largest peak-to-trough decline of a value path. Percent mode divides each
/// drop by its running peak and scales to 0..100.
pub fn max_drawdown(values: &[f64], as_percent: bool) -> f64 {
    let mut peak = f64::NEG_INFINITY;
    let mut worst: f64 = 0.0;
    for &v in values {
        peak = peak.max(v);
        let drop = if as_percent {
            (peak - v) / peak * 100.0
        } else {
            peak - v
        };
        worst = worst.max(drop);
    }
    worst
}

/// Value path from 1 compounding simple returns; the leading 1 is included.
pub fn value_path(returns: &[f64]) -> Vec<f64> {
    let mut path = Vec::with_capacity(returns.len() + 1);
    path.push(1.0);
    let mut v = 1.0;
    for r in returns {
        v *= 1.0 + r;
        path.push(v);
    }
    path
}

/// Drawdown of a return series compounded from 1.
pub fn max_drawdown_returns(returns: &[f64], as_percent: bool) -> f64 {
    max_drawdown(&value_path(returns), as_percent)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn two_point_sharpe_by_hand() {
        let sr = sharpe(&[0.01, 0.03], None, 1).unwrap();
        assert!((sr - std::f64::consts::SQRT_2).abs() < 1e-10);
    }

    #[test]
    fn annualization_scales_by_root_periods() {
        let r = [0.01, -0.02, 0.015, 0.004];
        let a = sharpe(&r, None, 1).unwrap();
        let b = sharpe(&r, None, 252).unwrap();
        assert!((b - a * 252f64.sqrt()).abs() < 1e-12);
    }

    #[test]
    fn constant_returns_have_no_sharpe() {
        assert!(matches!(sharpe(&[0.01; 5], None, 252), Err(EvalError::ZeroVariance)));
        assert!(sharpe(&[0.01], None, 252).is_err());
    }

    #[test]
    fn shifting_rf_and_returns_together_is_neutral() {
        let r = [0.01, 0.03, -0.02, 0.005];
        let base = sharpe(&r, None, 252).unwrap();
        let shifted: Vec<f64> = r.iter().map(|x| x + 0.004).collect();
        let sr = sharpe(&shifted, Some(&[0.004; 4]), 252).unwrap();
        assert!((sr - base).abs() < 1e-10);
    }

    #[test]
    fn drawdown_paths_by_hand() {
        assert!((max_drawdown(&[100.0, 120.0, 90.0, 110.0], true) - 25.0).abs() < 1e-10);
        assert_eq!(max_drawdown(&[1.0, 2.0, 3.0], true), 0.0);
        assert!((max_drawdown(&[100.0, 50.0], true) - 50.0).abs() < 1e-10);
        assert_eq!(max_drawdown(&[100.0, 120.0, 90.0, 110.0], false), 30.0);
    }

    #[test]
    fn drawdown_from_returns() {
        // 1 -> 1.2 -> 0.9
        let mdd = max_drawdown_returns(&[0.2, -0.25], true);
        assert!((mdd - 25.0).abs() < 1e-10);
    }

    proptest! {
        #[test]
        fn sharpe_is_odd(r in prop::collection::vec(-0.1f64..0.1, 3..50)) {
            if let Ok(a) = sharpe(&r, None, 252) {
                let neg: Vec<f64> = r.iter().map(|x| -x).collect();
                let b = sharpe(&neg, None, 252).unwrap();
                prop_assert!((a + b).abs() < 1e-10 * a.abs().max(1.0));
            }
        }

        #[test]
        fn percent_drawdown_is_scale_free(
            path in prop::collection::vec(0.1f64..10.0, 1..60),
            scale in 0.01f64..100.0,
        ) {
            let scaled: Vec<f64> = path.iter().map(|v| v * scale).collect();
            let a = max_drawdown(&path, true);
            prop_assert!((0.0..=100.0).contains(&a));
            prop_assert!((a - max_drawdown(&scaled, true)).abs() < 1e-9);
        }
    }
}
