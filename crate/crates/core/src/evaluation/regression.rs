use nalgebra::{DMatrix, DVector};
use statrs::distribution::{ContinuousCDF, FisherSnedecor};

use super::EvalError;

/// Intercept estimate for one test portfolio.
#[derive(Clone, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct AlphaStat {
    pub id: String,
    pub alpha: f64,
    pub t: f64,
    /// `|alpha| / sqrt(mean(R²))`
    pub normalized_alpha: f64,
}

/// Time-series regressions of every test portfolio on the same factors.
#[derive(Clone, Debug, PartialEq)]
pub struct AlphaFit {
    pub stats: Vec<AlphaStat>,
    /// `T × N`
    pub residuals: DMatrix<f64>,
    /// `(K+1) × N`, intercept first.
    pub coefficients: DMatrix<f64>,
}

/// Relative tolerance below which a regressor counts as spanned by earlier ones.
const COLLINEAR_TOL: f64 = 1e-10;

/// Regress each column of `portfolios` (`T × N`) on an intercept and the
/// columns of `factors` (`T × K`). `nw_lags` switches the intercept standard
/// error to Newey-West with Bartlett weights.
pub fn alpha_stats(
    ids: &[String],
    portfolios: &DMatrix<f64>,
    factor_names: &[String],
    factors: &DMatrix<f64>,
    nw_lags: Option<usize>,
) -> Result<AlphaFit, EvalError> {
    let (t, n) = portfolios.shape();
    let k = factors.ncols();
    if ids.len() != n || factor_names.len() != k || factors.nrows() != t {
        return Err(EvalError::InvalidArgument(format!(
            "{} ids for {n} portfolios, {} names for {k} factors, {} factor rows for {t} dates",
            ids.len(),
            factor_names.len(),
            factors.nrows()
        )));
    }
    if t < k + 2 {
        return Err(EvalError::InvalidArgument(format!(
            "{t} observations for {k} factors; need at least {}",
            k + 2
        )));
    }
    let mut x = DMatrix::from_element(t, k + 1, 1.0);
    x.columns_mut(1, k).copy_from(factors);
    let mut names = vec!["intercept".to_string()];
    names.extend(factor_names.iter().cloned());
    check_rank(&x, &names)?;

    let xtx = x.transpose() * &x;
    let xtx_inv = xtx
        .clone()
        .cholesky()
        .map(|c| c.inverse())
        .ok_or_else(|| EvalError::Collinear(names.clone()))?;
    let svd = x.clone().svd(true, true);
    let mut coefficients = DMatrix::zeros(k + 1, n);
    let mut residuals = DMatrix::zeros(t, n);
    let mut stats = Vec::with_capacity(n);
    for (i, id) in ids.iter().enumerate() {
        let y = portfolios.column(i).into_owned();
        let beta = svd
            .solve(&y, f64::EPSILON)
            .map_err(|_| EvalError::Collinear(names.clone()))?;
        let u = &y - &x * &beta;
        let alpha = beta[0];
        let ssr = u.norm_squared();
        let var0 = match nw_lags {
            None => ssr / (t - k - 1) as f64 * xtx_inv[(0, 0)],
            Some(lags) => newey_west(&x, &u, &xtx_inv, lags)[(0, 0)],
        };
        let rms = (y.norm_squared() / t as f64).sqrt();
        let se = var0.max(0.0).sqrt();
        let t_stat = if se > COLLINEAR_TOL * rms.max(f64::MIN_POSITIVE) {
            alpha / se
        } else if alpha.abs() <= COLLINEAR_TOL * rms.max(f64::MIN_POSITIVE) {
            0.0
        } else {
            return Err(EvalError::InvalidArgument(format!(
                "{}: exact fit with nonzero intercept",
                id
            )));
        };
        stats.push(AlphaStat {
            id: id.clone(),
            alpha,
            t: t_stat,
            normalized_alpha: if rms > 0.0 { alpha.abs() / rms } else { 0.0 },
        });
        coefficients.set_column(i, &beta);
        residuals.set_column(i, &u);
    }
    Ok(AlphaFit {
        stats,
        residuals,
        coefficients,
    })
}

/// Name every column that is (numerically) spanned by the columns before it.
fn check_rank(x: &DMatrix<f64>, names: &[String]) -> Result<(), EvalError> {
    let mut basis: Vec<DVector<f64>> = Vec::new();
    let mut collinear = Vec::new();
    for (j, col) in x.column_iter().enumerate() {
        let orig = col.into_owned();
        let mut v = orig.clone();
        for b in &basis {
            let p = b.dot(&v);
            v -= b * p;
        }
        let norm = v.norm();
        if norm <= COLLINEAR_TOL * orig.norm().max(f64::MIN_POSITIVE) {
            collinear.push(names[j].clone());
        } else {
            basis.push(v / norm);
        }
    }
    if collinear.is_empty() {
        Ok(())
    } else {
        Err(EvalError::Collinear(collinear))
    }
}

/// Bartlett-weighted HAC covariance of OLS coefficients.
fn newey_west(x: &DMatrix<f64>, u: &DVector<f64>, xtx_inv: &DMatrix<f64>, lags: usize) -> DMatrix<f64> {
    let (t, p) = x.shape();
    let g: Vec<DVector<f64>> = (0..t).map(|s| x.row(s).transpose() * u[s]).collect();
    let mut s = DMatrix::zeros(p, p);
    for gs in &g {
        s += gs * gs.transpose();
    }
    for l in 1..=lags.min(t.saturating_sub(1)) {
        let w = 1.0 - l as f64 / (lags + 1) as f64;
        let mut gamma = DMatrix::zeros(p, p);
        for s_ in l..t {
            gamma += &g[s_] * g[s_ - l].transpose();
        }
        s += (&gamma + gamma.transpose()) * w;
    }
    xtx_inv * s * xtx_inv
}

/// Joint test that every intercept is zero. `resid_cov` is `N × N`,
/// `factor_cov` is `K × K`, `t` the number of observations.
pub fn grs_test(
    alphas: &[f64],
    resid_cov: &DMatrix<f64>,
    factor_means: &[f64],
    factor_cov: &DMatrix<f64>,
    t: usize,
) -> Result<(f64, f64), EvalError> {
    let n = alphas.len();
    let k = factor_means.len();
    if resid_cov.shape() != (n, n) || factor_cov.shape() != (k, k) {
        return Err(EvalError::InvalidArgument("covariance shapes do not match".into()));
    }
    if n == 0 || t <= n + k {
        return Err(EvalError::InvalidArgument(format!(
            "GRS needs T > N + K, got T={t}, N={n}, K={k}"
        )));
    }
    let a = DVector::from_column_slice(alphas);
    let sigma = resid_cov
        .clone()
        .cholesky()
        .ok_or_else(|| EvalError::NotPositiveDefinite("residual covariance".into()))?;
    let quad_a = a.dot(&sigma.solve(&a));
    let quad_m = if k == 0 {
        0.0
    } else {
        let mu = DVector::from_column_slice(factor_means);
        let omega = factor_cov
            .clone()
            .cholesky()
            .ok_or_else(|| EvalError::NotPositiveDefinite("factor covariance".into()))?;
        mu.dot(&omega.solve(&mu))
    };
    let (tf, nf, kf) = (t as f64, n as f64, k as f64);
    let stat = (tf / nf) * ((tf - nf - kf) / (tf - kf - 1.0)) * quad_a / (1.0 + quad_m);
    let dist = FisherSnedecor::new(nf, tf - nf - kf)
        .map_err(|e| EvalError::InvalidArgument(format!("F distribution: {e}")))?;
    Ok((stat, dist.sf(stat)))
}

/// Moments feeding the GRS statistic: residual covariance with a `T−K−1`
/// denominator, factor means, and factor covariance with a `T` denominator.
pub fn grs_from_fit(fit: &AlphaFit, factors: &DMatrix<f64>) -> Result<(f64, f64), EvalError> {
    let (t, k) = factors.shape();
    let u = &fit.residuals;
    let sigma = u.transpose() * u / (t as f64 - k as f64 - 1.0);
    let means: Vec<f64> = (0..k).map(|j| factors.column(j).mean()).collect();
    let mut centered = factors.clone();
    for (j, m) in means.iter().enumerate() {
        centered.column_mut(j).add_scalar_mut(-m);
    }
    let omega = centered.transpose() * &centered / t as f64;
    let alphas: Vec<f64> = fit.stats.iter().map(|s| s.alpha).collect();
    grs_test(&alphas, &sigma, &means, &omega, t)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, StandardNormal};
    use statrs::distribution::StudentsT;

    fn normal(rng: &mut ChaCha8Rng) -> f64 {
        StandardNormal.sample(rng)
    }

    fn names(prefix: &str, n: usize) -> Vec<String> {
        (0..n).map(|i| format!("{prefix}{i}")).collect()
    }

    #[test]
    fn spanned_portfolio_has_zero_alpha() {
        let f = DMatrix::from_column_slice(
            6,
            2,
            &[
                0.01, -0.02, 0.03, 0.0, 0.015, -0.01, 0.002, 0.004, -0.003, 0.01, 0.0, 0.007,
            ],
        );
        let y = f.column(0) * 1.5 - f.column(1) * 0.5;
        let y = DMatrix::from_columns(&[y]);
        let fit = alpha_stats(&names("p", 1), &y, &names("f", 2), &f, None).unwrap();
        assert!(fit.stats[0].alpha.abs() < 1e-10);
        assert_eq!(fit.stats[0].t, 0.0);
    }

    #[test]
    fn simple_regression_closed_form() {
        let xs = [1.0, 2.0, 3.0, 4.0, 5.0];
        let ys = [2.1, 3.9, 6.2, 7.8, 10.1];
        let n = 5.0;
        let xbar = xs.iter().sum::<f64>() / n;
        let ybar = ys.iter().sum::<f64>() / n;
        let sxx: f64 = xs.iter().map(|x| (x - xbar).powi(2)).sum();
        let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - xbar) * (y - ybar)).sum();
        let b = sxy / sxx;
        let a = ybar - b * xbar;
        let ssr: f64 = xs.iter().zip(&ys).map(|(x, y)| (y - a - b * x).powi(2)).sum();
        let s2 = ssr / (n - 2.0);
        let se_a = (s2 * (1.0 / n + xbar * xbar / sxx)).sqrt();

        let f = DMatrix::from_column_slice(5, 1, &xs);
        let y = DMatrix::from_column_slice(5, 1, &ys);
        let fit = alpha_stats(&names("p", 1), &y, &names("f", 1), &f, None).unwrap();
        assert!((fit.stats[0].alpha - a).abs() < 1e-10);
        assert!((fit.stats[0].t - a / se_a).abs() < 1e-10);
        let rms = (ys.iter().map(|y| y * y).sum::<f64>() / n).sqrt();
        assert!((fit.stats[0].normalized_alpha - a.abs() / rms).abs() < 1e-10);
    }

    #[test]
    fn doubling_returns_keeps_normalized_alpha() {
        let f = DMatrix::from_column_slice(5, 1, &[0.01, -0.02, 0.0, 0.03, 0.01]);
        let y = DMatrix::from_column_slice(5, 1, &[0.02, -0.01, 0.005, 0.04, 0.0]);
        let a = alpha_stats(&names("p", 1), &y, &names("f", 1), &f, None).unwrap();
        let b = alpha_stats(&names("p", 1), &(&y * 2.0), &names("f", 1), &f, None).unwrap();
        assert!((a.stats[0].normalized_alpha - b.stats[0].normalized_alpha).abs() < 1e-12);
        assert!((a.stats[0].t - b.stats[0].t).abs() < 1e-10);
    }

    #[test]
    fn collinear_columns_are_named() {
        let f0 = [0.01, -0.02, 0.0, 0.03, 0.01, 0.02];
        let f = DMatrix::from_fn(6, 3, |r, c| match c {
            0 => f0[r],
            1 => 2.0 * f0[r],
            _ => (r as f64).sin(),
        });
        let y = DMatrix::from_element(6, 1, 0.01);
        match alpha_stats(&names("p", 1), &y, &names("f", 3), &f, None) {
            Err(EvalError::Collinear(cols)) => assert_eq!(cols, vec!["f1".to_string()]),
            other => panic!("{other:?}"),
        }
        let flat = DMatrix::from_element(6, 1, 0.5);
        match alpha_stats(&names("p", 1), &y, &names("f", 1), &flat, None) {
            Err(EvalError::Collinear(cols)) => assert_eq!(cols, vec!["f0".to_string()]),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn too_few_observations() {
        let f = DMatrix::from_element(3, 2, 0.0);
        let y = DMatrix::from_element(3, 1, 0.0);
        assert!(alpha_stats(&names("p", 1), &y, &names("f", 2), &f, None).is_err());
    }

    #[test]
    fn residuals_are_orthogonal_to_regressors() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let t = 80;
        let f = DMatrix::from_fn(t, 3, |_, _| normal(&mut rng));
        let y = DMatrix::from_fn(t, 4, |_, _| normal(&mut rng));
        let fit = alpha_stats(&names("p", 4), &y, &names("f", 3), &f, None).unwrap();
        let mut x = DMatrix::from_element(t, 4, 1.0);
        x.columns_mut(1, 3).copy_from(&f);
        let g = x.transpose() * &fit.residuals;
        assert!(g.amax() < 1e-10, "{}", g.amax());
    }

    #[test]
    fn newey_west_zero_lags_for_mean_is_white() {
        // intercept-only regression: HC0 variance of the mean is sum(u^2)/T^2
        let y = [0.01, 0.03, -0.02, 0.005, 0.012, -0.007];
        let t = y.len() as f64;
        let m = y.iter().sum::<f64>() / t;
        let var = y.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (t * t);
        let f = DMatrix::zeros(6, 0);
        let fit = alpha_stats(&names("p", 1), &DMatrix::from_column_slice(6, 1, &y), &[], &f, Some(0)).unwrap();
        assert!((fit.stats[0].t - m / var.sqrt()).abs() < 1e-10);
    }

    #[test]
    fn newey_west_lag_one_by_hand() {
        let y = [0.01, 0.03, -0.02, 0.005, 0.012, -0.007];
        let t = y.len() as f64;
        let m = y.iter().sum::<f64>() / t;
        let u: Vec<f64> = y.iter().map(|v| v - m).collect();
        let g0: f64 = u.iter().map(|x| x * x).sum();
        let g1: f64 = (1..u.len()).map(|i| u[i] * u[i - 1]).sum();
        let var = (g0 + 2.0 * 0.5 * g1) / (t * t);
        let fit = alpha_stats(
            &names("p", 1),
            &DMatrix::from_column_slice(6, 1, &y),
            &[],
            &DMatrix::zeros(6, 0),
            Some(1),
        )
        .unwrap();
        assert!((fit.stats[0].t - m / var.sqrt()).abs() < 1e-10);
    }

    #[test]
    fn zero_alphas_give_zero_statistic() {
        let (stat, p) = grs_test(
            &[0.0, 0.0],
            &DMatrix::identity(2, 2),
            &[0.01],
            &DMatrix::from_element(1, 1, 0.04),
            30,
        )
        .unwrap();
        assert_eq!(stat, 0.0);
        assert_eq!(p, 1.0);
    }

    #[test]
    fn single_asset_grs_is_squared_t() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let t = 40;
        let f = DMatrix::from_fn(t, 1, |_, _| 0.01 + 0.02 * normal(&mut rng));
        let y = DMatrix::from_fn(t, 1, |r, _| {
            let e = normal(&mut rng);
            0.004 + 0.8 * f[(r, 0)] + 0.01 * e
        });
        let fit = alpha_stats(&names("p", 1), &y, &names("f", 1), &f, None).unwrap();
        let (stat, p) = grs_from_fit(&fit, &f).unwrap();
        let t_stat = fit.stats[0].t;
        assert!((stat - t_stat * t_stat).abs() < 1e-10 * stat.max(1.0));
        let tdist = StudentsT::new(0.0, 1.0, (t - 2) as f64).unwrap();
        let two_sided = 2.0 * tdist.sf(t_stat.abs());
        assert!((p - two_sided).abs() < 1e-10);
    }

    #[test]
    fn grs_is_scale_invariant() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let t = 60;
        let f = DMatrix::from_fn(t, 2, |_, _| normal(&mut rng));
        let y = DMatrix::from_fn(t, 3, |_, _| 0.1 + normal(&mut rng));
        let run = |c: f64| {
            let fit = alpha_stats(&names("p", 3), &(&y * c), &names("f", 2), &(&f * c), None).unwrap();
            grs_from_fit(&fit, &(&f * c)).unwrap()
        };
        let (a, _) = run(1.0);
        let (b, _) = run(0.01);
        assert!((a - b).abs() < 1e-9 * a);
    }

    #[test]
    fn grs_rejects_bad_shapes() {
        let cov = DMatrix::identity(2, 2);
        let om = DMatrix::identity(1, 1);
        assert!(grs_test(&[0.1, 0.2], &cov, &[0.0], &om, 3).is_err());
        let bad = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 1.0]);
        assert!(matches!(
            grs_test(&[0.1, 0.2], &bad, &[0.0], &om, 30),
            Err(EvalError::NotPositiveDefinite(_))
        ));
    }
}
