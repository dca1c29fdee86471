use nalgebra::{DMatrix, DVector};

use super::PortfolioError;

/// Raw and normalized mean-second-moment weights.
#[derive(Clone, Debug, PartialEq)]
pub struct Tangency {
    /// `(E[R Rᵀ] + εI)⁻¹ E[R]`
    pub raw: Vec<f64>,
    /// `raw` scaled to unit gross exposure; all zero when `raw` is.
    pub weights: Vec<f64>,
}

/// Ridge added to the second-moment diagonal, relative to its mean diagonal.
pub const RIDGE: f64 = 1e-6;

/// Weights from a window of predicted excess returns, `window[t][i]` for
/// date `t` and asset `i`, `NaN` where absent. Moments use every date on
/// which the asset (or pair) has predictions.
pub fn tangency_weights(window: &[Vec<f64>]) -> Result<Tangency, PortfolioError> {
    let n = window.first().map_or(0, Vec::len);
    if n == 0 {
        return Err(PortfolioError::InvalidArgument("no assets in window".into()));
    }
    if window.iter().any(|row| row.len() != n) {
        return Err(PortfolioError::InvalidArgument("ragged prediction window".into()));
    }
    let mut mean = DVector::zeros(n);
    let mut second = DMatrix::zeros(n, n);
    for i in 0..n {
        let obs: Vec<f64> = window.iter().map(|r| r[i]).filter(|v| v.is_finite()).collect();
        if obs.len() < 2 {
            return Err(PortfolioError::InsufficientData(format!(
                "asset {i} has {} predictions in the window, need 2",
                obs.len()
            )));
        }
        mean[i] = obs.iter().sum::<f64>() / obs.len() as f64;
        for j in 0..=i {
            let (mut sum, mut count) = (0.0, 0usize);
            for r in window {
                if r[i].is_finite() && r[j].is_finite() {
                    sum += r[i] * r[j];
                    count += 1;
                }
            }
            let m = if count == 0 { 0.0 } else { sum / count as f64 };
            second[(i, j)] = m;
            second[(j, i)] = m;
        }
    }
    let ridge = RIDGE * second.trace() / n as f64;
    for i in 0..n {
        second[(i, i)] += ridge;
    }
    let raw = match second.clone().cholesky() {
        Some(c) => c.solve(&mean),
        None => {
            let sv = second.clone().singular_values();
            let cond = sv.max() / sv.min();
            second
                .lu()
                .solve(&mean)
                .filter(|x| x.iter().all(|v| v.is_finite()))
                .ok_or(PortfolioError::Singular(format!(
                    "second-moment matrix condition number {cond:.3e}"
                )))?
        }
    };
    let gross: f64 = raw.iter().map(|w| w.abs()).sum();
    let weights = if gross > 0.0 {
        raw.iter().map(|w| w / gross).collect()
    } else {
        vec![0.0; n]
    };
    Ok(Tangency {
        raw: raw.iter().copied().collect(),
        weights,
    })
}
