use chrono::{NaiveDate, NaiveDateTime};
use serde::{Deserialize, Serialize};

use super::{EmbedError, EmbeddingVec};

/// Window length (in dataset days) and decay coefficient of the smoother.
#[derive(Copy, Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SmootherConfig {
    pub window: usize,
    pub eta: f64,
}

impl Default for SmootherConfig {
    fn default() -> Self {
        Self { window: 30, eta: 0.95 }
    }
}

impl SmootherConfig {
    pub fn validate(&self) -> Result<(), EmbedError> {
        if self.window < 1 {
            return Err(EmbedError::InvalidArgument("window must be >= 1".into()));
        }
        if !(self.eta > 0.0 && self.eta <= 1.0) {
            return Err(EmbedError::InvalidArgument(format!(
                "eta must lie in (0, 1], got {}",
                self.eta
            )));
        }
        Ok(())
    }
}

/// Mean report embedding of one day.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DailyEmbedding {
    pub date: NaiveDate,
    pub vector: EmbeddingVec,
    pub n_reports: usize,
    /// True when the day had no reports and `vector` is the placeholder.
    pub placeholder: bool,
}

pub fn daily_average(
    reports: &[(NaiveDateTime, EmbeddingVec)],
    date: NaiveDate,
    placeholder: &EmbeddingVec,
) -> Result<DailyEmbedding, EmbedError> {
    if reports.is_empty() {
        return Ok(DailyEmbedding {
            date,
            vector: placeholder.clone(),
            n_reports: 0,
            placeholder: true,
        });
    }
    let dim = reports[0].1.dim();
    let mut acc = vec![0.0; dim];
    for (ts, v) in reports {
        if ts.date() != date {
            return Err(EmbedError::InvalidArgument(format!(
                "report at {ts} does not belong to {date}"
            )));
        }
        v.check_dim(dim)?;
        acc.iter_mut().zip(v.as_slice()).for_each(|(a, x)| *a += x);
    }
    let n = reports.len() as f64;
    acc.iter_mut().for_each(|a| *a /= n);
    Ok(DailyEmbedding {
        date,
        vector: EmbeddingVec::new(acc)?,
        n_reports: reports.len(),
        placeholder: false,
    })
}

/// Exponential decay kernel over a window of `len` days.
///
/// Position `i` (1-based, oldest first) gets `eta^(len-i) / sum_j eta^(len-j)`.
pub fn kernel_weights(len: usize, eta: f64) -> Result<Vec<f64>, EmbedError> {
    SmootherConfig { window: len, eta }.validate()?;
    let raw: Vec<f64> = (1..=len).map(|i| eta.powi((len - i) as i32)).collect();
    let total: f64 = raw.iter().sum();
    Ok(raw.into_iter().map(|w| w / total).collect())
}

fn weighted_window(window: &[DailyEmbedding], eta: f64) -> Result<EmbeddingVec, EmbedError> {
    let weights = kernel_weights(window.len(), eta)?;
    let dim = window[0].vector.dim();
    let mut acc = vec![0.0; dim];
    for (w, day) in weights.iter().zip(window) {
        day.vector.check_dim(dim)?;
        acc.iter_mut().zip(day.vector.as_slice()).for_each(|(a, x)| *a += w * x);
    }
    EmbeddingVec::new(acc)
}

/// Smoothed embedding for `date` from the days on or before it.
///
/// `daily` must be sorted by date. The window holds the most recent
/// `min(cfg.window, available)` entries.
pub fn smooth(daily: &[DailyEmbedding], date: NaiveDate, cfg: &SmootherConfig) -> Result<EmbeddingVec, EmbedError> {
    cfg.validate()?;
    let available = daily.partition_point(|d| d.date <= date);
    if available == 0 {
        return Err(EmbedError::BeforeHistory(date));
    }
    let len = cfg.window.min(available);
    weighted_window(&daily[available - len..available], cfg.eta)
}

/// Smoothed embedding for every entry of `daily`.
pub fn smooth_series(
    daily: &[DailyEmbedding],
    cfg: &SmootherConfig,
) -> Result<Vec<(NaiveDate, EmbeddingVec)>, EmbedError> {
    cfg.validate()?;
    (0..daily.len())
        .map(|i| {
            let len = cfg.window.min(i + 1);
            Ok((daily[i].date, weighted_window(&daily[i + 1 - len..=i], cfg.eta)?))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn day(i: u64, v: Vec<f64>) -> DailyEmbedding {
        DailyEmbedding {
            date: NaiveDate::from_ymd_opt(2022, 1, 3).unwrap() + chrono::Days::new(i),
            vector: EmbeddingVec::new(v).unwrap(),
            n_reports: 1,
            placeholder: false,
        }
    }

    #[test]
    fn kernel_examples() {
        assert_eq!(kernel_weights(1, 0.3).unwrap(), vec![1.0]);
        for w in kernel_weights(3, 1.0).unwrap() {
            assert!((w - 1.0 / 3.0).abs() < 1e-15);
        }
        let w = kernel_weights(3, 0.5).unwrap();
        let expected = [1.0 / 7.0, 2.0 / 7.0, 4.0 / 7.0];
        for (a, b) in w.iter().zip(expected) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn kernel_rejects_bad_arguments() {
        assert!(kernel_weights(0, 0.5).is_err());
        assert!(kernel_weights(3, 0.0).is_err());
        assert!(kernel_weights(3, 1.5).is_err());
    }

    #[test]
    fn daily_average_examples() {
        let d = NaiveDate::from_ymd_opt(2022, 1, 3).unwrap();
        let t = d.and_hms_opt(9, 30, 0).unwrap();
        let a = EmbeddingVec::new(vec![1.0, 0.0]).unwrap();
        let b = EmbeddingVec::new(vec![0.0, 1.0]).unwrap();
        let zero = EmbeddingVec::zeros(2);
        let avg = daily_average(&[(t, a.clone()), (t, b)], d, &zero).unwrap();
        assert_eq!(avg.vector.as_slice(), &[0.5, 0.5]);
        assert_eq!(avg.n_reports, 2);
        assert_eq!(daily_average(&[(t, a.clone())], d, &zero).unwrap().vector, a);
        let empty = daily_average(&[], d, &zero).unwrap();
        assert_eq!(empty.vector.as_slice(), &[0.0, 0.0]);
        assert_eq!(empty.n_reports, 0);
        assert!(empty.placeholder);
    }

    #[test]
    fn daily_average_rejects_mismatched_dimension_and_date() {
        let d = NaiveDate::from_ymd_opt(2022, 1, 3).unwrap();
        let t = d.and_hms_opt(9, 30, 0).unwrap();
        let a = EmbeddingVec::new(vec![1.0, 0.0]).unwrap();
        let c = EmbeddingVec::new(vec![1.0, 0.0, 0.0]).unwrap();
        let z = EmbeddingVec::zeros(2);
        assert!(matches!(
            daily_average(&[(t, a.clone()), (t, c)], d, &z),
            Err(EmbedError::Dimension { .. })
        ));
        let other_day = (d + chrono::Days::new(1)).and_hms_opt(9, 0, 0).unwrap();
        assert!(daily_average(&[(other_day, a)], d, &z).is_err());
    }

    #[test]
    fn smooth_examples() {
        let days = vec![day(0, vec![1.0, 0.0]), day(1, vec![0.0, 1.0]), day(2, vec![1.0, 1.0])];
        let last = days[2].date;
        let s = smooth(&days, last, &SmootherConfig { window: 3, eta: 0.5 }).unwrap();
        assert!((s.as_slice()[0] - 5.0 / 7.0).abs() < 1e-12);
        assert!((s.as_slice()[1] - 6.0 / 7.0).abs() < 1e-12);

        let one = smooth(&days, last, &SmootherConfig { window: 1, eta: 0.5 }).unwrap();
        assert_eq!(one, days[2].vector);

        let mean = smooth(&days, last, &SmootherConfig { window: 10, eta: 1.0 }).unwrap();
        assert!((mean.as_slice()[0] - 2.0 / 3.0).abs() < 1e-12);
        assert!((mean.as_slice()[1] - 2.0 / 3.0).abs() < 1e-12);

        // A date between entries uses the entries on or before it.
        let mid = smooth(&days[..2], last, &SmootherConfig { window: 1, eta: 0.5 }).unwrap();
        assert_eq!(mid, days[1].vector);
    }

    #[test]
    fn smooth_before_history_errors() {
        let days = vec![day(5, vec![1.0])];
        let early = NaiveDate::from_ymd_opt(2021, 1, 1).unwrap();
        assert!(matches!(
            smooth(&days, early, &SmootherConfig::default()),
            Err(EmbedError::BeforeHistory(_))
        ));
    }

    #[test]
    fn series_matches_pointwise() {
        let days: Vec<_> = (0..12).map(|i| day(i, vec![i as f64, (i * i) as f64 * 0.1])).collect();
        let cfg = SmootherConfig { window: 4, eta: 0.7 };
        let series = smooth_series(&days, &cfg).unwrap();
        for (i, (d, v)) in series.iter().enumerate() {
            assert_eq!(*d, days[i].date);
            assert_eq!(*v, smooth(&days, *d, &cfg).unwrap());
        }
    }

    fn arb_days(dim: usize) -> impl Strategy<Value = Vec<Vec<f64>>> {
        prop::collection::vec(prop::collection::vec(-3.0f64..3.0, dim), 1..15)
    }

    proptest! {
        #[test]
        fn kernel_sums_to_one(len in 1usize..=200, eta in 0.01f64..=1.0) {
            let w = kernel_weights(len, eta).unwrap();
            prop_assert!((w.iter().sum::<f64>() - 1.0).abs() < 1e-12);
            prop_assert!(w.windows(2).all(|p| p[0] <= p[1]));
        }

        #[test]
        fn smoothing_is_linear(x in arb_days(3), y in arb_days(3), a in -2.0f64..2.0, b in -2.0f64..2.0,
                               window in 1usize..10, eta in 0.1f64..=1.0) {
            let n = x.len().min(y.len());
            let cfg = SmootherConfig { window, eta };
            let dx: Vec<_> = x[..n].iter().enumerate().map(|(i, v)| day(i as u64, v.clone())).collect();
            let dy: Vec<_> = y[..n].iter().enumerate().map(|(i, v)| day(i as u64, v.clone())).collect();
            let dz: Vec<_> = (0..n).map(|i| day(i as u64, x[i].iter().zip(&y[i]).map(|(p, q)| a * p + b * q).collect())).collect();
            let d = dx[n - 1].date;
            let sx = smooth(&dx, d, &cfg).unwrap();
            let sy = smooth(&dy, d, &cfg).unwrap();
            let sz = smooth(&dz, d, &cfg).unwrap();
            for k in 0..3 {
                let lhs = sz.as_slice()[k];
                let rhs = a * sx.as_slice()[k] + b * sy.as_slice()[k];
                prop_assert!((lhs - rhs).abs() < 1e-9, "{} vs {}", lhs, rhs);
            }
        }

        #[test]
        fn smoothed_norm_bounded_by_inputs(x in arb_days(4), window in 1usize..20, eta in 0.05f64..=1.0) {
            let days: Vec<_> = x.iter().enumerate().map(|(i, v)| day(i as u64, v.clone())).collect();
            let d = days.last().unwrap().date;
            let s = smooth(&days, d, &SmootherConfig { window, eta }).unwrap();
            let max_norm = days.iter().map(|x| x.vector.norm()).fold(0.0, f64::max);
            prop_assert!(s.norm() <= max_norm + 1e-12);
        }
    }
}
