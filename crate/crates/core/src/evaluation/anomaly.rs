use chrono::NaiveDate;
use nalgebra::DMatrix;

use crate::data::{AssetId, PanelSet};
use crate::portfolio::{decile_assign, ls_weights, realize, LegWeighting, PortfolioKind, PortfolioWeights};

use super::EvalError;

/// Characteristic-sorted test portfolios on a shared calendar.
#[derive(Clone, Debug, PartialEq)]
pub struct AnomalyPortfolioSet {
    pub ids: Vec<String>,
    /// Holding dates.
    pub dates: Vec<NaiveDate>,
    /// `dates × ids`
    pub returns: DMatrix<f64>,
}

impl AnomalyPortfolioSet {
    /// Keep only the given holding dates, in order.
    pub fn restrict(&self, dates: &[NaiveDate]) -> Result<Self, EvalError> {
        let rows: Vec<usize> = dates
            .iter()
            .map(|d| {
                self.dates
                    .binary_search(d)
                    .map_err(|_| EvalError::InvalidArgument(format!("no anomaly returns on {d}")))
            })
            .collect::<Result<_, _>>()?;
        Ok(Self {
            ids: self.ids.clone(),
            dates: dates.to_vec(),
            returns: DMatrix::from_fn(rows.len(), self.ids.len(), |r, c| self.returns[(rows[r], c)]),
        })
    }
}

/// Equal-weighted high-minus-low decile spread for every factor
/// characteristic, formed on each of `formation` dates and held one day.
pub fn anomaly_portfolios(panels: &PanelSet, formation: &[NaiveDate]) -> Result<AnomalyPortfolioSet, EvalError> {
    let cal = panels.calendar();
    let factors = &panels.factors;
    let ret = &panels.returns;
    let mut series = Vec::with_capacity(factors.n_factors());
    for j in 0..factors.n_factors() {
        let mut w = PortfolioWeights::new(PortfolioKind::EwLs);
        for date in formation {
            let Some(d) = cal.index_of(*date) else {
                continue;
            };
            let chars: Vec<(AssetId, f64)> = (0..ret.n_assets())
                .filter(|&a| ret.mask[[d, a]])
                .filter_map(|a| {
                    let fa = factors.asset_index(ret.assets[a])?;
                    let v = factors.values[[d, fa, j]];
                    v.is_finite().then_some((ret.assets[a], v))
                })
                .collect();
            let Ok(assign) = decile_assign(&chars) else {
                continue;
            };
            w.dates
                .insert(*date, ls_weights(&assign, LegWeighting::Equal, |_| None)?);
        }
        series.push(realize(&w, ret)?.returns);
    }
    let Some(first) = series.first() else {
        return Err(EvalError::InvalidArgument(
            "no factor characteristics to sort on".into(),
        ));
    };
    let dates = first.dates.clone();
    if series.iter().any(|s| s.dates != dates) {
        return Err(EvalError::InvalidArgument(
            "anomaly portfolios on different calendars".into(),
        ));
    }
    Ok(AnomalyPortfolioSet {
        ids: factors.factor_names.iter().map(|n| format!("{n}_hml")).collect(),
        returns: DMatrix::from_fn(dates.len(), series.len(), |r, c| series[c].returns[r]),
        dates,
    })
}
