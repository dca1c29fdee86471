//! Performance and pricing-error statistics for realized portfolios.

mod anomaly;
mod plot;
mod regression;
mod stats;

use std::fmt::Write as _;
use std::path::Path;
use std::str::FromStr;

use chrono::NaiveDate;
use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::data::{DateRange, PanelSet};
use crate::portfolio::{
    construct, decile_cumulative, realize, Compounding, PortfolioConfig, PortfolioError, PortfolioKind,
    PortfolioReturns, PortfolioSet,
};
use crate::pricing_net::PredictionPanel;

pub use anomaly::{anomaly_portfolios, AnomalyPortfolioSet};
pub use plot::line_chart_svg;
pub use regression::{alpha_stats, grs_from_fit, grs_test, AlphaFit, AlphaStat};
pub use stats::{max_drawdown, max_drawdown_returns, sharpe, value_path};

#[derive(Debug, thiserror::Error)]
pub enum EvalError {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("zero return variance; Sharpe ratio undefined")]
    ZeroVariance,
    #[error("rank-deficient regressors; collinear columns: {}", .0.join(", "))]
    Collinear(Vec<String>),
    #[error("{0} is not positive definite")]
    NotPositiveDefinite(String),
    #[error(transparent)]
    Portfolio(#[from] PortfolioError),
    #[error("io: {0}")]
    Io(String),
}

/// Right-hand side of the alpha regressions.
#[derive(Copy, Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AlphaFactors {
    /// The model's realized tangency portfolio.
    #[default]
    Tangency,
    /// Tangency plus the equal-weighted market.
    TangencyMarket,
}

impl FromStr for AlphaFactors {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "tangency" => Ok(AlphaFactors::Tangency),
            "tangency_market" | "tangency+market" => Ok(AlphaFactors::TangencyMarket),
            _ => Err(format!("unknown alpha factor set {s:?} (tangency, tangency_market)")),
        }
    }
}

fn default_periods() -> u32 {
    252
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvalConfig {
    #[serde(default = "default_periods")]
    pub periods_per_year: u32,
    #[serde(default)]
    pub alpha_factors: AlphaFactors,
    /// Newey-West lags for intercept standard errors; plain OLS when absent.
    #[serde(default)]
    pub nw_lags: Option<usize>,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self {
            periods_per_year: default_periods(),
            alpha_factors: AlphaFactors::default(),
            nw_lags: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PortfolioPerf {
    pub kind: PortfolioKind,
    pub sharpe: f64,
    /// Percent of running peak.
    pub mdd: f64,
    /// Mean daily return.
    pub mean: f64,
    pub n_obs: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PricingErrors {
    pub factors: Vec<String>,
    pub n_obs: usize,
    /// Mean of `|alpha| / sqrt(mean(R²))` across test portfolios.
    pub avg_abs_alpha: f64,
    pub avg_abs_t: f64,
    pub frac_t_gt_196: f64,
    pub grs_stat: f64,
    pub grs_pvalue: f64,
    pub alphas: Vec<AlphaStat>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub portfolios: Vec<PortfolioPerf>,
    pub pricing: PricingErrors,
    /// Compounded terminal return of deciles 1..10.
    pub decile_terminal: Vec<f64>,
}

impl EvalReport {
    pub fn perf(&self, kind: PortfolioKind) -> Option<&PortfolioPerf> {
        self.portfolios.iter().find(|p| p.kind == kind)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    /// Aligned text table: performance rows, then pricing errors.
    pub fn to_table(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(
            s,
            "{:<10} {:>9} {:>9} {:>12} {:>6}",
            "portfolio", "SR", "MDD(%)", "mean(bp/d)", "days"
        );
        for p in &self.portfolios {
            let _ = writeln!(
                s,
                "{:<10} {:>9.3} {:>9.2} {:>12.3} {:>6}",
                p.kind.to_string(),
                p.sharpe,
                p.mdd,
                p.mean * 1e4,
                p.n_obs
            );
        }
        let e = &self.pricing;
        let _ = writeln!(s);
        let _ = writeln!(
            s,
            "pricing errors on {} test portfolios over {} days (factors: {})",
            e.alphas.len(),
            e.n_obs,
            e.factors.join(", ")
        );
        let _ = writeln!(
            s,
            "{:>10} {:>9} {:>10} {:>9} {:>9}",
            "avg|a|", "avg|t|", "|t|>1.96", "GRS", "p"
        );
        let _ = writeln!(
            s,
            "{:>10.4} {:>9.3} {:>10.3} {:>9.3} {:>9.4}",
            e.avg_abs_alpha, e.avg_abs_t, e.frac_t_gt_196, e.grs_stat, e.grs_pvalue
        );
        let _ = writeln!(s);
        let _ = writeln!(s, "decile terminal cumulative return (1 = lowest prediction)");
        let cells: Vec<String> = self.decile_terminal.iter().map(|v| format!("{v:.4}")).collect();
        let _ = writeln!(s, "{}", cells.join(" "));
        s
    }
}

/// Everything computed for one evaluation.
#[derive(Clone, Debug, PartialEq)]
pub struct EvalOutput {
    pub report: EvalReport,
    pub portfolios: PortfolioSet,
    /// Tangency, EW, VW, then deciles 1..10.
    pub realized: Vec<PortfolioReturns>,
    pub decile_cumulative: Vec<Vec<f64>>,
    pub anomalies: AnomalyPortfolioSet,
}

impl EvalOutput {
    pub fn returns(&self, kind: PortfolioKind) -> Option<&PortfolioReturns> {
        self.realized.iter().find(|r| r.kind == kind)
    }

    /// `report.json`, `report.txt`, `equity.svg`, `deciles.svg`.
    pub fn write(&self, dir: &Path) -> Result<(), EvalError> {
        let io = |e: std::io::Error| EvalError::Io(format!("{}: {e}", dir.display()));
        std::fs::create_dir_all(dir).map_err(io)?;
        std::fs::write(dir.join("report.json"), self.report.to_json()).map_err(io)?;
        std::fs::write(dir.join("report.txt"), self.report.to_table()).map_err(io)?;
        let equity: Vec<(String, Vec<f64>)> = self.realized[..3]
            .iter()
            .map(|r| (r.kind.to_string(), value_path(&r.returns)))
            .collect();
        std::fs::write(dir.join("equity.svg"), line_chart_svg("Portfolio value", &equity)).map_err(io)?;
        let deciles: Vec<(String, Vec<f64>)> = self
            .decile_cumulative
            .iter()
            .enumerate()
            .map(|(k, v)| (format!("decile {}", k + 1), v.clone()))
            .collect();
        std::fs::write(
            dir.join("deciles.svg"),
            line_chart_svg("Cumulative excess return by decile", &deciles),
        )
        .map_err(io)?;
        Ok(())
    }
}

/// Formation dates whose next trading day lies in `range`.
pub fn formation_dates(panels: &PanelSet, range: &DateRange) -> Vec<NaiveDate> {
    let cal = panels.calendar().dates();
    (1..cal.len())
        .filter(|&t| range.contains(cal[t]))
        .map(|t| cal[t - 1])
        .collect()
}

/// Build portfolios from `predictions`, realize them over `test`, and compute
/// performance and pricing-error statistics.
pub fn evaluate_run(
    predictions: &PredictionPanel,
    panels: &PanelSet,
    portfolio: &PortfolioConfig,
    config: &EvalConfig,
    test: &DateRange,
) -> Result<EvalOutput, EvalError> {
    let formation = formation_dates(panels, test);
    let Some(&start) = formation.first() else {
        return Err(EvalError::InvalidArgument("test range has no holding days".into()));
    };
    let set = construct(predictions, &panels.caps, portfolio, Some(start))?;
    let mut realized = Vec::with_capacity(13);
    for w in set.all() {
        let mut r = realize(w, &panels.returns)?.returns;
        let keep: Vec<usize> = (0..r.len()).filter(|&i| test.contains(r.dates[i])).collect();
        r.dates = keep.iter().map(|&i| r.dates[i]).collect();
        r.returns = keep.iter().map(|&i| r.returns[i]).collect();
        realized.push(r);
    }

    let mut portfolios = Vec::with_capacity(3);
    for r in &realized[..3] {
        portfolios.push(PortfolioPerf {
            kind: r.kind,
            sharpe: sharpe(&r.returns, None, config.periods_per_year)?,
            mdd: max_drawdown_returns(&r.returns, true),
            mean: r.returns.iter().sum::<f64>() / r.len().max(1) as f64,
            n_obs: r.len(),
        });
    }
    let decile_returns: Vec<Vec<f64>> = realized[3..].iter().map(|r| r.returns.clone()).collect();
    let cumulative = decile_cumulative(&decile_returns, Compounding::Product);
    let decile_terminal = cumulative.iter().map(|c| c.last().copied().unwrap_or(0.0)).collect();

    let anomalies = anomaly_portfolios(panels, &formation)?;
    let pricing = pricing_errors(&anomalies, &realized[0], panels, config)?;
    Ok(EvalOutput {
        report: EvalReport {
            portfolios,
            pricing,
            decile_terminal,
        },
        portfolios: set,
        realized,
        decile_cumulative: cumulative,
        anomalies,
    })
}

fn pricing_errors(
    anomalies: &AnomalyPortfolioSet,
    tangency: &PortfolioReturns,
    panels: &PanelSet,
    config: &EvalConfig,
) -> Result<PricingErrors, EvalError> {
    let dates: Vec<NaiveDate> = tangency
        .dates
        .iter()
        .copied()
        .filter(|d| anomalies.dates.binary_search(d).is_ok())
        .collect();
    let test = anomalies.restrict(&dates)?;
    let tp: Vec<f64> = dates
        .iter()
        .map(|d| tangency.returns[tangency.dates.binary_search(d).expect("date from tangency")])
        .collect();
    let mut names = vec!["tangency".to_string()];
    let mut cols = vec![tp];
    if config.alpha_factors == AlphaFactors::TangencyMarket {
        names.push("market".into());
        cols.push(market_returns(panels, &dates));
    }
    let factors = DMatrix::from_fn(dates.len(), cols.len(), |r, c| cols[c][r]);
    let fit = alpha_stats(&test.ids, &test.returns, &names, &factors, config.nw_lags)?;
    let (grs_stat, grs_pvalue) = grs_from_fit(&fit, &factors)?;
    let n = fit.stats.len() as f64;
    Ok(PricingErrors {
        factors: names,
        n_obs: dates.len(),
        avg_abs_alpha: fit.stats.iter().map(|s| s.normalized_alpha).sum::<f64>() / n,
        avg_abs_t: fit.stats.iter().map(|s| s.t.abs()).sum::<f64>() / n,
        frac_t_gt_196: fit.stats.iter().filter(|s| s.t.abs() > 1.96).count() as f64 / n,
        grs_stat,
        grs_pvalue,
        alphas: fit.stats,
    })
}

/// Equal-weighted mean return of assets active on each holding date and the
/// day before.
fn market_returns(panels: &PanelSet, dates: &[NaiveDate]) -> Vec<f64> {
    let ret = &panels.returns;
    dates
        .iter()
        .map(|d| {
            let t = panels.calendar().index_of(*d).expect("holding date on calendar");
            let v: Vec<f64> = (0..ret.n_assets())
                .filter(|&a| t > 0 && ret.mask[[t - 1, a]])
                .filter_map(|a| ret.get(t, a))
                .collect();
            if v.is_empty() {
                0.0
            } else {
                v.iter().sum::<f64>() / v.len() as f64
            }
        })
        .collect()
}
