//! Tangency and decile long-short portfolios built from predicted returns.

mod decile;
mod tangency;

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use crate::data::{AssetId, MarketCapSeries, ReturnPanel};
use crate::pricing_net::PredictionPanel;

pub use decile::{
    decile_assign, decile_cumulative, decile_weights, ls_weights, members, Compounding, LegWeighting, N_DECILES,
};
pub use tangency::{tangency_weights, Tangency, RIDGE};

#[derive(Debug, thiserror::Error)]
pub enum PortfolioError {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("insufficient data: {0}")]
    InsufficientData(String),
    #[error("singular matrix after ridge: {0}")]
    Singular(String),
    #[error("{0} active assets; decile sorts need at least 10")]
    TooFewAssets(usize),
    #[error("decile {0} leg has no usable assets")]
    EmptyLeg(u8),
    #[error("no portfolio date overlaps the return panel")]
    EmptyOverlap,
    #[error("io: {0}")]
    Io(String),
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum PortfolioKind {
    Tangency,
    EwLs,
    VwLs,
    Decile(u8),
}

impl fmt::Display for PortfolioKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            PortfolioKind::Tangency => f.write_str("tangency"),
            PortfolioKind::EwLs => f.write_str("ew_ls"),
            PortfolioKind::VwLs => f.write_str("vw_ls"),
            PortfolioKind::Decile(k) => write!(f, "decile_{k}"),
        }
    }
}

impl FromStr for PortfolioKind {
    type Err = PortfolioError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "tangency" => Ok(PortfolioKind::Tangency),
            "ew_ls" => Ok(PortfolioKind::EwLs),
            "vw_ls" => Ok(PortfolioKind::VwLs),
            _ => s
                .strip_prefix("decile_")
                .and_then(|k| k.parse().ok())
                .filter(|k| (1..=N_DECILES).contains(k))
                .map(PortfolioKind::Decile)
                .ok_or_else(|| PortfolioError::InvalidArgument(format!("unknown portfolio kind {s:?}"))),
        }
    }
}

impl Serialize for PortfolioKind {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for PortfolioKind {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        String::deserialize(d)?.parse().map_err(serde::de::Error::custom)
    }
}

/// Holdings formed at the close of each date.
#[derive(Clone, Debug, PartialEq)]
pub struct PortfolioWeights {
    pub kind: PortfolioKind,
    pub dates: BTreeMap<NaiveDate, BTreeMap<AssetId, f64>>,
}

impl PortfolioWeights {
    pub fn new(kind: PortfolioKind) -> Self {
        Self {
            kind,
            dates: BTreeMap::new(),
        }
    }

    /// `alpha·self + beta·other`, dated on the union of both calendars.
    pub fn combine(&self, alpha: f64, other: &Self, beta: f64) -> Self {
        let mut out = Self::new(self.kind);
        for (src, scale) in [(self, alpha), (other, beta)] {
            for (d, w) in &src.dates {
                let day = out.dates.entry(*d).or_default();
                for (a, v) in w {
                    *day.entry(*a).or_insert(0.0) += scale * v;
                }
            }
        }
        out
    }
}

/// Realized returns dated on the holding day.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PortfolioReturns {
    pub kind: PortfolioKind,
    pub dates: Vec<NaiveDate>,
    pub returns: Vec<f64>,
}

impl PortfolioReturns {
    pub fn len(&self) -> usize {
        self.returns.len()
    }

    pub fn is_empty(&self) -> bool {
        self.returns.is_empty()
    }

    pub fn write_csv(&self, path: &Path) -> Result<(), PortfolioError> {
        let err = |e: csv::Error| PortfolioError::Io(format!("{}: {e}", path.display()));
        let mut w = csv::Writer::from_path(path).map_err(err)?;
        w.write_record(["date", "ret"]).map_err(err)?;
        for (d, r) in self.dates.iter().zip(&self.returns) {
            w.write_record([d.to_string(), r.to_string()]).map_err(err)?;
        }
        w.flush()
            .map_err(|e| PortfolioError::Io(format!("{}: {e}", path.display())))
    }

    pub fn read_csv(path: &Path, kind: PortfolioKind) -> Result<Self, PortfolioError> {
        let err = |e: csv::Error| PortfolioError::Io(format!("{}: {e}", path.display()));
        let mut r = csv::Reader::from_path(path).map_err(err)?;
        let mut out = PortfolioReturns {
            kind,
            dates: Vec::new(),
            returns: Vec::new(),
        };
        for row in r.deserialize::<(NaiveDate, f64)>() {
            let (d, v) = row.map_err(err)?;
            out.dates.push(d);
            out.returns.push(v);
        }
        Ok(out)
    }
}

/// Write several weight series into one `date,permno,weight,kind` file.
pub fn write_weights_csv(series: &[&PortfolioWeights], path: &Path) -> Result<(), PortfolioError> {
    let err = |e: csv::Error| PortfolioError::Io(format!("{}: {e}", path.display()));
    let mut w = csv::Writer::from_path(path).map_err(err)?;
    w.write_record(["date", "permno", "weight", "kind"]).map_err(err)?;
    for s in series {
        let kind = s.kind.to_string();
        for (d, day) in &s.dates {
            for (a, v) in day {
                w.write_record([d.to_string(), a.0.to_string(), v.to_string(), kind.clone()])
                    .map_err(err)?;
            }
        }
    }
    w.flush()
        .map_err(|e| PortfolioError::Io(format!("{}: {e}", path.display())))
}

pub fn read_weights_csv(path: &Path) -> Result<Vec<PortfolioWeights>, PortfolioError> {
    let err = |e: csv::Error| PortfolioError::Io(format!("{}: {e}", path.display()));
    let mut r = csv::Reader::from_path(path).map_err(err)?;
    let mut by_kind: BTreeMap<PortfolioKind, PortfolioWeights> = BTreeMap::new();
    for row in r.deserialize::<(NaiveDate, u32, f64, PortfolioKind)>() {
        let (d, permno, v, kind) = row.map_err(err)?;
        by_kind
            .entry(kind)
            .or_insert_with(|| PortfolioWeights::new(kind))
            .dates
            .entry(d)
            .or_default()
            .insert(AssetId(permno), v);
    }
    Ok(by_kind.into_values().collect())
}

/// Realized series plus the number of held positions that had no return on
/// the holding day.
#[derive(Clone, Debug, PartialEq)]
pub struct Realized {
    pub returns: PortfolioReturns,
    pub delisted: usize,
}

/// Hold each date's weights over the next trading day. Positions in assets
/// inactive on either day contribute zero.
pub fn realize(weights: &PortfolioWeights, panel: &ReturnPanel) -> Result<Realized, PortfolioError> {
    let cal = &panel.calendar;
    let mut out = PortfolioReturns {
        kind: weights.kind,
        dates: Vec::new(),
        returns: Vec::new(),
    };
    let mut delisted = 0;
    for (date, day) in &weights.dates {
        let Some(t) = cal.index_of(*date) else {
            continue;
        };
        if t + 1 >= cal.len() {
            continue;
        }
        let mut r = 0.0;
        for (asset, w) in day {
            let a = panel.asset_index(*asset);
            match a.and_then(|a| panel.get(t, a).and(panel.get(t + 1, a))) {
                Some(ret) => r += w * ret,
                None => delisted += 1,
            }
        }
        out.dates.push(cal.dates()[t + 1]);
        out.returns.push(r);
    }
    if out.is_empty() {
        return Err(PortfolioError::EmptyOverlap);
    }
    if delisted > 0 {
        log::info!("{}: {delisted} positions had no next-day return", weights.kind);
    }
    Ok(Realized { returns: out, delisted })
}

fn default_tp_window() -> usize {
    60
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PortfolioConfig {
    /// Trailing prediction dates used for the tangency moments.
    #[serde(default = "default_tp_window")]
    pub tp_window: usize,
}

impl Default for PortfolioConfig {
    fn default() -> Self {
        Self {
            tp_window: default_tp_window(),
        }
    }
}

/// Every portfolio formed from one prediction panel.
#[derive(Clone, Debug, PartialEq)]
pub struct PortfolioSet {
    pub tangency: PortfolioWeights,
    pub ew_ls: PortfolioWeights,
    pub vw_ls: PortfolioWeights,
    /// Equal-weighted long-only deciles, lowest prediction first.
    pub deciles: Vec<PortfolioWeights>,
    /// Formation dates skipped for want of assets.
    pub skipped: Vec<NaiveDate>,
}

impl PortfolioSet {
    pub fn all(&self) -> Vec<&PortfolioWeights> {
        let mut v = vec![&self.tangency, &self.ew_ls, &self.vw_ls];
        v.extend(self.deciles.iter());
        v
    }
}

/// Form portfolios on each prediction date from `start` on. Earlier rows of
/// the panel only feed the tangency window.
pub fn construct(
    predictions: &PredictionPanel,
    caps: &MarketCapSeries,
    config: &PortfolioConfig,
    start: Option<NaiveDate>,
) -> Result<PortfolioSet, PortfolioError> {
    if config.tp_window < 2 {
        return Err(PortfolioError::InvalidArgument("tp_window must be at least 2".into()));
    }
    let mut set = PortfolioSet {
        tangency: PortfolioWeights::new(PortfolioKind::Tangency),
        ew_ls: PortfolioWeights::new(PortfolioKind::EwLs),
        vw_ls: PortfolioWeights::new(PortfolioKind::VwLs),
        deciles: (1..=N_DECILES)
            .map(|k| PortfolioWeights::new(PortfolioKind::Decile(k)))
            .collect(),
        skipped: Vec::new(),
    };
    for (row, &date) in predictions.dates.iter().enumerate() {
        if start.is_some_and(|s| date < s) {
            continue;
        }
        let active: Vec<usize> = (0..predictions.assets.len())
            .filter(|&a| predictions.get(row, a).is_some())
            .collect();

        let lo = (row + 1).saturating_sub(config.tp_window);
        let eligible: Vec<usize> = active
            .iter()
            .copied()
            .filter(|&a| (lo..=row).filter(|&r| predictions.get(r, a).is_some()).count() >= 2)
            .collect();
        if !eligible.is_empty() {
            let window: Vec<Vec<f64>> = (lo..=row)
                .map(|r| eligible.iter().map(|&a| predictions.values[[r, a]]).collect())
                .collect();
            let tp = tangency_weights(&window)?;
            set.tangency.dates.insert(
                date,
                eligible
                    .iter()
                    .zip(tp.weights)
                    .map(|(&a, w)| (predictions.assets[a], w))
                    .collect(),
            );
        }

        let preds: Vec<(AssetId, f64)> = active
            .iter()
            .map(|&a| (predictions.assets[a], predictions.values[[row, a]]))
            .collect();
        let assign = match decile_assign(&preds) {
            Ok(a) => a,
            Err(PortfolioError::TooFewAssets(n)) => {
                log::warn!("{date}: {n} predicted assets; no decile portfolios formed");
                set.skipped.push(date);
                continue;
            }
            Err(e) => return Err(e),
        };
        let t = caps.calendar.index_of(date);
        let cap = |asset: AssetId| t.zip(caps.asset_index(asset)).and_then(|(t, a)| caps.get(t, a));
        set.ew_ls
            .dates
            .insert(date, ls_weights(&assign, LegWeighting::Equal, cap)?);
        match ls_weights(&assign, LegWeighting::Value, cap) {
            Ok(w) => {
                set.vw_ls.dates.insert(date, w);
            }
            Err(PortfolioError::EmptyLeg(k)) => {
                log::warn!("{date}: no caps in decile {k}; value-weighted portfolio skipped");
            }
            Err(e) => return Err(e),
        }
        for k in 1..=N_DECILES {
            set.deciles[k as usize - 1]
                .dates
                .insert(date, decile_weights(&assign, k, LegWeighting::Equal, cap)?);
        }
    }
    Ok(set)
}
