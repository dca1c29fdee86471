use chrono::NaiveDate;
use ndarray::{Array2, Array3};
use serde::{Deserialize, Serialize};
use std::fmt;

use super::DataError;

/// CRSP-style permanent security number.
#[derive(Copy, Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct AssetId(pub u32);

impl fmt::Display for AssetId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// Strictly increasing list of trading days.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TradingCalendar {
    dates: Vec<NaiveDate>,
}

impl TradingCalendar {
    pub fn new(dates: Vec<NaiveDate>) -> Result<Self, DataError> {
        if let Some(w) = dates.windows(2).find(|w| w[0] >= w[1]) {
            return Err(DataError::Calendar(format!(
                "dates must be strictly increasing: {} followed by {}",
                w[0], w[1]
            )));
        }
        Ok(Self { dates })
    }

    pub fn dates(&self) -> &[NaiveDate] {
        &self.dates
    }

    pub fn len(&self) -> usize {
        self.dates.len()
    }

    pub fn is_empty(&self) -> bool {
        self.dates.is_empty()
    }

    pub fn index_of(&self, date: NaiveDate) -> Option<usize> {
        self.dates.binary_search(&date).ok()
    }

    /// Index of the last date on or before `date`.
    pub fn index_at_or_before(&self, date: NaiveDate) -> Option<usize> {
        match self.dates.binary_search(&date) {
            Ok(i) => Some(i),
            Err(0) => None,
            Err(i) => Some(i - 1),
        }
    }

    /// Index of the first date on or after `date`.
    pub fn index_at_or_after(&self, date: NaiveDate) -> Option<usize> {
        match self.dates.binary_search(&date) {
            Ok(i) => Some(i),
            Err(i) if i < self.dates.len() => Some(i),
            Err(_) => None,
        }
    }

    pub fn first(&self) -> Option<NaiveDate> {
        self.dates.first().copied()
    }

    pub fn last(&self) -> Option<NaiveDate> {
        self.dates.last().copied()
    }

    /// Sub-calendar of dates `>= from`.
    pub fn starting_at(&self, from: NaiveDate) -> TradingCalendar {
        let start = self.dates.partition_point(|d| *d < from);
        TradingCalendar {
            dates: self.dates[start..].to_vec(),
        }
    }
}

fn asset_position(assets: &[AssetId], asset: AssetId) -> Option<usize> {
    assets.binary_search(&asset).ok()
}

/// Daily excess returns, `dates × assets`. Masked cells hold NaN.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReturnPanel {
    pub calendar: TradingCalendar,
    pub assets: Vec<AssetId>,
    pub excess_returns: Array2<f64>,
    pub mask: Array2<bool>,
}

impl ReturnPanel {
    pub fn new(
        calendar: TradingCalendar,
        assets: Vec<AssetId>,
        excess_returns: Array2<f64>,
        mask: Array2<bool>,
    ) -> Result<Self, DataError> {
        let shape = (calendar.len(), assets.len());
        if excess_returns.dim() != shape || mask.dim() != shape {
            return Err(DataError::Shape(format!(
                "return panel expects {:?}, got returns {:?} and mask {:?}",
                shape,
                excess_returns.dim(),
                mask.dim()
            )));
        }
        check_sorted_assets(&assets)?;
        for ((idx, r), m) in excess_returns.indexed_iter().zip(mask.iter()) {
            if *m && !r.is_finite() {
                return Err(DataError::Shape(format!("non-finite return for active cell {:?}", idx)));
            }
        }
        Ok(Self {
            calendar,
            assets,
            excess_returns,
            mask,
        })
    }

    pub fn asset_index(&self, asset: AssetId) -> Option<usize> {
        asset_position(&self.assets, asset)
    }

    /// Return of `asset_idx` on `date_idx`, `None` when the asset is inactive.
    pub fn get(&self, date_idx: usize, asset_idx: usize) -> Option<f64> {
        if self.mask[[date_idx, asset_idx]] {
            Some(self.excess_returns[[date_idx, asset_idx]])
        } else {
            None
        }
    }

    pub fn n_dates(&self) -> usize {
        self.calendar.len()
    }

    pub fn n_assets(&self) -> usize {
        self.assets.len()
    }
}

/// Provenance of a factor cell.
#[derive(Copy, Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CellFill {
    Observed,
    Missing,
    ForwardFilled,
    MedianImputed,
    Defaulted,
}

impl CellFill {
    pub fn has_value(self) -> bool {
        !matches!(self, CellFill::Missing)
    }

    pub fn is_stale(self) -> bool {
        !matches!(self, CellFill::Observed | CellFill::Missing)
    }
}

/// Manual factor exposures, `dates × assets × factors`. Missing cells hold NaN.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FactorPanel {
    pub calendar: TradingCalendar,
    pub assets: Vec<AssetId>,
    pub factor_names: Vec<String>,
    pub values: Array3<f64>,
    pub fill: Array3<CellFill>,
}

impl FactorPanel {
    pub fn new(
        calendar: TradingCalendar,
        assets: Vec<AssetId>,
        factor_names: Vec<String>,
        values: Array3<f64>,
        fill: Array3<CellFill>,
    ) -> Result<Self, DataError> {
        let shape = (calendar.len(), assets.len(), factor_names.len());
        if values.dim() != shape || fill.dim() != shape {
            return Err(DataError::Shape(format!(
                "factor panel expects {:?}, got values {:?} and flags {:?}",
                shape,
                values.dim(),
                fill.dim()
            )));
        }
        check_sorted_assets(&assets)?;
        Ok(Self {
            calendar,
            assets,
            factor_names,
            values,
            fill,
        })
    }

    pub fn n_factors(&self) -> usize {
        self.factor_names.len()
    }

    pub fn asset_index(&self, asset: AssetId) -> Option<usize> {
        asset_position(&self.assets, asset)
    }

    pub fn has_missing(&self) -> bool {
        self.fill.iter().any(|f| !f.has_value())
    }

    /// Factor vector of one asset on one date.
    pub fn vector(&self, date_idx: usize, asset_idx: usize) -> Vec<f64> {
        self.values.slice(ndarray::s![date_idx, asset_idx, ..]).to_vec()
    }
}

/// Market capitalizations, `dates × assets`. Missing cells hold NaN.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MarketCapSeries {
    pub calendar: TradingCalendar,
    pub assets: Vec<AssetId>,
    pub caps: Array2<f64>,
}

impl MarketCapSeries {
    pub fn get(&self, date_idx: usize, asset_idx: usize) -> Option<f64> {
        let c = self.caps[[date_idx, asset_idx]];
        (c.is_finite() && c > 0.0).then_some(c)
    }

    pub fn asset_index(&self, asset: AssetId) -> Option<usize> {
        asset_position(&self.assets, asset)
    }
}

/// The three aligned panels produced by ingestion.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PanelSet {
    pub returns: ReturnPanel,
    pub factors: FactorPanel,
    pub caps: MarketCapSeries,
}

impl PanelSet {
    pub fn calendar(&self) -> &TradingCalendar {
        &self.returns.calendar
    }

    pub fn assets(&self) -> &[AssetId] {
        &self.returns.assets
    }
}

fn check_sorted_assets(assets: &[AssetId]) -> Result<(), DataError> {
    if let Some(w) = assets.windows(2).find(|w| w[0] >= w[1]) {
        return Err(DataError::Shape(format!(
            "asset list must be strictly increasing: {} followed by {}",
            w[0], w[1]
        )));
    }
    if assets.iter().any(|a| a.0 == 0) {
        return Err(DataError::Shape("permno must be positive".into()));
    }
    Ok(())
}
