use chrono::NaiveDate;
use ndarray::{Array1, Array2};
use std::collections::BTreeMap;

use super::model::Batch;
use super::params::NetworkParams;
use super::NetError;
use crate::data::{AssetId, DateRange, PanelSet};

/// Source of the news part of the hybrid input.
#[derive(Clone, Copy, Debug)]
pub enum NewsInput<'a> {
    /// The same vector for every date (pretraining, factor-only runs).
    Placeholder(&'a [f64]),
    /// Smoothed daily embeddings; dates without an entry use `fallback`.
    Daily {
        series: &'a BTreeMap<NaiveDate, Vec<f64>>,
        fallback: &'a [f64],
    },
}

impl<'a> NewsInput<'a> {
    pub fn dim(&self) -> usize {
        match self {
            NewsInput::Placeholder(p) => p.len(),
            NewsInput::Daily { fallback, .. } => fallback.len(),
        }
    }

    /// Vector for `date` and whether it came from the fallback.
    pub fn vector(&self, date: NaiveDate) -> (&'a [f64], bool) {
        match *self {
            NewsInput::Placeholder(p) => (p, false),
            NewsInput::Daily { series, fallback } => match series.get(&date) {
                Some(v) => (v.as_slice(), false),
                None => (fallback, true),
            },
        }
    }
}

/// Asset-day samples: features at formation date `d`, target the excess
/// return on the next trading day.
#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    /// Raw hybrid vectors `[s_d; v_{d,a}]`, one row per sample.
    pub inputs: Array2<f64>,
    pub assets: Vec<AssetId>,
    pub targets: Array1<f64>,
    /// Formation date of each sample.
    pub dates: Vec<NaiveDate>,
    /// Samples whose embedding fell back to the placeholder.
    pub fallback_count: usize,
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.assets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.assets.is_empty()
    }

    pub fn batch(&self, params: &NetworkParams, idx: &[usize]) -> Batch {
        let mut inputs = Array2::zeros((idx.len(), self.inputs.ncols()));
        for (r, &i) in idx.iter().enumerate() {
            inputs.row_mut(r).assign(&self.inputs.row(i));
        }
        Batch {
            inputs,
            rows: idx.iter().map(|&i| params.asset_row(self.assets[i])).collect(),
            targets: idx.iter().map(|&i| self.targets[i]).collect(),
        }
    }

    pub fn full_batch(&self, params: &NetworkParams) -> Batch {
        Batch {
            inputs: self.inputs.clone(),
            rows: self.assets.iter().map(|&a| params.asset_row(a)).collect(),
            targets: self.targets.clone(),
        }
    }

    /// Population standard deviation of the targets.
    pub fn target_std(&self) -> f64 {
        if self.is_empty() {
            return 0.0;
        }
        self.targets.std(0.0)
    }

    pub fn target_variance(&self) -> f64 {
        if self.is_empty() {
            return 0.0;
        }
        self.targets.var(0.0)
    }
}

/// Formation-date indices whose next trading day falls in `range`.
pub fn formation_indices(panels: &PanelSet, range: &DateRange) -> Vec<usize> {
    match range.indices(panels.calendar()) {
        Some((first, last)) => (first.max(1)..=last).map(|t| t - 1).collect(),
        None => Vec::new(),
    }
}

/// Build samples for every asset active on both the formation date and the
/// following trading day, for target dates inside `range`. With
/// `use_factors = false` the factor part of each input is zeroed.
pub fn build_dataset(
    panels: &PanelSet,
    news: &NewsInput<'_>,
    range: &DateRange,
    use_factors: bool,
) -> Result<Dataset, NetError> {
    if panels.factors.has_missing() {
        return Err(NetError::InvalidArgument(
            "factor panel still has missing cells; clean it first".into(),
        ));
    }
    let ret = &panels.returns;
    let cal = panels.calendar().dates();
    let nf = panels.factors.n_factors();
    let d_emb = news.dim();
    let mut rows: Vec<f64> = Vec::new();
    let mut assets = Vec::new();
    let mut targets = Vec::new();
    let mut dates = Vec::new();
    let mut fallback_count = 0;
    for d in formation_indices(panels, range) {
        let (s, fell_back) = news.vector(cal[d]);
        if s.len() != d_emb {
            return Err(NetError::Shape(format!(
                "embedding for {} has dimension {}, expected {d_emb}",
                cal[d],
                s.len()
            )));
        }
        for a in 0..ret.n_assets() {
            if !(ret.mask[[d, a]] && ret.mask[[d + 1, a]]) {
                continue;
            }
            rows.extend_from_slice(s);
            if use_factors {
                rows.extend(panels.factors.values.slice(ndarray::s![d, a, ..]).iter());
            } else {
                rows.extend(std::iter::repeat_n(0.0, nf));
            }
            assets.push(ret.assets[a]);
            targets.push(ret.excess_returns[[d + 1, a]]);
            dates.push(cal[d]);
            fallback_count += usize::from(fell_back);
        }
    }
    if fallback_count > 0 {
        log::warn!("{fallback_count} samples use the placeholder embedding (no daily vector)");
    }
    let n = assets.len();
    Ok(Dataset {
        inputs: Array2::from_shape_vec((n, d_emb + nf), rows).expect("row-major samples"),
        assets,
        targets: Array1::from(targets),
        dates,
        fallback_count,
    })
}
