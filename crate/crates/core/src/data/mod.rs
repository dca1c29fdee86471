//! Panel ingestion, factor cleaning, date splits, and the news corpus.

mod clean;
mod load;
mod news;
mod panel;
mod split;

use std::path::PathBuf;

pub use clean::{clean_factors, rank_standardize};
pub use load::{coverage, load_panels, write_caps_csv, write_factors_csv, write_returns_csv, LoadOptions};
pub use news::{filter_categories, load_news, minute_timestamp, write_news, NewsItem};
pub use panel::{AssetId, CellFill, FactorPanel, MarketCapSeries, PanelSet, ReturnPanel, TradingCalendar};
pub use split::{split, DateRange, Split, SplitSpec};

#[derive(Debug, thiserror::Error)]
pub enum DataError {
    #[error("{}:{line}: {msg}", file.display())]
    Parse { file: PathBuf, line: u64, msg: String },
    #[error("{}: {msg}", path.display())]
    Io { path: PathBuf, msg: String },
    #[error("alignment: {0}")]
    Alignment(String),
    #[error("calendar: {0}")]
    Calendar(String),
    #[error("shape: {0}")]
    Shape(String),
    #[error("invalid split: {0}")]
    InvalidSplit(String),
}
