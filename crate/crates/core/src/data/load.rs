//! CSV ingestion for the long-format panel files.
//!
//! Returns: `date,permno,exret`. Factors: `date,permno,f1..fN`. Caps:
//! `date,permno,cap`. An empty cell means missing; any other non-numeric or
//! non-finite cell is a parse error.

use chrono::NaiveDate;
use ndarray::{Array2, Array3};
use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::io::Write;
use std::path::{Path, PathBuf};

use super::panel::{AssetId, CellFill, FactorPanel, MarketCapSeries, PanelSet, ReturnPanel, TradingCalendar};
use super::DataError;

/// Multipliers applied to each file's numeric cells at ingest.
///
/// Kenneth-French-style percentage files use `0.01`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LoadOptions {
    pub returns_scale: f64,
    pub factors_scale: f64,
    pub caps_scale: f64,
}

impl Default for LoadOptions {
    fn default() -> Self {
        Self {
            returns_scale: 1.0,
            factors_scale: 1.0,
            caps_scale: 1.0,
        }
    }
}

type Key = (NaiveDate, AssetId);

struct LongTable {
    columns: Vec<String>,
    rows: HashMap<Key, Vec<Option<f64>>>,
}

impl LongTable {
    fn dates(&self) -> BTreeSet<NaiveDate> {
        self.rows.keys().map(|k| k.0).collect()
    }

    fn assets(&self) -> BTreeSet<AssetId> {
        self.rows.keys().map(|k| k.1).collect()
    }
}

fn parse_err(file: &Path, line: u64, msg: impl Into<String>) -> DataError {
    DataError::Parse {
        file: file.to_path_buf(),
        line,
        msg: msg.into(),
    }
}

fn read_long_table(path: &Path, value_columns: Option<&[&str]>, scale: f64) -> Result<LongTable, DataError> {
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| DataError::Io {
            path: path.to_path_buf(),
            msg: e.to_string(),
        })?;
    let headers = reader.headers().map_err(|e| parse_err(path, 1, e.to_string()))?.clone();
    let col = |name: &str| headers.iter().position(|h| h == name);
    let date_col = col("date").ok_or_else(|| parse_err(path, 1, "missing column `date`"))?;
    let permno_col = col("permno").ok_or_else(|| parse_err(path, 1, "missing column `permno`"))?;

    let (names, value_idx): (Vec<String>, Vec<usize>) = match value_columns {
        Some(wanted) => {
            let mut idx = Vec::with_capacity(wanted.len());
            for w in wanted {
                idx.push(col(w).ok_or_else(|| parse_err(path, 1, format!("missing column `{w}`")))?);
            }
            (wanted.iter().map(|s| s.to_string()).collect(), idx)
        }
        None => headers
            .iter()
            .enumerate()
            .filter(|(i, _)| *i != date_col && *i != permno_col)
            .map(|(i, h)| (h.to_string(), i))
            .unzip(),
    };
    if names.is_empty() {
        return Err(parse_err(path, 1, "no value columns"));
    }

    let mut rows = HashMap::new();
    for record in reader.records() {
        let record = record.map_err(|e| {
            let line = e.position().map(|p| p.line()).unwrap_or(0);
            parse_err(path, line, e.to_string())
        })?;
        let line = record.position().map(|p| p.line()).unwrap_or(0);
        let field = |i: usize| record.get(i).unwrap_or("");
        let date = NaiveDate::parse_from_str(field(date_col), "%Y-%m-%d")
            .map_err(|e| parse_err(path, line, format!("bad date `{}`: {e}", field(date_col))))?;
        let permno: u32 = field(permno_col)
            .parse()
            .ok()
            .filter(|p| *p > 0)
            .ok_or_else(|| parse_err(path, line, format!("bad permno `{}`", field(permno_col))))?;
        let mut values = Vec::with_capacity(value_idx.len());
        for (&i, name) in value_idx.iter().zip(&names) {
            let raw = field(i);
            if raw.is_empty() {
                values.push(None);
                continue;
            }
            let v: f64 = raw
                .parse()
                .map_err(|_| parse_err(path, line, format!("non-numeric `{raw}` in column `{name}`")))?;
            if !v.is_finite() {
                return Err(parse_err(path, line, format!("non-finite `{raw}` in column `{name}`")));
            }
            values.push(Some(v * scale));
        }
        if rows.insert((date, AssetId(permno)), values).is_some() {
            return Err(parse_err(path, line, format!("duplicate row for {date} / {permno}")));
        }
    }
    Ok(LongTable { columns: names, rows })
}

/// Load and inner-join the returns, factors, and market-cap files.
pub fn load_panels(
    returns_file: &Path,
    factors_file: &Path,
    caps_file: &Path,
    opts: &LoadOptions,
) -> Result<PanelSet, DataError> {
    let returns = read_long_table(returns_file, Some(&["exret"]), opts.returns_scale)?;
    let factors = read_long_table(factors_file, None, opts.factors_scale)?;
    let caps = read_long_table(caps_file, Some(&["cap"]), opts.caps_scale)?;

    for ((date, permno), v) in &caps.rows {
        if let Some(c) = v[0] {
            if c <= 0.0 {
                return Err(parse_err(
                    caps_file,
                    0,
                    format!("non-positive cap {c} for {date} / {permno}"),
                ));
            }
        }
    }

    let dates: Vec<NaiveDate> = returns
        .dates()
        .intersection(&factors.dates())
        .copied()
        .collect::<BTreeSet<_>>()
        .intersection(&caps.dates())
        .copied()
        .collect();
    let assets: Vec<AssetId> = returns
        .assets()
        .intersection(&factors.assets())
        .copied()
        .collect::<BTreeSet<_>>()
        .intersection(&caps.assets())
        .copied()
        .collect();
    if dates.is_empty() || assets.is_empty() {
        return Err(DataError::Alignment(format!(
            "inner join of {}, {}, {} is empty ({} dates, {} assets)",
            returns_file.display(),
            factors_file.display(),
            caps_file.display(),
            dates.len(),
            assets.len()
        )));
    }

    let (nd, na, nf) = (dates.len(), assets.len(), factors.columns.len());
    let mut ret = Array2::from_elem((nd, na), f64::NAN);
    let mut mask = Array2::from_elem((nd, na), false);
    let mut fval = Array3::from_elem((nd, na, nf), f64::NAN);
    let mut fill = Array3::from_elem((nd, na, nf), CellFill::Missing);
    let mut cap = Array2::from_elem((nd, na), f64::NAN);

    for (di, date) in dates.iter().enumerate() {
        for (ai, asset) in assets.iter().enumerate() {
            let key = (*date, *asset);
            if let Some(Some(r)) = returns.rows.get(&key).map(|v| v[0]) {
                ret[[di, ai]] = r;
                mask[[di, ai]] = true;
            }
            if let Some(v) = factors.rows.get(&key) {
                for (fi, x) in v.iter().enumerate() {
                    if let Some(x) = x {
                        fval[[di, ai, fi]] = *x;
                        fill[[di, ai, fi]] = CellFill::Observed;
                    }
                }
            }
            if let Some(Some(c)) = caps.rows.get(&key).map(|v| v[0]) {
                cap[[di, ai]] = c;
            }
        }
    }

    let calendar = TradingCalendar::new(dates)?;
    Ok(PanelSet {
        returns: ReturnPanel::new(calendar.clone(), assets.clone(), ret, mask)?,
        factors: FactorPanel::new(calendar.clone(), assets.clone(), factors.columns, fval, fill)?,
        caps: MarketCapSeries {
            calendar,
            assets,
            caps: cap,
        },
    })
}

fn create(path: &Path) -> Result<std::io::BufWriter<std::fs::File>, DataError> {
    std::fs::File::create(path)
        .map(std::io::BufWriter::new)
        .map_err(|e| DataError::Io {
            path: path.to_path_buf(),
            msg: e.to_string(),
        })
}

fn io_err(path: &Path) -> impl Fn(std::io::Error) -> DataError + '_ {
    move |e| DataError::Io {
        path: PathBuf::from(path),
        msg: e.to_string(),
    }
}

fn cell(v: f64) -> String {
    if v.is_finite() {
        format!("{v}")
    } else {
        String::new()
    }
}

/// Write a return panel in the long CSV schema; masked cells are omitted.
pub fn write_returns_csv(panel: &ReturnPanel, path: &Path) -> Result<(), DataError> {
    let mut w = create(path)?;
    let err = io_err(path);
    writeln!(w, "date,permno,exret").map_err(&err)?;
    for (di, date) in panel.calendar.dates().iter().enumerate() {
        for (ai, asset) in panel.assets.iter().enumerate() {
            if let Some(r) = panel.get(di, ai) {
                writeln!(w, "{date},{asset},{r}").map_err(&err)?;
            }
        }
    }
    w.flush().map_err(&err)
}

/// Write a factor panel in the long CSV schema; missing cells are empty.
pub fn write_factors_csv(panel: &FactorPanel, path: &Path) -> Result<(), DataError> {
    let mut w = create(path)?;
    let err = io_err(path);
    writeln!(w, "date,permno,{}", panel.factor_names.join(",")).map_err(&err)?;
    for (di, date) in panel.calendar.dates().iter().enumerate() {
        for (ai, asset) in panel.assets.iter().enumerate() {
            let cells: Vec<String> = (0..panel.n_factors())
                .map(|fi| cell(panel.values[[di, ai, fi]]))
                .collect();
            writeln!(w, "{date},{asset},{}", cells.join(",")).map_err(&err)?;
        }
    }
    w.flush().map_err(&err)
}

pub fn write_caps_csv(caps: &MarketCapSeries, path: &Path) -> Result<(), DataError> {
    let mut w = create(path)?;
    let err = io_err(path);
    writeln!(w, "date,permno,cap").map_err(&err)?;
    for (di, date) in caps.calendar.dates().iter().enumerate() {
        for (ai, asset) in caps.assets.iter().enumerate() {
            writeln!(w, "{date},{asset},{}", cell(caps.caps[[di, ai]])).map_err(&err)?;
        }
    }
    w.flush().map_err(&err)
}

/// Per-date summary used by `ingest` to report coverage.
pub fn coverage(panels: &PanelSet) -> BTreeMap<&'static str, usize> {
    let mut out = BTreeMap::new();
    out.insert("dates", panels.calendar().len());
    out.insert("assets", panels.assets().len());
    out.insert("factors", panels.factors.n_factors());
    out.insert("active_cells", panels.returns.mask.iter().filter(|m| **m).count());
    out.insert(
        "missing_factor_cells",
        panels.factors.fill.iter().filter(|f| !f.has_value()).count(),
    );
    out
}
