use chrono::{NaiveDate, NaiveDateTime};
use serde::{Deserialize, Serialize};
use std::collections::HashSet;
use std::io::{BufRead, Write};
use std::path::Path;

use super::DataError;

/// Minute-precision timestamps, `YYYY-MM-DDTHH:MM` (seconds accepted on input).
pub mod minute_timestamp {
    use chrono::NaiveDateTime;
    use serde::{Deserialize, Deserializer, Serializer};

    pub const FORMAT: &str = "%Y-%m-%dT%H:%M";

    pub fn parse(s: &str) -> Option<NaiveDateTime> {
        NaiveDateTime::parse_from_str(s, FORMAT)
            .or_else(|_| NaiveDateTime::parse_from_str(s, "%Y-%m-%dT%H:%M:%S"))
            .or_else(|_| NaiveDateTime::parse_from_str(s, "%Y-%m-%d %H:%M"))
            .ok()
    }

    pub fn format(ts: &NaiveDateTime) -> String {
        ts.format(FORMAT).to_string()
    }

    pub fn serialize<S: Serializer>(ts: &NaiveDateTime, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&format(ts))
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<NaiveDateTime, D::Error> {
        let raw = String::deserialize(d)?;
        parse(&raw).ok_or_else(|| serde::de::Error::custom(format!("bad timestamp `{raw}`")))
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct NewsItem {
    pub id: String,
    #[serde(with = "minute_timestamp")]
    pub timestamp: NaiveDateTime,
    pub title: String,
    pub body: String,
    pub category: String,
}

impl NewsItem {
    pub fn date(&self) -> NaiveDate {
        self.timestamp.date()
    }
}

/// Read a news JSONL file, sorted by timestamp then id.
pub fn load_news(path: &Path) -> Result<Vec<NewsItem>, DataError> {
    let file = std::fs::File::open(path).map_err(|e| DataError::Io {
        path: path.to_path_buf(),
        msg: e.to_string(),
    })?;
    let mut items = Vec::new();
    let mut seen = HashSet::new();
    for (i, line) in std::io::BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| DataError::Io {
            path: path.to_path_buf(),
            msg: e.to_string(),
        })?;
        if line.trim().is_empty() {
            continue;
        }
        let item: NewsItem = serde_json::from_str(&line).map_err(|e| DataError::Parse {
            file: path.to_path_buf(),
            line: i as u64 + 1,
            msg: e.to_string(),
        })?;
        if !seen.insert(item.id.clone()) {
            return Err(DataError::Parse {
                file: path.to_path_buf(),
                line: i as u64 + 1,
                msg: format!("duplicate news id `{}`", item.id),
            });
        }
        items.push(item);
    }
    items.sort_by(|a, b| a.timestamp.cmp(&b.timestamp).then_with(|| a.id.cmp(&b.id)));
    Ok(items)
}

pub fn write_news(items: &[NewsItem], path: &Path) -> Result<(), DataError> {
    let io = |e: std::io::Error| DataError::Io {
        path: path.to_path_buf(),
        msg: e.to_string(),
    };
    let mut w = std::io::BufWriter::new(std::fs::File::create(path).map_err(io)?);
    for item in items {
        let line = serde_json::to_string(item).expect("news item serializes");
        writeln!(w, "{line}").map_err(io)?;
    }
    w.flush().map_err(io)
}

/// Drop items whose category is on the blocklist (case-insensitive).
pub fn filter_categories(items: Vec<NewsItem>, blocklist: &[String]) -> Vec<NewsItem> {
    items
        .into_iter()
        .filter(|n| !blocklist.iter().any(|b| b.eq_ignore_ascii_case(&n.category)))
        .collect()
}
