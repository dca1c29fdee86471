use chrono::NaiveDateTime;
use serde::{Deserialize, Serialize};

use crate::data::minute_timestamp;
use crate::embedding::EmbeddingVec;

/// Running macro summary and investment notes.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Note {
    pub text: String,
    #[serde(with = "minute_timestamp")]
    pub as_of: NaiveDateTime,
}

impl Note {
    pub fn new(text: impl Into<String>, as_of: NaiveDateTime) -> Self {
        Self {
            text: text.into(),
            as_of,
        }
    }
}

/// Outcome of analysing one news item.
///
/// `round` is the last completed refinement round; a successful report has
/// `round == n_rounds`. `retrieved_ids[i]` holds the ids fed into round `i + 1`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AnalysisReport {
    pub news_id: String,
    #[serde(with = "minute_timestamp")]
    pub timestamp: NaiveDateTime,
    pub round: usize,
    pub text: String,
    pub refined: String,
    pub retrieved_ids: Vec<Vec<String>>,
    pub skipped: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub failed: Option<String>,
}

impl AnalysisReport {
    pub fn is_final(&self) -> bool {
        !self.skipped && self.failed.is_none()
    }
}

/// A final report together with the embedding stored in memory.
#[derive(Clone, Debug, PartialEq)]
pub struct FinalReport {
    pub report: AnalysisReport,
    pub embedding: EmbeddingVec,
}

/// Per-day processing summary.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct DayOutcome {
    pub finals: Vec<FinalReport>,
    pub skipped: Vec<AnalysisReport>,
    pub failed: Vec<AnalysisReport>,
    pub note_updates: usize,
    pub note_failures: usize,
}

impl DayOutcome {
    pub fn n_reports(&self) -> usize {
        self.finals.len()
    }
}
