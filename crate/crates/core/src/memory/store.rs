use chrono::{DateTime, NaiveDateTime};
use serde::{Deserialize, Serialize};
use std::collections::HashSet;
use std::path::Path;

use super::chunk::{chunk_text, ChunkingConfig};
use super::MemoryError;
use crate::agent::AnalysisReport;
use crate::data::minute_timestamp;
use crate::embedding::{Embedder, EmbeddingVec};

#[derive(Copy, Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MemorySource {
    KnowledgeBase,
    Report,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MemoryItem {
    pub id: String,
    pub text: String,
    pub embedding: EmbeddingVec,
    pub source: MemorySource,
    #[serde(with = "minute_timestamp")]
    pub timestamp: NaiveDateTime,
}

/// A retrieval hit with its cosine similarity to the query.
#[derive(Clone, Copy, Debug)]
pub struct Retrieved<'a> {
    pub item: &'a MemoryItem,
    pub score: f64,
}

/// Timestamp of knowledge-base chunks: always visible.
pub fn epoch() -> NaiveDateTime {
    DateTime::UNIX_EPOCH.naive_utc()
}

/// Exact brute-force vector store.
#[derive(Clone, Debug, PartialEq)]
pub struct MemoryStore {
    dim: usize,
    items: Vec<MemoryItem>,
    norms: Vec<f64>,
    ids: HashSet<String>,
}

impl MemoryStore {
    pub fn new(dim: usize) -> Self {
        Self {
            dim,
            items: Vec::new(),
            norms: Vec::new(),
            ids: HashSet::new(),
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn items(&self) -> &[MemoryItem] {
        &self.items
    }

    pub fn contains(&self, id: &str) -> bool {
        self.ids.contains(id)
    }

    pub fn insert(&mut self, item: MemoryItem) -> Result<(), MemoryError> {
        if item.embedding.dim() != self.dim {
            return Err(MemoryError::Dimension {
                expected: self.dim,
                got: item.embedding.dim(),
            });
        }
        if !self.ids.insert(item.id.clone()) {
            return Err(MemoryError::DuplicateId(item.id));
        }
        self.norms.push(item.embedding.norm());
        self.items.push(item);
        Ok(())
    }

    /// Store a final analysis report under id `report:<news_id>`, stamped
    /// with the news item's timestamp.
    pub fn insert_report(&mut self, report: &AnalysisReport, embedding: EmbeddingVec) -> Result<(), MemoryError> {
        self.insert(MemoryItem {
            id: format!("report:{}", report.news_id),
            text: report.text.clone(),
            embedding,
            source: MemorySource::Report,
            timestamp: report.timestamp,
        })
    }

    /// Top-`k` items visible at `as_of`, by descending cosine similarity.
    ///
    /// Ties go to the older item, then to the smaller id. Items whose id is
    /// in `exclude` are never returned.
    pub fn retrieve(
        &self,
        query: &EmbeddingVec,
        k: usize,
        as_of: NaiveDateTime,
        exclude: &HashSet<String>,
    ) -> Result<Vec<Retrieved<'_>>, MemoryError> {
        if query.dim() != self.dim {
            return Err(MemoryError::Dimension {
                expected: self.dim,
                got: query.dim(),
            });
        }
        if k == 0 {
            return Ok(Vec::new());
        }
        let qn = query.norm();
        let mut hits: Vec<Retrieved<'_>> = self
            .items
            .iter()
            .zip(&self.norms)
            .filter(|(item, _)| item.timestamp <= as_of && !exclude.contains(&item.id))
            .map(|(item, norm)| {
                let denom = qn * norm;
                let score = if denom == 0.0 {
                    0.0
                } else {
                    query.dot(&item.embedding) / denom
                };
                Retrieved { item, score }
            })
            .collect();
        let order = |a: &Retrieved<'_>, b: &Retrieved<'_>| {
            b.score
                .total_cmp(&a.score)
                .then_with(|| a.item.timestamp.cmp(&b.item.timestamp))
                .then_with(|| a.item.id.cmp(&b.item.id))
        };
        if hits.len() > k {
            hits.select_nth_unstable_by(k - 1, order);
            hits.truncate(k);
        }
        hits.sort_by(order);
        Ok(hits)
    }

    pub fn save(&self, dir: &Path) -> Result<(), MemoryError> {
        super::persist::save(self, dir)
    }

    pub fn load(dir: &Path) -> Result<Self, MemoryError> {
        super::persist::load(dir)
    }
}

/// Chunk every readable text file in `dir` and embed the chunks into a new
/// store. Knowledge-base items carry the epoch timestamp.
pub fn ingest_corpus(
    dir: &Path,
    chunking: &ChunkingConfig,
    embedder: &dyn Embedder,
) -> Result<MemoryStore, MemoryError> {
    let io = |e: std::io::Error| MemoryError::Io {
        path: dir.display().to_string(),
        msg: e.to_string(),
    };
    let mut files: Vec<_> = std::fs::read_dir(dir)
        .map_err(io)?
        .filter_map(|e| e.ok())
        .map(|e| e.path())
        .filter(|p| p.is_file())
        .collect();
    files.sort();

    let mut store = MemoryStore::new(embedder.dim());
    for path in files {
        let text = match std::fs::read_to_string(&path) {
            Ok(t) => t,
            Err(e) => {
                log::warn!("skipping {}: {e}", path.display());
                continue;
            }
        };
        let name = path
            .file_name()
            .map(|n| n.to_string_lossy().into_owned())
            .unwrap_or_default();
        for (i, chunk) in chunk_text(&text, chunking)?.into_iter().enumerate() {
            let embedding = embedder.embed(&chunk)?;
            store.insert(MemoryItem {
                id: format!("kb:{name}:{i}"),
                text: chunk,
                embedding,
                source: MemorySource::KnowledgeBase,
                timestamp: epoch(),
            })?;
        }
    }
    Ok(store)
}
