//! Text embeddings, per-day report averages, and decay-kernel smoothing.

mod backend;
mod cache;
mod smooth;

use serde::{Deserialize, Serialize};

pub use backend::{Embedder, HttpEmbedder, LocalEmbedder, MockEmbedder};
pub use cache::CachedEmbedder;
pub use smooth::{daily_average, kernel_weights, smooth, smooth_series, DailyEmbedding, SmootherConfig};

#[derive(Debug, thiserror::Error)]
pub enum EmbedError {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("embedding backend unreachable after {attempts} attempt(s): {msg}")]
    Transport { attempts: u32, msg: String },
    #[error("embedding backend protocol error: {0}")]
    Protocol(String),
    #[error("dimension mismatch: expected {expected}, got {got}")]
    Dimension { expected: usize, got: usize },
    #[error("no embedding history on or before {0}")]
    BeforeHistory(chrono::NaiveDate),
    #[error("embedding cache: {0}")]
    Cache(String),
}

/// Fixed-length real vector produced by an [`Embedder`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct EmbeddingVec(Vec<f64>);

impl EmbeddingVec {
    pub fn new(values: Vec<f64>) -> Result<Self, EmbedError> {
        if values.is_empty() {
            return Err(EmbedError::InvalidArgument("empty embedding".into()));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(EmbedError::InvalidArgument("embedding has non-finite entries".into()));
        }
        Ok(Self(values))
    }

    pub fn zeros(dim: usize) -> Self {
        Self(vec![0.0; dim])
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }

    pub fn dot(&self, other: &EmbeddingVec) -> f64 {
        self.0.iter().zip(&other.0).map(|(a, b)| a * b).sum()
    }

    pub fn norm(&self) -> f64 {
        self.dot(self).sqrt()
    }

    /// Cosine similarity; zero when either vector has zero norm.
    pub fn cosine(&self, other: &EmbeddingVec) -> f64 {
        let denom = self.norm() * other.norm();
        if denom == 0.0 {
            0.0
        } else {
            self.dot(other) / denom
        }
    }

    pub(crate) fn check_dim(&self, expected: usize) -> Result<(), EmbedError> {
        if self.dim() != expected {
            return Err(EmbedError::Dimension {
                expected,
                got: self.dim(),
            });
        }
        Ok(())
    }
}
