use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::collections::HashMap;
use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::sync::Mutex;

use super::{EmbedError, Embedder, EmbeddingVec};

#[derive(Serialize, Deserialize)]
struct CacheLine {
    id: String,
    vector: Vec<f64>,
}

/// Embedder wrapper persisting vectors to a JSONL file keyed by content hash.
///
/// Keys hash the inner backend's fingerprint together with the text, so a
/// cache file never serves vectors from a different backend.
pub struct CachedEmbedder<E> {
    inner: E,
    path: PathBuf,
    entries: Mutex<HashMap<String, EmbeddingVec>>,
    file: Mutex<File>,
}

impl<E: Embedder> CachedEmbedder<E> {
    pub fn open(inner: E, path: &Path) -> Result<Self, EmbedError> {
        let cache_err = |e: std::io::Error| EmbedError::Cache(format!("{}: {e}", path.display()));
        let mut entries = HashMap::new();
        if path.exists() {
            let reader = BufReader::new(File::open(path).map_err(cache_err)?);
            for line in reader.lines() {
                let line = line.map_err(cache_err)?;
                if line.trim().is_empty() {
                    continue;
                }
                // A torn trailing line from an interrupted run is skipped.
                let Ok(parsed) = serde_json::from_str::<CacheLine>(&line) else {
                    log::warn!("skipping unreadable cache line in {}", path.display());
                    continue;
                };
                if parsed.vector.len() == inner.dim() {
                    entries.insert(parsed.id, EmbeddingVec::new(parsed.vector)?);
                }
            }
        }
        let file = OpenOptions::new()
            .create(true)
            .append(true)
            .open(path)
            .map_err(cache_err)?;
        Ok(Self {
            inner,
            path: path.to_path_buf(),
            entries: Mutex::new(entries),
            file: Mutex::new(file),
        })
    }

    pub fn key(&self, text: &str) -> String {
        let mut h = Sha256::new();
        h.update(self.inner.fingerprint().as_bytes());
        h.update([0u8]);
        h.update(text.as_bytes());
        hex::encode(h.finalize())
    }

    pub fn len(&self) -> usize {
        self.entries.lock().expect("cache lock").len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn inner(&self) -> &E {
        &self.inner
    }
}

impl<E: Embedder> Embedder for CachedEmbedder<E> {
    fn dim(&self) -> usize {
        self.inner.dim()
    }

    fn fingerprint(&self) -> String {
        self.inner.fingerprint()
    }

    fn embed(&self, text: &str) -> Result<EmbeddingVec, EmbedError> {
        let key = self.key(text);
        if let Some(v) = self.entries.lock().expect("cache lock").get(&key) {
            return Ok(v.clone());
        }
        let v = self.inner.embed(text)?;
        let line = serde_json::to_string(&CacheLine {
            id: key.clone(),
            vector: v.as_slice().to_vec(),
        })
        .expect("cache line serializes");
        {
            let mut f = self.file.lock().expect("cache file lock");
            writeln!(f, "{line}").map_err(|e| EmbedError::Cache(format!("{}: {e}", self.path.display())))?;
        }
        self.entries.lock().expect("cache lock").insert(key, v.clone());
        Ok(v)
    }
}
