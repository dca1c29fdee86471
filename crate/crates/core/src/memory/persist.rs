//! On-disk layout: `items.jsonl` (metadata and text), `vectors.bin`
//! (row-major little-endian f32, one row per item), `manifest.json`.

use chrono::NaiveDateTime;
use serde::{Deserialize, Serialize};
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use super::store::{MemoryItem, MemorySource, MemoryStore};
use super::MemoryError;
use crate::data::minute_timestamp;
use crate::embedding::EmbeddingVec;

#[derive(Serialize, Deserialize)]
struct Manifest {
    dimension: usize,
    count: usize,
    dtype: String,
}

#[derive(Serialize, Deserialize)]
struct ItemMeta {
    id: String,
    text: String,
    source: MemorySource,
    #[serde(with = "minute_timestamp")]
    timestamp: NaiveDateTime,
}

fn io_err(path: &Path) -> impl Fn(std::io::Error) -> MemoryError + '_ {
    move |e| MemoryError::Io {
        path: path.display().to_string(),
        msg: e.to_string(),
    }
}

pub(super) fn save(store: &MemoryStore, dir: &Path) -> Result<(), MemoryError> {
    std::fs::create_dir_all(dir).map_err(io_err(dir))?;
    let items_path = dir.join("items.jsonl");
    let mut items = BufWriter::new(std::fs::File::create(&items_path).map_err(io_err(&items_path))?);
    let vec_path = dir.join("vectors.bin");
    let mut vectors = BufWriter::new(std::fs::File::create(&vec_path).map_err(io_err(&vec_path))?);
    for item in store.items() {
        let meta = ItemMeta {
            id: item.id.clone(),
            text: item.text.clone(),
            source: item.source,
            timestamp: item.timestamp,
        };
        let line = serde_json::to_string(&meta).expect("item metadata serializes");
        writeln!(items, "{line}").map_err(io_err(&items_path))?;
        for v in item.embedding.as_slice() {
            vectors
                .write_all(&(*v as f32).to_le_bytes())
                .map_err(io_err(&vec_path))?;
        }
    }
    items.flush().map_err(io_err(&items_path))?;
    vectors.flush().map_err(io_err(&vec_path))?;
    let manifest = Manifest {
        dimension: store.dim(),
        count: store.len(),
        dtype: "f32le".into(),
    };
    let man_path = dir.join("manifest.json");
    std::fs::write(
        &man_path,
        serde_json::to_string_pretty(&manifest).expect("manifest serializes"),
    )
    .map_err(io_err(&man_path))
}

pub(super) fn load(dir: &Path) -> Result<MemoryStore, MemoryError> {
    let man_path = dir.join("manifest.json");
    let manifest: Manifest = serde_json::from_str(&std::fs::read_to_string(&man_path).map_err(io_err(&man_path))?)
        .map_err(|e| MemoryError::Format(format!("manifest: {e}")))?;
    if manifest.dtype != "f32le" {
        return Err(MemoryError::Format(format!("unsupported dtype {}", manifest.dtype)));
    }

    let vec_path = dir.join("vectors.bin");
    let mut raw = Vec::new();
    std::fs::File::open(&vec_path)
        .and_then(|mut f| f.read_to_end(&mut raw))
        .map_err(io_err(&vec_path))?;
    let expected = manifest.count * manifest.dimension * 4;
    if raw.len() != expected {
        return Err(MemoryError::Format(format!(
            "vectors.bin holds {} bytes, manifest implies {expected}",
            raw.len()
        )));
    }

    let items_path = dir.join("items.jsonl");
    let reader = BufReader::new(std::fs::File::open(&items_path).map_err(io_err(&items_path))?);
    let mut store = MemoryStore::new(manifest.dimension);
    let mut rows = raw.chunks_exact(manifest.dimension * 4);
    for line in reader.lines() {
        let line = line.map_err(io_err(&items_path))?;
        if line.trim().is_empty() {
            continue;
        }
        let meta: ItemMeta = serde_json::from_str(&line).map_err(|e| MemoryError::Format(e.to_string()))?;
        let row = rows
            .next()
            .ok_or_else(|| MemoryError::Format("more items than vectors".into()))?;
        let values: Vec<f64> = row
            .chunks_exact(4)
            .map(|b| f32::from_le_bytes([b[0], b[1], b[2], b[3]]) as f64)
            .collect();
        store.insert(MemoryItem {
            id: meta.id,
            text: meta.text,
            embedding: EmbeddingVec::new(values)?,
            source: meta.source,
            timestamp: meta.timestamp,
        })?;
    }
    if store.len() != manifest.count {
        return Err(MemoryError::Format(format!(
            "manifest count {} but {} items",
            manifest.count,
            store.len()
        )));
    }
    Ok(store)
}
