//! `manifest.json` + `params.bin` (float32, little-endian, tensors in
//! manifest order, each row-major).

use ndarray::Array1;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::path::Path;

use super::params::{NetworkParams, RunningStats, TensorSpec, Weights};
use super::{NetError, NetworkConfig};
use crate::data::AssetId;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub config: NetworkConfig,
    pub seed: u64,
    pub epoch: Option<usize>,
    pub metrics: BTreeMap<String, f64>,
    pub output_scale: f64,
    pub assets: Vec<AssetId>,
    pub dtype: String,
    pub tensors: Vec<TensorSpec>,
}

fn io_err(path: &Path, e: impl std::fmt::Display) -> NetError {
    NetError::Io(format!("{}: {e}", path.display()))
}

fn running_layout(p: &NetworkParams) -> Vec<TensorSpec> {
    let mut out = Vec::new();
    for (k, r) in p.running.iter().enumerate() {
        out.push(TensorSpec {
            name: format!("running_mean.{k}"),
            shape: vec![r.mean.len()],
        });
        out.push(TensorSpec {
            name: format!("running_var.{k}"),
            shape: vec![r.var.len()],
        });
    }
    out
}

pub fn save_checkpoint(
    params: &NetworkParams,
    dir: &Path,
    epoch: Option<usize>,
    metrics: &BTreeMap<String, f64>,
) -> Result<(), NetError> {
    std::fs::create_dir_all(dir).map_err(|e| io_err(dir, e))?;
    let mut tensors = params.weights.layout();
    tensors.extend(running_layout(params));
    let manifest = Manifest {
        config: params.config.clone(),
        seed: params.config.seed,
        epoch,
        metrics: metrics.clone(),
        output_scale: params.output_scale,
        assets: params.assets.clone(),
        dtype: "f32le".into(),
        tensors,
    };
    let mut bytes = Vec::with_capacity(4 * params.weights.n_values());
    let mut push = |s: &[f64]| {
        for v in s {
            bytes.extend_from_slice(&(*v as f32).to_le_bytes());
        }
    };
    for s in params.weights.slices() {
        push(s);
    }
    for r in &params.running {
        push(r.mean.as_slice().expect("standard layout"));
        push(r.var.as_slice().expect("standard layout"));
    }
    let path = dir.join("params.bin");
    std::fs::write(&path, bytes).map_err(|e| io_err(&path, e))?;
    let path = dir.join("manifest.json");
    let json = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
    std::fs::write(&path, json).map_err(|e| io_err(&path, e))
}

pub fn load_checkpoint(dir: &Path) -> Result<(NetworkParams, Manifest), NetError> {
    let path = dir.join("manifest.json");
    let text = std::fs::read_to_string(&path).map_err(|e| io_err(&path, e))?;
    let manifest: Manifest = serde_json::from_str(&text).map_err(|e| NetError::Format(format!("manifest: {e}")))?;
    if manifest.dtype != "f32le" {
        return Err(NetError::Format(format!("unsupported dtype {}", manifest.dtype)));
    }
    let path = dir.join("params.bin");
    let bytes = std::fs::read(&path).map_err(|e| io_err(&path, e))?;
    if bytes.len() % 4 != 0 {
        return Err(NetError::Format("params.bin length is not a multiple of 4".into()));
    }
    let values: Vec<f64> = bytes
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]) as f64)
        .collect();

    let mut params = NetworkParams::from_weights(
        manifest.config.clone(),
        Weights::zeros(&manifest.config),
        &manifest.assets,
        manifest.output_scale,
    )?;
    let mut expected = params.weights.layout();
    expected.extend(running_layout(&params));
    if expected != manifest.tensors {
        return Err(NetError::Format("tensor layout does not match the config".into()));
    }
    let total: usize = expected.iter().map(|t| t.shape.iter().product::<usize>()).sum();
    if total != values.len() {
        return Err(NetError::Format(format!(
            "params.bin holds {} values, layout needs {total}",
            values.len()
        )));
    }
    let mut offset = 0;
    for slot in params.weights.slices_mut() {
        slot.copy_from_slice(&values[offset..offset + slot.len()]);
        offset += slot.len();
    }
    let d = params.config.d_model;
    for r in &mut params.running {
        let mean = Array1::from(values[offset..offset + d].to_vec());
        let var = Array1::from(values[offset + d..offset + 2 * d].to_vec());
        *r = RunningStats { mean, var };
        offset += 2 * d;
    }
    if !params.weights.is_finite() {
        return Err(NetError::Format("checkpoint holds non-finite values".into()));
    }
    Ok((params, manifest))
}
