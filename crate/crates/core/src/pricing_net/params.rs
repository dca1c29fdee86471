use ndarray::{Array1, Array2};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use std::collections::HashMap;

use super::{NetError, NetworkConfig};
use crate::data::AssetId;

/// Learnable tensors. Also used as the gradient and optimizer-moment container.
#[derive(Clone, Debug, PartialEq)]
pub struct Weights {
    pub w_s: Array2<f64>,
    pub b_s: Array1<f64>,
    /// One row per training asset plus a final cold-asset row.
    pub e: Array2<f64>,
    pub w_inp: Array2<f64>,
    pub b_inp: Array1<f64>,
    pub w_h: Vec<Array2<f64>>,
    pub gamma: Vec<Array1<f64>>,
    pub beta: Vec<Array1<f64>>,
    pub w_out: Array1<f64>,
    pub b_out: Array1<f64>,
}

/// Name and shape of one stored tensor.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TensorSpec {
    pub name: String,
    pub shape: Vec<usize>,
}

impl Weights {
    pub fn zeros(cfg: &NetworkConfig) -> Self {
        let d = cfg.d_model;
        Self {
            w_s: Array2::zeros((d, cfg.d_emb + cfg.n_factors)),
            b_s: Array1::zeros(d),
            e: Array2::zeros((cfg.n_assets + 1, d)),
            w_inp: Array2::zeros((d, 2 * d)),
            b_inp: Array1::zeros(d),
            w_h: vec![Array2::zeros((d, d)); cfg.n_hidden],
            gamma: vec![Array1::zeros(d); cfg.n_hidden],
            beta: vec![Array1::zeros(d); cfg.n_hidden],
            w_out: Array1::zeros(d),
            b_out: Array1::zeros(1),
        }
    }

    pub fn zeros_like(&self) -> Self {
        Self {
            w_s: Array2::zeros(self.w_s.raw_dim()),
            b_s: Array1::zeros(self.b_s.len()),
            e: Array2::zeros(self.e.raw_dim()),
            w_inp: Array2::zeros(self.w_inp.raw_dim()),
            b_inp: Array1::zeros(self.b_inp.len()),
            w_h: self.w_h.iter().map(|w| Array2::zeros(w.raw_dim())).collect(),
            gamma: self.gamma.iter().map(|g| Array1::zeros(g.len())).collect(),
            beta: self.beta.iter().map(|b| Array1::zeros(b.len())).collect(),
            w_out: Array1::zeros(self.w_out.len()),
            b_out: Array1::zeros(1),
        }
    }

    pub fn layout(&self) -> Vec<TensorSpec> {
        let mut out = vec![
            spec("w_s", self.w_s.shape()),
            spec("b_s", self.b_s.shape()),
            spec("e", self.e.shape()),
            spec("w_inp", self.w_inp.shape()),
            spec("b_inp", self.b_inp.shape()),
        ];
        for k in 0..self.w_h.len() {
            out.push(spec(&format!("w_h.{k}"), self.w_h[k].shape()));
            out.push(spec(&format!("gamma.{k}"), self.gamma[k].shape()));
            out.push(spec(&format!("beta.{k}"), self.beta[k].shape()));
        }
        out.push(spec("w_out", self.w_out.shape()));
        out.push(spec("b_out", self.b_out.shape()));
        out
    }

    /// Tensors as flat slices, in `layout()` order.
    pub fn slices(&self) -> Vec<&[f64]> {
        let mut out: Vec<&[f64]> = vec![
            self.w_s.as_slice().expect("standard layout"),
            self.b_s.as_slice().expect("standard layout"),
            self.e.as_slice().expect("standard layout"),
            self.w_inp.as_slice().expect("standard layout"),
            self.b_inp.as_slice().expect("standard layout"),
        ];
        for k in 0..self.w_h.len() {
            out.push(self.w_h[k].as_slice().expect("standard layout"));
            out.push(self.gamma[k].as_slice().expect("standard layout"));
            out.push(self.beta[k].as_slice().expect("standard layout"));
        }
        out.push(self.w_out.as_slice().expect("standard layout"));
        out.push(self.b_out.as_slice().expect("standard layout"));
        out
    }

    pub fn slices_mut(&mut self) -> Vec<&mut [f64]> {
        let mut out: Vec<&mut [f64]> = vec![
            self.w_s.as_slice_mut().expect("standard layout"),
            self.b_s.as_slice_mut().expect("standard layout"),
            self.e.as_slice_mut().expect("standard layout"),
            self.w_inp.as_slice_mut().expect("standard layout"),
            self.b_inp.as_slice_mut().expect("standard layout"),
        ];
        for ((w, g), b) in self.w_h.iter_mut().zip(self.gamma.iter_mut()).zip(self.beta.iter_mut()) {
            out.push(w.as_slice_mut().expect("standard layout"));
            out.push(g.as_slice_mut().expect("standard layout"));
            out.push(b.as_slice_mut().expect("standard layout"));
        }
        out.push(self.w_out.as_slice_mut().expect("standard layout"));
        out.push(self.b_out.as_slice_mut().expect("standard layout"));
        out
    }

    pub fn n_values(&self) -> usize {
        self.slices().iter().map(|s| s.len()).sum()
    }

    pub fn is_finite(&self) -> bool {
        self.slices().iter().all(|s| s.iter().all(|v| v.is_finite()))
    }

    pub fn max_abs(&self) -> f64 {
        self.slices()
            .iter()
            .flat_map(|s| s.iter())
            .fold(0.0, |m, v| m.max(v.abs()))
    }
}

fn spec(name: &str, shape: &[usize]) -> TensorSpec {
    TensorSpec {
        name: name.to_string(),
        shape: shape.to_vec(),
    }
}

/// Batch-norm running statistics for one hidden layer.
#[derive(Clone, Debug, PartialEq)]
pub struct RunningStats {
    pub mean: Array1<f64>,
    pub var: Array1<f64>,
}

/// Full network state: weights, batch-norm statistics, the asset lookup and
/// the fixed output scale.
#[derive(Clone, Debug, PartialEq)]
pub struct NetworkParams {
    pub config: NetworkConfig,
    pub weights: Weights,
    pub running: Vec<RunningStats>,
    pub assets: Vec<AssetId>,
    asset_rows: HashMap<AssetId, usize>,
    /// Multiplies the network output; set from the spread of training targets
    /// so the head works in unit scale. Not learned.
    pub output_scale: f64,
}

fn he_uniform(rng: &mut ChaCha8Rng, a: &mut Array2<f64>) {
    let fan_in = a.ncols().max(1) as f64;
    let bound = (6.0 / fan_in).sqrt();
    a.mapv_inplace(|_| rng.gen_range(-bound..bound));
}

impl NetworkParams {
    /// Seeded initialization over `assets`, which must have `cfg.n_assets` entries.
    pub fn init(
        cfg: &NetworkConfig,
        assets: &[AssetId],
        output_scale: f64,
        rng: &mut ChaCha8Rng,
    ) -> Result<Self, NetError> {
        cfg.validate()?;
        let mut w = Weights::zeros(cfg);
        he_uniform(rng, &mut w.w_s);
        he_uniform(rng, &mut w.w_inp);
        for wh in &mut w.w_h {
            he_uniform(rng, wh);
        }
        for g in &mut w.gamma {
            g.fill(1.0);
        }
        let mut w_out = Array2::zeros((1, cfg.d_model));
        he_uniform(rng, &mut w_out);
        w.w_out = w_out.row(0).to_owned();
        if cfg.asset_embedding {
            let normal = Normal::new(0.0, 0.01).expect("valid sigma");
            let n = cfg.n_assets;
            for mut row in w.e.rows_mut().into_iter().take(n) {
                row.mapv_inplace(|_| normal.sample(rng));
            }
        }
        Self::from_weights(cfg.clone(), w, assets, output_scale)
    }

    pub fn from_weights(
        config: NetworkConfig,
        weights: Weights,
        assets: &[AssetId],
        output_scale: f64,
    ) -> Result<Self, NetError> {
        config.validate()?;
        if assets.len() != config.n_assets {
            return Err(NetError::Shape(format!(
                "{} assets for n_assets = {}",
                assets.len(),
                config.n_assets
            )));
        }
        if weights.layout() != Weights::zeros(&config).layout() {
            return Err(NetError::Shape("weights do not match the config".into()));
        }
        if !(output_scale.is_finite() && output_scale > 0.0) {
            return Err(NetError::InvalidArgument(format!(
                "output scale {output_scale} must be positive"
            )));
        }
        let asset_rows = assets.iter().enumerate().map(|(i, a)| (*a, i)).collect();
        let d = config.d_model;
        Ok(Self {
            running: (0..config.n_hidden)
                .map(|_| RunningStats {
                    mean: Array1::zeros(d),
                    var: Array1::ones(d),
                })
                .collect(),
            config,
            weights,
            assets: assets.to_vec(),
            asset_rows,
            output_scale,
        })
    }

    /// Row of `E` for an asset; unknown assets map to the cold row.
    pub fn asset_row(&self, asset: AssetId) -> usize {
        self.asset_rows.get(&asset).copied().unwrap_or(self.config.n_assets)
    }

    pub fn cold_row(&self) -> usize {
        self.config.n_assets
    }

    pub fn input_dim(&self) -> usize {
        self.config.d_emb + self.config.n_factors
    }
}
