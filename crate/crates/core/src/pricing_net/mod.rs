//! Hybrid pricing network: downsampled news/factor state, asset embeddings,
//! residual MLP head. Forward and backward passes are hand-written.

mod checkpoint;
mod dataset;
mod model;
mod optim;
mod params;
mod train;

pub use checkpoint::{load_checkpoint, save_checkpoint, Manifest};
pub use dataset::{build_dataset, formation_indices, Dataset, NewsInput};
pub use model::{backward, eval_mse, forward_batch, loss_and_grads, Batch, ForwardCache, LossGrads, Mode};
pub use optim::Adam;
pub use params::{NetworkParams, RunningStats, TensorSpec, Weights};
pub use train::{predict_panel, pretrain, train, EpochRecord, PredictionPanel, TrainHistory};

use serde::{Deserialize, Serialize};

pub const BN_EPS: f64 = 1e-8;
pub const BN_MOMENTUM: f64 = 0.1;

#[derive(Debug, Clone, thiserror::Error)]
pub enum NetError {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("embedding row {0} outside the asset table")]
    UnknownAsset(usize),
    #[error("non-finite {0}")]
    NonFinite(String),
    #[error("training diverged at {0}")]
    Diverged(String),
    #[error("io: {0}")]
    Io(String),
    #[error("checkpoint format: {0}")]
    Format(String),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NetworkConfig {
    pub d_model: usize,
    pub d_emb: usize,
    pub n_factors: usize,
    pub n_assets: usize,
    pub n_hidden: usize,
    pub dropout: f64,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub seed: u64,
    /// Batch-norm inside hidden layers; off makes each layer `x + relu(W x)`.
    pub batch_norm: bool,
    /// Learn `E`; off keeps it at zero.
    pub asset_embedding: bool,
    /// Feed manual factors; off zeroes the factor part of every input.
    pub use_factors: bool,
    pub e_weight_decay: f64,
}

impl Default for NetworkConfig {
    fn default() -> Self {
        Self {
            d_model: 32,
            d_emb: 16,
            n_factors: 8,
            n_assets: 1,
            n_hidden: 2,
            dropout: 0.1,
            learning_rate: 1e-3,
            batch_size: 256,
            epochs: 20,
            seed: 0,
            batch_norm: true,
            asset_embedding: true,
            use_factors: true,
            e_weight_decay: 0.0,
        }
    }
}

impl NetworkConfig {
    pub fn validate(&self) -> Result<(), NetError> {
        let positive = [
            ("d_model", self.d_model),
            ("d_emb + n_factors", self.d_emb + self.n_factors),
            ("batch_size", self.batch_size),
        ];
        for (name, v) in positive {
            if v == 0 {
                return Err(NetError::InvalidArgument(format!("{name} must be positive")));
            }
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(NetError::InvalidArgument(format!(
                "dropout {} outside [0, 1)",
                self.dropout
            )));
        }
        if !(self.learning_rate >= 0.0 && self.learning_rate.is_finite()) {
            return Err(NetError::InvalidArgument(format!(
                "learning rate {} must be finite and non-negative",
                self.learning_rate
            )));
        }
        if !(self.e_weight_decay >= 0.0) {
            return Err(NetError::InvalidArgument("e_weight_decay must be non-negative".into()));
        }
        Ok(())
    }
}
