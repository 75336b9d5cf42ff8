//! Deep recommender: frozen shallow embeddings fused with relation-attentive
//! graph-convolution embeddings, trained on app pairs with binary
//! cross-entropy.

mod metrics;
mod propagate;
mod train;

use std::fs::File;
use std::io::BufWriter;
use std::path::Path;

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::kge::{read_checkpoint, write_checkpoint, BlockInfo, CheckpointHeader, KgeError, KgeModel, ModelDims, ModelKind, CHECKPOINT_FORMAT};
use crate::optim::Tensor;
use crate::rng::stream_rng;

pub use metrics::{
    evaluate_recommendations, evaluate_relation_prediction, list_metrics, measure_inference, measure_shallow_inference,
    predict_relations, recommend_top_k, shallow_recommend_top_k, ListMetrics, RecReport, RecRow, TimingReport,
};
pub use propagate::{
    aggregate, aggregate_neighborhood, attention_weights, fuse_embeddings, layer_update, propagate, score_app_pair,
    PairKey,
};
pub use train::{
    bce_loss, recommendation_loss, recommendation_loss_with_grads, train_deep, DeepEpoch, DeepOutcome, RecBatch,
};

#[derive(Debug, Error)]
pub enum DeepError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("dimension mismatch: expected {expected}, found {found}")]
    Dimension { expected: usize, found: usize },
    #[error("empty {0}")]
    Empty(&'static str),
    #[error("non-finite loss at epoch {epoch}, batch {batch}")]
    NonFinite { epoch: usize, batch: usize },
    #[error(transparent)]
    Shallow(#[from] KgeError),
    #[error(transparent)]
    Graph(#[from] crate::kgbuild::KgError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    Relu,
    Identity,
    Sigmoid,
    Tanh,
}

impl Activation {
    pub fn apply(self, z: f64) -> f64 {
        match self {
            Activation::Relu => z.max(0.0),
            Activation::Identity => z,
            Activation::Sigmoid => 1.0 / (1.0 + (-z).exp()),
            Activation::Tanh => z.tanh(),
        }
    }

    /// Derivative at pre-activation `z` with output `y`.
    pub fn derivative(self, z: f64, y: f64) -> f64 {
        match self {
            Activation::Relu => {
                if z > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Identity => 1.0,
            Activation::Sigmoid => y * (1.0 - y),
            Activation::Tanh => 1.0 - y * y,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DeepConfig {
    pub dim: usize,
    pub sample_size: usize,
    pub depth: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub l2_weight: f64,
    pub epochs: usize,
    pub negatives_per_positive: usize,
    /// Hidden-layer activation; the last layer is always the identity.
    pub activation: Activation,
    pub seed: u64,
}

impl Default for DeepConfig {
    fn default() -> Self {
        DeepConfig {
            dim: 16,
            sample_size: 7,
            depth: 1,
            batch_size: 10,
            learning_rate: 0.005,
            l2_weight: 1e-7,
            epochs: 200,
            negatives_per_positive: 1,
            activation: Activation::Relu,
            seed: 0,
        }
    }
}

impl DeepConfig {
    pub fn validate(&self) -> Result<(), DeepError> {
        let bad = |m: &str| Err(DeepError::Config(m.to_string()));
        if self.dim == 0 || self.sample_size == 0 || self.depth == 0 {
            return bad("dim, sample_size and depth must be at least 1");
        }
        if self.batch_size == 0 || self.epochs == 0 || self.negatives_per_positive == 0 {
            return bad("batch_size, epochs and negatives_per_positive must be at least 1");
        }
        if !(self.learning_rate >= 0.0 && self.learning_rate.is_finite()) {
            return bad("learning_rate must be finite and non-negative");
        }
        if !(self.l2_weight >= 0.0) {
            return bad("l2_weight must be non-negative");
        }
        Ok(())
    }
}

/// Trainable deep parameters plus the frozen shallow store.
///
/// `params` holds `entity [E, d]`, `relation [R, d]`, then per layer `k`
/// the weights `w{k} [d, 2d]` and bias `b{k} [d]`.
#[derive(Debug, Clone, PartialEq)]
pub struct DeepModel {
    pub config: DeepConfig,
    pub shallow: KgeModel,
    pub params: Vec<Tensor>,
}

impl DeepModel {
    pub fn new(shallow: KgeModel, config: DeepConfig) -> Result<Self, DeepError> {
        config.validate()?;
        let d = config.dim;
        let (e, r) = (shallow.entity_count, shallow.relation_count);
        let mut params = vec![Tensor::zeros("entity", &[e, d]), Tensor::zeros("relation", &[r, d])];
        for k in 1..=config.depth {
            params.push(Tensor::zeros(format!("w{k}"), &[d, 2 * d]));
            params.push(Tensor::zeros(format!("b{k}"), &[d]));
        }
        let mut rng = stream_rng(config.seed, &[0xDEE9, 1]);
        let emb = 1.0 / (d as f64).sqrt();
        let xavier = (6.0 / (3 * d) as f64).sqrt();
        for t in &mut params {
            let bound = match t.name.as_bytes()[0] {
                b'w' => xavier,
                b'b' => 0.0,
                _ => emb,
            };
            if bound > 0.0 {
                t.data.iter_mut().for_each(|x| *x = rng.random_range(-bound..=bound));
            }
        }
        Ok(DeepModel { config, shallow, params })
    }

    pub fn entity_count(&self) -> usize {
        self.shallow.entity_count
    }

    pub fn relation_count(&self) -> usize {
        self.shallow.relation_count
    }

    pub fn shallow_dim(&self) -> usize {
        self.shallow.params[0].row_len()
    }

    pub fn fused_dim(&self) -> usize {
        self.shallow_dim() + self.config.dim
    }

    pub(crate) fn layer(&self, k: usize) -> (&Tensor, &Tensor) {
        (&self.params[2 * k], &self.params[2 * k + 1])
    }

    pub fn is_finite(&self) -> bool {
        self.params.iter().all(Tensor::is_finite)
    }

    pub fn save(&self, path: impl AsRef<Path>, shallow_reference: &str) -> Result<(), DeepError> {
        let mut blocks: Vec<BlockInfo> = self
            .shallow
            .params
            .iter()
            .map(|t| BlockInfo {
                name: format!("shallow.{}", t.name),
                shape: t.shape.clone(),
            })
            .collect();
        blocks.extend(self.params.iter().map(|t| BlockInfo {
            name: t.name.clone(),
            shape: t.shape.clone(),
        }));
        let header = CheckpointHeader {
            format: CHECKPOINT_FORMAT.into(),
            kind: "deep".into(),
            dims: serde_json::json!({
                "shallow_kind": self.shallow.kind.name(),
                "shallow": self.shallow.dims,
                "deep": self.config.dim,
                "depth": self.config.depth,
            }),
            entity_count: self.entity_count(),
            relation_count: self.relation_count(),
            seed: self.config.seed,
            config: serde_json::json!({
                "deep": self.config,
                "shallow_checkpoint": shallow_reference,
            }),
            blocks,
        };
        let tensors: Vec<Tensor> = self.shallow.params.iter().chain(&self.params).cloned().collect();
        let file = File::create(path).map_err(KgeError::from)?;
        write_checkpoint(BufWriter::new(file), &header, &tensors)?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, DeepError> {
        let bad = |m: String| DeepError::Shallow(KgeError::Checkpoint(m));
        let file = File::open(path).map_err(KgeError::from)?;
        let (header, tensors) = read_checkpoint(file)?;
        if header.kind != "deep" {
            return Err(bad(format!("expected a deep checkpoint, found `{}`", header.kind)));
        }
        let kind: ModelKind = header.dims["shallow_kind"]
            .as_str()
            .ok_or_else(|| bad("missing shallow kind".into()))?
            .parse()?;
        let dims: ModelDims =
            serde_json::from_value(header.dims["shallow"].clone()).map_err(|e| bad(e.to_string()))?;
        let config: DeepConfig =
            serde_json::from_value(header.config["deep"].clone()).map_err(|e| bad(e.to_string()))?;
        let mut shallow = KgeModel::zeros(kind, dims, header.entity_count, header.relation_count)?;
        let split = shallow.params.len();
        if tensors.len() != split + 2 + 2 * config.depth {
            return Err(bad("block count does not match the model layout".into()));
        }
        let mut model = DeepModel::new(shallow.clone(), config)?;
        for (slot, t) in shallow.params.iter_mut().chain(model.params.iter_mut()).zip(tensors) {
            if slot.shape != t.shape {
                return Err(bad(format!("block `{}` has shape {:?}", t.name, t.shape)));
            }
            slot.data = t.data;
        }
        model.shallow = shallow;
        Ok(model)
    }
}
