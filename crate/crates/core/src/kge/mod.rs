//! Shallow knowledge-graph embeddings: ten score functions, negative
//! sampling, three loss families, seeded training and link-prediction
//! evaluation.

mod checkpoint;
mod eval;
mod loss;
mod model;
mod sampling;
mod search;
mod train;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use checkpoint::{load_checkpoint, BlockInfo, FORMAT as CHECKPOINT_FORMAT, read_checkpoint, save_checkpoint, write_checkpoint, CheckpointHeader};
pub use eval::{
    evaluate_link_prediction, evaluate_ranks, rank_candidates, rank_from_scores, HITS_AT, Direction, EvalReport, FilterSet, Query, RankResult,
};
pub use loss::{batch_loss, loss_with_grads, LossFamily};
pub use model::{init_model, KgeModel, ModelDims};
pub use sampling::corrupt_triple;
pub use search::{hyperparameter_search, SearchOutcome, SearchSpace, Trial};
pub use train::{batch_objective, train_model, EpochRecord, TrainConfig, TrainOutcome};

#[derive(Debug, Error)]
pub enum KgeError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("empty batch")]
    EmptyBatch,
    #[error("no valid corruption of ({head}, {relation}, {tail}): every candidate is a known fact")]
    Exhausted {
        head: usize,
        relation: usize,
        tail: usize,
    },
    #[error("non-finite loss at epoch {epoch}, batch {batch}")]
    NonFinite { epoch: usize, batch: usize },
    #[error("empty {0} split")]
    EmptySplit(&'static str),
    #[error("all {} trials failed: {}", .0.len(), .0.join("; "))]
    AllTrialsFailed(Vec<String>),
    #[error("bad checkpoint: {0}")]
    Checkpoint(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum ModelKind {
    #[serde(rename = "NTN")]
    Ntn,
    TransE,
    TransH,
    TransD,
    #[serde(rename = "RESCAL")]
    Rescal,
    RotatE,
    ComplEx,
    DistMult,
    SimplE,
    TuckER,
}

impl ModelKind {
    pub const ALL: [ModelKind; 10] = [
        ModelKind::Ntn,
        ModelKind::TransE,
        ModelKind::TransH,
        ModelKind::TransD,
        ModelKind::Rescal,
        ModelKind::RotatE,
        ModelKind::ComplEx,
        ModelKind::DistMult,
        ModelKind::SimplE,
        ModelKind::TuckER,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ModelKind::Ntn => "NTN",
            ModelKind::TransE => "TransE",
            ModelKind::TransH => "TransH",
            ModelKind::TransD => "TransD",
            ModelKind::Rescal => "RESCAL",
            ModelKind::RotatE => "RotatE",
            ModelKind::ComplEx => "ComplEx",
            ModelKind::DistMult => "DistMult",
            ModelKind::SimplE => "SimplE",
            ModelKind::TuckER => "TuckER",
        }
    }

    /// Loss family each kind is trained with unless configured otherwise.
    pub fn default_loss(self) -> LossFamily {
        match self {
            ModelKind::ComplEx | ModelKind::DistMult | ModelKind::SimplE => LossFamily::PointwiseLogistic,
            ModelKind::TuckER => LossFamily::Multiclass,
            _ => LossFamily::PairwiseMargin,
        }
    }
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ModelKind {
    type Err = KgeError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        ModelKind::ALL
            .into_iter()
            .find(|k| k.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| KgeError::Config(format!("unknown model kind `{s}`")))
    }
}
