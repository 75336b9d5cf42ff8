use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::eval::evaluate_ranks;
use super::{corrupt_triple, init_model, loss_with_grads, EvalReport, FilterSet, KgeError, KgeModel, LossFamily, ModelDims, ModelKind};
use crate::kgbuild::{SplitSet, Triple};
use crate::optim::{zeros_like, Optimizer, OptimizerKind, Tensor};
use crate::rng::stream_rng;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub loss: LossFamily,
    pub margin: f64,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub negatives_per_positive: usize,
    pub optimizer: OptimizerKind,
    pub l2_weight: f64,
    pub seed: u64,
    pub dims: ModelDims,
    /// Validation cadence in epochs; 0 disables validation.
    pub eval_every: usize,
    /// Reject negatives that are known training facts.
    pub filter_negatives: bool,
}

impl TrainConfig {
    /// Per-kind defaults: margin models use SGD, the rest Adam.
    pub fn for_kind(kind: ModelKind) -> Self {
        let loss = kind.default_loss();
        // Losses are batch means, so SGD steps need a large rate.
        let (optimizer, learning_rate) = match (loss, kind) {
            (_, ModelKind::Ntn | ModelKind::Rescal) => (OptimizerKind::adam(), 0.01),
            (_, ModelKind::TransD) => (OptimizerKind::Sgd, 0.1),
            (LossFamily::PairwiseMargin | LossFamily::SelfAdversarial { .. }, _) => (OptimizerKind::Sgd, 0.5),
            _ => (OptimizerKind::adam(), 0.01),
        };
        TrainConfig {
            loss,
            margin: 1.0,
            learning_rate,
            batch_size: 128,
            epochs: 100,
            negatives_per_positive: if loss == LossFamily::Multiclass { 8 } else { 1 },
            optimizer,
            l2_weight: 0.0,
            seed: 0,
            dims: ModelDims::new(16),
            eval_every: 10,
            filter_negatives: false,
        }
    }

    pub fn validate(&self) -> Result<(), KgeError> {
        let bad = |m: &str| Err(KgeError::Config(m.to_string()));
        if !(self.learning_rate >= 0.0) || !self.learning_rate.is_finite() {
            return bad("learning_rate must be finite and non-negative");
        }
        if self.epochs == 0 {
            return bad("epochs must be at least 1");
        }
        if !(self.margin >= 0.0) {
            return bad("margin must be non-negative");
        }
        if self.negatives_per_positive == 0 {
            return bad("negatives_per_positive must be at least 1");
        }
        if self.batch_size == 0 {
            return bad("batch_size must be at least 1");
        }
        if !(self.l2_weight >= 0.0) {
            return bad("l2_weight must be non-negative");
        }
        if let LossFamily::SelfAdversarial { temperature } = self.loss {
            if !(temperature >= 0.0) {
                return bad("self-adversarial temperature must be non-negative");
            }
        }
        Ok(())
    }
}

/// Objective of one mini-batch (loss plus `l2 * sum theta^2`) and its
/// gradient with respect to every parameter tensor.
pub fn batch_objective(
    model: &KgeModel,
    batch: &[(Triple, Vec<Triple>)],
    family: LossFamily,
    margin: f64,
    l2_weight: f64,
) -> Result<(f64, Vec<Tensor>), KgeError> {
    let pos: Vec<f64> = batch.iter().map(|(p, _)| model.score_triple(*p)).collect();
    let neg: Vec<Vec<f64>> = batch
        .iter()
        .map(|(_, ns)| ns.iter().map(|n| model.score_triple(*n)).collect())
        .collect();
    let (mut loss, d_pos, d_neg) = loss_with_grads(family, &pos, &neg, margin)?;
    let mut grads = zeros_like(&model.params);
    for (i, (p, ns)) in batch.iter().enumerate() {
        if d_pos[i] != 0.0 {
            model.accumulate_grad(*p, d_pos[i], &mut grads);
        }
        for (j, n) in ns.iter().enumerate() {
            if d_neg[i][j] != 0.0 {
                model.accumulate_grad(*n, d_neg[i][j], &mut grads);
            }
        }
    }
    if l2_weight > 0.0 {
        for (p, g) in model.params.iter().zip(&mut grads) {
            loss += l2_weight * p.squared_norm();
            for (gi, pi) in g.data.iter_mut().zip(&p.data) {
                *gi += 2.0 * l2_weight * pi;
            }
        }
    }
    Ok((loss, grads))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub mean_loss: f64,
    pub valid_filtered_mrr: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub model: KgeModel,
    pub history: Vec<EpochRecord>,
    /// Epoch whose parameters were returned (0 = initialization).
    pub best_epoch: usize,
    pub best_valid_mrr: Option<f64>,
}

fn validation_mrr(model: &KgeModel, splits: &SplitSet, filter: &FilterSet) -> Result<f64, KgeError> {
    Ok(EvalReport::from_ranks(&evaluate_ranks(model, &splits.valid, filter))?.filtered_mrr)
}

/// Seeded mini-batch training. Returns the parameters with the best
/// validation filtered MRR (the final parameters when validation is off).
pub fn train_model(
    splits: &SplitSet,
    entity_count: usize,
    relation_count: usize,
    kind: ModelKind,
    config: &TrainConfig,
) -> Result<TrainOutcome, KgeError> {
    config.validate()?;
    if splits.train.is_empty() {
        return Err(KgeError::EmptySplit("train"));
    }
    let mut model = init_model(kind, config.dims, entity_count, relation_count, config.seed)?;
    let mut optimizer = Optimizer::new(config.optimizer, config.learning_rate, &model.params);
    let mut rng = stream_rng(config.seed, &[2]);
    let known = FilterSet::new(&splits.train);
    let eval_filter = FilterSet::new(splits.all());
    let validate = config.eval_every > 0 && !splits.valid.is_empty();

    let mut order = splits.train.clone();
    let mut history = Vec::with_capacity(config.epochs);
    let mut best: Option<(f64, usize, KgeModel)> = None;
    for epoch in 1..=config.epochs {
        order.shuffle(&mut rng);
        let mut total = 0.0;
        for (b, chunk) in order.chunks(config.batch_size).enumerate() {
            let mut batch = Vec::with_capacity(chunk.len());
            for &pos in chunk {
                let negs = (0..config.negatives_per_positive)
                    .map(|_| {
                        corrupt_triple(pos, entity_count, &mut rng, config.filter_negatives.then_some(&known))
                    })
                    .collect::<Result<Vec<_>, _>>()?;
                batch.push((pos, negs));
            }
            let (loss, grads) = batch_objective(&model, &batch, config.loss, config.margin, config.l2_weight)?;
            if !loss.is_finite() {
                return Err(KgeError::NonFinite { epoch, batch: b });
            }
            total += loss * chunk.len() as f64;
            optimizer.step(&mut model.params, &grads);
            model.project();
        }
        let mean_loss = total / order.len() as f64;
        let valid_filtered_mrr = if validate && (epoch % config.eval_every == 0 || epoch == config.epochs) {
            Some(validation_mrr(&model, splits, &eval_filter)?)
        } else {
            None
        };
        if let Some(mrr) = valid_filtered_mrr {
            if best.as_ref().is_none_or(|(b, _, _)| mrr > *b) {
                best = Some((mrr, epoch, model.clone()));
            }
        }
        history.push(EpochRecord {
            epoch,
            mean_loss,
            valid_filtered_mrr,
        });
    }
    Ok(match best {
        Some((mrr, epoch, m)) => TrainOutcome {
            model: m,
            history,
            best_epoch: epoch,
            best_valid_mrr: Some(mrr),
        },
        None => TrainOutcome {
            model,
            history,
            best_epoch: config.epochs,
            best_valid_mrr: None,
        },
    })
}
