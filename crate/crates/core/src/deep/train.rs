use std::collections::HashSet;

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::propagate::{pair_backward, pair_forward, PairKey};
use super::{DeepConfig, DeepError, DeepModel};
use crate::kge::KgeModel;
use crate::kgbuild::{EntityId, KnowledgeGraph, SplitSet, Triple};
use crate::optim::{zeros_like, Optimizer, OptimizerKind, Tensor};
use crate::rng::stream_rng;

const EPS: f64 = 1e-12;

/// One anchor app with observed partners and sampled non-partners.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RecBatch {
    pub anchor: EntityId,
    pub positives: Vec<EntityId>,
    pub negatives: Vec<EntityId>,
}

/// `sum -ln y+ + sum -ln(1 - y-)` with probabilities clamped to `[eps, 1 - eps]`.
pub fn bce_loss(positive: &[f64], negative: &[f64]) -> f64 {
    let c = |y: f64| y.clamp(EPS, 1.0 - EPS);
    positive.iter().map(|&y| -c(y).ln()).sum::<f64>() + negative.iter().map(|&y| -(1.0 - c(y)).ln()).sum::<f64>()
}

fn softplus(x: f64) -> f64 {
    x.max(0.0) + (-x.abs()).exp().ln_1p()
}

/// Loss of one pair from its logit and the loss derivative with respect to
/// the logit. The reported value is clamped like [`bce_loss`]; the
/// derivative is that of the unclamped term so saturated pairs still train.
fn pair_term(logit: f64, positive: bool) -> (f64, f64) {
    let lo = -(1.0 - EPS).ln();
    let hi = -EPS.ln();
    let y = 1.0 / (1.0 + (-logit).exp());
    if positive {
        (softplus(-logit).clamp(lo, hi), y - 1.0)
    } else {
        (softplus(logit).clamp(lo, hi), y)
    }
}

fn l2(params: &[Tensor]) -> f64 {
    params.iter().map(Tensor::squared_norm).sum()
}

pub fn recommendation_loss(model: &DeepModel, kg: &KnowledgeGraph, batches: &[RecBatch], l2_weight: f64) -> f64 {
    let mut loss = l2_weight * l2(&model.params);
    for batch in batches {
        for (others, positive) in [(&batch.positives, true), (&batch.negatives, false)] {
            for &o in others {
                loss += pair_term(pair_forward(model, kg, batch.anchor, o).logit, positive).0;
            }
        }
    }
    loss
}

/// Loss and its gradient with respect to every trainable tensor; the shallow
/// store is frozen.
pub fn recommendation_loss_with_grads(
    model: &DeepModel,
    kg: &KnowledgeGraph,
    batches: &[RecBatch],
    l2_weight: f64,
) -> (f64, Vec<Tensor>) {
    let mut grads = zeros_like(&model.params);
    let mut loss = 0.0;
    for batch in batches {
        for (others, positive) in [(&batch.positives, true), (&batch.negatives, false)] {
            for &o in others {
                let pf = pair_forward(model, kg, batch.anchor, o);
                let (l, g) = pair_term(pf.logit, positive);
                loss += l;
                pair_backward(model, &pf, g, &mut grads);
            }
        }
    }
    if l2_weight > 0.0 {
        loss += l2_weight * l2(&model.params);
        for (g, p) in grads.iter_mut().zip(&model.params) {
            for (gi, pi) in g.data.iter_mut().zip(&p.data) {
                *gi += 2.0 * l2_weight * pi;
            }
        }
    }
    (loss, grads)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeepEpoch {
    pub epoch: usize,
    /// Mean per-pair loss over the epoch, without the L2 term.
    pub train_loss: f64,
    pub valid_loss: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct DeepOutcome {
    pub model: DeepModel,
    pub history: Vec<DeepEpoch>,
    pub best_epoch: usize,
}

/// Unordered pairs linked by any of `triples`, sorted.
pub(crate) fn linked_pairs<'a>(triples: impl IntoIterator<Item = &'a Triple>) -> Vec<PairKey> {
    let set: HashSet<PairKey> = triples.into_iter().map(|t| PairKey::new(t.head, t.tail)).collect();
    let mut pairs: Vec<PairKey> = set.into_iter().collect();
    pairs.sort_by_key(|p| (p.lo, p.hi));
    pairs
}

fn sample_negative<R: Rng>(
    rng: &mut R,
    anchor: EntityId,
    entity_count: usize,
    linked: &HashSet<PairKey>,
) -> Option<EntityId> {
    let ok = |c: EntityId| c != anchor && !linked.contains(&PairKey::new(anchor, c));
    for _ in 0..32 {
        let c = rng.random_range(0..entity_count);
        if ok(c) {
            return Some(c);
        }
    }
    let valid: Vec<EntityId> = (0..entity_count).filter(|&c| ok(c)).collect();
    (!valid.is_empty()).then(|| valid[rng.random_range(0..valid.len())])
}

fn mean_pair_loss(model: &DeepModel, kg: &KnowledgeGraph, batches: &[RecBatch]) -> f64 {
    let terms: usize = batches.iter().map(|b| b.positives.len() + b.negatives.len()).sum();
    recommendation_loss(model, kg, batches, 0.0) / terms.max(1) as f64
}

/// Adam over per-pair batches: every positive train pair is its own
/// [`RecBatch`] with `negatives_per_positive` sampled non-partners of the
/// pair's first app. Neighborhoods come from `train_graph`. Returns the
/// parameters with the lowest validation loss.
pub fn train_deep(
    train_graph: &KnowledgeGraph,
    splits: &SplitSet,
    shallow: KgeModel,
    config: DeepConfig,
) -> Result<DeepOutcome, DeepError> {
    config.validate()?;
    if splits.train.is_empty() {
        return Err(DeepError::Empty("train split"));
    }
    let entity_count = shallow.entity_count;
    let mut model = DeepModel::new(shallow, config.clone())?;
    let mut optimizer = Optimizer::new(OptimizerKind::adam(), config.learning_rate, &model.params);

    let train_pairs = linked_pairs(&splits.train);
    let linked: HashSet<PairKey> = train_pairs.iter().copied().collect();
    let mut valid_rng = stream_rng(config.seed, &[0xDEE9, 5]);
    let valid_batches: Vec<RecBatch> = linked_pairs(&splits.valid)
        .into_iter()
        .filter(|p| !linked.contains(p))
        .filter_map(|p| {
            let negatives: Vec<EntityId> = (0..config.negatives_per_positive)
                .filter_map(|_| sample_negative(&mut valid_rng, p.lo, entity_count, &linked))
                .collect();
            (!negatives.is_empty()).then_some(RecBatch {
                anchor: p.lo,
                positives: vec![p.hi],
                negatives,
            })
        })
        .collect();

    let mut rng = stream_rng(config.seed, &[0xDEE9, 6]);
    let mut order = train_pairs;
    let mut history = Vec::with_capacity(config.epochs);
    let mut best: Option<(f64, usize, Vec<Tensor>)> = None;
    for epoch in 1..=config.epochs {
        order.shuffle(&mut rng);
        let mut total = 0.0;
        let mut terms = 0usize;
        for (b, chunk) in order.chunks(config.batch_size).enumerate() {
            let batches: Vec<RecBatch> = chunk
                .iter()
                .map(|p| RecBatch {
                    anchor: p.lo,
                    positives: vec![p.hi],
                    negatives: (0..config.negatives_per_positive)
                        .filter_map(|_| sample_negative(&mut rng, p.lo, entity_count, &linked))
                        .collect(),
                })
                .collect();
            let (loss, grads) = recommendation_loss_with_grads(&model, train_graph, &batches, config.l2_weight);
            if !loss.is_finite() {
                return Err(DeepError::NonFinite { epoch, batch: b });
            }
            total += loss - config.l2_weight * l2(&model.params);
            terms += batches.iter().map(|x| 1 + x.negatives.len()).sum::<usize>();
            optimizer.step(&mut model.params, &grads);
        }
        let valid_loss = (!valid_batches.is_empty()).then(|| mean_pair_loss(&model, train_graph, &valid_batches));
        if let Some(v) = valid_loss {
            if best.as_ref().is_none_or(|(b, _, _)| v < *b) {
                best = Some((v, epoch, model.params.clone()));
            }
        }
        history.push(DeepEpoch {
            epoch,
            train_loss: total / terms as f64,
            valid_loss,
        });
    }
    let best_epoch = match best {
        Some((_, epoch, params)) => {
            model.params = params;
            epoch
        }
        None => config.epochs,
    };
    Ok(DeepOutcome {
        model,
        history,
        best_epoch,
    })
}
