use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::eval::evaluate_ranks;
use super::{train_model, EvalReport, FilterSet, KgeError, ModelKind, TrainConfig};
use crate::kgbuild::SplitSet;
use crate::rng::stream_rng;

/// Candidate values per hyperparameter; the search samples from their grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchSpace {
    pub learning_rates: Vec<f64>,
    pub dims: Vec<usize>,
    pub margins: Vec<f64>,
    pub negatives_per_positive: Vec<usize>,
    pub l2_weights: Vec<f64>,
}

impl SearchSpace {
    /// A space holding exactly the values of `base`.
    pub fn around(base: &TrainConfig) -> Self {
        SearchSpace {
            learning_rates: vec![base.learning_rate],
            dims: vec![base.dims.dim],
            margins: vec![base.margin],
            negatives_per_positive: vec![base.negatives_per_positive],
            l2_weights: vec![base.l2_weight],
        }
    }

    fn grid(&self, base: &TrainConfig) -> Vec<TrainConfig> {
        let mut out = Vec::new();
        for &lr in &self.learning_rates {
            for &dim in &self.dims {
                for &margin in &self.margins {
                    for &neg in &self.negatives_per_positive {
                        for &l2 in &self.l2_weights {
                            let mut c = base.clone();
                            c.learning_rate = lr;
                            c.dims.dim = dim;
                            c.dims.relation_dim = dim;
                            c.margin = margin;
                            c.negatives_per_positive = neg;
                            c.l2_weight = l2;
                            out.push(c);
                        }
                    }
                }
            }
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trial {
    pub index: usize,
    pub config: TrainConfig,
    pub valid_filtered_mrr: Option<f64>,
    pub error: Option<String>,
}

#[derive(Debug, Clone)]
pub struct SearchOutcome {
    pub best: TrainConfig,
    pub best_valid_mrr: f64,
    pub trials: Vec<Trial>,
}

/// Seeded random search: shuffle the grid, train the first `budget`
/// configurations and keep the one with the highest validation filtered MRR
/// (earliest trial wins ties).
#[allow(clippy::too_many_arguments)]
pub fn hyperparameter_search(
    splits: &SplitSet,
    entity_count: usize,
    relation_count: usize,
    kind: ModelKind,
    base: &TrainConfig,
    space: &SearchSpace,
    budget: usize,
    seed: u64,
) -> Result<SearchOutcome, KgeError> {
    if budget == 0 {
        return Err(KgeError::Config("search budget must be at least 1".into()));
    }
    if splits.valid.is_empty() {
        return Err(KgeError::EmptySplit("valid"));
    }
    let mut grid = space.grid(base);
    if grid.is_empty() {
        return Err(KgeError::Config("search space is empty".into()));
    }
    grid.shuffle(&mut stream_rng(seed, &[3]));
    grid.truncate(budget);

    let filter = FilterSet::new(splits.all());
    let mut trials = Vec::with_capacity(grid.len());
    let mut best: Option<(f64, usize)> = None;
    for (index, config) in grid.into_iter().enumerate() {
        let result = train_model(splits, entity_count, relation_count, kind, &config).and_then(|out| {
            Ok(EvalReport::from_ranks(&evaluate_ranks(&out.model, &splits.valid, &filter))?.filtered_mrr)
        });
        let trial = match result {
            Ok(mrr) => {
                if best.is_none_or(|(b, _)| mrr > b) {
                    best = Some((mrr, index));
                }
                Trial {
                    index,
                    config,
                    valid_filtered_mrr: Some(mrr),
                    error: None,
                }
            }
            Err(e) => Trial {
                index,
                config,
                valid_filtered_mrr: None,
                error: Some(e.to_string()),
            },
        };
        trials.push(trial);
    }
    match best {
        Some((mrr, index)) => Ok(SearchOutcome {
            best: trials[index].config.clone(),
            best_valid_mrr: mrr,
            trials,
        }),
        None => Err(KgeError::AllTrialsFailed(
            trials
                .into_iter()
                .map(|t| format!("trial {}: {}", t.index, t.error.unwrap_or_default()))
                .collect(),
        )),
    }
}
