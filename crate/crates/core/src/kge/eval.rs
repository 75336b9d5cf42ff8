use std::collections::HashSet;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{KgeError, KgeModel};
use crate::kgbuild::{EntityId, RelationId, Triple};

pub const HITS_AT: [usize; 4] = [1, 3, 5, 10];

/// Known facts together with their mirrors.
#[derive(Debug, Clone, Default)]
pub struct FilterSet {
    facts: HashSet<Triple>,
}

impl FilterSet {
    pub fn new<'a>(triples: impl IntoIterator<Item = &'a Triple>) -> Self {
        let mut facts = HashSet::new();
        for &t in triples {
            facts.insert(t);
            facts.insert(t.mirrored());
        }
        FilterSet { facts }
    }

    pub fn contains(&self, triple: &Triple) -> bool {
        self.facts.contains(triple)
    }

    pub fn len(&self) -> usize {
        self.facts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.facts.is_empty()
    }
}

/// Which slot of the test triple is replaced by candidates.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Direction {
    HeadCorrupted,
    TailCorrupted,
}

/// `(h, r, ?)` or `(?, r, t)`; `anchor` is the fixed entity.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Query {
    pub anchor: EntityId,
    pub relation: RelationId,
    pub direction: Direction,
}

impl Query {
    pub fn of(triple: Triple, direction: Direction) -> (Query, EntityId) {
        match direction {
            Direction::TailCorrupted => (
                Query {
                    anchor: triple.head,
                    relation: triple.relation,
                    direction,
                },
                triple.tail,
            ),
            Direction::HeadCorrupted => (
                Query {
                    anchor: triple.tail,
                    relation: triple.relation,
                    direction,
                },
                triple.head,
            ),
        }
    }

    pub fn complete(&self, candidate: EntityId) -> Triple {
        match self.direction {
            Direction::TailCorrupted => Triple::new(self.anchor, self.relation, candidate),
            Direction::HeadCorrupted => Triple::new(candidate, self.relation, self.anchor),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RankResult {
    pub triple: Triple,
    pub direction: Direction,
    pub raw_rank: usize,
    pub filtered_rank: usize,
}

/// Tie-averaged rank, halves rounded up.
fn tie_rank(better: usize, ties: usize) -> usize {
    1 + better + ties.div_ceil(2)
}

/// Rank `truth` among all entities except the anchor, given a full score
/// table indexed by entity. Filtered ranking drops candidates whose completed
/// triple is in `filter`, never the truth itself.
pub fn rank_from_scores(scores: &[f64], query: Query, truth: EntityId, filter: &FilterSet) -> (usize, usize) {
    let target = scores[truth];
    let (mut better, mut ties, mut f_better, mut f_ties) = (0, 0, 0, 0);
    for (e, &s) in scores.iter().enumerate() {
        if e == truth || e == query.anchor {
            continue;
        }
        let filtered = filter.contains(&query.complete(e));
        if s > target {
            better += 1;
            if !filtered {
                f_better += 1;
            }
        } else if s == target {
            ties += 1;
            if !filtered {
                f_ties += 1;
            }
        }
    }
    (tie_rank(better, ties), tie_rank(f_better, f_ties))
}

fn score_table(model: &KgeModel, query: Query) -> Vec<f64> {
    (0..model.entity_count)
        .map(|e| {
            if e == query.anchor {
                f64::NAN
            } else {
                model.score_triple(query.complete(e))
            }
        })
        .collect()
}

pub fn rank_candidates(model: &KgeModel, triple: Triple, direction: Direction, filter: &FilterSet) -> RankResult {
    let (query, truth) = Query::of(triple, direction);
    let (raw_rank, filtered_rank) = rank_from_scores(&score_table(model, query), query, truth, filter);
    RankResult {
        triple,
        direction,
        raw_rank,
        filtered_rank,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub queries: usize,
    pub mr: f64,
    pub mrr: f64,
    pub hits: [f64; 4],
    pub filtered_mr: f64,
    pub filtered_mrr: f64,
    pub filtered_hits: [f64; 4],
}

impl EvalReport {
    pub const COLUMNS: [&'static str; 12] = [
        "MR",
        "MRR",
        "Hits@1",
        "Hits@3",
        "Hits@5",
        "Hits@10",
        "Filtered MR",
        "Filtered MRR",
        "Filtered Hits@1",
        "Filtered Hits@3",
        "Filtered Hits@5",
        "Filtered Hits@10",
    ];

    pub fn from_ranks(ranks: &[RankResult]) -> Result<Self, KgeError> {
        if ranks.is_empty() {
            return Err(KgeError::EmptySplit("test"));
        }
        let n = ranks.len() as f64;
        let summarize = |get: &dyn Fn(&RankResult) -> usize| {
            let mr = ranks.iter().map(|r| get(r) as f64).sum::<f64>() / n;
            let mrr = ranks.iter().map(|r| 1.0 / get(r) as f64).sum::<f64>() / n;
            let hits = HITS_AT.map(|k| ranks.iter().filter(|r| get(r) <= k).count() as f64 / n);
            (mr, mrr, hits)
        };
        let (mr, mrr, hits) = summarize(&|r| r.raw_rank);
        let (filtered_mr, filtered_mrr, filtered_hits) = summarize(&|r| r.filtered_rank);
        Ok(EvalReport {
            queries: ranks.len(),
            mr,
            mrr,
            hits,
            filtered_mr,
            filtered_mrr,
            filtered_hits,
        })
    }

    /// The twelve metrics in [`EvalReport::COLUMNS`] order.
    pub fn values(&self) -> [f64; 12] {
        let mut out = [0.0; 12];
        out[0] = self.mr;
        out[1] = self.mrr;
        out[2..6].copy_from_slice(&self.hits);
        out[6] = self.filtered_mr;
        out[7] = self.filtered_mrr;
        out[8..12].copy_from_slice(&self.filtered_hits);
        out
    }
}

/// Rank both corruptions of every test triple. Queries are scored in parallel
/// and returned in test order, tail query before head query.
pub fn evaluate_ranks(model: &KgeModel, test: &[Triple], filter: &FilterSet) -> Vec<RankResult> {
    let queries: Vec<(Triple, Direction)> = test
        .iter()
        .flat_map(|&t| [(t, Direction::TailCorrupted), (t, Direction::HeadCorrupted)])
        .collect();
    queries
        .par_iter()
        .map(|&(t, d)| rank_candidates(model, t, d, filter))
        .collect()
}

pub fn evaluate_link_prediction(model: &KgeModel, test: &[Triple], filter: &FilterSet) -> Result<EvalReport, KgeError> {
    if test.is_empty() {
        return Err(KgeError::EmptySplit("test"));
    }
    EvalReport::from_ranks(&evaluate_ranks(model, test, filter))
}
