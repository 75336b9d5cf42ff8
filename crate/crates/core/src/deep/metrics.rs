use std::cmp::Ordering;
use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::propagate::{pair_logit, PairKey};
use super::train::linked_pairs;
use super::{DeepError, DeepModel};
use crate::kge::KgeModel;
use crate::kgbuild::{EntityId, KnowledgeGraph, RelationId, Triple};

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Top `k` candidates for `anchor` by pair score, ties broken by entity id.
/// The anchor and everything in `exclusions` are never recommended.
pub fn recommend_top_k(
    model: &DeepModel,
    graph: &KnowledgeGraph,
    anchor: EntityId,
    k: usize,
    exclusions: &HashSet<EntityId>,
) -> Vec<(EntityId, f64)> {
    let mut scored: Vec<(EntityId, f64)> = (0..model.entity_count())
        .filter(|&c| c != anchor && !exclusions.contains(&c))
        .map(|c| (c, pair_logit(model, graph, anchor, c)))
        .collect();
    scored.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
    scored.truncate(k);
    scored.into_iter().map(|(c, logit)| (c, sigmoid(logit))).collect()
}

/// Shallow-only recommendation: candidates ranked by their best relation
/// score `max_r f(anchor, r, c)`, ties broken by entity id.
pub fn shallow_recommend_top_k(
    shallow: &KgeModel,
    anchor: EntityId,
    k: usize,
    exclusions: &HashSet<EntityId>,
) -> Vec<(EntityId, f64)> {
    let mut scored: Vec<(EntityId, f64)> = (0..shallow.entity_count)
        .filter(|&c| c != anchor && !exclusions.contains(&c))
        .map(|c| {
            let best = (0..shallow.relation_count)
                .map(|r| shallow.score(anchor, r, c))
                .fold(f64::NEG_INFINITY, f64::max);
            (c, best)
        })
        .collect();
    scored.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
    scored.truncate(k);
    scored
}

/// Cut-off metrics of one ranked list against a relevant set.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ListMetrics {
    pub precision: f64,
    pub recall: f64,
    /// Average precision normalized by `min(|relevant|, k)`.
    pub map: f64,
    /// `(1/|relevant|) * sum over relevant hits of precision@pos / pos`.
    pub map_n: f64,
    pub tp: usize,
    pub fp: usize,
    pub fn_: usize,
}

pub fn list_metrics<T: Eq + std::hash::Hash>(recommended: &[T], relevant: &HashSet<T>, k: usize) -> ListMetrics {
    let prefix = &recommended[..k.min(recommended.len())];
    let mut hits = 0usize;
    let mut ap_sum = 0.0;
    let mut map_n_sum = 0.0;
    for (i, item) in prefix.iter().enumerate() {
        if relevant.contains(item) {
            hits += 1;
            let pos = (i + 1) as f64;
            let p_at = hits as f64 / pos;
            ap_sum += p_at;
            map_n_sum += p_at / pos;
        }
    }
    let r = relevant.len();
    let ratio = |num: f64, den: usize| if den == 0 { 0.0 } else { num / den as f64 };
    ListMetrics {
        precision: ratio(hits as f64, k),
        recall: ratio(hits as f64, r),
        map: ratio(ap_sum, r.min(k)),
        map_n: ratio(map_n_sum, r),
        tp: hits,
        fp: prefix.len() - hits,
        fn_: r - hits,
    }
}

/// Macro-averaged metrics at one cut-off, with summed counts.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RecRow {
    pub k: usize,
    pub precision: f64,
    pub recall: f64,
    pub map: f64,
    pub map_n: f64,
    pub tp: usize,
    pub fp: usize,
    pub fn_: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecReport {
    pub queries: usize,
    pub rows: Vec<RecRow>,
}

impl RecReport {
    pub const COLUMNS: [&'static str; 8] = ["K", "Precision", "Recall", "MAP", "MAP-N", "TP", "FP", "FN"];

    fn from_lists(per_query: &[Vec<ListMetrics>], k_list: &[usize]) -> Self {
        let n = per_query.len() as f64;
        let rows = k_list
            .iter()
            .enumerate()
            .map(|(j, &k)| {
                let col = || per_query.iter().map(move |m| m[j]);
                RecRow {
                    k,
                    precision: col().map(|m| m.precision).sum::<f64>() / n,
                    recall: col().map(|m| m.recall).sum::<f64>() / n,
                    map: col().map(|m| m.map).sum::<f64>() / n,
                    map_n: col().map(|m| m.map_n).sum::<f64>() / n,
                    tp: col().map(|m| m.tp).sum(),
                    fp: col().map(|m| m.fp).sum(),
                    fn_: col().map(|m| m.fn_).sum(),
                }
            })
            .collect();
        RecReport {
            queries: per_query.len(),
            rows,
        }
    }
}

fn partner_map(pairs: &[PairKey]) -> BTreeMap<EntityId, BTreeSet<EntityId>> {
    let mut map: BTreeMap<EntityId, BTreeSet<EntityId>> = BTreeMap::new();
    for p in pairs {
        map.entry(p.lo).or_default().insert(p.hi);
        map.entry(p.hi).or_default().insert(p.lo);
    }
    map
}

/// Per anchor with at least one held-out partner: relevant = test partners
/// not already partnered in train; the anchor and its train partners are
/// excluded from the ranked list.
pub fn evaluate_recommendations(
    model: &DeepModel,
    graph: &KnowledgeGraph,
    train: &[Triple],
    test: &[Triple],
    k_list: &[usize],
) -> Result<RecReport, DeepError> {
    if test.is_empty() || k_list.is_empty() {
        return Err(DeepError::Empty("test pairs"));
    }
    let train_partners = partner_map(&linked_pairs(train));
    let test_partners = partner_map(&linked_pairs(test));
    let empty = BTreeSet::new();
    let queries: Vec<(EntityId, HashSet<EntityId>, HashSet<EntityId>)> = test_partners
        .into_iter()
        .filter_map(|(anchor, partners)| {
            let known = train_partners.get(&anchor).unwrap_or(&empty);
            let relevant: HashSet<EntityId> = partners.difference(known).copied().collect();
            (!relevant.is_empty()).then(|| (anchor, relevant, known.iter().copied().collect()))
        })
        .collect();
    if queries.is_empty() {
        return Err(DeepError::Empty("held-out partners"));
    }
    let max_k = *k_list.iter().max().unwrap();
    let per_query: Vec<Vec<ListMetrics>> = queries
        .par_iter()
        .map(|(anchor, relevant, exclusions)| {
            let recs: Vec<EntityId> = recommend_top_k(model, graph, *anchor, max_k, exclusions)
                .into_iter()
                .map(|(e, _)| e)
                .collect();
            k_list.iter().map(|&k| list_metrics(&recs, relevant, k)).collect()
        })
        .collect();
    Ok(RecReport::from_lists(&per_query, k_list))
}

/// Relations ranked by shallow plausibility of `(head, r, tail)`.
pub fn predict_relations(shallow: &KgeModel, head: EntityId, tail: EntityId, k: usize) -> Vec<RelationId> {
    let mut scored: Vec<(RelationId, f64)> =
        (0..shallow.relation_count).map(|r| (r, shallow.score(head, r, tail))).collect();
    scored.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
    scored.into_iter().take(k).map(|(r, _)| r).collect()
}

/// For every distinct directed test pair, rank relations and compare with
/// the relations linking the pair in `graph`.
pub fn evaluate_relation_prediction(
    shallow: &KgeModel,
    graph: &KnowledgeGraph,
    test: &[Triple],
    k_list: &[usize],
) -> Result<RecReport, DeepError> {
    let pairs: BTreeSet<(EntityId, EntityId)> = test.iter().map(|t| (t.head, t.tail)).collect();
    if pairs.is_empty() || k_list.is_empty() {
        return Err(DeepError::Empty("test pairs"));
    }
    let max_k = *k_list.iter().max().unwrap();
    let per_query: Vec<Vec<ListMetrics>> = pairs
        .iter()
        .map(|&(h, t)| {
            let relevant: HashSet<RelationId> = (0..graph.relation_count())
                .filter(|&r| graph.contains(&Triple::new(h, r, t)))
                .collect();
            let ranked = predict_relations(shallow, h, t, max_k);
            k_list.iter().map(|&k| list_metrics(&ranked, &relevant, k)).collect()
        })
        .collect();
    Ok(RecReport::from_lists(&per_query, k_list))
}

/// Adds `x` to a nonoverlapping expansion (components in increasing
/// magnitude) whose exact sum is the running total.
fn grow_expansion(partials: &mut Vec<f64>, mut x: f64) {
    let mut kept = 0;
    for j in 0..partials.len() {
        let mut y = partials[j];
        if x.abs() < y.abs() {
            std::mem::swap(&mut x, &mut y);
        }
        let hi = x + y;
        let lo = y - (hi - x);
        if lo != 0.0 {
            partials[kept] = lo;
            kept += 1;
        }
        x = hi;
    }
    partials.truncate(kept);
    partials.push(x);
}

fn expansion_sign(partials: &[f64]) -> Ordering {
    partials
        .iter()
        .rev()
        .find(|&&p| p != 0.0)
        .map_or(Ordering::Equal, |p| p.total_cmp(&0.0))
}

/// Sign of `2 * sum - (a + b) * n`, i.e. which side of the midpoint of `a`
/// and `b` the exact mean falls on.
fn midpoint_side(sum: &[f64], n: f64, a: f64, b: f64) -> Ordering {
    let mut e: Vec<f64> = Vec::with_capacity(sum.len() + 4);
    for &p in sum {
        grow_expansion(&mut e, 2.0 * p);
    }
    for c in [a, b] {
        let product = c * n;
        let error = c.mul_add(n, -product);
        grow_expansion(&mut e, -product);
        grow_expansion(&mut e, -error);
    }
    expansion_sign(&e)
}

/// Arithmetic mean rounded once, to nearest with ties to even: the sum is
/// kept exact and the quotient is corrected against midpoints.
fn exact_mean(values: &[f64]) -> f64 {
    let mut sum = Vec::new();
    for &v in values {
        grow_expansion(&mut sum, v);
    }
    let n = values.len() as f64;
    let mut q = sum.iter().sum::<f64>() / n;
    let even = |x: f64| x.to_bits() & 1 == 0;
    loop {
        let up = q.next_up();
        match midpoint_side(&sum, n, q, up) {
            Ordering::Greater => {
                q = up;
                continue;
            }
            Ordering::Equal => return if even(q) { q } else { up },
            Ordering::Less => {}
        }
        let down = q.next_down();
        match midpoint_side(&sum, n, down, q) {
            Ordering::Less => q = down,
            Ordering::Equal => return if even(q) { q } else { down },
            Ordering::Greater => return q,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimingReport {
    pub times_ms: Vec<f64>,
    pub mean_ms: f64,
}

impl TimingReport {
    pub fn from_times(times_ms: Vec<f64>) -> Result<Self, DeepError> {
        if times_ms.is_empty() {
            return Err(DeepError::Empty("timing set"));
        }
        if times_ms.iter().any(|t| !t.is_finite()) {
            return Err(DeepError::Config("timings must be finite".into()));
        }
        let mean_ms = exact_mean(&times_ms);
        Ok(TimingReport { times_ms, mean_ms })
    }
}

fn time_each(entities: &[EntityId], mut query: impl FnMut(EntityId) -> usize) -> Result<TimingReport, DeepError> {
    let times = entities
        .iter()
        .map(|&e| {
            let start = Instant::now();
            std::hint::black_box(query(e));
            start.elapsed().as_secs_f64() * 1e3
        })
        .collect();
    TimingReport::from_times(times)
}

/// Wall time of one full top-`k` pass per entity, run sequentially.
pub fn measure_inference(
    model: &DeepModel,
    graph: &KnowledgeGraph,
    entities: &[EntityId],
    k: usize,
) -> Result<TimingReport, DeepError> {
    let none = HashSet::new();
    time_each(entities, |e| recommend_top_k(model, graph, e, k, &none).len())
}

/// Same protocol as [`measure_inference`] for a shallow model alone.
pub fn measure_shallow_inference(shallow: &KgeModel, entities: &[EntityId], k: usize) -> Result<TimingReport, DeepError> {
    let none = HashSet::new();
    time_each(entities, |e| shallow_recommend_top_k(shallow, e, k, &none).len())
}
