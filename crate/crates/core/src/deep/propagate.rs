use rand::Rng;

use super::{Activation, DeepError, DeepModel};
use crate::kgbuild::{EntityId, KnowledgeGraph, RelationId};
use crate::optim::Tensor;
use crate::rng::stream_rng;

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Softmax over `query . r` for each neighbor relation embedding.
pub fn attention_weights(query: &[f64], relations: &[&[f64]]) -> Vec<f64> {
    if relations.is_empty() {
        return Vec::new();
    }
    let logits: Vec<f64> = relations.iter().map(|r| dot(query, r)).collect();
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|l| (l - max).exp()).collect();
    let total: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / total).collect()
}

/// Weighted sum of neighbor vectors; zero vector for an empty neighborhood.
pub fn aggregate(weights: &[f64], vectors: &[&[f64]], dim: usize) -> Vec<f64> {
    let mut out = vec![0.0; dim];
    for (w, v) in weights.iter().zip(vectors) {
        for (o, x) in out.iter_mut().zip(v.iter()) {
            *o += w * x;
        }
    }
    out
}

fn affine(w: &[f64], b: &[f64], x: &[f64]) -> Vec<f64> {
    let width = x.len();
    b.iter()
        .enumerate()
        .map(|(i, bi)| dot(&w[i * width..(i + 1) * width], x) + bi)
        .collect()
}

/// `act(W (v || v_n) + b)` with `W` row-major `[d, 2d]`.
pub fn layer_update(v: &[f64], v_n: &[f64], w: &[f64], b: &[f64], act: Activation) -> Result<Vec<f64>, DeepError> {
    let d = b.len();
    for found in [v.len(), v_n.len()] {
        if found != d {
            return Err(DeepError::Dimension { expected: d, found });
        }
    }
    if w.len() != 2 * d * d {
        return Err(DeepError::Dimension {
            expected: 2 * d * d,
            found: w.len(),
        });
    }
    let x = fuse_embeddings(v, v_n);
    Ok(affine(w, b, &x).into_iter().map(|z| act.apply(z)).collect())
}

pub fn fuse_embeddings(shallow: &[f64], deep: &[f64]) -> Vec<f64> {
    [shallow, deep].concat()
}

/// Unordered app pair; all neighbor sampling for a scored pair is keyed on it,
/// so `score(a, b)` and `score(b, a)` see the same receptive fields.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct PairKey {
    pub lo: EntityId,
    pub hi: EntityId,
}

impl PairKey {
    pub fn new(a: EntityId, b: EntityId) -> Self {
        PairKey {
            lo: a.min(b),
            hi: a.max(b),
        }
    }
}

impl DeepModel {
    /// The whole out-neighborhood when it fits in the sample size, otherwise
    /// `sample_size` draws with replacement.
    pub fn sample_neighbors(
        &self,
        kg: &KnowledgeGraph,
        pair: PairKey,
        node: EntityId,
        depth: usize,
    ) -> Vec<(RelationId, EntityId)> {
        let all = kg.neighbors(node);
        let s = self.config.sample_size;
        if all.len() <= s {
            return all.to_vec();
        }
        let mut rng = stream_rng(
            self.config.seed,
            &[0xDEE9, 2, pair.lo as u64, pair.hi as u64, node as u64, depth as u64],
        );
        (0..s).map(|_| all[rng.random_range(0..all.len())]).collect()
    }

    fn activation(&self, layer: usize) -> Activation {
        if layer == self.config.depth {
            Activation::Identity
        } else {
            self.config.activation
        }
    }
}

/// One-layer aggregation of `node`'s sampled neighborhood with attention
/// relative to `query`, over raw deep entity embeddings.
pub fn aggregate_neighborhood(model: &DeepModel, kg: &KnowledgeGraph, query: EntityId, node: EntityId) -> Vec<f64> {
    let pair = PairKey::new(query, node);
    let sample = model.sample_neighbors(kg, pair, node, 0);
    let (entity, relation) = (&model.params[0], &model.params[1]);
    let rels: Vec<&[f64]> = sample.iter().map(|&(r, _)| relation.row(r)).collect();
    let tails: Vec<&[f64]> = sample.iter().map(|&(_, t)| entity.row(t)).collect();
    aggregate(&attention_weights(entity.row(query), &rels), &tails, model.config.dim)
}

/// Receptive field of one node, breadth first; node 0 is the root.
#[derive(Debug, Clone)]
pub(crate) struct Tree {
    entity: Vec<EntityId>,
    depth: Vec<usize>,
    children: Vec<Vec<(RelationId, usize)>>,
}

impl Tree {
    pub(crate) fn build(model: &DeepModel, kg: &KnowledgeGraph, pair: PairKey, root: EntityId) -> Tree {
        let mut tree = Tree {
            entity: vec![root],
            depth: vec![0],
            children: vec![Vec::new()],
        };
        let mut i = 0;
        while i < tree.entity.len() {
            let depth = tree.depth[i];
            if depth < model.config.depth {
                for (r, t) in model.sample_neighbors(kg, pair, tree.entity[i], depth) {
                    let idx = tree.entity.len();
                    tree.entity.push(t);
                    tree.depth.push(depth + 1);
                    tree.children.push(Vec::new());
                    tree.children[i].push((r, idx));
                }
            }
            i += 1;
        }
        tree
    }
}

/// Activations of one tree pass; level `k` is filled for nodes at depth
/// `<= K - k`.
#[derive(Debug, Clone)]
pub(crate) struct Forward {
    query: EntityId,
    tree: Tree,
    attention: Vec<Vec<f64>>,
    h: Vec<Vec<Vec<f64>>>,
    z: Vec<Vec<Vec<f64>>>,
    agg: Vec<Vec<Vec<f64>>>,
}

impl Forward {
    pub(crate) fn output(&self) -> &[f64] {
        &self.h[self.h.len() - 1][0]
    }
}

pub(crate) fn forward(model: &DeepModel, kg: &KnowledgeGraph, query: EntityId, node: EntityId) -> Forward {
    let big_k = model.config.depth;
    let d = model.config.dim;
    let tree = Tree::build(model, kg, PairKey::new(query, node), node);
    let n = tree.entity.len();
    let (entity, relation) = (&model.params[0], &model.params[1]);
    let q = entity.row(query);
    let attention: Vec<Vec<f64>> = tree
        .children
        .iter()
        .map(|cs| {
            let rels: Vec<&[f64]> = cs.iter().map(|&(r, _)| relation.row(r)).collect();
            attention_weights(q, &rels)
        })
        .collect();
    let mut h = vec![vec![Vec::new(); n]; big_k + 1];
    let mut z = vec![vec![Vec::new(); n]; big_k + 1];
    let mut agg = vec![vec![Vec::new(); n]; big_k + 1];
    for i in 0..n {
        h[0][i] = entity.row(tree.entity[i]).to_vec();
    }
    for k in 1..=big_k {
        let (w, b) = model.layer(k);
        let act = model.activation(k);
        for i in 0..n {
            if tree.depth[i] > big_k - k {
                continue;
            }
            let vecs: Vec<&[f64]> = tree.children[i].iter().map(|&(_, c)| h[k - 1][c].as_slice()).collect();
            let a = aggregate(&attention[i], &vecs, d);
            let zi = affine(&w.data, &b.data, &fuse_embeddings(&h[k - 1][i], &a));
            h[k][i] = zi.iter().map(|&v| act.apply(v)).collect();
            z[k][i] = zi;
            agg[k][i] = a;
        }
    }
    Forward {
        query,
        tree,
        attention,
        h,
        z,
        agg,
    }
}

/// Accumulate `d output / d params . g_out` into `grads`.
pub(crate) fn backward(model: &DeepModel, fwd: &Forward, g_out: &[f64], grads: &mut [Tensor]) {
    let big_k = model.config.depth;
    let d = model.config.dim;
    let tree = &fwd.tree;
    let n = tree.entity.len();
    let relation = &model.params[1];
    let q = model.params[0].row(fwd.query).to_vec();
    let mut gh = vec![vec![vec![0.0; d]; n]; big_k + 1];
    gh[big_k][0].copy_from_slice(g_out);
    let mut gq = vec![0.0; d];
    for k in (1..=big_k).rev() {
        let act = model.activation(k);
        let w = &model.layer(k).0.data;
        for i in 0..n {
            if tree.depth[i] > big_k - k {
                continue;
            }
            let gz: Vec<f64> = (0..d)
                .map(|j| gh[k][i][j] * act.derivative(fwd.z[k][i][j], fwd.h[k][i][j]))
                .collect();
            if gz.iter().all(|&g| g == 0.0) {
                continue;
            }
            let x = fuse_embeddings(&fwd.h[k - 1][i], &fwd.agg[k][i]);
            {
                let gw = &mut grads[2 * k].data;
                for (j, &g) in gz.iter().enumerate() {
                    for (m, &xm) in x.iter().enumerate() {
                        gw[j * 2 * d + m] += g * xm;
                    }
                }
            }
            for (gb, &g) in grads[2 * k + 1].data.iter_mut().zip(&gz) {
                *gb += g;
            }
            let mut gx = vec![0.0; 2 * d];
            for (j, &g) in gz.iter().enumerate() {
                for (m, gxm) in gx.iter_mut().enumerate() {
                    *gxm += w[j * 2 * d + m] * g;
                }
            }
            for m in 0..d {
                gh[k - 1][i][m] += gx[m];
            }
            let gagg = &gx[d..];
            let att = &fwd.attention[i];
            let children = &tree.children[i];
            let gw_att: Vec<f64> = children.iter().map(|&(_, c)| dot(gagg, &fwd.h[k - 1][c])).collect();
            let mean: f64 = att.iter().zip(&gw_att).map(|(a, g)| a * g).sum();
            for (ci, &(r, c)) in children.iter().enumerate() {
                for m in 0..d {
                    gh[k - 1][c][m] += att[ci] * gagg[m];
                }
                let gl = att[ci] * (gw_att[ci] - mean);
                if gl != 0.0 {
                    let rr = relation.row(r);
                    for m in 0..d {
                        gq[m] += gl * rr[m];
                    }
                    let gr = grads[1].row_mut(r);
                    for m in 0..d {
                        gr[m] += gl * q[m];
                    }
                }
            }
        }
    }
    for i in 0..n {
        let ge = grads[0].row_mut(tree.entity[i]);
        for m in 0..d {
            ge[m] += gh[0][i][m];
        }
    }
    let ge = grads[0].row_mut(fwd.query);
    for m in 0..d {
        ge[m] += gq[m];
    }
}

/// Depth-K deep representation of `node` with attention relative to `query`.
pub fn propagate(model: &DeepModel, kg: &KnowledgeGraph, query: EntityId, node: EntityId) -> Vec<f64> {
    forward(model, kg, query, node).output().to_vec()
}

pub(crate) struct PairForward {
    pub logit: f64,
    fwd_a: Forward,
    fwd_b: Forward,
}

pub(crate) fn pair_forward(model: &DeepModel, kg: &KnowledgeGraph, a: EntityId, b: EntityId) -> PairForward {
    let fwd_a = forward(model, kg, b, a);
    let fwd_b = forward(model, kg, a, b);
    let fused_a = fuse_embeddings(model.shallow.entity_embedding(a), fwd_a.output());
    let fused_b = fuse_embeddings(model.shallow.entity_embedding(b), fwd_b.output());
    PairForward {
        logit: dot(&fused_a, &fused_b),
        fwd_a,
        fwd_b,
    }
}

/// Accumulate `coeff * d logit / d params`.
pub(crate) fn pair_backward(model: &DeepModel, pf: &PairForward, coeff: f64, grads: &mut [Tensor]) {
    let ga: Vec<f64> = pf.fwd_b.output().iter().map(|x| coeff * x).collect();
    let gb: Vec<f64> = pf.fwd_a.output().iter().map(|x| coeff * x).collect();
    backward(model, &pf.fwd_a, &ga, grads);
    backward(model, &pf.fwd_b, &gb, grads);
}

/// `sigmoid(a* . b*)` over fused shallow and deep vectors.
pub fn score_app_pair(model: &DeepModel, kg: &KnowledgeGraph, a: EntityId, b: EntityId) -> f64 {
    sigmoid(pair_forward(model, kg, a, b).logit)
}

pub(crate) fn pair_logit(model: &DeepModel, kg: &KnowledgeGraph, a: EntityId, b: EntityId) -> f64 {
    pair_forward(model, kg, a, b).logit
}
