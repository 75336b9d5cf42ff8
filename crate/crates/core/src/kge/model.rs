use std::f64::consts::PI;

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{KgeError, ModelKind};
use crate::kgbuild::{EntityId, RelationId, Triple};
use crate::optim::Tensor;
use crate::rng::stream_rng;

/// Embedding sizes. `relation_dim` only differs from `dim` for TuckER;
/// `ntn_slices` only matters for NTN.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelDims {
    pub dim: usize,
    pub relation_dim: usize,
    pub ntn_slices: usize,
}

impl ModelDims {
    pub fn new(dim: usize) -> Self {
        ModelDims {
            dim,
            relation_dim: dim,
            ntn_slices: 2,
        }
    }
}

/// Parameters of one shallow model. Scores are oriented so that higher means
/// more plausible for every kind; distance models return negated squared
/// distances.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KgeModel {
    pub kind: ModelKind,
    pub dims: ModelDims,
    pub entity_count: usize,
    pub relation_count: usize,
    pub params: Vec<Tensor>,
}

fn layout(kind: ModelKind, dims: ModelDims, e: usize, r: usize) -> Vec<(&'static str, Vec<usize>)> {
    let d = dims.dim;
    match kind {
        ModelKind::TransE | ModelKind::DistMult => vec![("ent", vec![e, d]), ("rel", vec![r, d])],
        ModelKind::TransH => vec![
            ("ent", vec![e, d]),
            ("rel", vec![r, d]),
            ("normal", vec![r, d]),
        ],
        ModelKind::TransD => vec![
            ("ent", vec![e, d]),
            ("ent_proj", vec![e, d]),
            ("rel", vec![r, d]),
            ("rel_proj", vec![r, d]),
        ],
        ModelKind::Rescal => vec![("ent", vec![e, d]), ("rel_matrix", vec![r, d, d])],
        ModelKind::RotatE => vec![("ent", vec![e, 2 * d]), ("rel_phase", vec![r, d])],
        ModelKind::ComplEx => vec![("ent", vec![e, 2 * d]), ("rel", vec![r, 2 * d])],
        ModelKind::SimplE => vec![
            ("ent_head", vec![e, d]),
            ("ent_tail", vec![e, d]),
            ("rel", vec![r, d]),
            ("rel_inv", vec![r, d]),
        ],
        ModelKind::TuckER => vec![
            ("ent", vec![e, d]),
            ("rel", vec![r, dims.relation_dim]),
            ("core", vec![1, d, dims.relation_dim, d]),
        ],
        ModelKind::Ntn => {
            let k = dims.ntn_slices;
            vec![
                ("ent", vec![e, d]),
                ("slices", vec![r, k, d, d]),
                ("linear", vec![r, k, 2 * d]),
                ("bias", vec![r, k]),
                ("combiner", vec![r, k]),
            ]
        }
    }
}

/// Uniform `[-6/sqrt(dim), 6/sqrt(dim)]` initialization, then constraint projection.
pub fn init_model(
    kind: ModelKind,
    dims: ModelDims,
    entity_count: usize,
    relation_count: usize,
    seed: u64,
) -> Result<KgeModel, KgeError> {
    let mut model = KgeModel::zeros(kind, dims, entity_count, relation_count)?;
    let mut rng = stream_rng(seed, &[0x1417]);
    let bound = 6.0 / (dims.dim as f64).sqrt();
    for tensor in &mut model.params {
        let b = if tensor.name == "rel_phase" { PI } else { bound };
        for x in &mut tensor.data {
            *x = rng.random_range(-b..=b);
        }
    }
    model.project();
    Ok(model)
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn axpy(y: &mut [f64], alpha: f64, x: &[f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

fn neg_squared_norm(e: &[f64]) -> f64 {
    -e.iter().map(|x| x * x).sum::<f64>()
}

/// Accumulator for `coeff * d score / d params`.
struct GradSink<'a> {
    grads: &'a mut [Tensor],
    coeff: f64,
}

impl GradSink<'_> {
    fn row(&mut self, tensor: usize, row: usize) -> &mut [f64] {
        self.grads[tensor].row_mut(row)
    }
}

impl KgeModel {
    pub fn zeros(
        kind: ModelKind,
        dims: ModelDims,
        entity_count: usize,
        relation_count: usize,
    ) -> Result<KgeModel, KgeError> {
        if dims.dim == 0 || dims.relation_dim == 0 || (kind == ModelKind::Ntn && dims.ntn_slices == 0) {
            return Err(KgeError::Config("embedding dimensions must be at least 1".into()));
        }
        let params = layout(kind, dims, entity_count, relation_count)
            .into_iter()
            .map(|(name, shape)| Tensor::zeros(name, &shape))
            .collect();
        Ok(KgeModel {
            kind,
            dims,
            entity_count,
            relation_count,
            params,
        })
    }

    pub fn param(&self, name: &str) -> Option<&Tensor> {
        self.params.iter().find(|t| t.name == name)
    }

    pub fn param_mut(&mut self, name: &str) -> Option<&mut Tensor> {
        self.params.iter_mut().find(|t| t.name == name)
    }

    /// Primary entity embedding (real part first for complex kinds).
    pub fn entity_embedding(&self, e: EntityId) -> &[f64] {
        self.params[0].row(e)
    }

    pub fn is_finite(&self) -> bool {
        self.params.iter().all(Tensor::is_finite)
    }

    /// Enforce unit TransH normals, wrap RotatE phases into `(-pi, pi]` and keep TransD rows in the unit ball.
    /// Idempotent.
    pub fn project(&mut self) {
        match self.kind {
            ModelKind::TransH => {
                let normals = self.param_mut("normal").expect("TransH has normals");
                for r in 0..normals.rows() {
                    let row = normals.row_mut(r);
                    let sq: f64 = row.iter().map(|x| x * x).sum();
                    if (sq - 1.0).abs() <= 1e-12 {
                        continue;
                    }
                    if sq == 0.0 {
                        row[0] = 1.0;
                        continue;
                    }
                    let norm = sq.sqrt();
                    row.iter_mut().for_each(|x| *x /= norm);
                }
            }
            ModelKind::RotatE => {
                let phases = self.param_mut("rel_phase").expect("RotatE has phases");
                for x in &mut phases.data {
                    if *x > PI || *x <= -PI {
                        *x = (*x + PI).rem_euclid(2.0 * PI) - PI;
                        if *x <= -PI {
                            *x += 2.0 * PI;
                        }
                    }
                }
            }
            ModelKind::TransD => {
                for tensor in &mut self.params {
                    for r in 0..tensor.rows() {
                        let row = tensor.row_mut(r);
                        let sq: f64 = row.iter().map(|x| x * x).sum();
                        if sq > 1.0 + 1e-12 {
                            let norm = sq.sqrt();
                            row.iter_mut().for_each(|x| *x /= norm);
                        }
                    }
                }
            }
            _ => {}
        }
    }

    pub fn score(&self, h: EntityId, r: RelationId, t: EntityId) -> f64 {
        self.forward(h, r, t, None)
    }

    pub fn score_triple(&self, triple: Triple) -> f64 {
        self.score(triple.head, triple.relation, triple.tail)
    }

    /// Add `coeff * d score(h, r, t) / d params` into `grads` and return the score.
    pub fn accumulate_grad(&self, triple: Triple, coeff: f64, grads: &mut [Tensor]) -> f64 {
        self.forward(
            triple.head,
            triple.relation,
            triple.tail,
            Some(GradSink { grads, coeff }),
        )
    }

    fn forward(&self, h: EntityId, r: RelationId, t: EntityId, sink: Option<GradSink<'_>>) -> f64 {
        match self.kind {
            ModelKind::TransE => self.trans_e(h, r, t, sink),
            ModelKind::TransH => self.trans_h(h, r, t, sink),
            ModelKind::TransD => self.trans_d(h, r, t, sink),
            ModelKind::Rescal => self.rescal(h, r, t, sink),
            ModelKind::RotatE => self.rotat_e(h, r, t, sink),
            ModelKind::ComplEx => self.compl_ex(h, r, t, sink),
            ModelKind::DistMult => self.dist_mult(h, r, t, sink),
            ModelKind::SimplE => self.simpl_e(h, r, t, sink),
            ModelKind::TuckER => self.tuck_er(h, r, t, sink),
            ModelKind::Ntn => self.ntn(h, r, t, sink),
        }
    }

    fn trans_e(&self, h: usize, r: usize, t: usize, sink: Option<GradSink<'_>>) -> f64 {
        let (ent, rel) = (&self.params[0], &self.params[1]);
        let (hv, rv, tv) = (ent.row(h), rel.row(r), ent.row(t));
        let e: Vec<f64> = (0..hv.len()).map(|i| hv[i] + rv[i] - tv[i]).collect();
        if let Some(mut s) = sink {
            let c = -2.0 * s.coeff;
            axpy(s.row(0, h), c, &e);
            axpy(s.row(1, r), c, &e);
            axpy(s.row(0, t), -c, &e);
        }
        neg_squared_norm(&e)
    }

    fn trans_h(&self, h: usize, r: usize, t: usize, sink: Option<GradSink<'_>>) -> f64 {
        let (ent, rel, normal) = (&self.params[0], &self.params[1], &self.params[2]);
        let (hv, tv, d, w) = (ent.row(h), ent.row(t), rel.row(r), normal.row(r));
        let u: Vec<f64> = hv.iter().zip(tv).map(|(a, b)| a - b).collect();
        let a = dot(w, &u);
        let e: Vec<f64> = (0..u.len()).map(|i| u[i] - a * w[i] + d[i]).collect();
        if let Some(mut s) = sink {
            let g: Vec<f64> = e.iter().map(|x| -2.0 * s.coeff * x).collect();
            let wg = dot(w, &g);
            let grad_u: Vec<f64> = (0..g.len()).map(|i| g[i] - w[i] * wg).collect();
            axpy(s.row(0, h), 1.0, &grad_u);
            axpy(s.row(0, t), -1.0, &grad_u);
            axpy(s.row(1, r), 1.0, &g);
            let gw = s.row(2, r);
            for i in 0..g.len() {
                gw[i] -= u[i] * wg + a * g[i];
            }
        }
        neg_squared_norm(&e)
    }

    fn trans_d(&self, h: usize, r: usize, t: usize, sink: Option<GradSink<'_>>) -> f64 {
        let (ent, ent_p, rel, rel_p) = (&self.params[0], &self.params[1], &self.params[2], &self.params[3]);
        let (hv, tv, hp, tp) = (ent.row(h), ent.row(t), ent_p.row(h), ent_p.row(t));
        let (rv, rp) = (rel.row(r), rel_p.row(r));
        let alpha = dot(hp, hv);
        let beta = dot(tp, tv);
        let e: Vec<f64> = (0..hv.len())
            .map(|i| (hv[i] + rp[i] * alpha) + rv[i] - (tv[i] + rp[i] * beta))
            .collect();
        if let Some(mut s) = sink {
            let g: Vec<f64> = e.iter().map(|x| -2.0 * s.coeff * x).collect();
            let gamma = dot(rp, &g);
            let gh = s.row(0, h);
            axpy(gh, 1.0, &g);
            axpy(gh, gamma, hp);
            let gt = s.row(0, t);
            axpy(gt, -1.0, &g);
            axpy(gt, -gamma, tp);
            axpy(s.row(1, h), gamma, hv);
            axpy(s.row(1, t), -gamma, tv);
            axpy(s.row(2, r), 1.0, &g);
            axpy(s.row(3, r), alpha - beta, &g);
        }
        neg_squared_norm(&e)
    }

    fn rescal(&self, h: usize, r: usize, t: usize, sink: Option<GradSink<'_>>) -> f64 {
        let (ent, mats) = (&self.params[0], &self.params[1]);
        let d = self.dims.dim;
        let (hv, tv, m) = (ent.row(h), ent.row(t), mats.row(r));
        let mt: Vec<f64> = (0..d).map(|i| dot(&m[i * d..(i + 1) * d], tv)).collect();
        let score = dot(hv, &mt);
        if let Some(mut s) = sink {
            let c = s.coeff;
            axpy(s.row(0, h), c, &mt);
            let mut mth = vec![0.0; d];
            for i in 0..d {
                axpy(&mut mth, hv[i], &m[i * d..(i + 1) * d]);
            }
            axpy(s.row(0, t), c, &mth);
            let gm = s.row(1, r);
            for i in 0..d {
                axpy(&mut gm[i * d..(i + 1) * d], c * hv[i], tv);
            }
        }
        score
    }

    fn rotat_e(&self, h: usize, r: usize, t: usize, sink: Option<GradSink<'_>>) -> f64 {
        let (ent, phase) = (&self.params[0], &self.params[1]);
        let d = self.dims.dim;
        let (hv, tv, theta) = (ent.row(h), ent.row(t), phase.row(r));
        let (h_re, h_im) = hv.split_at(d);
        let (t_re, t_im) = tv.split_at(d);
        let (cos, sin): (Vec<f64>, Vec<f64>) = theta.iter().map(|x| (x.cos(), x.sin())).unzip();
        let re: Vec<f64> = (0..d).map(|i| (h_re[i] * cos[i] - h_im[i] * sin[i]) - t_re[i]).collect();
        let im: Vec<f64> = (0..d).map(|i| (h_re[i] * sin[i] + h_im[i] * cos[i]) - t_im[i]).collect();
        if let Some(mut s) = sink {
            let c = -2.0 * s.coeff;
            let gh = s.row(0, h);
            for i in 0..d {
                let (g_re, g_im) = (c * re[i], c * im[i]);
                gh[i] += g_re * cos[i] + g_im * sin[i];
                gh[d + i] += -g_re * sin[i] + g_im * cos[i];
            }
            let gt = s.row(0, t);
            for i in 0..d {
                gt[i] -= c * re[i];
                gt[d + i] -= c * im[i];
            }
            let gp = s.row(1, r);
            for i in 0..d {
                let (g_re, g_im) = (c * re[i], c * im[i]);
                gp[i] += g_re * (-h_re[i] * sin[i] - h_im[i] * cos[i])
                    + g_im * (h_re[i] * cos[i] - h_im[i] * sin[i]);
            }
        }
        neg_squared_norm(&re) + neg_squared_norm(&im)
    }

    fn compl_ex(&self, h: usize, r: usize, t: usize, sink: Option<GradSink<'_>>) -> f64 {
        let (ent, rel) = (&self.params[0], &self.params[1]);
        let d = self.dims.dim;
        let (h_re, h_im) = ent.row(h).split_at(d);
        let (t_re, t_im) = ent.row(t).split_at(d);
        let (r_re, r_im) = rel.row(r).split_at(d);
        let score = (0..d)
            .map(|i| {
                h_re[i] * r_re[i] * t_re[i] + h_im[i] * r_re[i] * t_im[i] + h_re[i] * r_im[i] * t_im[i]
                    - h_im[i] * r_im[i] * t_re[i]
            })
            .sum();
        if let Some(mut s) = sink {
            let c = s.coeff;
            let gh = s.row(0, h);
            for i in 0..d {
                gh[i] += c * (r_re[i] * t_re[i] + r_im[i] * t_im[i]);
                gh[d + i] += c * (r_re[i] * t_im[i] - r_im[i] * t_re[i]);
            }
            let gt = s.row(0, t);
            for i in 0..d {
                gt[i] += c * (h_re[i] * r_re[i] - h_im[i] * r_im[i]);
                gt[d + i] += c * (h_im[i] * r_re[i] + h_re[i] * r_im[i]);
            }
            let gr = s.row(1, r);
            for i in 0..d {
                gr[i] += c * (h_re[i] * t_re[i] + h_im[i] * t_im[i]);
                gr[d + i] += c * (h_re[i] * t_im[i] - h_im[i] * t_re[i]);
            }
        }
        score
    }

    fn dist_mult(&self, h: usize, r: usize, t: usize, sink: Option<GradSink<'_>>) -> f64 {
        let (ent, rel) = (&self.params[0], &self.params[1]);
        let (hv, rv, tv) = (ent.row(h), rel.row(r), ent.row(t));
        let score = (0..hv.len()).map(|i| hv[i] * rv[i] * tv[i]).sum();
        if let Some(mut s) = sink {
            let c = s.coeff;
            let d = hv.len();
            let gh = s.row(0, h);
            for i in 0..d {
                gh[i] += c * rv[i] * tv[i];
            }
            let gt = s.row(0, t);
            for i in 0..d {
                gt[i] += c * hv[i] * rv[i];
            }
            let gr = s.row(1, r);
            for i in 0..d {
                gr[i] += c * hv[i] * tv[i];
            }
        }
        score
    }

    fn simpl_e(&self, h: usize, r: usize, t: usize, sink: Option<GradSink<'_>>) -> f64 {
        let (eh, et, rel, inv) = (&self.params[0], &self.params[1], &self.params[2], &self.params[3]);
        let (hh, ht, th, tt) = (eh.row(h), et.row(h), eh.row(t), et.row(t));
        let (rv, ri) = (rel.row(r), inv.row(r));
        let d = rv.len();
        let forward: f64 = (0..d).map(|i| hh[i] * rv[i] * tt[i]).sum();
        let backward: f64 = (0..d).map(|i| th[i] * ri[i] * ht[i]).sum();
        if let Some(mut s) = sink {
            let c = 0.5 * s.coeff;
            for i in 0..d {
                s.row(0, h)[i] += c * rv[i] * tt[i];
                s.row(1, t)[i] += c * hh[i] * rv[i];
                s.row(2, r)[i] += c * hh[i] * tt[i];
                s.row(0, t)[i] += c * ri[i] * ht[i];
                s.row(1, h)[i] += c * th[i] * ri[i];
                s.row(3, r)[i] += c * th[i] * ht[i];
            }
        }
        0.5 * (forward + backward)
    }

    fn tuck_er(&self, h: usize, r: usize, t: usize, sink: Option<GradSink<'_>>) -> f64 {
        let (ent, rel, core) = (&self.params[0], &self.params[1], &self.params[2]);
        let (de, dr) = (self.dims.dim, self.dims.relation_dim);
        let (hv, rv, tv, w) = (ent.row(h), rel.row(r), ent.row(t), core.row(0));
        let idx = |i: usize, j: usize, k: usize| (i * dr + j) * de + k;
        let mut score = 0.0;
        for i in 0..de {
            for j in 0..dr {
                let hr = hv[i] * rv[j];
                for k in 0..de {
                    score += w[idx(i, j, k)] * hr * tv[k];
                }
            }
        }
        if let Some(mut s) = sink {
            let c = s.coeff;
            let mut gh = vec![0.0; de];
            let mut gr = vec![0.0; dr];
            let mut gt = vec![0.0; de];
            {
                let gw = s.row(2, 0);
                for i in 0..de {
                    for j in 0..dr {
                        for k in 0..de {
                            let wijk = w[idx(i, j, k)];
                            gw[idx(i, j, k)] += c * hv[i] * rv[j] * tv[k];
                            gh[i] += c * wijk * rv[j] * tv[k];
                            gr[j] += c * wijk * hv[i] * tv[k];
                            gt[k] += c * wijk * hv[i] * rv[j];
                        }
                    }
                }
            }
            axpy(s.row(0, h), 1.0, &gh);
            axpy(s.row(1, r), 1.0, &gr);
            axpy(s.row(0, t), 1.0, &gt);
        }
        score
    }

    fn ntn(&self, h: usize, r: usize, t: usize, sink: Option<GradSink<'_>>) -> f64 {
        let ent = &self.params[0];
        let (slices, linear, bias, combiner) = (
            self.params[1].row(r),
            self.params[2].row(r),
            self.params[3].row(r),
            self.params[4].row(r),
        );
        let d = self.dims.dim;
        let k = self.dims.ntn_slices;
        let (hv, tv) = (ent.row(h), ent.row(t));
        let mut activations = Vec::with_capacity(k);
        for sl in 0..k {
            let w = &slices[sl * d * d..(sl + 1) * d * d];
            let bilinear: f64 = (0..d).map(|i| hv[i] * dot(&w[i * d..(i + 1) * d], tv)).sum();
            let lin = &linear[sl * 2 * d..(sl + 1) * 2 * d];
            let z = bilinear + dot(&lin[..d], hv) + dot(&lin[d..], tv) + bias[sl];
            activations.push(z.tanh());
        }
        let score = dot(combiner, &activations);
        if let Some(mut s) = sink {
            let c = s.coeff;
            let mut gh = vec![0.0; d];
            let mut gt = vec![0.0; d];
            for sl in 0..k {
                let a = activations[sl];
                let delta = c * combiner[sl] * (1.0 - a * a);
                s.row(4, r)[sl] += c * a;
                s.row(3, r)[sl] += delta;
                let w = &slices[sl * d * d..(sl + 1) * d * d];
                let lin = &linear[sl * 2 * d..(sl + 1) * 2 * d];
                {
                    let gw = &mut s.row(1, r)[sl * d * d..(sl + 1) * d * d];
                    for i in 0..d {
                        axpy(&mut gw[i * d..(i + 1) * d], delta * hv[i], tv);
                    }
                }
                {
                    let gl = &mut s.row(2, r)[sl * 2 * d..(sl + 1) * 2 * d];
                    axpy(&mut gl[..d], delta, hv);
                    axpy(&mut gl[d..], delta, tv);
                }
                for i in 0..d {
                    gh[i] += delta * (dot(&w[i * d..(i + 1) * d], tv) + lin[i]);
                    axpy(&mut gt, delta * hv[i], &w[i * d..(i + 1) * d]);
                }
                axpy(&mut gt, delta, &lin[d..]);
            }
            axpy(s.row(0, h), 1.0, &gh);
            axpy(s.row(0, t), 1.0, &gt);
        }
        score
    }
}
