use serde::{Deserialize, Serialize};

use super::KgeError;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum LossFamily {
    PairwiseMargin,
    PointwiseLogistic,
    Multiclass,
    /// Margin inside a log-sigmoid, negatives weighted by a detached softmax
    /// of their scores at `temperature`.
    SelfAdversarial { temperature: f64 },
}

impl LossFamily {
    pub fn name(&self) -> &'static str {
        match self {
            LossFamily::PairwiseMargin => "pairwise_margin",
            LossFamily::PointwiseLogistic => "pointwise_logistic",
            LossFamily::Multiclass => "multiclass",
            LossFamily::SelfAdversarial { .. } => "self_adversarial",
        }
    }
}

fn softplus(x: f64) -> f64 {
    x.max(0.0) + (-x.abs()).exp().ln_1p()
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

pub fn batch_loss(
    family: LossFamily,
    positive_scores: &[f64],
    negative_scores: &[Vec<f64>],
    margin: f64,
) -> Result<f64, KgeError> {
    loss_with_grads(family, positive_scores, negative_scores, margin).map(|(loss, _, _)| loss)
}

/// Loss plus its derivative with respect to every positive and negative score.
pub fn loss_with_grads(
    family: LossFamily,
    positive_scores: &[f64],
    negative_scores: &[Vec<f64>],
    margin: f64,
) -> Result<(f64, Vec<f64>, Vec<Vec<f64>>), KgeError> {
    let p = positive_scores.len();
    if p == 0 || negative_scores.len() != p || negative_scores.iter().any(Vec::is_empty) {
        return Err(KgeError::EmptyBatch);
    }
    let mut d_pos = vec![0.0; p];
    let mut d_neg: Vec<Vec<f64>> = negative_scores.iter().map(|n| vec![0.0; n.len()]).collect();
    let mut loss = 0.0;
    match family {
        LossFamily::PairwiseMargin => {
            let pairs = negative_scores.iter().map(Vec::len).sum::<usize>() as f64;
            for (i, (&sp, negs)) in positive_scores.iter().zip(negative_scores).enumerate() {
                for (j, &sn) in negs.iter().enumerate() {
                    let v = margin - sp + sn;
                    if v > 0.0 {
                        loss += v;
                        d_pos[i] -= 1.0 / pairs;
                        d_neg[i][j] += 1.0 / pairs;
                    }
                }
            }
            loss /= pairs;
        }
        LossFamily::PointwiseLogistic => {
            let n = negative_scores.iter().map(Vec::len).sum::<usize>() as f64;
            let mut pos_term = 0.0;
            let mut neg_term = 0.0;
            for (i, (&sp, negs)) in positive_scores.iter().zip(negative_scores).enumerate() {
                pos_term += softplus(-sp);
                d_pos[i] = -sigmoid(-sp) / p as f64;
                for (j, &sn) in negs.iter().enumerate() {
                    neg_term += softplus(sn);
                    d_neg[i][j] = sigmoid(sn) / n;
                }
            }
            loss = pos_term / p as f64 + neg_term / n;
        }
        LossFamily::Multiclass => {
            for (i, (&sp, negs)) in positive_scores.iter().zip(negative_scores).enumerate() {
                let max = negs.iter().copied().fold(sp, f64::max);
                let z: f64 = (sp - max).exp() + negs.iter().map(|&s| (s - max).exp()).sum::<f64>();
                loss += max + z.ln() - sp;
                d_pos[i] = ((sp - max).exp() / z - 1.0) / p as f64;
                for (j, &sn) in negs.iter().enumerate() {
                    d_neg[i][j] = (sn - max).exp() / z / p as f64;
                }
            }
            loss /= p as f64;
        }
        LossFamily::SelfAdversarial { temperature } => {
            for (i, (&sp, negs)) in positive_scores.iter().zip(negative_scores).enumerate() {
                loss += softplus(-(margin + sp));
                d_pos[i] = -sigmoid(-(margin + sp)) / p as f64;
                let max = negs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                let w: Vec<f64> = negs.iter().map(|&s| ((s - max) * temperature).exp()).collect();
                let total: f64 = w.iter().sum();
                for (j, &sn) in negs.iter().enumerate() {
                    let wj = w[j] / total;
                    loss += wj * softplus(sn + margin);
                    d_neg[i][j] = wj * sigmoid(sn + margin) / p as f64;
                }
            }
            loss /= p as f64;
        }
    }
    Ok((loss, d_pos, d_neg))
}
