//! Dense parameter tensors and the two first-order optimizers used for training.

use serde::{Deserialize, Serialize};

/// Row-major parameter block. `shape[0]` is the row count.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tensor {
    pub name: String,
    pub shape: Vec<usize>,
    pub data: Vec<f64>,
}

impl Tensor {
    pub fn zeros(name: impl Into<String>, shape: &[usize]) -> Self {
        Tensor {
            name: name.into(),
            shape: shape.to_vec(),
            data: vec![0.0; shape.iter().product()],
        }
    }

    pub fn rows(&self) -> usize {
        self.shape.first().copied().unwrap_or(0)
    }

    pub fn row_len(&self) -> usize {
        self.shape[1..].iter().product()
    }

    pub fn row(&self, i: usize) -> &[f64] {
        let n = self.row_len();
        &self.data[i * n..(i + 1) * n]
    }

    pub fn row_mut(&mut self, i: usize) -> &mut [f64] {
        let n = self.row_len();
        &mut self.data[i * n..(i + 1) * n]
    }

    pub fn squared_norm(&self) -> f64 {
        self.data.iter().map(|x| x * x).sum()
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|x| x.is_finite())
    }
}

pub fn zeros_like(params: &[Tensor]) -> Vec<Tensor> {
    params.iter().map(|t| Tensor::zeros(t.name.clone(), &t.shape)).collect()
}

pub fn reset(grads: &mut [Tensor]) {
    for g in grads {
        g.data.iter_mut().for_each(|x| *x = 0.0);
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum OptimizerKind {
    Sgd,
    Adam { beta1: f64, beta2: f64, epsilon: f64 },
}

impl OptimizerKind {
    pub fn adam() -> Self {
        OptimizerKind::Adam {
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

/// Optimizer state over a fixed list of tensors. Updates visit entries in
/// storage order, so results are bit-reproducible.
#[derive(Debug, Clone)]
pub struct Optimizer {
    kind: OptimizerKind,
    learning_rate: f64,
    first: Vec<Vec<f64>>,
    second: Vec<Vec<f64>>,
    step: i32,
}

impl Optimizer {
    pub fn new(kind: OptimizerKind, learning_rate: f64, params: &[Tensor]) -> Self {
        let moments = || params.iter().map(|t| vec![0.0; t.data.len()]).collect();
        Optimizer {
            kind,
            learning_rate,
            first: moments(),
            second: moments(),
            step: 0,
        }
    }

    pub fn step(&mut self, params: &mut [Tensor], grads: &[Tensor]) {
        self.step += 1;
        let lr = self.learning_rate;
        match self.kind {
            OptimizerKind::Sgd => {
                for (p, g) in params.iter_mut().zip(grads) {
                    for (x, dx) in p.data.iter_mut().zip(&g.data) {
                        *x -= lr * dx;
                    }
                }
            }
            OptimizerKind::Adam {
                beta1,
                beta2,
                epsilon,
            } => {
                let c1 = 1.0 - beta1.powi(self.step);
                let c2 = 1.0 - beta2.powi(self.step);
                for (i, (p, g)) in params.iter_mut().zip(grads).enumerate() {
                    let m = &mut self.first[i];
                    let v = &mut self.second[i];
                    for (j, (x, &dx)) in p.data.iter_mut().zip(&g.data).enumerate() {
                        m[j] = beta1 * m[j] + (1.0 - beta1) * dx;
                        v[j] = beta2 * v[j] + (1.0 - beta2) * dx * dx;
                        let m_hat = m[j] / c1;
                        let v_hat = v[j] / c2;
                        *x -= lr * m_hat / (v_hat.sqrt() + epsilon);
                    }
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn quadratic_descent(kind: OptimizerKind, lr: f64, steps: usize) -> f64 {
        // minimize (x - 3)^2
        let mut params = vec![Tensor::zeros("x", &[1, 1])];
        let mut opt = Optimizer::new(kind, lr, &params);
        for _ in 0..steps {
            let x = params[0].data[0];
            let grads = vec![Tensor {
                name: "x".into(),
                shape: vec![1, 1],
                data: vec![2.0 * (x - 3.0)],
            }];
            opt.step(&mut params, &grads);
        }
        params[0].data[0]
    }

    #[test]
    fn sgd_and_adam_converge_on_a_quadratic() {
        assert!((quadratic_descent(OptimizerKind::Sgd, 0.1, 200) - 3.0).abs() < 1e-6);
        assert!((quadratic_descent(OptimizerKind::adam(), 0.05, 2000) - 3.0).abs() < 1e-3);
    }

    #[test]
    fn first_adam_step_moves_by_learning_rate() {
        // Bias correction makes the first step exactly lr * sign(g) (up to epsilon).
        let x = quadratic_descent(OptimizerKind::adam(), 0.01, 1);
        assert!((x - 0.01).abs() < 1e-8);
    }

    #[test]
    fn zero_learning_rate_is_a_no_op() {
        assert_eq!(quadratic_descent(OptimizerKind::adam(), 0.0, 10), 0.0);
        assert_eq!(quadratic_descent(OptimizerKind::Sgd, 0.0, 10), 0.0);
    }
}
