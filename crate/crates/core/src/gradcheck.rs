//! Central finite differences for checking analytic gradients.

use crate::optim::{zeros_like, Tensor};

/// Numeric gradient of `f` at `params` by central differences with `step`.
/// `params` is restored before returning.
pub fn numeric_gradient(params: &mut [Tensor], step: f64, mut f: impl FnMut(&[Tensor]) -> f64) -> Vec<Tensor> {
    let mut out = zeros_like(params);
    for b in 0..params.len() {
        for i in 0..params[b].data.len() {
            let orig = params[b].data[i];
            params[b].data[i] = orig + step;
            let up = f(params);
            params[b].data[i] = orig - step;
            let down = f(params);
            params[b].data[i] = orig;
            out[b].data[i] = (up - down) / (2.0 * step);
        }
    }
    out
}

/// `|a - n| / max(|a|, |n|, 1e-12)` over the concatenation of all blocks.
pub fn relative_error(analytic: &[Tensor], numeric: &[Tensor]) -> f64 {
    let mut diff = 0.0;
    let mut na = 0.0;
    let mut nn = 0.0;
    for (a, n) in analytic.iter().zip(numeric) {
        for (x, y) in a.data.iter().zip(&n.data) {
            diff += (x - y) * (x - y);
            na += x * x;
            nn += y * y;
        }
    }
    diff.sqrt() / na.sqrt().max(nn.sqrt()).max(1e-12)
}
