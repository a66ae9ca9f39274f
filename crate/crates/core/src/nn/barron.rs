use rand::Rng;
use serde::{Deserialize, Serialize};

use super::TwoLayerQ;
use crate::error::{Error, Result};
use crate::rng::{stream_rng, uniform_on_sphere};

/// A finite random-feature function `g(x) = (1/m) sum_i b_i relu(w_i . x)` with a
/// certified path norm.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BarronTarget {
    pub net: TwoLayerQ,
    pub certified_norm: f64,
}

/// Inner weights uniform on the sphere, outer weights `+-budget`.
///
/// The sign of `b_i` is `+` with probability `(1 + v . w_i) / 2` for a random teacher
/// direction `v`, so the infinite-width limit `budget * E[(v . w) relu(w . x)]` is a
/// nonzero function rather than zero.
pub fn make_barron_target(seed: u64, dim: usize, width: usize, norm_budget: f64) -> Result<BarronTarget> {
    if !(norm_budget >= 0.0) || !norm_budget.is_finite() {
        return Err(Error::invalid(format!("norm budget must be nonnegative, got {norm_budget}")));
    }
    if width == 0 || dim == 0 {
        return Err(Error::invalid("width and dimension must be positive"));
    }
    let mut rng = stream_rng(seed, &[0xBA]);
    let teacher = uniform_on_sphere(&mut rng, dim);
    let mut net = TwoLayerQ::zeros(1, width, dim);
    for i in 0..width {
        let w = uniform_on_sphere(&mut rng, dim);
        let align: f64 = w.iter().zip(&teacher).map(|(a, b)| a * b).sum();
        let sign = if rng.random::<f64>() < 0.5 * (1.0 + align) { 1.0 } else { -1.0 };
        net.outer[0][i] = sign;
        net.inner[0][i * dim..(i + 1) * dim].copy_from_slice(&w);
    }
    let raw = net.path_norm();
    let scale = if raw > 0.0 { norm_budget / raw } else { 0.0 };
    net.outer[0].iter_mut().for_each(|b| *b *= scale);
    let certified_norm = net.path_norm();
    Ok(BarronTarget { net, certified_norm })
}

impl BarronTarget {
    pub fn width(&self) -> usize {
        self.net.width
    }

    pub fn eval(&self, x: &[f64]) -> Result<f64> {
        self.net.forward(x, 0)
    }

    /// Neurons `[k m, (k + 1) m)` re-averaged as a width-`m` network.
    pub fn block(&self, k: usize, m: usize) -> Result<TwoLayerQ> {
        if m == 0 || (k + 1) * m > self.width() {
            return Err(Error::invalid(format!("block {k} of width {m} exceeds {}", self.width())));
        }
        let d = self.net.dim;
        Ok(TwoLayerQ {
            width: m,
            dim: d,
            outer: vec![self.net.outer[0][k * m..(k + 1) * m].to_vec()],
            inner: vec![self.net.inner[0][k * m * d..(k + 1) * m * d].to_vec()],
        })
    }

    /// The first `m` neurons.
    pub fn truncated(&self, m: usize) -> Result<TwoLayerQ> {
        self.block(0, m)
    }
}
