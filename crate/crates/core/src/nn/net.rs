use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::{stream_rng, uniform_on_sphere};

pub fn relu(z: f64) -> f64 {
    z.max(0.0)
}

/// Per-action two-layer networks `f(x, a) = (1/m) sum_i b_{i,a} relu(w_{i,a} . x)`.
///
/// Inner weights of action `a` are stored row-major in `inner[a]` (`width * dim` values).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TwoLayerQ {
    pub width: usize,
    pub dim: usize,
    pub outer: Vec<Vec<f64>>,
    pub inner: Vec<Vec<f64>>,
}

impl TwoLayerQ {
    pub fn zeros(action_count: usize, width: usize, dim: usize) -> Self {
        TwoLayerQ {
            width,
            dim,
            outer: vec![vec![0.0; width]; action_count],
            inner: vec![vec![0.0; width * dim]; action_count],
        }
    }

    /// Inner weights uniform on the unit sphere, outer weights zero.
    pub fn init(action_count: usize, width: usize, dim: usize, seed: u64) -> Self {
        let mut net = TwoLayerQ::zeros(action_count, width, dim);
        for a in 0..action_count {
            let mut rng = stream_rng(seed, &[0x1A, a as u64]);
            for i in 0..width {
                let w = uniform_on_sphere(&mut rng, dim);
                net.inner[a][i * dim..(i + 1) * dim].copy_from_slice(&w);
            }
        }
        net
    }

    pub fn action_count(&self) -> usize {
        self.outer.len()
    }

    pub fn neuron(&self, a: usize, i: usize) -> &[f64] {
        &self.inner[a][i * self.dim..(i + 1) * self.dim]
    }

    pub fn forward(&self, x: &[f64], a: usize) -> Result<f64> {
        if a >= self.action_count() {
            return Err(Error::UnknownAction {
                action: a,
                count: self.action_count(),
            });
        }
        if x.len() != self.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                got: x.len(),
            });
        }
        Ok(self.forward_unchecked(x, a))
    }

    pub(crate) fn forward_unchecked(&self, x: &[f64], a: usize) -> f64 {
        let mut s = 0.0;
        for (i, b) in self.outer[a].iter().enumerate() {
            if *b == 0.0 {
                continue;
            }
            let z: f64 = self.neuron(a, i).iter().zip(x).map(|(w, v)| w * v).sum();
            s += b * relu(z);
        }
        s / self.width as f64
    }

    /// `(1/m) sum_i |b_{i,a}| |w_{i,a}|` for one action.
    pub fn action_path_norm(&self, a: usize) -> f64 {
        let s: f64 = self.outer[a]
            .iter()
            .enumerate()
            .map(|(i, b)| b.abs() * self.neuron(a, i).iter().map(|w| w * w).sum::<f64>().sqrt())
            .sum();
        s / self.width as f64
    }

    /// `Lambda(f) = max_a` of the per-action path norm.
    pub fn path_norm(&self) -> f64 {
        (0..self.action_count())
            .map(|a| self.action_path_norm(a))
            .fold(0.0, f64::max)
    }

    /// Replaces `(b, w)` of one neuron by `(c b, w / c)`.
    pub fn rescale_neuron(&mut self, a: usize, i: usize, c: f64) {
        self.outer[a][i] *= c;
        let d = self.dim;
        self.inner[a][i * d..(i + 1) * d].iter_mut().for_each(|w| *w /= c);
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        Ok(serde_json::from_str(s)?)
    }
}
