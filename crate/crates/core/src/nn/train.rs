//! Stochastic subgradient training of the path-norm regularized objective
//! `(1/2n) sum_i |y_i - clamp(f(x_i, a_i))|^2 + lambda * max_a pathnorm_a`.
//!
//! Parameters are updated in the mean-field scaling: gradients with respect to one
//! neuron carry a `1/m` factor, which the step size absorbs by multiplying by `m`. The
//! outer-weight part of the penalty is applied as a soft-threshold after each step, so a
//! dominating penalty sends weights exactly to zero instead of oscillating around it.

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::{relu, TwoLayerQ};
use crate::error::{Error, Result};
use crate::rng::stream_rng;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub width: usize,
    pub epochs: usize,
    pub batch: usize,
    /// Initial step size `eta_0`.
    pub step: f64,
    /// Decay time `T_0` in minibatch steps: `eta_t = eta_0 / (1 + t / T_0)`.
    pub decay: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            width: 256,
            epochs: 2000,
            batch: 64,
            step: 0.5,
            decay: 1000.0,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct RegressionData {
    pub points: Vec<Vec<f64>>,
    pub actions: Vec<usize>,
    pub targets: Vec<f64>,
}

impl RegressionData {
    pub fn len(&self) -> usize {
        self.targets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.targets.is_empty()
    }

    pub fn push(&mut self, x: Vec<f64>, a: usize, y: f64) {
        self.points.push(x);
        self.actions.push(a);
        self.targets.push(y);
    }
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub net: TwoLayerQ,
    pub objective: f64,
    pub initial_objective: f64,
    /// Epoch of the returned iterate; 0 is the initialization.
    pub best_epoch: usize,
}

fn clamp(v: f64, level: Option<f64>) -> f64 {
    match level {
        Some(m) => v.clamp(0.0, m),
        None => v,
    }
}

/// Full-batch training objective.
pub fn objective(net: &TwoLayerQ, data: &RegressionData, lambda: f64, level: Option<f64>) -> f64 {
    let n = data.len();
    let mut s = 0.0;
    for i in 0..n {
        let r = data.targets[i] - clamp(net.forward_unchecked(&data.points[i], data.actions[i]), level);
        s += r * r;
    }
    let loss = if n == 0 { 0.0 } else { s / (2.0 * n as f64) };
    loss + lambda * net.path_norm()
}

fn check(data: &RegressionData, action_count: usize, dim: usize) -> Result<()> {
    if data.points.len() != data.len() || data.actions.len() != data.len() {
        return Err(Error::invalid("regression data columns differ in length"));
    }
    if let Some(&a) = data.actions.iter().find(|&&a| a >= action_count) {
        return Err(Error::UnknownAction {
            action: a,
            count: action_count,
        });
    }
    if let Some(x) = data.points.iter().find(|x| x.len() != dim) {
        return Err(Error::DimensionMismatch {
            expected: dim,
            got: x.len(),
        });
    }
    Ok(())
}

/// Trains from the default initialization (sphere inner weights, zero outer weights).
/// `level` is the clamp `[0, level]` inside the loss; `None` trains without it.
pub fn train_regularized(
    data: &RegressionData,
    action_count: usize,
    dim: usize,
    lambda: f64,
    level: Option<f64>,
    config: &TrainConfig,
) -> Result<TrainOutcome> {
    if !(lambda >= 0.0) {
        return Err(Error::invalid(format!("lambda must be nonnegative, got {lambda}")));
    }
    if config.width == 0 || config.batch == 0 || action_count == 0 {
        return Err(Error::invalid("width, batch and action count must be positive"));
    }
    check(data, action_count, dim)?;
    let m = config.width;
    let mut net = TwoLayerQ::init(action_count, m, dim, config.seed);
    let initial = objective(&net, data, lambda, level);
    let mut best = TrainOutcome {
        net: net.clone(),
        objective: initial,
        initial_objective: initial,
        best_epoch: 0,
    };
    let n = data.len();
    if n == 0 {
        return Ok(best);
    }

    let mut order: Vec<usize> = (0..n).collect();
    let mut t = 0.0;
    let mut grad_b = vec![vec![0.0; m]; action_count];
    let mut grad_w = vec![vec![0.0; m * dim]; action_count];
    let mut pre = vec![0.0; m];
    for epoch in 1..=config.epochs {
        order.shuffle(&mut stream_rng(config.seed, &[0x5F, epoch as u64]));
        for chunk in order.chunks(config.batch) {
            let eta = config.step / (1.0 + t / config.decay);
            t += 1.0;
            grad_b.iter_mut().for_each(|g| g.iter_mut().for_each(|v| *v = 0.0));
            grad_w.iter_mut().for_each(|g| g.iter_mut().for_each(|v| *v = 0.0));
            let scale = 1.0 / chunk.len() as f64;
            for &i in chunk {
                let x = &data.points[i];
                let a = data.actions[i];
                let mut f = 0.0;
                for (k, z) in pre.iter_mut().enumerate() {
                    *z = net.neuron(a, k).iter().zip(x).map(|(w, v)| w * v).sum();
                    f += net.outer[a][k] * relu(*z);
                }
                f /= m as f64;
                let inside = match level {
                    Some(l) => (0.0..=l).contains(&f),
                    None => true,
                };
                if !inside {
                    continue;
                }
                let r = (f - data.targets[i]) * scale;
                if r == 0.0 {
                    continue;
                }
                for (k, &z) in pre.iter().enumerate() {
                    if z <= 0.0 {
                        continue;
                    }
                    grad_b[a][k] += r * z;
                    let rb = r * net.outer[a][k];
                    for (g, v) in grad_w[a][k * dim..(k + 1) * dim].iter_mut().zip(x) {
                        *g += rb * v;
                    }
                }
            }
            // Mean-field step: the 1/m of each gradient cancels against the m in the rate.
            for a in 0..action_count {
                for (b, g) in net.outer[a].iter_mut().zip(&grad_b[a]) {
                    *b -= eta * g;
                }
                for (w, g) in net.inner[a].iter_mut().zip(&grad_w[a]) {
                    *w -= eta * g;
                }
            }
            if lambda > 0.0 {
                let top = (0..action_count)
                    .map(|a| net.action_path_norm(a))
                    .enumerate()
                    .fold((0, f64::NEG_INFINITY), |acc, (a, v)| if v > acc.1 { (a, v) } else { acc })
                    .0;
                for k in 0..m {
                    let wn = net.neuron(top, k).iter().map(|w| w * w).sum::<f64>().sqrt();
                    let b = net.outer[top][k];
                    let shrunk = (b.abs() - eta * lambda * wn).max(0.0);
                    net.outer[top][k] = b.signum() * shrunk;
                    if wn > 0.0 && shrunk > 0.0 {
                        let factor = (1.0 - eta * lambda * shrunk / wn).max(0.0);
                        net.inner[top][k * dim..(k + 1) * dim].iter_mut().for_each(|w| *w *= factor);
                    }
                }
            }
        }
        let obj = objective(&net, data, lambda, level);
        if !obj.is_finite() || (initial > 0.0 && obj > 10.0 * initial) {
            return Err(Error::Diverged(format!(
                "objective {obj:.6e} at epoch {epoch} exceeds ten times the initial {initial:.6e}"
            )));
        }
        if obj < best.objective {
            best.net = net.clone();
            best.objective = obj;
            best.best_epoch = epoch;
        }
    }
    Ok(best)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::make_barron_target;
    use crate::rng::{stream_rng, uniform_on_sphere};

    fn toy() -> RegressionData {
        // 1-D separable data embedded with a bias coordinate.
        let mut d = RegressionData::default();
        for i in 0..16 {
            let u = -1.0 + 2.0 * i as f64 / 15.0;
            let y = if u > 0.0 { 1.0 } else { 0.0 };
            d.push(vec![u, 1.0], 0, y);
        }
        d
    }

    fn config(epochs: usize) -> TrainConfig {
        TrainConfig {
            width: 32,
            epochs,
            batch: 8,
            seed: 3,
            ..TrainConfig::default()
        }
    }

    #[test]
    fn unregularized_training_does_not_get_worse() {
        let d = toy();
        let out = train_regularized(&d, 1, 2, 0.0, None, &config(200)).unwrap();
        assert!(out.objective <= out.initial_objective);
        assert!(out.objective < 0.5 * out.initial_objective);
    }

    #[test]
    fn huge_penalty_keeps_the_zero_network() {
        let d = toy();
        let out = train_regularized(&d, 1, 2, 1e6, Some(1.0), &config(20)).unwrap();
        assert_eq!(out.net.path_norm(), 0.0);
        let zero = objective(&TwoLayerQ::zeros(1, 32, 2), &d, 1e6, Some(1.0));
        assert!(out.objective <= zero);
    }

    #[test]
    fn deterministic_given_seed() {
        let d = toy();
        let a = train_regularized(&d, 1, 2, 1e-3, Some(1.0), &config(30)).unwrap();
        let b = train_regularized(&d, 1, 2, 1e-3, Some(1.0), &config(30)).unwrap();
        assert_eq!(a.net, b.net);
    }

    #[test]
    fn fits_a_barron_target() {
        let target = make_barron_target(5, 4, 2000, 1.0).unwrap();
        let mut rng = stream_rng(6, &[]);
        let mut d = RegressionData::default();
        for _ in 0..256 {
            let x = uniform_on_sphere(&mut rng, 4);
            let y = target.eval(&x).unwrap();
            d.push(x, 0, y);
        }
        let cfg = TrainConfig {
            width: 64,
            epochs: 300,
            seed: 1,
            ..TrainConfig::default()
        };
        let out = train_regularized(&d, 1, 4, 1e-4, None, &cfg).unwrap();
        assert!(out.objective < 0.2 * out.initial_objective, "{} vs {}", out.objective, out.initial_objective);
    }

    #[test]
    fn rejects_bad_input() {
        let mut d = toy();
        assert!(train_regularized(&d, 1, 2, -1.0, None, &config(1)).is_err());
        d.actions[0] = 3;
        assert!(train_regularized(&d, 1, 2, 0.0, None, &config(1)).is_err());
    }
}
