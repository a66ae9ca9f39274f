use std::collections::HashMap;
use std::fmt;
use std::sync::Arc;

use rand::Rng;

use crate::error::{Error, Result};
use crate::rng::categorical;

const PROB_TOL: f64 = 1e-12;

/// Anything that assigns a value to `(step, state, action)`.
pub trait ActionValue: Send + Sync {
    fn action_count(&self) -> usize;

    fn value(&self, h: usize, x: &[f64], a: usize) -> Result<f64>;

    fn values(&self, h: usize, x: &[f64]) -> Result<Vec<f64>> {
        (0..self.action_count()).map(|a| self.value(h, x, a)).collect()
    }
}

/// Index of the largest value; the lowest index wins ties.
pub fn greedy_action(values: &[f64]) -> usize {
    let mut best = 0;
    for (a, &v) in values.iter().enumerate().skip(1) {
        if v > values[best] {
            best = a;
        }
    }
    best
}

fn point_key(x: &[f64]) -> Vec<u64> {
    x.iter().map(|v| v.to_bits()).collect()
}

/// A nonstationary (possibly stochastic) policy.
#[derive(Clone)]
pub enum Policy {
    /// Greedy with respect to an action-value function.
    Greedy(Arc<dyn ActionValue>),
    /// Explicit probabilities `probs[h][s][a]` over the points of a finite support.
    Table {
        index: Arc<HashMap<Vec<u64>, usize>>,
        probs: Arc<Vec<Vec<Vec<f64>>>>,
    },
    /// Uniform over actions at every state.
    Uniform { actions: usize },
}

impl fmt::Debug for Policy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Policy::Greedy(_) => f.write_str("Policy::Greedy"),
            Policy::Table { probs, .. } => f.debug_struct("Policy::Table").field("probs", probs).finish(),
            Policy::Uniform { actions } => f.debug_struct("Policy::Uniform").field("actions", actions).finish(),
        }
    }
}

impl Policy {
    pub fn greedy(q: Arc<dyn ActionValue>) -> Self {
        Policy::Greedy(q)
    }

    pub fn table(points: &[Vec<f64>], probs: Vec<Vec<Vec<f64>>>) -> Result<Self> {
        for (h, step) in probs.iter().enumerate() {
            if step.len() != points.len() {
                return Err(Error::DimensionMismatch {
                    expected: points.len(),
                    got: step.len(),
                }
                .at_step(h));
            }
            for row in step {
                let total: f64 = row.iter().sum();
                if row.iter().any(|&p| !(p >= 0.0)) || (total - 1.0).abs() > PROB_TOL {
                    return Err(Error::invalid("policy row is not a distribution").at_step(h));
                }
            }
        }
        let index = points.iter().enumerate().map(|(i, p)| (point_key(p), i)).collect();
        Ok(Policy::Table {
            index: Arc::new(index),
            probs: Arc::new(probs),
        })
    }

    /// Deterministic table policy from `actions[h][s]`.
    pub fn deterministic(points: &[Vec<f64>], actions: &[Vec<usize>], action_count: usize) -> Result<Self> {
        let probs = actions
            .iter()
            .map(|step| {
                step.iter()
                    .map(|&a| {
                        if a >= action_count {
                            return Err(Error::UnknownAction {
                                action: a,
                                count: action_count,
                            });
                        }
                        let mut row = vec![0.0; action_count];
                        row[a] = 1.0;
                        Ok(row)
                    })
                    .collect::<Result<Vec<_>>>()
            })
            .collect::<Result<Vec<_>>>()?;
        Policy::table(points, probs)
    }

    pub fn action_probs(&self, h: usize, x: &[f64]) -> Result<Vec<f64>> {
        match self {
            Policy::Greedy(q) => {
                let mut row = vec![0.0; q.action_count()];
                row[greedy_action(&q.values(h, x)?)] = 1.0;
                Ok(row)
            }
            Policy::Table { index, probs } => {
                let step = probs
                    .get(h)
                    .ok_or_else(|| Error::invalid(format!("policy has no step {h}")))?;
                let s = *index.get(&point_key(x)).ok_or(Error::OutsideSupport)?;
                Ok(step[s].clone())
            }
            Policy::Uniform { actions } => Ok(vec![1.0 / *actions as f64; *actions]),
        }
    }

    pub fn sample_action<R: Rng + ?Sized>(&self, h: usize, x: &[f64], rng: &mut R) -> Result<usize> {
        match self {
            Policy::Greedy(q) => Ok(greedy_action(&q.values(h, x)?)),
            _ => Ok(categorical(rng, &self.action_probs(h, x)?)),
        }
    }
}
