use serde::{Deserialize, Serialize};

use super::{greedy_action, EpisodicMdp, FiniteMdp, Policy};
use crate::error::{Error, Result};

/// Step-indexed action values `q[h][s][a]` of a finite MDP.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QTable {
    pub q: Vec<Vec<Vec<f64>>>,
}

impl QTable {
    pub fn horizon(&self) -> usize {
        self.q.len()
    }

    /// `V_h(s) = max_a Q_h(s, a)`.
    pub fn state_values(&self, h: usize) -> Vec<f64> {
        self.q[h]
            .iter()
            .map(|row| row.iter().copied().fold(f64::NEG_INFINITY, f64::max))
            .collect()
    }

    pub fn greedy_actions(&self) -> Vec<Vec<usize>> {
        self.q
            .iter()
            .map(|step| step.iter().map(|row| greedy_action(row)).collect())
            .collect()
    }

    pub fn greedy_policy(&self, mdp: &FiniteMdp) -> Result<Policy> {
        Policy::deterministic(mdp.points(), &self.greedy_actions(), mdp.action_count())
    }
}

/// `Q*` by backward induction from `Q_H = 0`.
pub fn dp_optimal_q(mdp: &dyn EpisodicMdp) -> Result<QTable> {
    let m = mdp.as_finite().ok_or(Error::NotFinite)?;
    let horizon = m.horizon();
    let mut q = vec![Vec::new(); horizon];
    let mut next = vec![0.0; m.state_count()];
    for h in (0..horizon).rev() {
        q[h] = m.backup(h, &next);
        next = q[h]
            .iter()
            .map(|row| row.iter().copied().fold(f64::NEG_INFINITY, f64::max))
            .collect();
    }
    Ok(QTable { q })
}

/// `J_mu(pi)` by exact forward recursion on state distributions.
pub fn evaluate_policy_exact(mdp: &dyn EpisodicMdp, policy: &Policy, init: &[f64]) -> Result<f64> {
    let m = mdp.as_finite().ok_or(Error::NotFinite)?;
    if init.len() != m.state_count() {
        return Err(Error::DimensionMismatch {
            expected: m.state_count(),
            got: init.len(),
        });
    }
    let mut dist = init.to_vec();
    let mut total = 0.0;
    for h in 0..m.horizon() {
        let mut occupancy = Vec::with_capacity(dist.len());
        for (s, &p) in dist.iter().enumerate() {
            let probs = policy.action_probs(h, &m.points()[s])?;
            if probs.len() != m.action_count() {
                return Err(Error::DimensionMismatch {
                    expected: m.action_count(),
                    got: probs.len(),
                });
            }
            let row: Vec<f64> = probs.iter().map(|pa| p * pa).collect();
            total += row
                .iter()
                .zip(&m.reward_table(h)[s])
                .map(|(w, r)| w * r)
                .sum::<f64>();
            occupancy.push(row);
        }
        if h + 1 < m.horizon() {
            dist = m.push_forward(h, &occupancy);
        }
    }
    Ok(total)
}
