use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mdp::{dp_optimal_q, evaluate_policy_exact, rollout_return, EpisodicMdp, Policy, StateDistribution};

/// Tolerance below zero accepted for an exactly computed gap.
pub const GAP_FLOOR: f64 = 1e-12;

/// `max_pi J(pi) - J(pi_hat)` when both sides are exact, or the policy's return alone
/// (with Monte Carlo error) when the optimum is not available.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GapEstimate {
    /// NaN when the optimal value is unknown.
    pub gap: f64,
    pub policy_return: f64,
    pub optimal_return: Option<f64>,
    /// Zero for exact evaluations.
    pub std_err: f64,
}

/// Exact suboptimality gap on a finite MDP with initial state weights `init`.
pub fn suboptimality_gap(mdp: &dyn EpisodicMdp, policy: &Policy, init: &[f64]) -> Result<f64> {
    let q = dp_optimal_q(mdp)?;
    let v0 = q.state_values(0);
    if v0.len() != init.len() {
        return Err(Error::DimensionMismatch {
            expected: v0.len(),
            got: init.len(),
        });
    }
    let optimal: f64 = v0.iter().zip(init).map(|(v, p)| v * p).sum();
    Ok(optimal - evaluate_policy_exact(mdp, policy, init)?)
}

/// Exact gap on finite MDPs with a tabular initial law; rollouts otherwise.
pub fn evaluate_gap(
    mdp: &dyn EpisodicMdp,
    policy: &Policy,
    init: &StateDistribution,
    episodes: usize,
    seed: u64,
) -> Result<GapEstimate> {
    if let (Some(m), StateDistribution::Table(w)) = (mdp.as_finite(), init) {
        let q = dp_optimal_q(m)?;
        let optimal: f64 = q.state_values(0).iter().zip(w).map(|(v, p)| v * p).sum();
        let value = evaluate_policy_exact(m, policy, w)?;
        return Ok(GapEstimate {
            gap: optimal - value,
            policy_return: value,
            optimal_return: Some(optimal),
            std_err: 0.0,
        });
    }
    let (value, std_err) = rollout_return(mdp, policy, init, episodes, seed)?;
    Ok(GapEstimate {
        gap: f64::NAN,
        policy_return: value,
        optimal_return: None,
        std_err,
    })
}
