//! Episodic MDP simulators, certified environments and exact finite-MDP computations.
//!
//! Steps are 0-based throughout: `h` ranges over `0..horizon` and the value at step `h`
//! is bounded by `horizon - h`.

mod concentration;
mod dp;
mod envspec;
mod finite;
mod policy;
mod rkhs;
mod rollout;
mod sampling;

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::kernel::KernelSpec;

pub use concentration::{concentration_coeffs, Concentration, ENUMERATION_CAP};
pub use dp::{dp_optimal_q, evaluate_policy_exact, QTable};
pub use envspec::{build_env, EnvSpec};
pub use finite::{make_finite_feature_mdp, FiniteMdp, FINITE_CLUSTERS, SMOOTHING};
pub use policy::{greedy_action, ActionValue, Policy};
pub use rkhs::{make_rkhs_mdp, make_rkhs_mdp_with, RkhsMdp, RkhsOptions};
pub use rollout::rollout_return;
pub use sampling::{SamplingPlan, StateDistribution, StepDistribution};

const UNIT_TOL: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum StateSupport {
    /// Explicit list of state points.
    Finite(Vec<Vec<f64>>),
    /// The unit sphere in `R^dim`.
    Sphere { dim: usize },
}

impl StateSupport {
    pub fn dim(&self) -> usize {
        match self {
            StateSupport::Finite(points) => points.first().map_or(0, Vec::len),
            StateSupport::Sphere { dim } => *dim,
        }
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        match self {
            StateSupport::Finite(points) => points.iter().any(|p| p.as_slice() == x),
            StateSupport::Sphere { dim } => {
                x.len() == *dim && (x.iter().map(|v| v * v).sum::<f64>().sqrt() - 1.0).abs() <= UNIT_TOL
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Transition {
    pub reward: f64,
    pub next_state: Vec<f64>,
}

/// Identifies one simulator draw. The environment derives its randomness from
/// `(seed, step, index)` only, so the same key always gives the same sample.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct QueryKey {
    pub seed: u64,
    pub index: u64,
}

/// Certified constants of a generated environment.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct EnvMetadata {
    pub kernel: Option<KernelSpec>,
    pub k_x: Option<f64>,
    pub k_r: Option<f64>,
    pub k_p: Option<f64>,
    pub b_r: Option<f64>,
    pub b_p: Option<f64>,
    /// Description of the reference distributions `rho_{h,a}`.
    pub reference: Option<String>,
}

pub trait EpisodicMdp: Send + Sync {
    fn state_dim(&self) -> usize;
    fn horizon(&self) -> usize;
    fn action_count(&self) -> usize;
    fn support(&self) -> &StateSupport;
    fn metadata(&self) -> &EnvMetadata;

    /// Mean reward `r_h(x, a)`.
    fn reward(&self, x: &[f64], a: usize, h: usize) -> Result<f64>;

    /// One simulator call: the reward and a next state drawn from `P_h(. | x, a)`.
    fn query(&self, x: &[f64], a: usize, h: usize, key: QueryKey) -> Result<Transition>;

    /// The explicit tables, when the MDP has them.
    fn as_finite(&self) -> Option<&FiniteMdp> {
        None
    }

    /// Sampling plan the environment was designed for.
    fn default_plan(&self) -> SamplingPlan;
}

pub(crate) fn check_step_action(h: usize, a: usize, horizon: usize, actions: usize) -> Result<()> {
    if h >= horizon {
        return Err(crate::Error::invalid(format!(
            "step {h} outside horizon {horizon}"
        )));
    }
    if a >= actions {
        return Err(crate::Error::UnknownAction {
            action: a,
            count: actions,
        });
    }
    Ok(())
}
