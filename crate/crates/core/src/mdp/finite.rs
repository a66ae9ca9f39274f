use std::collections::HashMap;

use rand::Rng;
use rand_distr::Exp1;
use serde::{Deserialize, Serialize};

use super::{
    check_step_action, EnvMetadata, EpisodicMdp, QueryKey, SamplingPlan, StateSupport, Transition,
};
use crate::error::{Error, Result};
use crate::kernel::KernelSpec;
use crate::rng::{categorical, stream_rng};

const ROW_TOL: f64 = 1e-12;
const SIM_STREAM: u64 = 0x51;

/// Weight of the uniform distribution mixed into generated transition rows.
pub const SMOOTHING: f64 = 0.1;
/// Number of transition clusters in generated finite-feature MDPs.
pub const FINITE_CLUSTERS: usize = 4;

/// A finite MDP with explicit reward and transition tables.
///
/// Tables are indexed `rewards[h][s][a]` and `transitions[h][s][a][s']`.
#[derive(Debug, Clone, PartialEq)]
pub struct FiniteMdp {
    action_count: usize,
    support: StateSupport,
    rewards: Vec<Vec<Vec<f64>>>,
    transitions: Vec<Vec<Vec<Vec<f64>>>>,
    index: HashMap<Vec<u64>, usize>,
    metadata: EnvMetadata,
}

/// On-disk layout of a finite MDP (JSON).
#[derive(Serialize, Deserialize)]
struct FiniteMdpFile {
    format: String,
    horizon: usize,
    states: usize,
    actions: usize,
    points: Vec<Vec<f64>>,
    rewards: Vec<Vec<Vec<f64>>>,
    transitions: Vec<Vec<Vec<Vec<f64>>>>,
    metadata: EnvMetadata,
}

const FILE_FORMAT: &str = "finite-mdp/1";

fn key(x: &[f64]) -> Vec<u64> {
    x.iter().map(|v| v.to_bits()).collect()
}

/// Canonical basis points `e_0, ..., e_{n-1}` in `R^n`.
pub(crate) fn basis_points(n: usize) -> Vec<Vec<f64>> {
    (0..n)
        .map(|i| (0..n).map(|j| if i == j { 1.0 } else { 0.0 }).collect())
        .collect()
}

impl FiniteMdp {
    pub fn new(
        points: Vec<Vec<f64>>,
        rewards: Vec<Vec<Vec<f64>>>,
        transitions: Vec<Vec<Vec<Vec<f64>>>>,
    ) -> Result<Self> {
        let s_count = points.len();
        let horizon = rewards.len();
        if s_count == 0 || horizon == 0 {
            return Err(Error::invalid("finite MDP needs at least one state and one step"));
        }
        if transitions.len() != horizon {
            return Err(Error::DimensionMismatch {
                expected: horizon,
                got: transitions.len(),
            });
        }
        let action_count = rewards[0].first().map_or(0, Vec::len);
        if action_count == 0 {
            return Err(Error::invalid("finite MDP needs at least one action"));
        }
        let dim = points[0].len();
        if let Some(p) = points.iter().find(|p| p.len() != dim) {
            return Err(Error::DimensionMismatch {
                expected: dim,
                got: p.len(),
            });
        }
        let mut index = HashMap::new();
        for (i, p) in points.iter().enumerate() {
            if index.insert(key(p), i).is_some() {
                return Err(Error::invalid(format!("state {i} repeats an earlier point")));
            }
        }
        for h in 0..horizon {
            let fail = |msg: String| Error::invalid(msg).at_step(h);
            if rewards[h].len() != s_count || transitions[h].len() != s_count {
                return Err(fail("table has the wrong number of states".into()));
            }
            for s in 0..s_count {
                if rewards[h][s].len() != action_count || transitions[h][s].len() != action_count {
                    return Err(fail(format!("state {s} has the wrong number of actions")));
                }
                for a in 0..action_count {
                    let r = rewards[h][s][a];
                    if !(0.0..=1.0).contains(&r) {
                        return Err(fail(format!("reward {r} at ({s}, {a}) outside [0, 1]")));
                    }
                    let row = &transitions[h][s][a];
                    if row.len() != s_count {
                        return Err(fail(format!("transition row ({s}, {a}) has wrong length")));
                    }
                    let total: f64 = row.iter().sum();
                    if row.iter().any(|&p| !(p >= 0.0)) || (total - 1.0).abs() > ROW_TOL {
                        return Err(fail(format!("transition row ({s}, {a}) is not a distribution")));
                    }
                }
            }
        }
        Ok(FiniteMdp {
            action_count,
            support: StateSupport::Finite(points),
            rewards,
            transitions,
            index,
            metadata: EnvMetadata::default(),
        })
    }

    /// Tabular MDP with states embedded as canonical basis points.
    pub fn tabular(rewards: Vec<Vec<Vec<f64>>>, transitions: Vec<Vec<Vec<Vec<f64>>>>) -> Result<Self> {
        let s_count = rewards.first().map_or(0, Vec::len);
        FiniteMdp::new(basis_points(s_count), rewards, transitions)
    }

    pub fn with_metadata(mut self, metadata: EnvMetadata) -> Self {
        self.metadata = metadata;
        self
    }

    pub fn state_count(&self) -> usize {
        self.points().len()
    }

    pub fn points(&self) -> &[Vec<f64>] {
        match &self.support {
            StateSupport::Finite(p) => p,
            StateSupport::Sphere { .. } => unreachable!("finite MDPs have finite support"),
        }
    }

    pub fn state_index(&self, x: &[f64]) -> Result<usize> {
        self.index.get(&key(x)).copied().ok_or(Error::OutsideSupport)
    }

    pub fn reward_table(&self, h: usize) -> &[Vec<f64>] {
        &self.rewards[h]
    }

    pub fn transition_row(&self, h: usize, s: usize, a: usize) -> &[f64] {
        &self.transitions[h][s][a]
    }

    /// `(T_h V)(s, a) = r_h(s, a) + sum_{s'} P_h(s' | s, a) V(s')`.
    pub fn backup(&self, h: usize, next_values: &[f64]) -> Vec<Vec<f64>> {
        (0..self.state_count())
            .map(|s| {
                (0..self.action_count)
                    .map(|a| {
                        let ev: f64 = self.transitions[h][s][a]
                            .iter()
                            .zip(next_values)
                            .map(|(p, v)| p * v)
                            .sum();
                        self.rewards[h][s][a] + ev
                    })
                    .collect()
            })
            .collect()
    }

    /// State distribution after one step from a state-action distribution `d[s][a]`.
    pub fn push_forward(&self, h: usize, d: &[Vec<f64>]) -> Vec<f64> {
        let mut out = vec![0.0; self.state_count()];
        for (s, row) in d.iter().enumerate() {
            for (a, &m) in row.iter().enumerate() {
                if m == 0.0 {
                    continue;
                }
                for (o, p) in out.iter_mut().zip(&self.transitions[h][s][a]) {
                    *o += m * p;
                }
            }
        }
        out
    }

    pub fn to_json(&self) -> Result<String> {
        let file = FiniteMdpFile {
            format: FILE_FORMAT.to_string(),
            horizon: self.horizon(),
            states: self.state_count(),
            actions: self.action_count,
            points: self.points().to_vec(),
            rewards: self.rewards.clone(),
            transitions: self.transitions.clone(),
            metadata: self.metadata.clone(),
        };
        Ok(serde_json::to_string_pretty(&file)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let file: FiniteMdpFile = serde_json::from_str(s)?;
        if file.format != FILE_FORMAT {
            return Err(Error::Parse(format!("unsupported finite MDP format `{}`", file.format)));
        }
        let mdp = FiniteMdp::new(file.points, file.rewards, file.transitions)?;
        if mdp.horizon() != file.horizon || mdp.state_count() != file.states || mdp.action_count != file.actions {
            return Err(Error::Parse("declared sizes do not match the tables".into()));
        }
        Ok(mdp.with_metadata(file.metadata))
    }
}

impl EpisodicMdp for FiniteMdp {
    fn state_dim(&self) -> usize {
        self.support.dim()
    }

    fn horizon(&self) -> usize {
        self.rewards.len()
    }

    fn action_count(&self) -> usize {
        self.action_count
    }

    fn support(&self) -> &StateSupport {
        &self.support
    }

    fn metadata(&self) -> &EnvMetadata {
        &self.metadata
    }

    fn reward(&self, x: &[f64], a: usize, h: usize) -> Result<f64> {
        check_step_action(h, a, self.horizon(), self.action_count)?;
        Ok(self.rewards[h][self.state_index(x)?][a])
    }

    fn query(&self, x: &[f64], a: usize, h: usize, key: QueryKey) -> Result<Transition> {
        check_step_action(h, a, self.horizon(), self.action_count)?;
        let s = self.state_index(x)?;
        let mut rng = stream_rng(key.seed, &[SIM_STREAM, h as u64, key.index]);
        let next = categorical(&mut rng, &self.transitions[h][s][a]);
        Ok(Transition {
            reward: self.rewards[h][s][a],
            next_state: self.points()[next].clone(),
        })
    }

    fn as_finite(&self) -> Option<&FiniteMdp> {
        Some(self)
    }

    fn default_plan(&self) -> SamplingPlan {
        SamplingPlan::uniform_finite(self.state_count(), self.action_count, self.horizon())
    }
}

fn dirichlet_ones<R: Rng + ?Sized>(rng: &mut R, n: usize) -> Vec<f64> {
    let draws: Vec<f64> = (0..n).map(|_| rng.sample::<f64, _>(Exp1)).collect();
    let total: f64 = draws.iter().sum();
    draws.into_iter().map(|v| v / total).collect()
}

/// Finite MDP whose transitions depend on the state only through one of
/// [`FINITE_CLUSTERS`] clusters (`cluster(s) = s mod 4`), which makes it a linear MDP in
/// the cluster indicator features. States are canonical basis points so that the delta
/// kernel applies directly. Rewards are uniform on `[0, 1]`; transition rows are a flat
/// Dirichlet draw mixed with the uniform distribution at weight [`SMOOTHING`].
pub fn make_finite_feature_mdp(seed: u64, states: usize, actions: usize, horizon: usize) -> Result<FiniteMdp> {
    if states < 2 {
        return Err(Error::invalid("finite-feature MDP needs at least 2 states"));
    }
    if actions == 0 || horizon == 0 {
        return Err(Error::invalid("actions and horizon must be positive"));
    }
    let clusters = FINITE_CLUSTERS.min(states);
    let mut rng = stream_rng(seed, &[0xF1]);
    let rewards: Vec<Vec<Vec<f64>>> = (0..horizon)
        .map(|_| (0..states).map(|_| (0..actions).map(|_| rng.random::<f64>()).collect()).collect())
        .collect();
    let mut transitions = Vec::with_capacity(horizon);
    for _ in 0..horizon {
        let rows: Vec<Vec<Vec<f64>>> = (0..clusters)
            .map(|_| {
                (0..actions)
                    .map(|_| {
                        let raw: Vec<f64> = dirichlet_ones(&mut rng, states)
                            .into_iter()
                            .map(|p| (1.0 - SMOOTHING) * p + SMOOTHING / states as f64)
                            .collect();
                        let total: f64 = raw.iter().sum();
                        raw.into_iter().map(|p| p / total).collect()
                    })
                    .collect()
            })
            .collect();
        transitions.push((0..states).map(|s| rows[s % clusters].clone()).collect::<Vec<_>>());
    }

    // Delta kernel: the RKHS norm of a function on states is its Euclidean norm. The
    // density with respect to the uniform reference is `states * P(s' | s, a)`.
    let mut k_r: f64 = 0.0;
    let mut k_p: f64 = 0.0;
    for h in 0..horizon {
        for a in 0..actions {
            k_r = k_r.max((0..states).map(|s| rewards[h][s][a].powi(2)).sum::<f64>().sqrt());
            for t in 0..states {
                let col: f64 = (0..states).map(|s| transitions[h][s][a][t].powi(2)).sum::<f64>().sqrt();
                k_p = k_p.max(states as f64 * col);
            }
        }
    }
    let metadata = EnvMetadata {
        kernel: Some(KernelSpec::Delta),
        k_x: Some(1.0),
        k_r: Some(k_r),
        k_p: Some(k_p),
        reference: Some("uniform over states".into()),
        ..EnvMetadata::default()
    };
    Ok(FiniteMdp::tabular(rewards, transitions)?.with_metadata(metadata))
}
