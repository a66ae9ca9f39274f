//! Backward fitted Q-iteration with a regularized regression at every step.

use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kernel::{fit_max_norm, ActionBlock, KernelQ, KernelSpec};
use crate::mdp::{
    greedy_action, ActionValue, EnvMetadata, EpisodicMdp, Policy, QueryKey, SamplingPlan,
    StateSupport, Transition,
};
use crate::nn::{train_regularized, RegressionData, TrainConfig, TwoLayerQ};
use crate::rng::{derive_seed, stream_rng};

const PLAN_STREAM: u64 = 0xA1;
const SIM_STREAM: u64 = 0xA2;
const NET_STREAM: u64 = 0xA3;

/// `K_m(v) = min(max(v, 0), m)`.
pub fn truncate(value: f64, level: f64) -> f64 {
    value.max(0.0).min(level)
}

/// Samples collected at one step.
#[derive(Debug, Clone, PartialEq)]
pub struct StepDataset {
    pub step: usize,
    pub states: Vec<Vec<f64>>,
    pub actions: Vec<usize>,
    pub rewards: Vec<f64>,
    pub next_states: Vec<Vec<f64>>,
    /// Which distribution the pairs were drawn from.
    pub source: String,
}

impl StepDataset {
    pub fn len(&self) -> usize {
        self.rewards.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rewards.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "backend", rename_all = "kebab-case")]
pub enum StepModel {
    Kernel(KernelQ),
    Network(TwoLayerQ),
}

impl StepModel {
    /// Untruncated model output.
    pub fn raw(&self, x: &[f64], a: usize) -> Result<f64> {
        match self {
            StepModel::Kernel(k) => k.evaluate(x, a),
            StepModel::Network(n) => n.forward(x, a),
        }
    }

    pub fn regularizer(&self) -> f64 {
        match self {
            StepModel::Kernel(k) => k.regularizer(),
            StepModel::Network(n) => n.path_norm(),
        }
    }
}

/// One fitted step: `Q_h = K_{level}(model)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepFit {
    pub step: usize,
    pub model: StepModel,
    pub level: f64,
    pub objective: f64,
    pub regularizer: f64,
    pub samples: usize,
    pub fit_seconds: f64,
}

impl StepFit {
    pub fn value(&self, x: &[f64], a: usize) -> Result<f64> {
        Ok(truncate(self.model.raw(x, a)?, self.level))
    }

    pub fn max_value(&self, x: &[f64], action_count: usize) -> Result<f64> {
        (0..action_count).try_fold(f64::NEG_INFINITY, |m, a| Ok(m.max(self.value(x, a)?)))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FittedQ {
    pub horizon: usize,
    pub action_count: usize,
    pub lambda: f64,
    /// Indexed by step.
    pub steps: Vec<StepFit>,
}

impl FittedQ {
    pub fn step(&self, h: usize) -> Result<&StepFit> {
        self.steps
            .get(h)
            .ok_or_else(|| Error::invalid(format!("no fitted model for step {h}")))
    }

    pub fn max_value(&self, h: usize, x: &[f64]) -> Result<f64> {
        self.step(h)?.max_value(x, self.action_count)
    }

    pub fn greedy_action(&self, h: usize, x: &[f64]) -> Result<usize> {
        Ok(greedy_action(&self.values(h, x)?))
    }
}

impl ActionValue for FittedQ {
    fn action_count(&self) -> usize {
        self.action_count
    }

    fn value(&self, h: usize, x: &[f64], a: usize) -> Result<f64> {
        self.step(h)?.value(x, a)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum BackendSpec {
    Kernel { kernel: KernelSpec },
    Network(TrainConfig),
}

impl BackendSpec {
    /// Constant `M` of the Rademacher bound `Rad_n(F_r) <= M r / sqrt(n)`.
    pub fn rademacher_constant(&self, support: &StateSupport, action_count: usize) -> f64 {
        let a = action_count as f64;
        match self {
            BackendSpec::Kernel { kernel } => (a * kernel.bound(support)).sqrt(),
            BackendSpec::Network(_) => 2.0 * a.sqrt(),
        }
    }
}

/// `lambda = 2 M H / sqrt(n)`.
pub fn auto_lambda(mdp: &dyn EpisodicMdp, backend: &BackendSpec, n: usize) -> f64 {
    let m = backend.rademacher_constant(mdp.support(), mdp.action_count());
    2.0 * m * mdp.horizon() as f64 / (n as f64).sqrt()
}

/// `y_i = r_i + max_a' Q_{h+1}(s'_i, a')`, with `Q_H = 0`.
pub fn build_targets(
    dataset: &StepDataset,
    horizon: usize,
    action_count: usize,
    next: Option<&StepFit>,
) -> Result<Vec<f64>> {
    match next {
        None if dataset.step + 1 < horizon => Err(Error::invalid(format!(
            "step {} needs the fitted model of step {}",
            dataset.step,
            dataset.step + 1
        ))),
        None => Ok(dataset.rewards.clone()),
        Some(q) => dataset
            .rewards
            .par_iter()
            .zip(&dataset.next_states)
            .map(|(r, x)| Ok(r + q.max_value(x, action_count)?))
            .collect(),
    }
}

/// Wraps a simulator and counts calls.
struct Counting<'a> {
    inner: &'a dyn EpisodicMdp,
    calls: AtomicU64,
}

impl Counting<'_> {
    fn query(&self, x: &[f64], a: usize, h: usize, key: QueryKey) -> Result<Transition> {
        self.calls.fetch_add(1, Ordering::Relaxed);
        self.inner.query(x, a, h, key)
    }
}

/// Draws `n` pairs from `nu_h` and queries the simulator once per pair.
pub fn collect_step(
    mdp: &dyn EpisodicMdp,
    plan: &SamplingPlan,
    h: usize,
    n: usize,
    seed: u64,
) -> Result<StepDataset> {
    let counting = Counting {
        inner: mdp,
        calls: AtomicU64::new(0),
    };
    collect_counted(&counting, plan, h, n, seed)
}

fn collect_counted(
    mdp: &Counting<'_>,
    plan: &SamplingPlan,
    h: usize,
    n: usize,
    seed: u64,
) -> Result<StepDataset> {
    let dist = plan.step(h)?;
    let sim_seed = derive_seed(seed, &[SIM_STREAM]);
    let support = mdp.inner.support();
    let draws: Vec<(Vec<f64>, usize, Transition)> = (0..n as u64)
        .into_par_iter()
        .map(|i| {
            let mut rng = stream_rng(seed, &[PLAN_STREAM, h as u64, i]);
            let (x, a) = dist.sample(&mut rng, support)?;
            let t = mdp.query(&x, a, h, QueryKey { seed: sim_seed, index: i })?;
            Ok((x, a, t))
        })
        .collect::<Result<_>>()?;
    let mut ds = StepDataset {
        step: h,
        states: Vec::with_capacity(n),
        actions: Vec::with_capacity(n),
        rewards: Vec::with_capacity(n),
        next_states: Vec::with_capacity(n),
        source: format!("nu_{h}"),
    };
    for (x, a, t) in draws {
        ds.states.push(x);
        ds.actions.push(a);
        ds.rewards.push(t.reward);
        ds.next_states.push(t.next_state);
    }
    Ok(ds)
}

fn fit_step(
    ds: &StepDataset,
    targets: &[f64],
    backend: &BackendSpec,
    lambda: f64,
    level: f64,
    action_count: usize,
    dim: usize,
    seed: u64,
) -> Result<(StepModel, f64)> {
    match backend {
        BackendSpec::Kernel { kernel } => {
            let mut blocks = vec![ActionBlock::default(); action_count];
            for ((x, &a), &y) in ds.states.iter().zip(&ds.actions).zip(targets) {
                blocks[a].push(x.clone(), y);
            }
            let m = fit_max_norm(&blocks, *kernel, lambda)?;
            let obj = m.objective;
            Ok((StepModel::Kernel(m), obj))
        }
        BackendSpec::Network(cfg) => {
            let data = RegressionData {
                points: ds.states.clone(),
                actions: ds.actions.clone(),
                targets: targets.to_vec(),
            };
            let cfg = TrainConfig {
                seed: derive_seed(seed, &[NET_STREAM, ds.step as u64, cfg.seed]),
                ..cfg.clone()
            };
            let out = train_regularized(&data, action_count, dim, lambda, Some(level), &cfg)?;
            Ok((StepModel::Network(out.net), out.objective))
        }
    }
}

/// Output of [`run_fqi`].
#[derive(Debug, Clone)]
pub struct FqiRun {
    pub fitted: Arc<FittedQ>,
    pub policy: Policy,
    pub simulator_calls: u64,
    pub metadata: EnvMetadata,
}

/// Fitted Q-iteration: for `h = H-1, ..., 0` draw `n` fresh pairs from `nu_h`, build
/// targets from the already fitted `Q_{h+1}`, fit with penalty `lambda * Lambda`, and
/// truncate at `H - h`.
pub fn run_fqi(
    mdp: &dyn EpisodicMdp,
    plan: &SamplingPlan,
    backend: &BackendSpec,
    lambda: f64,
    n: usize,
    seed: u64,
) -> Result<FqiRun> {
    if n == 0 {
        return Err(Error::invalid("sample size must be at least 1"));
    }
    let horizon = mdp.horizon();
    let action_count = mdp.action_count();
    plan.validate(mdp.support(), action_count, horizon)?;
    let counting = Counting {
        inner: mdp,
        calls: AtomicU64::new(0),
    };
    let mut steps: Vec<StepFit> = Vec::with_capacity(horizon);
    for h in (0..horizon).rev() {
        let started = Instant::now();
        let step = (|| {
            let ds = collect_counted(&counting, plan, h, n, seed)?;
            let targets = build_targets(&ds, horizon, action_count, steps.last())?;
            let level = (horizon - h) as f64;
            let (model, objective) =
                fit_step(&ds, &targets, backend, lambda, level, action_count, mdp.state_dim(), seed)?;
            Ok(StepFit {
                step: h,
                regularizer: model.regularizer(),
                model,
                level,
                objective,
                samples: n,
                fit_seconds: started.elapsed().as_secs_f64(),
            })
        })()
        .map_err(|e: Error| e.at_step(h))?;
        log::debug!("step {h}: objective {:.6e}, Lambda {:.4}", step.objective, step.regularizer);
        steps.push(step);
    }
    steps.reverse();
    let fitted = Arc::new(FittedQ {
        horizon,
        action_count,
        lambda,
        steps,
    });
    Ok(FqiRun {
        policy: Policy::greedy(fitted.clone()),
        fitted,
        simulator_calls: counting.calls.load(Ordering::Relaxed),
        metadata: mdp.metadata().clone(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernel::KernelQ;
    use crate::mdp::{make_finite_feature_mdp, FiniteMdp};

    #[test]
    fn truncation() {
        assert_eq!(truncate(3.5, 2.0), 2.0);
        assert_eq!(truncate(-1.0, 2.0), 0.0);
        assert_eq!(truncate(1.2, 2.0), 1.2);
    }

    fn dataset(step: usize) -> StepDataset {
        StepDataset {
            step,
            states: vec![vec![1.0, 0.0]],
            actions: vec![0],
            rewards: vec![0.5],
            next_states: vec![vec![0.0, 1.0]],
            source: "test".into(),
        }
    }

    fn table_fit(values: [f64; 2], level: f64) -> StepFit {
        // Delta-kernel model with one center per action at the point (0, 1).
        let mut k = KernelQ::zero(KernelSpec::Delta, 2);
        for (a, v) in values.iter().enumerate() {
            k.actions[a].centers = vec![vec![0.0, 1.0]];
            k.actions[a].coeffs = vec![*v];
        }
        StepFit {
            step: 1,
            model: StepModel::Kernel(k),
            level,
            objective: 0.0,
            regularizer: 0.0,
            samples: 1,
            fit_seconds: 0.0,
        }
    }

    #[test]
    fn targets() {
        let last = build_targets(&dataset(2), 3, 2, None).unwrap();
        assert_eq!(last, vec![0.5]);
        assert!(build_targets(&dataset(1), 3, 2, None).is_err());
        let y = build_targets(&dataset(1), 3, 2, Some(&table_fit([0.3, 0.7], 2.0))).unwrap();
        assert!((y[0] - 1.2).abs() < 1e-15);
        // Truncation of the next model bounds the targets.
        let y = build_targets(&dataset(1), 3, 2, Some(&table_fit([-4.0, 9.0], 1.0))).unwrap();
        assert_eq!(y, vec![1.5]);
    }

    #[test]
    fn simulator_calls_are_h_times_n() {
        let m = make_finite_feature_mdp(1, 6, 2, 3).unwrap();
        let run = run_fqi(&m, &m.default_plan(), &BackendSpec::Kernel { kernel: KernelSpec::Delta }, 0.05, 37, 4)
            .unwrap();
        assert_eq!(run.simulator_calls, 3 * 37);
        assert_eq!(run.fitted.steps.len(), 3);
        for (h, s) in run.fitted.steps.iter().enumerate() {
            assert_eq!(s.step, h);
            assert_eq!(s.level, (3 - h) as f64);
        }
    }

    #[test]
    fn zero_reward_mdp_gives_near_zero_values() {
        let base = make_finite_feature_mdp(2, 8, 2, 3).unwrap();
        let transitions = (0..3)
            .map(|h| (0..8).map(|s| (0..2).map(|a| base.transition_row(h, s, a).to_vec()).collect()).collect())
            .collect();
        let m = FiniteMdp::tabular(vec![vec![vec![0.0; 2]; 8]; 3], transitions).unwrap();
        let backend = BackendSpec::Kernel { kernel: KernelSpec::Delta };
        let lambda = auto_lambda(&m, &backend, 1024);
        let run = run_fqi(&m, &m.default_plan(), &backend, lambda, 1024, 9).unwrap();
        for x in m.points() {
            let v = run.fitted.max_value(0, x).unwrap();
            assert!(v.abs() <= 0.05, "{v}");
        }
    }

    #[test]
    fn outputs_stay_in_range_and_runs_repeat() {
        let m = make_finite_feature_mdp(3, 10, 3, 4).unwrap();
        let backend = BackendSpec::Kernel { kernel: KernelSpec::Delta };
        let a = run_fqi(&m, &m.default_plan(), &backend, 0.01, 200, 5).unwrap();
        let b = run_fqi(&m, &m.default_plan(), &backend, 0.01, 200, 5).unwrap();
        let untimed = |f: &FittedQ| {
            let mut f = f.clone();
            f.steps.iter_mut().for_each(|s| s.fit_seconds = 0.0);
            f
        };
        assert_eq!(untimed(&a.fitted), untimed(&b.fitted));
        for h in 0..4 {
            for x in m.points() {
                for v in a.fitted.values(h, x).unwrap() {
                    assert!((0.0..=(4 - h) as f64).contains(&v));
                }
            }
        }
    }

    #[test]
    fn auto_lambda_constants() {
        let m = make_finite_feature_mdp(1, 20, 3, 4).unwrap();
        let k = BackendSpec::Kernel { kernel: KernelSpec::Delta };
        assert!((auto_lambda(&m, &k, 4096) - 2.0 * 3f64.sqrt() * 4.0 / 64.0).abs() < 1e-15);
        let net = BackendSpec::Network(TrainConfig::default());
        assert!((auto_lambda(&m, &net, 64) - 2.0 * 2.0 * 3f64.sqrt() * 4.0 / 8.0).abs() < 1e-15);
    }
}
