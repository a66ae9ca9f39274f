use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use super::{eval_kernel, gram, rkhs_norm, BallProblem, KernelSpec, RIDGE_FLOOR};
use crate::error::{Error, Result};

const RADIUS_TOL: f64 = 1e-9;
const INV_PHI: f64 = 0.618_033_988_749_894_9;

/// Regression data for one action.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ActionBlock {
    pub points: Vec<Vec<f64>>,
    pub targets: Vec<f64>,
}

impl ActionBlock {
    pub fn len(&self) -> usize {
        self.targets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.targets.is_empty()
    }

    pub fn push(&mut self, x: Vec<f64>, y: f64) {
        self.points.push(x);
        self.targets.push(y);
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ActionModel {
    pub centers: Vec<Vec<f64>>,
    pub coeffs: Vec<f64>,
    /// `sqrt(b' G b)` recomputed from the stored coefficients.
    pub norm: f64,
}

impl ActionModel {
    fn empty() -> Self {
        ActionModel {
            centers: Vec::new(),
            coeffs: Vec::new(),
            norm: 0.0,
        }
    }
}

/// Per-action kernel expansion `f(x, a) = sum_i b_{i,a} k(x, c_{i,a})`.
///
/// Centers are the distinct sample states of each action; repeated states are merged
/// into one center whose coefficient is the sum over the copies.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KernelQ {
    pub kernel: KernelSpec,
    pub actions: Vec<ActionModel>,
    pub lambda: f64,
    /// Shared radius chosen by the outer search.
    pub radius: f64,
    /// Training objective `(1/2n) sum |y - f|^2 + lambda * max_a |f_a|`.
    pub objective: f64,
    pub samples: usize,
    pub ridge_floor: f64,
}

impl KernelQ {
    pub fn zero(kernel: KernelSpec, action_count: usize) -> Self {
        KernelQ {
            kernel,
            actions: vec![ActionModel::empty(); action_count],
            lambda: 0.0,
            radius: 0.0,
            objective: 0.0,
            samples: 0,
            ridge_floor: RIDGE_FLOOR,
        }
    }

    pub fn action_count(&self) -> usize {
        self.actions.len()
    }

    pub fn evaluate(&self, x: &[f64], a: usize) -> Result<f64> {
        let m = self.actions.get(a).ok_or(Error::UnknownAction {
            action: a,
            count: self.actions.len(),
        })?;
        let mut s = 0.0;
        for (c, b) in m.centers.iter().zip(&m.coeffs) {
            s += b * eval_kernel(self.kernel, x, c)?;
        }
        Ok(s)
    }

    /// `Lambda(f) = max_a |f(., a)|`.
    pub fn regularizer(&self) -> f64 {
        self.actions.iter().map(|m| m.norm).fold(0.0, f64::max)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        Ok(serde_json::from_str(s)?)
    }
}

pub fn predict(model: &KernelQ, x: &[f64], a: usize) -> Result<f64> {
    model.evaluate(x, a)
}

/// Merges bitwise-identical points. Returns unique points, counts, mean targets and the
/// within-group sum of squared deviations.
fn dedup(block: &ActionBlock) -> (Vec<Vec<f64>>, Vec<f64>, Vec<f64>, f64) {
    let mut index: HashMap<Vec<u64>, usize> = HashMap::new();
    let mut points = Vec::new();
    let mut counts: Vec<f64> = Vec::new();
    let mut sums: Vec<f64> = Vec::new();
    let mut members: Vec<Vec<f64>> = Vec::new();
    for (x, &y) in block.points.iter().zip(&block.targets) {
        let key: Vec<u64> = x.iter().map(|v| v.to_bits()).collect();
        let k = *index.entry(key).or_insert_with(|| {
            points.push(x.clone());
            counts.push(0.0);
            sums.push(0.0);
            members.push(Vec::new());
            points.len() - 1
        });
        counts[k] += 1.0;
        sums[k] += y;
        members[k].push(y);
    }
    let means: Vec<f64> = sums.iter().zip(&counts).map(|(s, c)| s / c).collect();
    let spread = members
        .iter()
        .zip(&means)
        .map(|(ys, m)| ys.iter().map(|y| (y - m) * (y - m)).sum::<f64>())
        .sum();
    (points, counts, means, spread)
}

struct Prepared {
    points: Vec<Vec<f64>>,
    problem: BallProblem,
    gram: nalgebra::DMatrix<f64>,
}

/// Fits `min sum_a (1/2n) sum_{i: a_i = a} |y_i - f_a(x_i)|^2 + lambda * max_a |f_a|`.
///
/// The max-norm penalty is handled through a shared radius `t`: for fixed `t` each action
/// solves a ball-constrained problem, and `t` is chosen by golden-section search on the
/// convex function `sum_a loss_a(t) + lambda t`.
pub fn fit_max_norm(blocks: &[ActionBlock], spec: KernelSpec, lambda: f64) -> Result<KernelQ> {
    if !(lambda > 0.0) || !lambda.is_finite() {
        return Err(Error::invalid(format!("lambda must be positive, got {lambda}")));
    }
    let n: usize = blocks.iter().map(ActionBlock::len).sum();
    let mut model = KernelQ::zero(spec, blocks.len());
    model.lambda = lambda;
    if n == 0 {
        return Ok(model);
    }
    model.samples = n;
    let nf = n as f64;

    let mut prepared: Vec<Option<Prepared>> = Vec::with_capacity(blocks.len());
    let mut spread_loss = 0.0;
    for block in blocks {
        if block.points.len() != block.targets.len() {
            return Err(Error::DimensionMismatch {
                expected: block.points.len(),
                got: block.targets.len(),
            });
        }
        if block.is_empty() {
            prepared.push(None);
            continue;
        }
        let (points, counts, means, spread) = dedup(block);
        spread_loss += spread / (2.0 * nf);
        let g = gram(spec, &points)?;
        let problem = BallProblem::new(&g, &means, Some(&counts), nf)?;
        prepared.push(Some(Prepared {
            points,
            problem,
            gram: g,
        }));
    }
    let active: Vec<&Prepared> = prepared.iter().flatten().collect();

    let total = |t: f64| -> f64 {
        active.iter().map(|p| p.problem.loss_at(t)).sum::<f64>() + lambda * t
    };

    // The objective is convex in t with right derivative lambda - sum_a |grad_a| at 0.
    let slope_at_zero: f64 = active.iter().map(|p| p.problem.gradient_norm_at_zero()).sum();
    let radius = if lambda >= slope_at_zero {
        0.0
    } else {
        let hi = active
            .iter()
            .map(|p| p.problem.unconstrained_norm())
            .fold(0.0, f64::max);
        let (mut a, mut b) = (0.0, hi);
        let mut c = b - INV_PHI * (b - a);
        let mut d = a + INV_PHI * (b - a);
        let (mut fc, mut fd) = (total(c), total(d));
        while b - a > RADIUS_TOL {
            if fc <= fd {
                b = d;
                d = c;
                fd = fc;
                c = b - INV_PHI * (b - a);
                fc = total(c);
            } else {
                a = c;
                c = d;
                fc = fd;
                d = a + INV_PHI * (b - a);
                fd = total(d);
            }
        }
        let mid = 0.5 * (a + b);
        [(mid, total(mid)), (0.0, total(0.0)), (hi, total(hi))]
            .into_iter()
            .fold((mid, f64::INFINITY), |best, cand| if cand.1 < best.1 { cand } else { best })
            .0
    };

    let mut loss = spread_loss;
    for (slot, prep) in model.actions.iter_mut().zip(&prepared) {
        let Some(p) = prep else { continue };
        let sol = p.problem.solve(radius)?;
        loss += sol.loss;
        let norm = rkhs_norm(&sol.coeffs, &p.gram)?;
        *slot = ActionModel {
            centers: p.points.clone(),
            coeffs: sol.coeffs,
            norm,
        };
    }
    model.radius = radius;
    model.objective = loss + lambda * model.regularizer();
    Ok(model)
}

/// Training objective of any kernel model on the given data, evaluated by direct
/// summation.
pub fn objective(model: &KernelQ, blocks: &[ActionBlock], lambda: f64) -> Result<f64> {
    let n: usize = blocks.iter().map(ActionBlock::len).sum();
    if n == 0 {
        return Ok(lambda * model.regularizer());
    }
    let mut s = 0.0;
    for (a, block) in blocks.iter().enumerate() {
        for (x, y) in block.points.iter().zip(&block.targets) {
            let r = y - model.evaluate(x, a)?;
            s += r * r;
        }
    }
    Ok(s / (2.0 * n as f64) + lambda * model.regularizer())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{stream_rng, uniform_on_sphere};
    use rand::Rng;

    fn e(d: usize, i: usize) -> Vec<f64> {
        let mut v = vec![0.0; d];
        v[i] = 1.0;
        v
    }

    fn sphere_blocks(seed: u64, actions: usize, per: usize) -> Vec<ActionBlock> {
        let mut rng = stream_rng(seed, &[]);
        (0..actions)
            .map(|_| {
                let mut b = ActionBlock::default();
                for _ in 0..per {
                    let x = uniform_on_sphere(&mut rng, 3);
                    let y = 0.5 + 0.4 * x[0] + 0.1 * rng.random::<f64>();
                    b.push(x, y);
                }
                b
            })
            .collect()
    }

    #[test]
    fn soft_threshold_on_one_sample() {
        for &lam in &[0.1, 0.5, 0.9, 1.0, 2.0] {
            let block = ActionBlock {
                points: vec![e(2, 0)],
                targets: vec![1.0],
            };
            let m = fit_max_norm(&[block], KernelSpec::Delta, lam).unwrap();
            let c = m.actions[0].coeffs[0];
            let expect = (1.0 - lam).max(0.0);
            assert!((c - expect).abs() < 1e-8, "lambda {lam}: {c}");
        }
    }

    #[test]
    fn huge_lambda_gives_zero_model() {
        let blocks = sphere_blocks(1, 2, 20);
        let m = fit_max_norm(&blocks, KernelSpec::Laplacian, 1e6).unwrap();
        assert_eq!(m.regularizer(), 0.0);
        assert!(m.actions.iter().all(|a| a.coeffs.iter().all(|&b| b == 0.0)));
        let n = 40.0;
        let zero: f64 = blocks.iter().flat_map(|b| &b.targets).map(|y| y * y).sum::<f64>() / (2.0 * n);
        assert!((m.objective - zero).abs() < 1e-12);
    }

    #[test]
    fn rejects_bad_lambda_and_handles_empty_data() {
        assert!(fit_max_norm(&[], KernelSpec::Delta, 0.0).is_err());
        assert!(fit_max_norm(&[], KernelSpec::Delta, -1.0).is_err());
        let m = fit_max_norm(&[ActionBlock::default(), ActionBlock::default()], KernelSpec::Delta, 0.1)
            .unwrap();
        assert_eq!(m.action_count(), 2);
        assert_eq!(m.evaluate(&e(2, 0), 1).unwrap(), 0.0);
    }

    #[test]
    fn recorded_values_are_consistent() {
        let blocks = sphere_blocks(2, 3, 15);
        let lam = 0.01;
        let m = fit_max_norm(&blocks, KernelSpec::Laplacian, lam).unwrap();
        let direct = objective(&m, &blocks, lam).unwrap();
        assert!((direct - m.objective).abs() < 1e-9, "{direct} vs {}", m.objective);
        for a in &m.actions {
            let g = gram(KernelSpec::Laplacian, &a.centers).unwrap();
            assert!((rkhs_norm(&a.coeffs, &g).unwrap() - a.norm).abs() < 1e-10);
        }
        // Zero model is feasible, so lambda * Lambda <= objective(0).
        let zero = objective(&KernelQ::zero(KernelSpec::Laplacian, 3), &blocks, lam).unwrap();
        assert!(lam * m.regularizer() <= zero + 1e-12);
        assert!(m.objective <= zero + 1e-12);
    }

    #[test]
    fn shared_radius_beats_independent_fits_at_same_radii() {
        // Two actions with disjoint samples: fit each action separately on a ball whose
        // radius is the norm the joint fit assigned to it. The joint objective can be no
        // worse, since the separate fits are feasible for it with the same max norm.
        let blocks = sphere_blocks(3, 2, 12);
        let lam = 0.02;
        let m = fit_max_norm(&blocks, KernelSpec::Laplacian, lam).unwrap();
        let n = 24.0;
        let mut sep = KernelQ::zero(KernelSpec::Laplacian, 2);
        for (a, block) in blocks.iter().enumerate() {
            let g = gram(KernelSpec::Laplacian, &block.points).unwrap();
            let p = BallProblem::new(&g, &block.targets, None, n).unwrap();
            let s = p.solve(m.actions[a].norm).unwrap();
            sep.actions[a] = ActionModel {
                centers: block.points.clone(),
                norm: rkhs_norm(&s.coeffs, &g).unwrap(),
                coeffs: s.coeffs,
            };
        }
        let joint = objective(&m, &blocks, lam).unwrap();
        let separate = objective(&sep, &blocks, lam).unwrap();
        assert!(joint <= separate + 1e-9, "{joint} vs {separate}");
    }

    #[test]
    fn duplicate_points_merge() {
        let x = e(3, 1);
        let block = ActionBlock {
            points: vec![x.clone(), x.clone(), e(3, 2)],
            targets: vec![0.2, 0.4, 1.0],
        };
        let m = fit_max_norm(&[block], KernelSpec::Delta, 0.05).unwrap();
        assert_eq!(m.actions[0].centers.len(), 2);
    }

    #[test]
    fn predict_agrees_with_naive_sum() {
        let blocks = sphere_blocks(4, 2, 10);
        let m = fit_max_norm(&blocks, KernelSpec::Laplacian, 0.005).unwrap();
        let mut rng = stream_rng(40, &[]);
        for _ in 0..100 {
            let x = uniform_on_sphere(&mut rng, 3);
            let a = rng.random_range(0..2);
            let naive: f64 = m.actions[a]
                .centers
                .iter()
                .zip(&m.actions[a].coeffs)
                .map(|(c, b)| {
                    let d: f64 = c.iter().zip(&x).map(|(p, q)| (p - q) * (p - q)).sum();
                    b * (-d.sqrt()).exp()
                })
                .sum();
            assert!((predict(&m, &x, a).unwrap() - naive).abs() < 1e-12);
        }
        assert!(matches!(predict(&m, &e(3, 0), 2), Err(Error::UnknownAction { .. })));
    }

    #[test]
    fn center_evaluation_returns_coefficient_under_delta() {
        let block = ActionBlock {
            points: vec![e(4, 0), e(4, 3)],
            targets: vec![1.0, 0.5],
        };
        let m = fit_max_norm(&[block], KernelSpec::Delta, 0.01).unwrap();
        for (c, b) in m.actions[0].centers.iter().zip(&m.actions[0].coeffs) {
            assert_eq!(m.evaluate(c, 0).unwrap(), *b);
        }
    }

    #[test]
    fn json_round_trip() {
        let blocks = sphere_blocks(5, 2, 5);
        let m = fit_max_norm(&blocks, KernelSpec::Laplacian, 0.01).unwrap();
        let back = KernelQ::from_json(&m.to_json().unwrap()).unwrap();
        assert_eq!(m, back);
    }
}
