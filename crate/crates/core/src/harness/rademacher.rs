use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kernel::{eval_kernel, gram, KernelSpec};
use crate::rng::stream_rng;
use crate::stats::mean_and_std_err;

const RADEMACHER_STREAM: u64 = 0xD0;
/// Fixed-point ascent iterations per start in the ReLU supremum search.
const ASCENT_STEPS: usize = 50;

/// Function class whose empirical Rademacher complexity is estimated. Each action gets its
/// own function and the radius bounds the largest per-action norm.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "ball", rename_all = "kebab-case")]
pub enum RademacherBall {
    /// RKHS ball of `kernel`.
    Kernel { kernel: KernelSpec, radius: f64 },
    /// Two-layer ReLU networks with path norm at most `radius`.
    PathNorm { radius: f64 },
}

impl RademacherBall {
    pub fn radius(&self) -> f64 {
        match *self {
            RademacherBall::Kernel { radius, .. } | RademacherBall::PathNorm { radius } => radius,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RademacherEstimate {
    /// Mean per-draw supremum: exact for kernel balls, a lower estimate for path-norm balls.
    pub estimate: f64,
    pub std_err: f64,
    /// Mean of the per-draw envelope `(2r/n) sum_a ||sum_i xi_i x_i||` (path-norm balls).
    pub envelope: Option<f64>,
    pub envelope_std_err: Option<f64>,
    /// `M r / sqrt(n)` with `M = sqrt(|A| K_x)` or `2 sqrt(|A|) max ||x||`.
    pub bound: f64,
    pub trials: usize,
}

fn split_by_action(points: &[Vec<f64>], actions: &[usize], action_count: usize) -> Result<Vec<Vec<Vec<f64>>>> {
    if points.len() != actions.len() {
        return Err(Error::DimensionMismatch {
            expected: points.len(),
            got: actions.len(),
        });
    }
    let mut blocks = vec![Vec::new(); action_count];
    for (x, &a) in points.iter().zip(actions) {
        if a >= action_count {
            return Err(Error::UnknownAction {
                action: a,
                count: action_count,
            });
        }
        blocks[a].push(x.clone());
    }
    Ok(blocks)
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// Signed ReLU sum `sum_i xi_i relu(w . x_i)`.
fn relu_sum(w: &[f64], xs: &[Vec<f64>], signs: &[f64]) -> f64 {
    xs.iter()
        .zip(signs)
        .map(|(x, s)| s * x.iter().zip(w).map(|(a, b)| a * b).sum::<f64>().max(0.0))
        .sum()
}

/// Lower estimate of `max_{||w|| <= 1} |sum_i xi_i relu(w . x_i)|` by fixed-point ascent
/// from the directions `+-sum xi x` and `+-x_i`.
fn relu_sup(xs: &[Vec<f64>], signs: &[f64]) -> f64 {
    let Some(d) = xs.first().map(Vec::len) else {
        return 0.0;
    };
    let total: Vec<f64> = (0..d).map(|k| xs.iter().zip(signs).map(|(x, s)| s * x[k]).sum()).collect();
    let mut starts = vec![total.clone(), total.iter().map(|v| -v).collect()];
    for x in xs.iter().take(16) {
        starts.push(x.clone());
        starts.push(x.iter().map(|v| -v).collect());
    }
    let mut best = 0.0f64;
    for sign in [1.0, -1.0] {
        for start in &starts {
            let mut w = start.clone();
            for _ in 0..ASCENT_STEPS {
                let nw = norm(&w);
                if nw == 0.0 {
                    break;
                }
                w.iter_mut().for_each(|v| *v /= nw);
                best = best.max(sign * relu_sum(&w, xs, signs));
                // Step to the normalized gradient of the active part.
                let mut g = vec![0.0; d];
                for (x, s) in xs.iter().zip(signs) {
                    if x.iter().zip(&w).map(|(a, b)| a * b).sum::<f64>() > 0.0 {
                        g.iter_mut().zip(x).for_each(|(gk, xk)| *gk += sign * s * xk);
                    }
                }
                let ng = norm(&g);
                if ng == 0.0 || g.iter().zip(&w).all(|(a, b)| (a / ng - b).abs() < 1e-14) {
                    break;
                }
                w = g;
            }
        }
    }
    best
}

/// Monte Carlo estimate of the empirical Rademacher complexity of `ball` on the sample
/// `(x_i, a_i)`.
pub fn estimate_rademacher(
    ball: RademacherBall,
    points: &[Vec<f64>],
    actions: &[usize],
    action_count: usize,
    trials: usize,
    seed: u64,
) -> Result<RademacherEstimate> {
    if trials == 0 {
        return Err(Error::invalid("trials must be at least 1"));
    }
    if points.is_empty() {
        return Err(Error::invalid("the sample must not be empty"));
    }
    let r = ball.radius();
    if !(r >= 0.0) {
        return Err(Error::invalid("radius must be nonnegative"));
    }
    let n = points.len() as f64;
    let blocks = split_by_action(points, actions, action_count)?;
    let signs_for = |t: usize| -> Vec<Vec<f64>> {
        let mut rng = stream_rng(seed, &[RADEMACHER_STREAM, t as u64]);
        blocks
            .iter()
            .map(|b| b.iter().map(|_| if rng.random::<bool>() { 1.0 } else { -1.0 }).collect())
            .collect()
    };
    let a = action_count as f64;
    match ball {
        RademacherBall::Kernel { kernel, .. } => {
            let grams = blocks.iter().map(|b| gram(kernel, b)).collect::<Result<Vec<_>>>()?;
            let k_x = points
                .iter()
                .map(|x| eval_kernel(kernel, x, x))
                .collect::<Result<Vec<_>>>()?
                .into_iter()
                .fold(0.0, f64::max);
            let draws: Vec<f64> = (0..trials)
                .into_par_iter()
                .map(|t| {
                    let signs = signs_for(t);
                    grams
                        .iter()
                        .zip(&signs)
                        .map(|(g, xi)| {
                            let v = nalgebra::DVector::from_column_slice(xi);
                            (v.dot(&(g * &v))).max(0.0).sqrt()
                        })
                        .sum::<f64>()
                        * r
                        / n
                })
                .collect();
            let (estimate, std_err) = mean_and_std_err(&draws);
            Ok(RademacherEstimate {
                estimate,
                std_err,
                envelope: None,
                envelope_std_err: None,
                bound: r * (a * k_x).sqrt() / n.sqrt(),
                trials,
            })
        }
        RademacherBall::PathNorm { .. } => {
            let x_max = points.iter().map(|x| norm(x)).fold(0.0, f64::max);
            let draws: Vec<(f64, f64)> = (0..trials)
                .into_par_iter()
                .map(|t| {
                    let signs = signs_for(t);
                    let mut raw = 0.0;
                    let mut env = 0.0;
                    for (b, xi) in blocks.iter().zip(&signs) {
                        if b.is_empty() {
                            continue;
                        }
                        raw += relu_sup(b, xi);
                        let d = b[0].len();
                        let s: Vec<f64> = (0..d).map(|k| b.iter().zip(xi).map(|(x, e)| e * x[k]).sum()).collect();
                        env += norm(&s);
                    }
                    (r * raw / n, 2.0 * r * env / n)
                })
                .collect();
            let raw: Vec<f64> = draws.iter().map(|d| d.0).collect();
            let env: Vec<f64> = draws.iter().map(|d| d.1).collect();
            let (estimate, std_err) = mean_and_std_err(&raw);
            let (e, e_se) = mean_and_std_err(&env);
            Ok(RademacherEstimate {
                estimate,
                std_err,
                envelope: Some(e),
                envelope_std_err: Some(e_se),
                bound: 2.0 * r * a.sqrt() * x_max / n.sqrt(),
                trials,
            })
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::uniform_on_sphere;

    fn basis(n: usize) -> Vec<Vec<f64>> {
        (0..n)
            .map(|i| {
                let mut e = vec![0.0; n];
                e[i] = 1.0;
                e
            })
            .collect()
    }

    #[test]
    fn zero_radius() {
        let pts = basis(5);
        for ball in [
            RademacherBall::Kernel { kernel: KernelSpec::Delta, radius: 0.0 },
            RademacherBall::PathNorm { radius: 0.0 },
        ] {
            let e = estimate_rademacher(ball, &pts, &[0; 5], 1, 10, 1).unwrap();
            assert_eq!(e.estimate, 0.0);
        }
    }

    #[test]
    fn delta_kernel_is_exact() {
        let pts = basis(16);
        let ball = RademacherBall::Kernel { kernel: KernelSpec::Delta, radius: 2.0 };
        let e = estimate_rademacher(ball, &pts, &[0; 16], 1, 7, 3).unwrap();
        assert!((e.estimate - 2.0 / 4.0).abs() < 1e-15);
        assert_eq!(e.std_err, 0.0);
        assert!((e.bound - 0.5).abs() < 1e-15);
    }

    #[test]
    fn relu_sup_on_a_single_point() {
        // One point with sign +1: the supremum is ||x||.
        let x = vec![vec![3.0, 4.0]];
        assert!((relu_sup(&x, &[1.0]) - 5.0).abs() < 1e-12);
        assert!((relu_sup(&x, &[-1.0]) - 5.0).abs() < 1e-12);
    }

    #[test]
    fn relu_sup_beats_random_directions() {
        let mut rng = stream_rng(8, &[]);
        let xs: Vec<Vec<f64>> = (0..30).map(|_| uniform_on_sphere(&mut rng, 4)).collect();
        let signs: Vec<f64> = (0..30).map(|i| if i % 3 == 0 { 1.0 } else { -1.0 }).collect();
        let s = relu_sup(&xs, &signs);
        for _ in 0..2000 {
            let w = uniform_on_sphere(&mut rng, 4);
            assert!(relu_sum(&w, &xs, &signs).abs() <= s + 1e-12);
        }
    }

    #[test]
    fn path_norm_estimates_sit_below_the_bound() {
        let mut rng = stream_rng(5, &[]);
        let pts: Vec<Vec<f64>> = (0..200).map(|_| uniform_on_sphere(&mut rng, 6)).collect();
        let acts: Vec<usize> = (0..200).map(|i| i % 2).collect();
        let e = estimate_rademacher(RademacherBall::PathNorm { radius: 1.5 }, &pts, &acts, 2, 100, 2).unwrap();
        assert!(e.estimate <= e.bound);
        assert!(e.envelope.unwrap() <= e.bound + 3.0 * e.envelope_std_err.unwrap());
    }

    #[test]
    fn rejects_bad_inputs() {
        let pts = basis(3);
        let ball = RademacherBall::PathNorm { radius: 1.0 };
        assert!(estimate_rademacher(ball, &pts, &[0, 0, 0], 1, 0, 0).is_err());
        assert!(estimate_rademacher(ball, &pts, &[0, 0], 1, 1, 0).is_err());
        assert!(estimate_rademacher(ball, &pts, &[0, 0, 2], 2, 1, 0).is_err());
    }
}
