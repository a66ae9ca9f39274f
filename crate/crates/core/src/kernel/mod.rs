//! Kernels on the state space and the kernel regression backend.

mod disk;
mod fit;
mod gram;
mod solver;

use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mdp::StateSupport;

pub use disk::{sphere_pair_expectation, zonal_by_quadrature, DISK_NODES};
pub use fit::{fit_max_norm, objective, predict, ActionBlock, ActionModel, KernelQ};
pub use gram::{gram, rkhs_norm};
pub use solver::{constrained_krr, BallProblem, BallSolution, RIDGE_FLOOR};

const UNIT_TOL: f64 = 1e-8;

/// A positive definite kernel on the state space.
///
/// `Ntk2` and `Arccos1` are the two-layer ReLU kernels for inner weights drawn uniformly
/// from the unit sphere:
/// `ntk2(x, y) = E[(x.y) 1{w.x > 0} 1{w.y > 0}]`, `arccos1(x, y) = E[relu(w.x) relu(w.y)]`.
/// Both are defined only for unit-norm inputs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum KernelSpec {
    /// `exp(-|x - y|)`.
    Laplacian,
    Ntk2,
    Arccos1,
    /// Kronecker delta on exact coordinate equality.
    Delta,
    /// Inner product of the raw coordinates (identity feature map).
    ExplicitFeature,
}

impl KernelSpec {
    pub const ALL: [KernelSpec; 5] = [
        KernelSpec::Laplacian,
        KernelSpec::Ntk2,
        KernelSpec::Arccos1,
        KernelSpec::Delta,
        KernelSpec::ExplicitFeature,
    ];

    pub fn id(self) -> &'static str {
        match self {
            KernelSpec::Laplacian => "laplacian",
            KernelSpec::Ntk2 => "ntk2",
            KernelSpec::Arccos1 => "arccos1",
            KernelSpec::Delta => "delta",
            KernelSpec::ExplicitFeature => "explicit-feature",
        }
    }

    pub fn requires_unit_norm(self) -> bool {
        matches!(self, KernelSpec::Ntk2 | KernelSpec::Arccos1)
    }

    /// Whether every kernel value is nonnegative on the supported domain.
    pub fn is_nonnegative(self) -> bool {
        matches!(self, KernelSpec::Laplacian | KernelSpec::Arccos1 | KernelSpec::Delta)
    }

    /// `K_x = sup_x k(x, x)` over the given support.
    pub fn bound(self, support: &StateSupport) -> f64 {
        match self {
            KernelSpec::Laplacian | KernelSpec::Delta => 1.0,
            KernelSpec::Ntk2 => 0.5,
            KernelSpec::Arccos1 => 1.0 / (2.0 * support.dim() as f64),
            KernelSpec::ExplicitFeature => match support {
                StateSupport::Sphere { .. } => 1.0,
                StateSupport::Finite(points) => points
                    .iter()
                    .map(|p| dot(p, p))
                    .fold(0.0, f64::max),
            },
        }
    }

    /// Kernel value as a function of the angle between two unit vectors in `R^dim`.
    ///
    /// Defined for the zonal kernels only (`Delta` and `ExplicitFeature` depend on more
    /// than the angle off the sphere, but `ExplicitFeature` is zonal on it).
    pub fn zonal_profile(self, theta: f64, dim: usize) -> Option<f64> {
        let t = theta.cos();
        match self {
            KernelSpec::Laplacian => Some((-2.0 * (0.5 * theta).sin()).exp()),
            KernelSpec::Ntk2 => Some(t * (PI - theta) / (2.0 * PI)),
            KernelSpec::Arccos1 => {
                Some((theta.sin() + (PI - theta) * t) / (2.0 * PI * dim as f64))
            }
            KernelSpec::ExplicitFeature => Some(t),
            KernelSpec::Delta => None,
        }
    }
}

impl fmt::Display for KernelSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.id())
    }
}

impl FromStr for KernelSpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "laplacian" | "lap" => Ok(KernelSpec::Laplacian),
            "ntk2" | "ntk" => Ok(KernelSpec::Ntk2),
            "arccos1" | "arccos" => Ok(KernelSpec::Arccos1),
            "delta" => Ok(KernelSpec::Delta),
            "explicit-feature" | "linear" => Ok(KernelSpec::ExplicitFeature),
            other => Err(Error::Parse(format!("unknown kernel id `{other}`"))),
        }
    }
}

pub(crate) fn dot(x: &[f64], y: &[f64]) -> f64 {
    x.iter().zip(y).map(|(a, b)| a * b).sum()
}

fn check_unit(x: &[f64]) -> Result<()> {
    let norm = dot(x, x).sqrt();
    if (norm - 1.0).abs() > UNIT_TOL {
        return Err(Error::NotUnitNorm { norm });
    }
    Ok(())
}

/// Angle between two unit vectors, accurate near 0 and pi.
pub(crate) fn unit_angle(x: &[f64], y: &[f64]) -> f64 {
    let mut diff = 0.0;
    let mut sum = 0.0;
    for (a, b) in x.iter().zip(y) {
        diff += (a - b) * (a - b);
        sum += (a + b) * (a + b);
    }
    2.0 * diff.sqrt().atan2(sum.sqrt())
}

pub fn eval_kernel(spec: KernelSpec, x: &[f64], y: &[f64]) -> Result<f64> {
    if x.len() != y.len() {
        return Err(Error::DimensionMismatch {
            expected: x.len(),
            got: y.len(),
        });
    }
    Ok(match spec {
        KernelSpec::Laplacian => {
            let d2: f64 = x.iter().zip(y).map(|(a, b)| (a - b) * (a - b)).sum();
            (-d2.sqrt()).exp()
        }
        KernelSpec::Ntk2 | KernelSpec::Arccos1 => {
            check_unit(x)?;
            check_unit(y)?;
            let theta = unit_angle(x, y);
            spec.zonal_profile(theta, x.len()).expect("zonal kernel")
        }
        KernelSpec::Delta => {
            if x == y {
                1.0
            } else {
                0.0
            }
        }
        KernelSpec::ExplicitFeature => dot(x, y),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{stream_rng, uniform_on_sphere};

    fn e(d: usize, i: usize) -> Vec<f64> {
        let mut v = vec![0.0; d];
        v[i] = 1.0;
        v
    }

    #[test]
    fn laplacian_values() {
        let x = e(3, 0);
        assert_eq!(eval_kernel(KernelSpec::Laplacian, &x, &x).unwrap(), 1.0);
        let y: Vec<f64> = x.iter().map(|v| -v).collect();
        let v = eval_kernel(KernelSpec::Laplacian, &x, &y).unwrap();
        assert!((v - (-2.0f64).exp()).abs() < 1e-15);
        assert!((v - 0.135335).abs() < 1e-6);
    }

    #[test]
    fn ntk_vanishes_on_orthogonal_pairs() {
        let v = eval_kernel(KernelSpec::Ntk2, &e(5, 0), &e(5, 3)).unwrap();
        assert!(v.abs() < 1e-16);
    }

    #[test]
    fn sphere_kernels_reject_non_unit_points() {
        let x = vec![1.0, 1.0];
        for k in [KernelSpec::Ntk2, KernelSpec::Arccos1] {
            assert!(matches!(
                eval_kernel(k, &x, &e(2, 0)),
                Err(Error::NotUnitNorm { .. })
            ));
        }
        let almost = vec![1.0 + 5e-9, 0.0];
        assert!(eval_kernel(KernelSpec::Ntk2, &almost, &e(2, 0)).is_ok());
    }

    #[test]
    fn diagonal_matches_declared_bound() {
        let sphere = StateSupport::Sphere { dim: 6 };
        let mut rng = stream_rng(11, &[]);
        for k in [KernelSpec::Laplacian, KernelSpec::Ntk2, KernelSpec::Arccos1] {
            let x = uniform_on_sphere(&mut rng, 6);
            let kxx = eval_kernel(k, &x, &x).unwrap();
            assert!((kxx - k.bound(&sphere)).abs() < 1e-14, "{k}");
        }
    }

    #[test]
    fn symmetric_on_random_pairs() {
        let mut rng = stream_rng(5, &[]);
        for _ in 0..50 {
            let x = uniform_on_sphere(&mut rng, 4);
            let y = uniform_on_sphere(&mut rng, 4);
            for k in KernelSpec::ALL {
                assert_eq!(eval_kernel(k, &x, &y).unwrap(), eval_kernel(k, &y, &x).unwrap());
            }
        }
    }

    #[test]
    fn ids_round_trip() {
        for k in KernelSpec::ALL {
            assert_eq!(k.id().parse::<KernelSpec>().unwrap(), k);
        }
        assert!("gaussian".parse::<KernelSpec>().is_err());
    }
}
