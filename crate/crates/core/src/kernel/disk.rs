//! Sphere expectations `E[g(w.x, w.y)]` for `w` uniform on the unit sphere, reduced to
//! the unit disk.
//!
//! With `x = e1` and `y = cos(theta) e1 + sin(theta) e2`, only `(w1, w2)` enter the
//! integrand. Their joint law has density proportional to `(1 - w1^2 - w2^2)^((d-4)/2)`
//! on the unit disk. In polar coordinates `w = r (cos phi, sin phi)` with `r = sin(psi)`
//! the weight becomes `cos(psi)^(d-3) sin(psi)`, which is smooth for `d >= 3`. The angle
//! integral is split where `cos(phi)` or `cos(phi - theta)` changes sign so that each
//! piece of a ReLU-type integrand is smooth.

use std::f64::consts::{FRAC_PI_2, PI};

use super::KernelSpec;
use crate::error::{Error, Result};
use crate::quad::GaussLegendre;

/// Nodes per axis of the tensor rule.
pub const DISK_NODES: usize = 256;

fn angle_breaks(theta: f64) -> Vec<f64> {
    let mut cuts: Vec<f64> = [FRAC_PI_2, 3.0 * FRAC_PI_2, theta + FRAC_PI_2, theta + 3.0 * FRAC_PI_2]
        .iter()
        .map(|c| c.rem_euclid(2.0 * PI))
        .collect();
    cuts.push(0.0);
    cuts.push(2.0 * PI);
    cuts.sort_by(f64::total_cmp);
    cuts.dedup_by(|a, b| (*a - *b).abs() < 1e-15);
    cuts
}

/// `E[g(w.x, w.y)]` for unit vectors at angle `theta` in `R^dim`.
pub fn sphere_pair_expectation<F>(dim: usize, theta: f64, g: F) -> Result<f64>
where
    F: Fn(f64, f64) -> f64,
{
    if dim < 2 {
        return Err(Error::invalid("sphere dimension must be at least 2"));
    }
    let rule = GaussLegendre::new(DISK_NODES);
    let cuts = angle_breaks(theta);
    let along = |r: f64| -> f64 {
        let mut s = 0.0;
        for w in cuts.windows(2) {
            s += rule.integrate(w[0], w[1], |phi| g(r * phi.cos(), r * (phi - theta).cos()));
        }
        s / (2.0 * PI)
    };
    if dim == 2 {
        // Uniform on the circle itself.
        return Ok(along(1.0));
    }
    let p = (dim - 3) as i32;
    let mut num = 0.0;
    let mut den = 0.0;
    for (psi, w) in rule.on_interval(0.0, FRAC_PI_2) {
        let weight = w * psi.cos().powi(p) * psi.sin();
        num += weight * along(psi.sin());
        den += weight;
    }
    Ok(num / den)
}

/// Kernel value at angle `theta` computed from the defining sphere expectation.
pub fn zonal_by_quadrature(spec: KernelSpec, theta: f64, dim: usize) -> Result<f64> {
    let relu = |z: f64| z.max(0.0);
    match spec {
        KernelSpec::Ntk2 => {
            let c = theta.cos();
            sphere_pair_expectation(dim, theta, |u, v| {
                if u > 0.0 && v > 0.0 {
                    c
                } else {
                    0.0
                }
            })
        }
        KernelSpec::Arccos1 => sphere_pair_expectation(dim, theta, |u, v| relu(u) * relu(v)),
        other => Err(Error::invalid(format!(
            "kernel `{other}` is not defined by a sphere expectation"
        ))),
    }
}
