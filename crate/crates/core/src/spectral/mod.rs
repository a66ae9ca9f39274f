//! Mercer spectra of zonal kernels on the sphere `S^{d-1}` and the sample-complexity
//! lower bounds built from them.
//!
//! For `k(x, y) = kappa(x . y)` the addition theorem gives
//! `kappa(t) = sum_l mu_l N(d, l) P_l(t)`, so each eigenvalue `mu_l` (multiplicity
//! `N(d, l)`) is a one-dimensional weighted integral of the profile against the
//! Gegenbauer polynomial `P_l`.

mod bounds;
mod harmonics;

use num_traits::ToPrimitive;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kernel::KernelSpec;
use crate::quad::GaussLegendre;

pub use bounds::{decay_exponent, l2_minimax_rate, linf_lower_bound, TailModel};
pub use harmonics::{gegenbauer_poly, harmonic_dim, harmonic_dim_f64};

/// Nodes of the eigenvalue quadrature.
pub const QUAD_NODES: usize = 2048;
/// Nodes of the coarser rule used for the error self-estimate.
const CHECK_NODES: usize = 1536;
/// Self-estimated quadrature error above which a degree is flagged.
pub const QUAD_WARN: f64 = 1e-9;
/// Upper limit on the degree reached by [`eig_sequence`].
pub const MAX_DEGREE: usize = 20_000;

/// Per-degree eigenvalues of a zonal kernel.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Spectrum {
    pub kernel: KernelSpec,
    pub dim: usize,
    /// `mu_l` for `l = 0..=max_degree`.
    pub mu: Vec<f64>,
    /// `|mu_l(2048 nodes) - mu_l(1536 nodes)|`.
    pub error_estimate: Vec<f64>,
    /// Degrees whose error estimate exceeds [`QUAD_WARN`].
    pub warnings: Vec<usize>,
}

fn check_sphere_kernel(kernel: KernelSpec, d: usize) -> Result<()> {
    if !matches!(kernel, KernelSpec::Laplacian | KernelSpec::Ntk2 | KernelSpec::Arccos1) {
        return Err(Error::invalid(format!("no Mercer spectrum for kernel `{kernel}`")));
    }
    if d < 2 {
        return Err(Error::invalid(format!("sphere dimension must be at least 2, got {d}")));
    }
    Ok(())
}

fn project(kernel: KernelSpec, d: usize, max_degree: usize, nodes: usize) -> Vec<f64> {
    let rule = GaussLegendre::new(nodes);
    let mut num = vec![0.0; max_degree + 1];
    let mut den = vec![0.0; max_degree + 1];
    for (theta, w) in rule.on_interval(0.0, std::f64::consts::PI) {
        let weight = w * theta.sin().powi(d as i32 - 2);
        let kappa = kernel.zonal_profile(theta, d).expect("zonal kernel");
        let p = harmonics::gegenbauer_all(d, max_degree, theta.cos());
        for l in 0..=max_degree {
            num[l] += weight * kappa * p[l];
            den[l] += weight * p[l] * p[l];
        }
    }
    (0..=max_degree)
        .map(|l| num[l] / (den[l] * harmonic_dim_f64(d, l).expect("d >= 2")))
        .collect()
}

/// Eigenvalues `mu_0, ..., mu_max_degree` of `kernel` on `S^{d-1}`.
///
/// Quadrature is Gauss-Legendre in the angle on `[0, pi]`, where the weight
/// `(1 - t^2)^{(d-3)/2} dt` becomes `sin(theta)^{d-2} dtheta` and the profiles are
/// smooth.
pub fn kernel_spectrum(kernel: KernelSpec, d: usize, max_degree: usize) -> Result<Spectrum> {
    check_sphere_kernel(kernel, d)?;
    let mu = project(kernel, d, max_degree, QUAD_NODES);
    let coarse = project(kernel, d, max_degree, CHECK_NODES);
    let error_estimate: Vec<f64> = mu.iter().zip(&coarse).map(|(a, b)| (a - b).abs()).collect();
    let warnings: Vec<usize> = error_estimate
        .iter()
        .enumerate()
        .filter(|(_, e)| **e > QUAD_WARN)
        .map(|(l, _)| l)
        .collect();
    if !warnings.is_empty() {
        log::warn!(
            "{kernel} on S^{}: quadrature error estimate above {QUAD_WARN:e} at {} degrees (first {})",
            d - 1,
            warnings.len(),
            warnings[0]
        );
    }
    Ok(Spectrum {
        kernel,
        dim: d,
        mu,
        error_estimate,
        warnings,
    })
}

/// Single eigenvalue `mu_l`.
pub fn kernel_eigenvalue(kernel: KernelSpec, d: usize, l: usize) -> Result<f64> {
    Ok(kernel_spectrum(kernel, d, l)?.mu[l])
}

/// Whether degree `l` contributes to the flattened sequence. The two ReLU kernels vanish
/// on odd degrees above 1, so only their even degrees (plus degree 1) are kept.
fn keeps_degree(kernel: KernelSpec, l: usize) -> bool {
    match kernel {
        KernelSpec::Ntk2 | KernelSpec::Arccos1 => l < 2 || l % 2 == 0,
        _ => true,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EigEntry {
    pub value: f64,
    pub degree: usize,
    /// `N(d, degree)`, saturated at `u64::MAX`.
    pub multiplicity: u64,
}

/// Flattened Mercer eigenvalues `lambda_1 >= lambda_2 >= ...` (1-based in the maths,
/// 0-based in `entries`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EigSequence {
    pub kernel: Option<KernelSpec>,
    pub dim: Option<usize>,
    pub entries: Vec<EigEntry>,
    /// Per-degree eigenvalues the sequence was built from.
    pub degree_values: Vec<f64>,
    pub tail: TailModel,
    pub warnings: Vec<usize>,
}

impl EigSequence {
    /// Sequence from explicit values, which must be positive-or-zero and nonincreasing.
    pub fn from_values(values: Vec<f64>) -> Result<Self> {
        if values.windows(2).any(|w| w[1] > w[0]) {
            return Err(Error::invalid("eigenvalues must be nonincreasing"));
        }
        Ok(EigSequence {
            kernel: None,
            dim: None,
            entries: values
                .into_iter()
                .enumerate()
                .map(|(i, value)| EigEntry {
                    value,
                    degree: i + 1,
                    multiplicity: 1,
                })
                .collect(),
            degree_values: Vec::new(),
            tail: TailModel::None,
            warnings: Vec::new(),
        })
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn values(&self) -> Vec<f64> {
        self.entries.iter().map(|e| e.value).collect()
    }

    /// Fits a power law `c l^{-alpha}` on the last decade of indices and uses it for the
    /// tail beyond the computed terms.
    pub fn with_power_law_tail(mut self) -> Result<Self> {
        self.tail = TailModel::fit_last_decade(&self.values())?;
        Ok(self)
    }
}

/// First `count` Mercer eigenvalues of `kernel` on `S^{d-1}`, with multiplicities.
///
/// Degrees are added until the kept blocks cover `count` terms and the most recent
/// degrees all fall below the `count`-th value, so no later block can enter the prefix.
pub fn eig_sequence(kernel: KernelSpec, d: usize, count: usize) -> Result<EigSequence> {
    check_sphere_kernel(kernel, d)?;
    if count == 0 {
        return Err(Error::invalid("count must be at least 1"));
    }
    let mut max_degree = 8;
    loop {
        let spectrum = kernel_spectrum(kernel, d, max_degree)?;
        let mut entries = Vec::new();
        for (l, &mu) in spectrum.mu.iter().enumerate() {
            if !keeps_degree(kernel, l) {
                continue;
            }
            let mult = harmonic_dim(d, l)?;
            let m64 = mult.to_u64().unwrap_or(u64::MAX);
            let take = m64.min((count + 1) as u64) as usize;
            entries.extend(std::iter::repeat(EigEntry {
                value: mu,
                degree: l,
                multiplicity: m64,
            })
            .take(take));
        }
        if entries.len() >= count {
            entries.sort_by(|a, b| b.value.total_cmp(&a.value).then(a.degree.cmp(&b.degree)));
            let cutoff = entries[count - 1].value;
            let recent = spectrum
                .mu
                .iter()
                .enumerate()
                .rev()
                .filter(|(l, _)| keeps_degree(kernel, *l))
                .take(4)
                .all(|(_, &mu)| mu < cutoff);
            if recent {
                entries.truncate(count);
                return Ok(EigSequence {
                    kernel: Some(kernel),
                    dim: Some(d),
                    entries,
                    degree_values: spectrum.mu,
                    tail: TailModel::None,
                    warnings: spectrum.warnings,
                });
            }
        }
        if max_degree >= MAX_DEGREE {
            return Err(Error::Intractable(format!(
                "{count} eigenvalues need degrees beyond {MAX_DEGREE}"
            )));
        }
        max_degree = (max_degree * 3 / 2).min(MAX_DEGREE);
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn laplacian_constant_mode_is_positive() {
        for d in [3, 5] {
            let s = kernel_spectrum(KernelSpec::Laplacian, d, 10).unwrap();
            assert!(s.mu[0] > 0.0);
            assert!(s.mu.iter().all(|&m| m >= -1e-10));
        }
    }

    #[test]
    fn relu_kernels_vanish_on_odd_degrees() {
        for k in [KernelSpec::Ntk2, KernelSpec::Arccos1] {
            let s = kernel_spectrum(k, 5, 17).unwrap();
            for l in 1..=8 {
                assert!(s.mu[2 * l + 1].abs() < 1e-9, "{k} l={}: {}", 2 * l + 1, s.mu[2 * l + 1]);
            }
            for l in [0, 1, 2, 4] {
                assert!(s.mu[l] > 0.0, "{k} mu_{l}");
            }
        }
    }

    #[test]
    fn explicit_feature_kernel_has_one_mode() {
        // kappa(t) = t is rejected as a spectral kernel; its expansion is trivial anyway.
        assert!(kernel_spectrum(KernelSpec::ExplicitFeature, 3, 4).is_err());
    }

    #[test]
    fn sequence_is_sorted_with_matching_blocks() {
        for k in [KernelSpec::Laplacian, KernelSpec::Ntk2, KernelSpec::Arccos1] {
            let s = eig_sequence(k, 3, 2000).unwrap();
            assert_eq!(s.len(), 2000);
            assert!(s.values().windows(2).all(|w| w[0] >= w[1]));
            let top = s.degree_values.iter().enumerate().filter(|(l, _)| keeps_degree(k, *l)).map(|(_, v)| *v).fold(f64::MIN, f64::max);
            assert_eq!(s.entries[0].value, top);
            // Every block except possibly the last one cut by `count` is complete.
            let mut counts = std::collections::BTreeMap::new();
            for e in &s.entries {
                *counts.entry(e.degree).or_insert(0u64) += 1;
            }
            let last_degree = s.entries.last().unwrap().degree;
            for (l, c) in counts {
                let n = harmonic_dim(3, l).unwrap().to_u64().unwrap();
                if l != last_degree {
                    assert_eq!(c, n, "{k} degree {l}");
                } else {
                    assert!(c <= n);
                }
            }
        }
    }

    #[test]
    fn eigenvalue_of_single_degree() {
        let all = kernel_spectrum(KernelSpec::Arccos1, 4, 6).unwrap();
        assert_eq!(kernel_eigenvalue(KernelSpec::Arccos1, 4, 6).unwrap(), all.mu[6]);
    }
}
