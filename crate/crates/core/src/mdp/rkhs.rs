use rand::Rng;
use serde::{Deserialize, Serialize};

use super::sampling::projected_normal;
use super::{
    check_step_action, EnvMetadata, EpisodicMdp, QueryKey, SamplingPlan, StateDistribution,
    StateSupport, StepDistribution, Transition,
};
use crate::error::{Error, Result};
use crate::kernel::{eval_kernel, gram, rkhs_norm, KernelSpec};
use crate::rng::{categorical, stream_rng, uniform_on_sphere};

const SIM_STREAM: u64 = 0x52;
const MAX_DRAWS: usize = 1000;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RkhsOptions {
    /// Scale of the weight coefficients `v`; 0 makes transitions independent of `(x, a)`.
    pub coupling: f64,
    /// Kernel sections per reward function.
    pub reward_centers: usize,
    /// Standard deviation of the projected-normal mixture components.
    pub spread: f64,
}

impl Default for RkhsOptions {
    fn default() -> Self {
        RkhsOptions {
            coupling: 0.5,
            reward_centers: 4,
            spread: 0.5,
        }
    }
}

/// Sphere MDP satisfying the RKHS assumption by construction.
///
/// Rewards are `r_h(x, a) = sum_l beta_l k(x, z_l)` with `beta >= 0`, `sum beta = 1/K_x`.
/// Transitions are mixtures `P_h(. | x, a) = sum_j w_j(x, a) rho_{h,j}` of projected
/// normals, with `w_j = 1/J + v_j k(x, c_j)` for `j < J` and the last weight one minus
/// the rest. Draws of `v` are kept only if `sum_j |v_j| K_x <= 1/J`, which puts every
/// weight in `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct RkhsMdp {
    dim: usize,
    horizon: usize,
    action_count: usize,
    kernel: KernelSpec,
    k_x: f64,
    spread: f64,
    /// `[h][a][l]`.
    reward_centers: Vec<Vec<Vec<Vec<f64>>>>,
    reward_coeffs: Vec<Vec<Vec<f64>>>,
    /// Mixture component centers `[h][j]`.
    components: Vec<Vec<Vec<f64>>>,
    /// Weight sections `[h][a][j]` for `j < J - 1`.
    weight_centers: Vec<Vec<Vec<Vec<f64>>>>,
    weight_coeffs: Vec<Vec<Vec<f64>>>,
    support: StateSupport,
    metadata: EnvMetadata,
}

pub fn make_rkhs_mdp(
    seed: u64,
    dim: usize,
    horizon: usize,
    action_count: usize,
    mixture_size: usize,
    kernel: KernelSpec,
) -> Result<RkhsMdp> {
    make_rkhs_mdp_with(seed, dim, horizon, action_count, mixture_size, kernel, &RkhsOptions::default())
}

pub fn make_rkhs_mdp_with(
    seed: u64,
    dim: usize,
    horizon: usize,
    action_count: usize,
    mixture_size: usize,
    kernel: KernelSpec,
    opts: &RkhsOptions,
) -> Result<RkhsMdp> {
    if mixture_size < 2 {
        return Err(Error::invalid("mixture size must be at least 2"));
    }
    if dim < 2 || horizon == 0 || action_count == 0 || opts.reward_centers == 0 {
        return Err(Error::invalid("dimension >= 2, positive horizon, actions and reward centers required"));
    }
    if !kernel.is_nonnegative() {
        return Err(Error::Construction(format!(
            "kernel `{kernel}` takes negative values, so kernel-section rewards could leave [0, 1]"
        )));
    }
    if !(opts.coupling >= 0.0) || !(opts.spread > 0.0) {
        return Err(Error::invalid("coupling must be nonnegative and spread positive"));
    }
    let support = StateSupport::Sphere { dim };
    let k_x = kernel.bound(&support);
    let j_count = mixture_size;
    let mut rng = stream_rng(seed, &[0xE2]);

    let mut reward_centers = Vec::with_capacity(horizon);
    let mut reward_coeffs = Vec::with_capacity(horizon);
    let mut components = Vec::with_capacity(horizon);
    let mut weight_centers = Vec::with_capacity(horizon);
    let mut weight_coeffs = Vec::with_capacity(horizon);
    let half_width = opts.coupling * 2.0 / ((j_count * (j_count - 1)) as f64 * k_x);
    for _ in 0..horizon {
        let mut rc = Vec::with_capacity(action_count);
        let mut rb = Vec::with_capacity(action_count);
        let mut wc = Vec::with_capacity(action_count);
        let mut wv = Vec::with_capacity(action_count);
        for _ in 0..action_count {
            rc.push((0..opts.reward_centers).map(|_| uniform_on_sphere(&mut rng, dim)).collect::<Vec<_>>());
            let raw: Vec<f64> = (0..opts.reward_centers).map(|_| -rng.random::<f64>().ln()).collect();
            let total: f64 = raw.iter().sum();
            rb.push(raw.into_iter().map(|b| b / (total * k_x)).collect::<Vec<_>>());

            wc.push((0..j_count - 1).map(|_| uniform_on_sphere(&mut rng, dim)).collect::<Vec<_>>());
            let mut accepted = None;
            for _ in 0..MAX_DRAWS {
                let v: Vec<f64> = (0..j_count - 1)
                    .map(|_| {
                        if half_width > 0.0 {
                            rng.random_range(-half_width..half_width)
                        } else {
                            0.0
                        }
                    })
                    .collect();
                if v.iter().map(|x| x.abs()).sum::<f64>() * k_x <= 1.0 / j_count as f64 {
                    accepted = Some(v);
                    break;
                }
            }
            wv.push(accepted.ok_or_else(|| {
                Error::Construction(format!("no admissible weight draw in {MAX_DRAWS} attempts"))
            })?);
        }
        reward_centers.push(rc);
        reward_coeffs.push(rb);
        weight_centers.push(wc);
        weight_coeffs.push(wv);
        components.push((0..j_count).map(|_| uniform_on_sphere(&mut rng, dim)).collect::<Vec<_>>());
    }

    let mut k_r: f64 = 0.0;
    let mut k_p: f64 = 0.0;
    for h in 0..horizon {
        for a in 0..action_count {
            let g = gram(kernel, &reward_centers[h][a])?;
            k_r = k_r.max(rkhs_norm(&reward_coeffs[h][a], &g)?);
            // Density against rho_{h,a} = mean of the components is J times a convex
            // combination of the weight functions, so K_p = J max_j |w_j| in H_{k+1},
            // with |c + f| <= sqrt(c^2 + |f|_k^2) for a constant c.
            let v = &weight_coeffs[h][a];
            let c = &weight_centers[h][a];
            let mut worst: f64 = 0.0;
            for j in 0..j_count - 1 {
                worst = worst.max(v[j].abs() * eval_kernel(kernel, &c[j], &c[j])?.sqrt());
            }
            let gc = gram(kernel, c)?;
            worst = worst.max(rkhs_norm(v, &gc)?);
            let base = 1.0 / j_count as f64;
            k_p = k_p.max(j_count as f64 * (base * base + worst * worst).sqrt());
        }
    }
    let metadata = EnvMetadata {
        kernel: Some(kernel),
        k_x: Some(k_x),
        k_r: Some(k_r),
        k_p: Some(k_p),
        reference: Some(format!(
            "equal mixture of the step's {j_count} projected-normal components (spread {})",
            opts.spread
        )),
        ..EnvMetadata::default()
    };
    Ok(RkhsMdp {
        dim,
        horizon,
        action_count,
        kernel,
        k_x,
        spread: opts.spread,
        reward_centers,
        reward_coeffs,
        components,
        weight_centers,
        weight_coeffs,
        support,
        metadata,
    })
}

impl RkhsMdp {
    pub fn mixture_size(&self) -> usize {
        self.components[0].len()
    }

    pub fn kernel(&self) -> KernelSpec {
        self.kernel
    }

    /// Reward centers and coefficients of `r_h(., a)`.
    pub fn reward_expansion(&self, h: usize, a: usize) -> (&[Vec<f64>], &[f64]) {
        (&self.reward_centers[h][a], &self.reward_coeffs[h][a])
    }

    /// Mixture weights `w_j(x, a)` at step `h`.
    pub fn weights(&self, x: &[f64], a: usize, h: usize) -> Result<Vec<f64>> {
        check_step_action(h, a, self.horizon, self.action_count)?;
        let j_count = self.mixture_size();
        let base = 1.0 / j_count as f64;
        let mut w = Vec::with_capacity(j_count);
        for (c, v) in self.weight_centers[h][a].iter().zip(&self.weight_coeffs[h][a]) {
            w.push(base + v * eval_kernel(self.kernel, x, c)?);
        }
        let rest: f64 = w.iter().sum();
        w.push(1.0 - rest);
        Ok(w)
    }
}

impl EpisodicMdp for RkhsMdp {
    fn state_dim(&self) -> usize {
        self.dim
    }

    fn horizon(&self) -> usize {
        self.horizon
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
        check_step_action(h, a, self.horizon, self.action_count)?;
        let mut r = 0.0;
        for (z, b) in self.reward_centers[h][a].iter().zip(&self.reward_coeffs[h][a]) {
            r += b * eval_kernel(self.kernel, x, z)?;
        }
        // Nonnegative by construction; the clamp only absorbs round-off above 1.
        Ok(r.min(1.0))
    }

    fn query(&self, x: &[f64], a: usize, h: usize, key: QueryKey) -> Result<Transition> {
        if x.len() != self.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                got: x.len(),
            });
        }
        let reward = self.reward(x, a, h)?;
        let w: Vec<f64> = self.weights(x, a, h)?.into_iter().map(|v| v.max(0.0)).collect();
        let mut rng = stream_rng(key.seed, &[SIM_STREAM, h as u64, key.index]);
        let j = categorical(&mut rng, &w);
        let next_state = projected_normal(&mut rng, &self.components[h][j], self.spread);
        Ok(Transition { reward, next_state })
    }

    /// `nu_0` uniform on the sphere; `nu_h` the step `h-1` reference mixture; uniform
    /// actions throughout.
    fn default_plan(&self) -> SamplingPlan {
        let steps = (0..self.horizon)
            .map(|h| {
                let states = if h == 0 {
                    StateDistribution::UniformSphere { dim: self.dim }
                } else {
                    StateDistribution::SphereMixture {
                        centers: self.components[h - 1].clone(),
                        spread: self.spread,
                    }
                };
                StepDistribution::uniform_actions(states, self.action_count)
            })
            .collect();
        SamplingPlan::new(steps)
    }
}
