//! Concentration coefficients
//! `kappa_h = sup_pi || d(P_h^pi nu_0) / d nu_h ||_{2, nu_h}`,
//! where `P_h^pi nu_0` is the state-action law at step `h` when `(S_0, A_0) ~ nu_0` and
//! `pi` acts from step 1 on.
//!
//! The squared objective `sum_{s,a} d_h(s,a)^2 / nu_h(s,a)` is convex in the occupancy
//! of each step with the other steps held fixed, and that occupancy ranges over a
//! polytope, so the supremum over stochastic policies is attained by deterministic ones.
//! At the last step the choice decouples per state (take `argmax_a 1 / nu_h(s,a)`).
//! At intermediate steps only the next-state law matters, so states with identical
//! transition rows can be lumped and given a common action; this keeps the enumeration
//! small for clustered MDPs while remaining exact.

use super::{EpisodicMdp, FiniteMdp, SamplingPlan};
use crate::error::{Error, Result};

/// Largest number of intermediate-step policies enumerated for one `kappa_h`.
pub const ENUMERATION_CAP: f64 = 1e7;

#[derive(Debug, Clone, PartialEq)]
pub struct Concentration {
    /// `kappa_0, ..., kappa_{H-1}` with `kappa_0 = 1`.
    pub per_step: Vec<f64>,
    /// `H^{-2} sum_h (h + 1) kappa_h` (1-based step weights).
    pub kappa: f64,
}

/// Groups of states whose transition rows agree for every action at step `h`.
fn lump(m: &FiniteMdp, h: usize) -> Vec<Vec<usize>> {
    let mut groups: Vec<Vec<usize>> = Vec::new();
    'states: for s in 0..m.state_count() {
        for g in groups.iter_mut() {
            let r = g[0];
            if (0..m.action_count()).all(|a| m.transition_row(h, r, a) == m.transition_row(h, s, a)) {
                g.push(s);
                continue 'states;
            }
        }
        groups.push(vec![s]);
    }
    groups
}

struct Search<'a> {
    m: &'a FiniteMdp,
    groups: &'a [Vec<Vec<usize>>],
    last_weight: Vec<f64>,
    target: usize,
    best: f64,
}

impl<'a> Search<'a> {
    fn score(&self, p: &[f64]) -> f64 {
        p.iter()
            .zip(&self.last_weight)
            .map(|(&q, &c)| if q == 0.0 { 0.0 } else { q * q * c })
            .sum()
    }

    fn visit(&mut self, step: usize, p: &[f64]) {
        if step == self.target {
            self.best = self.best.max(self.score(p));
            return;
        }
        let groups: &'a [Vec<usize>] = &self.groups[step];
        let a_count = self.m.action_count();
        let combos = a_count.pow(groups.len() as u32);
        for code in 0..combos {
            let mut c = code;
            let mut occupancy = vec![vec![0.0; a_count]; p.len()];
            for g in groups {
                let a = c % a_count;
                c /= a_count;
                for &s in g {
                    occupancy[s][a] = p[s];
                }
            }
            let next = self.m.push_forward(step, &occupancy);
            self.visit(step + 1, &next);
        }
    }
}

pub fn concentration_coeffs(mdp: &dyn EpisodicMdp, plan: &SamplingPlan) -> Result<Concentration> {
    let m = mdp.as_finite().ok_or(Error::NotFinite)?;
    let horizon = m.horizon();
    plan.validate(m.support(), m.action_count(), horizon)?;
    let tables: Vec<Vec<Vec<f64>>> = plan
        .steps
        .iter()
        .map(|s| s.joint_table().ok_or(Error::NotFinite))
        .collect::<Result<_>>()?;
    let groups: Vec<Vec<Vec<usize>>> = (0..horizon).map(|h| lump(m, h)).collect();
    let a_count = m.action_count() as f64;

    let mut per_step = vec![1.0];
    for h in 1..horizon {
        let combos: f64 = (1..h).map(|k| a_count.powi(groups[k].len() as i32)).product();
        if combos > ENUMERATION_CAP {
            return Err(Error::Intractable(format!(
                "{combos:.3e} intermediate policies for step {h}"
            )));
        }
        let last_weight = tables[h]
            .iter()
            .map(|row| {
                row.iter()
                    .map(|&v| if v > 0.0 { 1.0 / v } else { f64::INFINITY })
                    .fold(0.0, f64::max)
            })
            .collect();
        let start = m.push_forward(0, &tables[0]);
        let mut search = Search {
            m,
            groups: &groups,
            last_weight,
            target: h,
            best: 0.0,
        };
        search.visit(1, &start);
        per_step.push(search.best.sqrt());
    }
    let hf = horizon as f64;
    let kappa = per_step
        .iter()
        .enumerate()
        .map(|(h, k)| (h + 1) as f64 * k)
        .sum::<f64>()
        / (hf * hf);
    Ok(Concentration { per_step, kappa })
}
