use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::StateSupport;
use crate::error::{Error, Result};
use crate::rng::{categorical, uniform_on_sphere};

const PROB_TOL: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum StateDistribution {
    /// Weights over the points of a finite support, in support order.
    Table(Vec<f64>),
    UniformSphere { dim: usize },
    /// Equal-weight mixture of projected normals `normalize(c_j + spread * z)`.
    SphereMixture { centers: Vec<Vec<f64>>, spread: f64 },
}

fn check_probabilities(w: &[f64], what: &str) -> Result<()> {
    if w.iter().any(|&p| !(p >= 0.0) || !p.is_finite()) {
        return Err(Error::invalid(format!("{what} has a negative or non-finite weight")));
    }
    let total: f64 = w.iter().sum();
    if (total - 1.0).abs() > PROB_TOL * (w.len().max(1) as f64) {
        return Err(Error::invalid(format!("{what} sums to {total}, not 1")));
    }
    Ok(())
}

/// Draw from a projected normal around `center`.
pub(crate) fn projected_normal<R: Rng + ?Sized>(rng: &mut R, center: &[f64], spread: f64) -> Vec<f64> {
    loop {
        let v: Vec<f64> = center
            .iter()
            .map(|c| c + spread * rng.sample::<f64, _>(StandardNormal))
            .collect();
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm > 1e-12 {
            return v.into_iter().map(|x| x / norm).collect();
        }
    }
}

impl StateDistribution {
    pub fn validate(&self, support: &StateSupport) -> Result<()> {
        match (self, support) {
            (StateDistribution::Table(w), StateSupport::Finite(points)) => {
                if w.len() != points.len() {
                    return Err(Error::DimensionMismatch {
                        expected: points.len(),
                        got: w.len(),
                    });
                }
                check_probabilities(w, "state distribution")
            }
            (StateDistribution::UniformSphere { dim }, StateSupport::Sphere { dim: d }) if dim == d => Ok(()),
            (StateDistribution::SphereMixture { centers, spread }, StateSupport::Sphere { dim }) => {
                if centers.is_empty() || centers.iter().any(|c| c.len() != *dim) || !(*spread > 0.0) {
                    return Err(Error::invalid("malformed sphere mixture"));
                }
                Ok(())
            }
            _ => Err(Error::invalid("state distribution does not match the state support")),
        }
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R, support: &StateSupport) -> Result<Vec<f64>> {
        match (self, support) {
            (StateDistribution::Table(w), StateSupport::Finite(points)) => {
                Ok(points[categorical(rng, w)].clone())
            }
            (StateDistribution::UniformSphere { dim }, _) => Ok(uniform_on_sphere(rng, *dim)),
            (StateDistribution::SphereMixture { centers, spread }, _) => {
                let j = rng.random_range(0..centers.len());
                Ok(projected_normal(rng, &centers[j], *spread))
            }
            _ => Err(Error::invalid("state distribution does not match the state support")),
        }
    }

    /// Table weights, if this is a finite distribution.
    pub fn weights(&self) -> Option<&[f64]> {
        match self {
            StateDistribution::Table(w) => Some(w),
            _ => None,
        }
    }
}

/// The sampling distribution `nu_h` of one step.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum StepDistribution {
    /// Explicit joint table `nu(s, a)` on a finite support.
    Joint(Vec<Vec<f64>>),
    /// Product of a state law and action weights.
    Product { states: StateDistribution, actions: Vec<f64> },
}

impl StepDistribution {
    pub fn uniform_actions(states: StateDistribution, action_count: usize) -> Self {
        StepDistribution::Product {
            states,
            actions: vec![1.0 / action_count as f64; action_count],
        }
    }

    pub fn validate(&self, support: &StateSupport, action_count: usize) -> Result<()> {
        match self {
            StepDistribution::Joint(t) => {
                let StateSupport::Finite(points) = support else {
                    return Err(Error::invalid("joint tables need a finite support"));
                };
                if t.len() != points.len() {
                    return Err(Error::DimensionMismatch {
                        expected: points.len(),
                        got: t.len(),
                    });
                }
                if let Some(row) = t.iter().find(|r| r.len() != action_count) {
                    return Err(Error::DimensionMismatch {
                        expected: action_count,
                        got: row.len(),
                    });
                }
                let flat: Vec<f64> = t.iter().flatten().copied().collect();
                check_probabilities(&flat, "joint sampling table")
            }
            StepDistribution::Product { states, actions } => {
                if actions.len() != action_count {
                    return Err(Error::DimensionMismatch {
                        expected: action_count,
                        got: actions.len(),
                    });
                }
                check_probabilities(actions, "action distribution")?;
                states.validate(support)
            }
        }
    }

    pub fn sample<R: Rng + ?Sized>(
        &self,
        rng: &mut R,
        support: &StateSupport,
    ) -> Result<(Vec<f64>, usize)> {
        match self {
            StepDistribution::Joint(t) => {
                let StateSupport::Finite(points) = support else {
                    return Err(Error::invalid("joint tables need a finite support"));
                };
                let a_count = t.first().map_or(0, Vec::len);
                let flat: Vec<f64> = t.iter().flatten().copied().collect();
                let k = categorical(rng, &flat);
                Ok((points[k / a_count].clone(), k % a_count))
            }
            StepDistribution::Product { states, actions } => {
                let x = states.sample(rng, support)?;
                Ok((x, categorical(rng, actions)))
            }
        }
    }

    /// Law of the state alone.
    pub fn state_marginal(&self) -> StateDistribution {
        match self {
            StepDistribution::Joint(t) => StateDistribution::Table(t.iter().map(|r| r.iter().sum()).collect()),
            StepDistribution::Product { states, .. } => states.clone(),
        }
    }

    /// `nu(s, a)` as a table, for finite state laws.
    pub fn joint_table(&self) -> Option<Vec<Vec<f64>>> {
        match self {
            StepDistribution::Joint(t) => Some(t.clone()),
            StepDistribution::Product { states, actions } => states.weights().map(|w| {
                w.iter()
                    .map(|ps| actions.iter().map(|pa| ps * pa).collect())
                    .collect()
            }),
        }
    }
}

/// Per-step sampling distributions `nu_0, ..., nu_{H-1}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SamplingPlan {
    pub steps: Vec<StepDistribution>,
}

impl SamplingPlan {
    pub fn new(steps: Vec<StepDistribution>) -> Self {
        SamplingPlan { steps }
    }

    /// Uniform states times uniform actions at every step.
    pub fn uniform_finite(states: usize, action_count: usize, horizon: usize) -> Self {
        let s = StateDistribution::Table(vec![1.0 / states as f64; states]);
        SamplingPlan {
            steps: vec![StepDistribution::uniform_actions(s, action_count); horizon],
        }
    }

    pub fn horizon(&self) -> usize {
        self.steps.len()
    }

    pub fn step(&self, h: usize) -> Result<&StepDistribution> {
        self.steps
            .get(h)
            .ok_or_else(|| Error::invalid(format!("sampling plan has no step {h}")))
    }

    pub fn validate(&self, support: &StateSupport, action_count: usize, horizon: usize) -> Result<()> {
        if self.steps.len() != horizon {
            return Err(Error::DimensionMismatch {
                expected: horizon,
                got: self.steps.len(),
            });
        }
        self.steps
            .iter()
            .enumerate()
            .try_for_each(|(h, s)| s.validate(support, action_count).map_err(|e| e.at_step(h)))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream_rng;

    fn basis(n: usize) -> StateSupport {
        StateSupport::Finite(
            (0..n)
                .map(|i| (0..n).map(|j| if i == j { 1.0 } else { 0.0 }).collect())
                .collect(),
        )
    }

    #[test]
    fn product_table_is_outer_product() {
        let d = StepDistribution::Product {
            states: StateDistribution::Table(vec![0.25, 0.75]),
            actions: vec![0.5, 0.5],
        };
        assert_eq!(d.joint_table().unwrap(), vec![vec![0.125, 0.125], vec![0.375, 0.375]]);
        d.validate(&basis(2), 2).unwrap();
        assert!(d.validate(&basis(3), 2).is_err());
    }

    #[test]
    fn joint_sampling_hits_only_positive_cells() {
        let d = StepDistribution::Joint(vec![vec![0.0, 0.5], vec![0.5, 0.0]]);
        let support = basis(2);
        let mut rng = stream_rng(1, &[]);
        for _ in 0..500 {
            let (x, a) = d.sample(&mut rng, &support).unwrap();
            assert_eq!(x[a], 0.0);
        }
    }

    #[test]
    fn mixture_samples_are_unit() {
        let d = StateDistribution::SphereMixture {
            centers: vec![vec![1.0, 0.0, 0.0], vec![0.0, 0.0, 1.0]],
            spread: 0.5,
        };
        let support = StateSupport::Sphere { dim: 3 };
        d.validate(&support).unwrap();
        let mut rng = stream_rng(2, &[]);
        for _ in 0..100 {
            assert!(support.contains(&d.sample(&mut rng, &support).unwrap()));
        }
    }

    #[test]
    fn rejects_unnormalized_tables() {
        let d = StateDistribution::Table(vec![0.5, 0.4]);
        assert!(d.validate(&basis(2)).is_err());
    }
}
