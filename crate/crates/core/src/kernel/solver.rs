//! Least squares over an RKHS ball.
//!
//! For centers with Gram `G`, targets `y` and positive sample weights `c`, the problem
//!
//! ```text
//! minimize (1/2n) sum_i c_i (y_i - (G b)_i)^2   subject to   b' G b <= t^2
//! ```
//!
//! becomes unweighted after `b = C^{1/2} beta`, `M = C^{1/2} G C^{1/2}`. With
//! `M = V diag(alpha) V'` and `g = V' C^{1/2} y` the solution is
//! `V' beta = g / (alpha + mu)`, where the multiplier `mu >= 0` is the root of the
//! decreasing function `mu -> sum_k alpha_k g_k^2 / (alpha_k + mu)^2 - t^2`.

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::error::{Error, Result};

/// Added to the Gram diagonal before the eigendecomposition.
pub const RIDGE_FLOOR: f64 = 1e-12;

#[derive(Debug, Clone)]
pub struct BallProblem {
    alpha: Vec<f64>,
    vecs: DMatrix<f64>,
    g: Vec<f64>,
    sqrt_w: Vec<f64>,
    normalizer: f64,
    // Loss of the zero function.
    base_loss: f64,
}

#[derive(Debug, Clone)]
pub struct BallSolution {
    pub coeffs: Vec<f64>,
    /// Norm in the eigen coordinates, `sqrt(beta' M beta)`.
    pub norm: f64,
    pub loss: f64,
    pub multiplier: f64,
}

impl BallProblem {
    /// `weights = None` means unit weights. `normalizer` is the `n` in `1/(2n)`.
    pub fn new(
        gram: &DMatrix<f64>,
        targets: &[f64],
        weights: Option<&[f64]>,
        normalizer: f64,
    ) -> Result<Self> {
        let n = targets.len();
        if gram.nrows() != n || gram.ncols() != n {
            return Err(Error::DimensionMismatch {
                expected: gram.nrows(),
                got: n,
            });
        }
        if !(normalizer > 0.0) {
            return Err(Error::invalid("normalizer must be positive"));
        }
        let sqrt_w: Vec<f64> = match weights {
            Some(w) => {
                if w.len() != n {
                    return Err(Error::DimensionMismatch {
                        expected: n,
                        got: w.len(),
                    });
                }
                if let Some(i) = w.iter().position(|&c| !(c > 0.0)) {
                    return Err(Error::NonPositive { index: i, value: w[i] });
                }
                w.iter().map(|c| c.sqrt()).collect()
            }
            None => vec![1.0; n],
        };
        let mut m = gram.clone();
        for i in 0..n {
            m[(i, i)] += RIDGE_FLOOR;
        }
        for i in 0..n {
            for j in 0..n {
                m[(i, j)] *= sqrt_w[i] * sqrt_w[j];
            }
        }
        let eig = SymmetricEigen::new(m);
        let ytil = DVector::from_iterator(n, targets.iter().zip(&sqrt_w).map(|(y, s)| y * s));
        let g = eig.eigenvectors.tr_mul(&ytil);
        Ok(BallProblem {
            alpha: eig.eigenvalues.iter().map(|a| a.max(0.0)).collect(),
            vecs: eig.eigenvectors,
            g: g.iter().copied().collect(),
            sqrt_w,
            normalizer,
            base_loss: ytil.norm_squared() / (2.0 * normalizer),
        })
    }

    pub fn len(&self) -> usize {
        self.alpha.len()
    }

    pub fn is_empty(&self) -> bool {
        self.alpha.is_empty()
    }

    fn norm_sq(&self, mu: f64) -> f64 {
        self.alpha
            .iter()
            .zip(&self.g)
            .filter(|(a, _)| **a > 0.0)
            .map(|(a, g)| a * g * g / ((a + mu) * (a + mu)))
            .sum()
    }

    /// Norm of the minimum-norm least-squares solution.
    pub fn unconstrained_norm(&self) -> f64 {
        self.norm_sq(0.0).sqrt()
    }

    /// RKHS norm of the loss gradient at the zero function, `(1/n) sqrt(y' M y)`.
    ///
    /// The zero function is optimal for `loss + lambda * norm` exactly when
    /// `lambda` is at least this value.
    pub fn gradient_norm_at_zero(&self) -> f64 {
        let q: f64 = self.alpha.iter().zip(&self.g).map(|(a, g)| a * g * g).sum();
        q.sqrt() / self.normalizer
    }

    fn loss_for(&self, mu: f64) -> f64 {
        // With f = alpha * gtilde, each eigen coordinate contributes
        // (g - f)^2 - g^2 = f^2 - 2 g f relative to the zero function.
        let mut delta = 0.0;
        for (a, g) in self.alpha.iter().zip(&self.g) {
            if *a > 0.0 {
                let f = a * g / (a + mu);
                delta += f * f - 2.0 * g * f;
            }
        }
        (self.base_loss + delta / (2.0 * self.normalizer)).max(0.0)
    }

    /// Multiplier for radius `t`; zero when the unconstrained solution is feasible.
    fn multiplier(&self, t: f64) -> f64 {
        if self.norm_sq(0.0) <= t * t {
            return 0.0;
        }
        let total: f64 = self
            .alpha
            .iter()
            .zip(&self.g)
            .map(|(a, g)| a * g * g)
            .sum::<f64>()
            .sqrt();
        // norm(mu) <= total / mu, so this bracket end is feasible.
        let mut hi = total / t;
        let mut lo = 0.0;
        // Newton on 1/norm(mu) - 1/t, which is close to linear in mu.
        let mut mu = hi;
        for _ in 0..200 {
            let s2 = self.norm_sq(mu);
            let s = s2.sqrt();
            if (s - t).abs() <= 1e-15 * t {
                return mu;
            }
            if s > t {
                lo = mu;
            } else {
                hi = mu;
            }
            let d: f64 = self
                .alpha
                .iter()
                .zip(&self.g)
                .filter(|(a, _)| **a > 0.0)
                .map(|(a, g)| a * g * g / (a + mu).powi(3))
                .sum();
            let h = 1.0 / s - 1.0 / t;
            let step = h * s * s2 / d;
            let mut next = mu - step;
            if !(next > lo && next < hi) || !next.is_finite() {
                next = 0.5 * (lo + hi);
            }
            if (next - mu).abs() <= 1e-15 * mu.max(1e-300) || hi - lo <= 1e-15 * hi {
                return next;
            }
            mu = next;
        }
        mu
    }

    fn coefficients(&self, mu: f64) -> Vec<f64> {
        let n = self.len();
        let gt = DVector::from_iterator(
            n,
            self.alpha
                .iter()
                .zip(&self.g)
                .map(|(a, g)| if *a > 0.0 { g / (a + mu) } else { 0.0 }),
        );
        let beta = &self.vecs * gt;
        beta.iter().zip(&self.sqrt_w).map(|(b, s)| b * s).collect()
    }

    /// Optimal loss on the ball of radius `t`.
    pub fn loss_at(&self, t: f64) -> f64 {
        if t == 0.0 {
            return self.base_loss;
        }
        self.loss_for(self.multiplier(t))
    }

    /// Solves on the ball of radius `t`; `f64::INFINITY` gives the unconstrained fit.
    pub fn solve(&self, t: f64) -> Result<BallSolution> {
        if t.is_nan() || t < 0.0 {
            return Err(Error::invalid(format!("radius must be nonnegative, got {t}")));
        }
        if t == 0.0 {
            return Ok(BallSolution {
                coeffs: vec![0.0; self.len()],
                norm: 0.0,
                loss: self.base_loss,
                multiplier: f64::INFINITY,
            });
        }
        let mu = self.multiplier(t);
        Ok(BallSolution {
            coeffs: self.coefficients(mu),
            norm: self.norm_sq(mu).sqrt(),
            loss: self.loss_for(mu),
            multiplier: mu,
        })
    }
}

/// Unit-weight ball-constrained kernel least squares with `n = targets.len()`.
pub fn constrained_krr(gram: &DMatrix<f64>, targets: &[f64], radius: f64) -> Result<Vec<f64>> {
    if radius.is_nan() || radius < 0.0 {
        return Err(Error::invalid(format!("radius must be nonnegative, got {radius}")));
    }
    let p = BallProblem::new(gram, targets, None, targets.len().max(1) as f64)?;
    Ok(p.solve(radius)?.coeffs)
}
