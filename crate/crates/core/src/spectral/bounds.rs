use serde::{Deserialize, Serialize};

use super::EigSequence;
use crate::error::{Error, Result};
use crate::stats::linear_fit;

/// Extrapolation of an eigenvalue sequence beyond its computed terms.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum TailModel {
    None,
    /// `lambda_l ~ coefficient * l^{-exponent}` with `exponent > 1`.
    PowerLaw { exponent: f64, coefficient: f64 },
}

impl TailModel {
    pub(crate) fn fit_last_decade(values: &[f64]) -> Result<Self> {
        let k = values.len();
        if k < 10 {
            return Err(Error::invalid("a tail fit needs at least 10 terms"));
        }
        let start = k.div_ceil(10).max(1);
        let (slope, intercept) = log_log(values, start, k)?;
        if -slope <= 1.0 {
            return Err(Error::invalid(format!(
                "fitted tail exponent {} is not summable",
                -slope
            )));
        }
        Ok(TailModel::PowerLaw {
            exponent: -slope,
            coefficient: intercept.exp(),
        })
    }

    /// `sum_{l > k} lambda_l`, approximated by the integral of the power law from `k + 1/2`.
    fn sum_beyond(&self, k: usize) -> Option<f64> {
        match *self {
            TailModel::None => None,
            TailModel::PowerLaw {
                exponent,
                coefficient,
            } => Some(coefficient * (k as f64 + 0.5).powf(1.0 - exponent) / (exponent - 1.0)),
        }
    }
}

fn log_log(values: &[f64], start: usize, end: usize) -> Result<(f64, f64)> {
    if start == 0 || start > end || end > values.len() {
        return Err(Error::invalid(format!(
            "fit range {start}..={end} outside 1..={}",
            values.len()
        )));
    }
    let mut xs = Vec::with_capacity(end - start + 1);
    let mut ys = Vec::with_capacity(end - start + 1);
    for l in start..=end {
        let v = values[l - 1];
        if !(v > 0.0) {
            return Err(Error::NonPositive { index: l, value: v });
        }
        xs.push((l as f64).ln());
        ys.push(v.ln());
    }
    linear_fit(&xs, &ys)
}

/// Least-squares slope of `log lambda_l` against `log l` over the 1-based inclusive range
/// `start..=end`.
pub fn decay_exponent(seq: &EigSequence, start: usize, end: usize) -> Result<f64> {
    Ok(log_log(&seq.values(), start, end)?.0)
}

/// `(sum_{l > n} lambda_l)^{1/2}`, the worst-case sup-norm error after `n` samples.
///
/// Terms past the computed sequence come from the tail model; without one, `n` must stay
/// inside the sequence and the tail is taken to be zero.
pub fn linf_lower_bound(seq: &EigSequence, n: usize) -> Result<f64> {
    let values = seq.values();
    let k = values.len();
    let tail = seq.tail.sum_beyond(k.max(n));
    if n > k && tail.is_none() {
        return Err(Error::invalid(format!(
            "n = {n} is beyond the {k} computed eigenvalues and no tail model is set"
        )));
    }
    // Sum from the smallest terms up for accuracy.
    let computed: f64 = values.iter().skip(n).rev().sum();
    Ok((computed + tail.unwrap_or(0.0)).max(0.0).sqrt())
}

/// Minimax L2 rate `n^{-alpha / (2 (alpha + 1))}` for eigenvalue decay `l^{-alpha}`.
pub fn l2_minimax_rate(alpha: f64, n: f64) -> Result<f64> {
    if !(alpha > 1.0) {
        return Err(Error::invalid(format!("decay exponent must exceed 1, got {alpha}")));
    }
    if !(n >= 1.0) {
        return Err(Error::invalid(format!("n must be at least 1, got {n}")));
    }
    Ok(n.powf(-alpha / (2.0 * (alpha + 1.0))))
}
