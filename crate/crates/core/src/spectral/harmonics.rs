use num_bigint::BigUint;
use num_traits::{One, ToPrimitive};

use crate::error::{Error, Result};

fn factorial(n: usize) -> BigUint {
    (2..=n).fold(BigUint::one(), |acc, k| acc * BigUint::from(k))
}

/// Dimension `N(d, l)` of the degree-`l` spherical harmonics on `S^{d-1}`:
/// `(2l + d - 2) (l + d - 3)! / ((d - 2)! l!)` for `l >= 1` and 1 for `l = 0`.
pub fn harmonic_dim(d: usize, l: usize) -> Result<BigUint> {
    if d < 2 {
        return Err(Error::invalid(format!("sphere dimension must be at least 2, got {d}")));
    }
    if l == 0 {
        return Ok(BigUint::one());
    }
    if d == 2 {
        return Ok(BigUint::from(2u32));
    }
    // (l + d - 3)! / l! = (l + 1) (l + 2) ... (l + d - 3)
    let rising = (l + 1..=l + d - 3).fold(BigUint::one(), |acc, k| acc * BigUint::from(k));
    Ok(BigUint::from(2 * l + d - 2) * rising / factorial(d - 2))
}

/// [`harmonic_dim`] as a float (saturating at `f64::MAX`).
pub fn harmonic_dim_f64(d: usize, l: usize) -> Result<f64> {
    Ok(harmonic_dim(d, l)?.to_f64().unwrap_or(f64::MAX))
}

/// Gegenbauer polynomial for `S^{d-1}` normalized so `P_l(1) = 1`, by the recurrence
/// `P_{l+1} = ((2l + d - 2) t P_l - l P_{l-1}) / (l + d - 2)`.
pub fn gegenbauer_poly(d: usize, l: usize, t: f64) -> f64 {
    let mut prev = 1.0;
    if l == 0 {
        return prev;
    }
    let mut cur = t;
    for k in 1..l {
        let next = ((2 * k + d - 2) as f64 * t * cur - k as f64 * prev) / (k + d - 2) as f64;
        prev = cur;
        cur = next;
    }
    cur
}

/// Values `P_0(t), ..., P_max(t)`.
pub(crate) fn gegenbauer_all(d: usize, max_degree: usize, t: f64) -> Vec<f64> {
    let mut out = Vec::with_capacity(max_degree + 1);
    out.push(1.0);
    if max_degree >= 1 {
        out.push(t);
    }
    for k in 1..max_degree {
        let next = ((2 * k + d - 2) as f64 * t * out[k] - k as f64 * out[k - 1]) / (k + d - 2) as f64;
        out.push(next);
    }
    out
}
