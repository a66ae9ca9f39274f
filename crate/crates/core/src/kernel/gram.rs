use nalgebra::DMatrix;
use rayon::prelude::*;

use super::{eval_kernel, KernelSpec};
use crate::error::{Error, Result};

const PAR_THRESHOLD: usize = 256;

/// Gram matrix `G[i][j] = k(x_i, x_j)`, assembled on the upper triangle and mirrored.
pub fn gram(spec: KernelSpec, points: &[Vec<f64>]) -> Result<DMatrix<f64>> {
    let n = points.len();
    if n == 0 {
        return Err(Error::invalid("gram needs at least one point"));
    }
    let row = |i: usize| -> Result<Vec<f64>> {
        (i..n).map(|j| eval_kernel(spec, &points[i], &points[j])).collect()
    };
    let rows: Vec<Vec<f64>> = if n >= PAR_THRESHOLD {
        (0..n).into_par_iter().map(row).collect::<Result<_>>()?
    } else {
        (0..n).map(row).collect::<Result<_>>()?
    };
    let mut g = DMatrix::zeros(n, n);
    for (i, r) in rows.into_iter().enumerate() {
        for (off, v) in r.into_iter().enumerate() {
            g[(i, i + off)] = v;
            g[(i + off, i)] = v;
        }
    }
    Ok(g)
}

/// `sqrt(b' G b)`, clamped at zero against round-off.
pub fn rkhs_norm(coeffs: &[f64], gram: &DMatrix<f64>) -> Result<f64> {
    let n = coeffs.len();
    if gram.nrows() != n || gram.ncols() != n {
        return Err(Error::DimensionMismatch {
            expected: gram.nrows(),
            got: n,
        });
    }
    let mut q = 0.0;
    for i in 0..n {
        if coeffs[i] == 0.0 {
            continue;
        }
        let mut s = 0.0;
        for j in 0..n {
            s += gram[(i, j)] * coeffs[j];
        }
        q += coeffs[i] * s;
    }
    Ok(q.max(0.0).sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{stream_rng, uniform_on_sphere};

    #[test]
    fn delta_gram_on_distinct_points_is_identity() {
        let pts: Vec<Vec<f64>> = (0..5)
            .map(|i| (0..5).map(|j| if i == j { 1.0 } else { 0.0 }).collect())
            .collect();
        assert_eq!(gram(KernelSpec::Delta, &pts).unwrap(), DMatrix::identity(5, 5));
    }

    #[test]
    fn single_point() {
        let x = vec![0.6, 0.8];
        let g = gram(KernelSpec::Ntk2, &[x]).unwrap();
        assert_eq!(g.shape(), (1, 1));
        assert!((g[(0, 0)] - 0.5).abs() < 1e-15);
    }

    #[test]
    fn laplacian_gram_is_psd() {
        let mut rng = stream_rng(9, &[]);
        let pts: Vec<Vec<f64>> = (0..50).map(|_| uniform_on_sphere(&mut rng, 4)).collect();
        let g = gram(KernelSpec::Laplacian, &pts).unwrap();
        let min = g.symmetric_eigenvalues().min();
        assert!(min >= -1e-8, "{min}");
    }

    #[test]
    fn norms() {
        let id = DMatrix::<f64>::identity(2, 2);
        assert_eq!(rkhs_norm(&[0.0, 0.0], &id).unwrap(), 0.0);
        assert_eq!(rkhs_norm(&[3.0, 4.0], &id).unwrap(), 5.0);
        let one = DMatrix::from_element(1, 1, 0.25);
        assert!((rkhs_norm(&[-3.0], &one).unwrap() - 1.5).abs() < 1e-15);
        assert!(rkhs_norm(&[1.0], &id).is_err());
    }

    #[test]
    fn parallel_assembly_matches_direct() {
        let mut rng = stream_rng(10, &[]);
        let pts: Vec<Vec<f64>> = (0..300).map(|_| uniform_on_sphere(&mut rng, 3)).collect();
        let g = gram(KernelSpec::Arccos1, &pts).unwrap();
        for &(i, j) in &[(0, 0), (3, 299), (150, 17)] {
            let v = eval_kernel(KernelSpec::Arccos1, &pts[i], &pts[j]).unwrap();
            assert_eq!(g[(i, j)], v);
        }
    }
}
