//! Dense matrix primitives: thin SVD, nuclear norm and the singular-value
//! soft-thresholding operator.

use nalgebra::{DMatrix, DVector};

use crate::error::{arg_err, NndError, Result};

/// Real `rows x cols` matrix. All samplers work on this type.
pub type DenseMatrix = DMatrix<f64>;

/// Relative level below which thresholded singular values are set to zero.
pub const RANK_CLAMP: f64 = 1e-12;

const SVD_MAX_ITERS: usize = 10_000;

/// Thin singular value decomposition `x = u * diag(s) * v^T` with
/// `k = min(rows, cols)`, `s` sorted non-increasing.
#[derive(Debug, Clone, PartialEq)]
pub struct SvdTriple {
    /// `rows x k`, orthonormal columns.
    pub u: DenseMatrix,
    /// Non-negative, non-increasing.
    pub s: DVector<f64>,
    /// `cols x k`, orthonormal columns.
    pub v: DenseMatrix,
}

impl SvdTriple {
    pub fn rank_k(&self) -> usize {
        self.s.len()
    }

    /// `u * diag(s) * v^T`.
    pub fn reconstruct(&self) -> DenseMatrix {
        scale_columns(&self.u, self.s.as_slice()) * self.v.transpose()
    }

    /// Same factors with the singular values replaced.
    pub fn with_values(&self, s: &[f64]) -> DenseMatrix {
        scale_columns(&self.u, s) * self.v.transpose()
    }
}

/// `a * diag(d)` without forming the diagonal matrix.
pub fn scale_columns(a: &DenseMatrix, d: &[f64]) -> DenseMatrix {
    debug_assert_eq!(a.ncols(), d.len());
    let mut out = a.clone();
    for (j, &dj) in d.iter().enumerate() {
        out.column_mut(j).scale_mut(dj);
    }
    out
}

pub fn is_finite(x: &DenseMatrix) -> bool {
    x.iter().all(|v| v.is_finite())
}

pub fn ensure_finite(x: &DenseMatrix, what: &str) -> Result<()> {
    if is_finite(x) {
        Ok(())
    } else {
        arg_err(format!("{what} contains non-finite entries"))
    }
}

pub fn ensure_same_shape(a: &DenseMatrix, b: &DenseMatrix, what: &str) -> Result<()> {
    if a.shape() == b.shape() {
        Ok(())
    } else {
        arg_err(format!("{what}: shape {:?} does not match {:?}", a.shape(), b.shape()))
    }
}

/// Thin SVD with singular values sorted in non-increasing order.
pub fn svd(x: &DenseMatrix) -> Result<SvdTriple> {
    ensure_finite(x, "svd input")?;
    let (rows, cols) = x.shape();
    if rows == 0 || cols == 0 {
        return arg_err("svd of an empty matrix");
    }
    let dec = x
        .clone()
        .try_svd(true, true, f64::EPSILON, SVD_MAX_ITERS)
        .ok_or_else(|| NndError::Numerical(format!("SVD of {rows}x{cols} matrix did not converge")))?;
    let (u, v_t) = match (dec.u, dec.v_t) {
        (Some(u), Some(v_t)) => (u, v_t),
        _ => return Err(NndError::Numerical("SVD returned no singular vectors".into())),
    };
    let k = dec.singular_values.len();
    let mut order: Vec<usize> = (0..k).collect();
    order.sort_by(|&a, &b| dec.singular_values[b].total_cmp(&dec.singular_values[a]));

    let mut su = DenseMatrix::zeros(rows, k);
    let mut sv = DenseMatrix::zeros(cols, k);
    let mut s = DVector::zeros(k);
    for (dst, &src) in order.iter().enumerate() {
        su.set_column(dst, &u.column(src));
        sv.set_column(dst, &v_t.row(src).transpose());
        s[dst] = dec.singular_values[src].max(0.0);
    }
    if s.iter().any(|v| !v.is_finite()) {
        return Err(NndError::Numerical("SVD produced non-finite singular values".into()));
    }
    Ok(SvdTriple { u: su, s, v: sv })
}

/// Singular values only, sorted non-increasing.
pub fn singular_values(x: &DenseMatrix) -> Result<Vec<f64>> {
    ensure_finite(x, "singular value input")?;
    let mut s: Vec<f64> = x.clone().singular_values().iter().map(|v| v.max(0.0)).collect();
    s.sort_by(|a, b| b.total_cmp(a));
    Ok(s)
}

/// Sum of singular values.
pub fn nuclear_norm(x: &DenseMatrix) -> Result<f64> {
    Ok(singular_values(x)?.iter().sum())
}

/// Soft-threshold a vector of singular values in place, zeroing values below
/// `RANK_CLAMP * s_max` of the input.
pub fn soft_threshold(s: &mut [f64], threshold: f64) {
    let s_max = s.iter().cloned().fold(0.0_f64, f64::max);
    let floor = RANK_CLAMP * s_max;
    for v in s.iter_mut() {
        let t = (*v - threshold).max(0.0);
        *v = if t <= floor { 0.0 } else { t };
    }
}

/// Proximal map of `threshold * ||.||_*`: `argmin_u ||u - x||_F^2 / 2 + threshold ||u||_*`.
pub fn prox_nuclear(x: &DenseMatrix, threshold: f64) -> Result<DenseMatrix> {
    Ok(prox_nuclear_with_norm(x, threshold)?.0)
}

/// Like [`prox_nuclear`] but also returns the nuclear norm of the output.
pub fn prox_nuclear_with_norm(x: &DenseMatrix, threshold: f64) -> Result<(DenseMatrix, f64)> {
    if !(threshold >= 0.0) || !threshold.is_finite() {
        return arg_err(format!("prox threshold must be finite and >= 0, got {threshold}"));
    }
    if threshold == 0.0 {
        let n = nuclear_norm(x)?;
        return Ok((x.clone(), n));
    }
    let dec = svd(x)?;
    let mut s: Vec<f64> = dec.s.iter().cloned().collect();
    soft_threshold(&mut s, threshold);
    let norm = s.iter().sum();
    Ok((dec.with_values(&s), norm))
}

/// `||a||_F^2`.
pub fn frobenius_sq(a: &DenseMatrix) -> f64 {
    a.iter().map(|v| v * v).sum()
}

/// `||a - b||_F^2` without allocating.
pub fn distance_sq(a: &DenseMatrix, b: &DenseMatrix) -> f64 {
    a.iter().zip(b.iter()).map(|(x, y)| (x - y) * (x - y)).sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use nalgebra::dmatrix;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random(rows: usize, cols: usize, seed: u64) -> DenseMatrix {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        DenseMatrix::from_fn(rows, cols, |_, _| rng.random_range(-1.0..1.0))
    }

    #[test]
    fn identity_svd() {
        let d = svd(&DenseMatrix::identity(2, 2)).unwrap();
        assert_abs_diff_eq!(d.s[0], 1.0, epsilon = 1e-14);
        assert_abs_diff_eq!(d.s[1], 1.0, epsilon = 1e-14);
        assert_abs_diff_eq!(d.reconstruct(), DenseMatrix::identity(2, 2), epsilon = 1e-12);
    }

    #[test]
    fn diagonal_svd_and_norm() {
        let x = dmatrix![1.0, 0.0; 0.0, 3.0];
        let d = svd(&x).unwrap();
        assert_abs_diff_eq!(d.s[0], 3.0, epsilon = 1e-14);
        assert_abs_diff_eq!(d.s[1], 1.0, epsilon = 1e-14);
        assert_abs_diff_eq!(nuclear_norm(&x).unwrap(), 4.0, epsilon = 1e-12);
        assert_eq!(nuclear_norm(&DenseMatrix::zeros(3, 2)).unwrap(), 0.0);
    }

    #[test]
    fn svd_invariants_on_rectangles() {
        for (r, c, seed) in [(5, 3, 1), (3, 5, 2), (1, 4, 3), (6, 6, 4)] {
            let x = random(r, c, seed);
            let d = svd(&x).unwrap();
            let k = r.min(c);
            assert_eq!(d.u.shape(), (r, k));
            assert_eq!(d.v.shape(), (c, k));
            let id = DenseMatrix::identity(k, k);
            assert!((d.u.transpose() * &d.u - &id).norm() < 1e-10);
            assert!((d.v.transpose() * &d.v - &id).norm() < 1e-10);
            assert!(d.s.as_slice().windows(2).all(|w| w[0] >= w[1]));
            assert!((d.reconstruct() - &x).norm() / x.norm() < 1e-8);
        }
    }

    #[test]
    fn svd_rejects_non_finite() {
        let x = dmatrix![1.0, f64::NAN; 0.0, 1.0];
        assert!(matches!(svd(&x), Err(NndError::Argument(_))));
    }

    #[test]
    fn nuclear_norm_matches_svd_sum() {
        let x = random(4, 4, 9);
        let s: f64 = svd(&x).unwrap().s.iter().sum();
        assert_abs_diff_eq!(nuclear_norm(&x).unwrap(), s, epsilon = 1e-10);
        assert_abs_diff_eq!(nuclear_norm(&x.transpose()).unwrap(), s, epsilon = 1e-10);
    }

    #[test]
    fn prox_diagonal_case() {
        let x = dmatrix![3.0, 0.0; 0.0, 1.0];
        let p = prox_nuclear(&x, 2.0).unwrap();
        assert_abs_diff_eq!(p, dmatrix![1.0, 0.0; 0.0, 0.0], epsilon = 1e-12);
    }

    #[test]
    fn prox_zero_threshold_is_identity() {
        let x = random(3, 4, 5);
        assert_abs_diff_eq!(prox_nuclear(&x, 0.0).unwrap(), x, epsilon = 1e-10);
    }

    #[test]
    fn prox_rejects_negative_threshold() {
        let x = random(2, 2, 6);
        assert!(matches!(prox_nuclear(&x, -0.1), Err(NndError::Argument(_))));
    }

    #[test]
    fn prox_large_threshold_gives_zero() {
        let x = random(3, 2, 7);
        let p = prox_nuclear(&x, 100.0).unwrap();
        assert_eq!(p, DenseMatrix::zeros(3, 2));
    }
}
