//! Von Mises-Fisher sampling on spheres, orthogonal groups and Stiefel
//! manifolds.
//!
//! Vector draws use Wood's envelope-rejection scheme. Matrix draws with
//! density `exp(tr(F^T U))` are produced by Gibbs sweeps: on a Stiefel
//! manifold (`p > k`) each column is redrawn from a vector vMF on the sphere
//! orthogonal to the other columns; on the full orthogonal group a single
//! column is pinned down up to sign by the others, so columns are updated in
//! pairs, each pair being an exact draw from a von Mises law on `O(2)`.

use nalgebra::DVector;
use rand::Rng;
use rand_distr::{Beta, Distribution, StandardNormal};

use crate::distributions::{sample_haar_orthogonal, sample_uniform_stiefel};
use crate::error::{arg_err, NndError, Result};
use crate::linalg::{svd, DenseMatrix};
use crate::special::log_bessel_i0;

/// Rejection budget for one vector draw.
pub const VMF_MAX_TRIES: usize = 1_000_000;
/// Gibbs sweeps used by [`sample_matrix_vmf`] when starting from a uniform frame.
pub const DEFAULT_SWEEPS: usize = 30;

const KAPPA_EPS: f64 = 1e-12;
/// `||F||_F` from which one-shot draws start at the mode instead of a uniform frame.
const POLAR_START_NORM: f64 = 1.0;

/// Component along the mean direction of a vMF(kappa) draw on `S^(d-1)`.
fn wood_component<R: Rng + ?Sized>(kappa: f64, d: usize, rng: &mut R) -> Result<f64> {
    let dm1 = (d - 1) as f64;
    let b = dm1 / (2.0 * kappa + (4.0 * kappa * kappa + dm1 * dm1).sqrt());
    let x0 = (1.0 - b) / (1.0 + b);
    let c = kappa * x0 + dm1 * (1.0 - x0 * x0).ln();
    let beta = Beta::new(0.5 * dm1, 0.5 * dm1).map_err(|e| NndError::Numerical(e.to_string()))?;
    for _ in 0..VMF_MAX_TRIES {
        let z: f64 = beta.sample(rng);
        let w = (1.0 - (1.0 + b) * z) / (1.0 - (1.0 - b) * z);
        let u: f64 = rng.random();
        if kappa * w + dm1 * (1.0 - x0 * w).ln() - c >= u.ln() {
            return Ok(w.clamp(-1.0, 1.0));
        }
    }
    Err(NndError::Numerical(format!(
        "vMF rejection sampler exceeded {VMF_MAX_TRIES} tries (kappa = {kappa:e}, dim = {d})"
    )))
}

/// Remove the components of `v` along the columns of `frame` other than `skip`.
fn project_out(v: &mut DVector<f64>, frame: &DenseMatrix, skip: Option<usize>) {
    for l in 0..frame.ncols() {
        if Some(l) == skip {
            continue;
        }
        let col = frame.column(l);
        let dot = col.dot(v);
        v.axpy(-dot, &col, 1.0);
    }
}

/// Draw a unit vector from `exp(f^T x)` restricted to the unit sphere of the
/// orthogonal complement of `frame`'s columns (excluding column `skip`).
/// `current` must be a unit vector in that complement.
fn sample_in_complement<R: Rng + ?Sized>(
    f: &DVector<f64>,
    frame: &DenseMatrix,
    skip: Option<usize>,
    current: &DVector<f64>,
    rng: &mut R,
) -> Result<DVector<f64>> {
    let p = f.len();
    let excluded = frame.ncols() - skip.map_or(0, |_| 1);
    let d = p - excluded;
    let mut fp = f.clone();
    project_out(&mut fp, frame, skip);
    let kappa = fp.norm();

    if d == 1 {
        // Two-point sphere {+b, -b}.
        let c = f.dot(current);
        let p_plus = 1.0 / (1.0 + (-2.0 * c).exp());
        return Ok(if rng.random::<f64>() < p_plus { current.clone() } else { -current });
    }

    let random_direction = |rng: &mut R, mu: Option<&DVector<f64>>| -> DVector<f64> {
        loop {
            let mut g = DVector::from_fn(p, |_, _| rng.sample::<f64, _>(StandardNormal));
            project_out(&mut g, frame, skip);
            if let Some(mu) = mu {
                let dot = mu.dot(&g);
                g.axpy(-dot, mu, 1.0);
            }
            let n = g.norm();
            if n > 1e-12 {
                return g / n;
            }
        }
    };

    if kappa < KAPPA_EPS {
        return Ok(random_direction(rng, None));
    }
    let mu = fp / kappa;
    let w = wood_component(kappa, d, rng)?;
    let xi = random_direction(rng, Some(&mu));
    Ok(&mu * w + xi * (1.0 - w * w).max(0.0).sqrt())
}

/// Draw from the vMF law `exp(f^T x)` on the unit sphere in `R^p`.
pub fn sample_vector_vmf<R: Rng + ?Sized>(f: &DVector<f64>, rng: &mut R) -> Result<DVector<f64>> {
    let p = f.len();
    if p == 0 {
        return arg_err("empty concentration vector");
    }
    if f.iter().any(|v| !v.is_finite()) {
        return arg_err("concentration vector is not finite");
    }
    let frame = DenseMatrix::zeros(p, 0);
    let mut start = DVector::zeros(p);
    start[0] = 1.0;
    sample_in_complement(f, &frame, None, &start, rng)
}

/// One Gibbs sweep of the matrix vMF `exp(tr(F^T U))` in place.
pub fn vmf_gibbs_sweep<R: Rng + ?Sized>(current: &mut DenseMatrix, f: &DenseMatrix, rng: &mut R) -> Result<()> {
    let (p, k) = current.shape();
    if f.shape() != (p, k) {
        return arg_err(format!(
            "concentration shape {:?} does not match frame shape {:?}",
            f.shape(),
            current.shape()
        ));
    }
    // Sweep in the frame U B, with B the right singular vectors of F: the
    // density becomes exp(tr((F B)^T U B)) and F B has orthogonal columns, so
    // column (pair) moves line up with the axes of the target.
    let b = svd(f)?.v;
    let fb = f * &b;
    let mut ub = &*current * &b;
    if p == k {
        orthogonal_pair_sweep(&mut ub, &fb, rng)?;
    } else {
        for j in 0..k {
            let fj = fb.column(j).into_owned();
            let cur = ub.column(j).into_owned();
            let new = sample_in_complement(&fj, &ub, Some(j), &cur, rng)?;
            ub.set_column(j, &new);
        }
    }
    *current = ub * b.transpose();
    reorthonormalize(current);
    Ok(())
}

fn orthogonal_pair_sweep<R: Rng + ?Sized>(u: &mut DenseMatrix, f: &DenseMatrix, rng: &mut R) -> Result<()> {
    let n = u.ncols();
    if n == 1 {
        let c = f[(0, 0)] * u[(0, 0)];
        let p_keep = 1.0 / (1.0 + (-2.0 * c).exp());
        if rng.random::<f64>() >= p_keep {
            u[(0, 0)] = -u[(0, 0)];
        }
        return Ok(());
    }
    for i in 0..n {
        for j in (i + 1)..n {
            let (ui, uj) = (u.column(i).into_owned(), u.column(j).into_owned());
            let (fi, fj) = (f.column(i), f.column(j));
            let (c11, c12, c21, c22) = (fi.dot(&ui), fi.dot(&uj), fj.dot(&ui), fj.dot(&uj));
            // New pair: (cos t ui + sin t uj, s(-sin t ui + cos t uj)), s = +-1.
            // Density exp(a_s cos t + b_s sin t), a_s = c11 + s c22, b_s = c12 - s c21.
            let (a_p, b_p) = (c11 + c22, c12 - c21);
            let (a_m, b_m) = (c11 - c22, c12 + c21);
            let (k_p, k_m) = (a_p.hypot(b_p), a_m.hypot(b_m));
            let log_ratio = log_bessel_i0(k_m) - log_bessel_i0(k_p);
            let p_rot = 1.0 / (1.0 + log_ratio.exp());
            let (sign, a, b) = if rng.random::<f64>() < p_rot { (1.0, a_p, b_p) } else { (-1.0, a_m, b_m) };
            let dir = sample_vector_vmf(&DVector::from_vec(vec![a, b]), rng)?;
            let (c, s) = (dir[0], dir[1]);
            u.set_column(i, &(&ui * c + &uj * s));
            u.set_column(j, &((&ui * -s + &uj * c) * sign));
        }
    }
    Ok(())
}

/// Modified Gram-Schmidt pass to remove accumulated rounding.
fn reorthonormalize(u: &mut DenseMatrix) {
    for j in 0..u.ncols() {
        let mut col = u.column(j).into_owned();
        for l in 0..j {
            let prev = u.column(l);
            let dot = prev.dot(&col);
            col.axpy(-dot, &prev, 1.0);
        }
        let n = col.norm();
        if n > 0.0 {
            u.set_column(j, &(col / n));
        }
    }
}

/// Draw from the matrix vMF `exp(tr(F^T U))` on `p x k` frames (`p >= k`),
/// by [`DEFAULT_SWEEPS`] Gibbs sweeps.
pub fn sample_matrix_vmf<R: Rng + ?Sized>(f: &DenseMatrix, rng: &mut R) -> Result<DenseMatrix> {
    sample_matrix_vmf_sweeps(f, DEFAULT_SWEEPS, rng)
}

pub fn sample_matrix_vmf_sweeps<R: Rng + ?Sized>(f: &DenseMatrix, sweeps: usize, rng: &mut R) -> Result<DenseMatrix> {
    let (p, k) = f.shape();
    if p == 0 || k == 0 || k > p {
        return arg_err(format!("matrix vMF needs p >= k >= 1, got {p}x{k}"));
    }
    if f.iter().any(|v| !v.is_finite()) {
        return arg_err("concentration matrix is not finite");
    }
    // Concentrated laws start at the mode (the polar factor of F); column
    // Gibbs from a uniform frame can otherwise sit for long in states with
    // columns in the wrong order.
    let mut u = if f.norm() >= POLAR_START_NORM {
        let dec = svd(f)?;
        &dec.u * dec.v.transpose()
    } else if p == k {
        sample_haar_orthogonal(p, rng)?
    } else {
        sample_uniform_stiefel(k, p, rng)?
    };
    for _ in 0..sweeps.max(1) {
        vmf_gibbs_sweep(&mut u, f, rng)?;
    }
    Ok(u)
}
