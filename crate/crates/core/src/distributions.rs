//! Densities, exact samplers and limit laws for the nuclear norm
//! distribution `NND(lambda)` (density proportional to `exp(-lambda ||X||_*)`)
//! and the normal product distribution `NP(sigma2)` (law of `X1 X2` with iid
//! `N(0, sigma2)` factors).

use std::f64::consts::PI;

use nalgebra::DVector;
use rand::Rng;
use rand_distr::{Distribution, Gamma, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{arg_err, NndError, Result};
use crate::linalg::{nuclear_norm, scale_columns, singular_values, DenseMatrix};
use crate::samplers::sv_mala::{run_singular_value_chain, SingularValueTarget};
use crate::samplers::ChainConfig;
use crate::special;

/// Parameters of `NND_{rows,cols}(lambda)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NndParams {
    pub lambda: f64,
    pub rows: usize,
    pub cols: usize,
}

impl NndParams {
    pub fn new(lambda: f64, rows: usize, cols: usize) -> Result<Self> {
        if !(lambda > 0.0) || !lambda.is_finite() {
            return arg_err(format!("lambda must be positive and finite, got {lambda}"));
        }
        if rows == 0 || cols == 0 {
            return arg_err("matrix dimensions must be positive");
        }
        Ok(Self { lambda, rows, cols })
    }

    /// `min(rows, cols)`.
    pub fn small(&self) -> usize {
        self.rows.min(self.cols)
    }

    /// `max(rows, cols)`.
    pub fn large(&self) -> usize {
        self.rows.max(self.cols)
    }

    /// `rows * cols`, the Gamma shape of the nuclear norm.
    pub fn dim(&self) -> usize {
        self.rows * self.cols
    }
}

/// Parameters of the square normal product distribution `NP(sigma2)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NpParams {
    pub sigma2: f64,
    pub n: usize,
}

impl NpParams {
    /// Factor variance that makes `NP` approximate `NND_{nn}(1)`.
    pub const NND_MATCHING_SIGMA2: f64 = 4.0 / 3.0;

    pub fn new(sigma2: f64, n: usize) -> Result<Self> {
        if !(sigma2 > 0.0) || !sigma2.is_finite() {
            return arg_err(format!("sigma2 must be positive and finite, got {sigma2}"));
        }
        if n == 0 {
            return arg_err("n must be positive");
        }
        Ok(Self { sigma2, n })
    }
}

/// The `min(rows, cols)` singular values of a `rows x cols` matrix, in no
/// particular order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SingularValueVector {
    pub values: Vec<f64>,
    pub rows: usize,
    pub cols: usize,
}

impl SingularValueVector {
    pub fn new(values: Vec<f64>, rows: usize, cols: usize) -> Result<Self> {
        if values.len() != rows.min(cols) {
            return arg_err(format!(
                "expected {} singular values for a {rows}x{cols} matrix, got {}",
                rows.min(cols),
                values.len()
            ));
        }
        if values.iter().any(|v| !(*v >= 0.0)) {
            return arg_err("singular values must be non-negative");
        }
        Ok(Self { values, rows, cols })
    }

    pub fn sum(&self) -> f64 {
        self.values.iter().sum()
    }

    /// Values sorted in descending order.
    pub fn sorted_desc(&self) -> Vec<f64> {
        let mut v = self.values.clone();
        v.sort_by(|a, b| b.total_cmp(a));
        v
    }
}

fn ensure_shape(x: &DenseMatrix, rows: usize, cols: usize) -> Result<()> {
    if x.shape() != (rows, cols) {
        return arg_err(format!("matrix is {:?}, parameters expect {rows}x{cols}", x.shape()));
    }
    Ok(())
}

/// `nm log(lambda) - lambda ||x||_*`: the NND log-density up to an additive
/// constant that depends on neither `lambda` nor `x`.
pub fn nnd_log_density_unnorm(x: &DenseMatrix, p: &NndParams) -> Result<f64> {
    ensure_shape(x, p.rows, p.cols)?;
    Ok(nnd_log_density_from_norm(nuclear_norm(x)?, p))
}

pub(crate) fn nnd_log_density_from_norm(norm: f64, p: &NndParams) -> f64 {
    p.dim() as f64 * p.lambda.ln() - p.lambda * norm
}

/// Log of `exp(-lambda sum s) prod s_i^(m-n) prod_{i<j} |s_i^2 - s_j^2|` with
/// `n <= m` the sorted dimensions. Returns `-inf` outside the support.
pub fn singular_value_log_density_unnorm(s: &SingularValueVector, p: &NndParams) -> Result<f64> {
    if s.values.len() != p.small() {
        return arg_err(format!("expected {} singular values, got {}", p.small(), s.values.len()));
    }
    Ok(sv_log_density(&s.values, p.lambda, p.small(), p.large()))
}

pub(crate) fn sv_log_density(s: &[f64], rate: f64, n: usize, m: usize) -> f64 {
    let excess = (m - n) as f64;
    let mut total = 0.0;
    for &v in s {
        if v < 0.0 || (v == 0.0 && m > n) {
            return f64::NEG_INFINITY;
        }
        total -= rate * v;
        if m > n {
            total += excess * v.ln();
        }
    }
    for i in 0..s.len() {
        for j in (i + 1)..s.len() {
            let gap = (s[i] * s[i] - s[j] * s[j]).abs();
            if gap == 0.0 {
                return f64::NEG_INFINITY;
            }
            total += gap.ln();
        }
    }
    total
}

/// Haar-distributed `n x n` orthogonal matrix: QR of a Gaussian matrix with
/// column `j` of `Q` multiplied by `sign(R_jj)` (zero maps to `+1`).
pub fn sample_haar_orthogonal<R: Rng + ?Sized>(n: usize, rng: &mut R) -> Result<DenseMatrix> {
    if n == 0 {
        return arg_err("n must be positive");
    }
    Ok(sign_fixed_qr(gaussian_matrix(n, n, rng)))
}

/// Uniform draw from the Stiefel manifold of `m x n` matrices with
/// orthonormal columns (`n <= m`).
pub fn sample_uniform_stiefel<R: Rng + ?Sized>(n: usize, m: usize, rng: &mut R) -> Result<DenseMatrix> {
    if n == 0 || m == 0 {
        return arg_err("dimensions must be positive");
    }
    if n > m {
        return arg_err(format!("Stiefel frame needs n <= m, got n={n}, m={m}"));
    }
    Ok(sign_fixed_qr(gaussian_matrix(m, n, rng)))
}

/// `rows x cols` matrix of iid standard normal entries.
pub fn gaussian_matrix<R: Rng + ?Sized>(rows: usize, cols: usize, rng: &mut R) -> DenseMatrix {
    // Column-major fill order keeps draws reproducible across shapes.
    DenseMatrix::from_fn(rows, cols, |_, _| rng.sample::<f64, _>(StandardNormal))
}

fn sign_fixed_qr(g: DenseMatrix) -> DenseMatrix {
    let qr = g.qr();
    let r = qr.r();
    let mut q = qr.q();
    for j in 0..q.ncols() {
        if r[(j, j)] < 0.0 {
            q.column_mut(j).neg_mut();
        }
    }
    q
}

/// MCMC draws of the NND singular values (see [`run_singular_value_chain`]),
/// each emitted sorted in descending order.
pub fn sample_nnd_singular_values<R: Rng + ?Sized>(
    p: &NndParams,
    cfg: &ChainConfig,
    rng: &mut R,
) -> Result<Vec<SingularValueVector>> {
    let target = SingularValueTarget::prior(p.lambda, p.small(), p.large());
    let out = run_singular_value_chain(&target, cfg, rng)?;
    Ok(out
        .draws
        .into_iter()
        .map(|mut v| {
            v.sort_by(|a, b| b.total_cmp(a));
            SingularValueVector { values: v, rows: p.rows, cols: p.cols }
        })
        .collect())
}

/// NND matrix draws assembled as `U diag(s) V^T` from singular-value MCMC
/// draws and fresh Haar `U` / uniform Stiefel `V` for every draw.
pub fn sample_nnd_via_svd<R: Rng + ?Sized>(p: &NndParams, cfg: &ChainConfig, rng: &mut R) -> Result<Vec<DenseMatrix>> {
    let values = sample_nnd_singular_values(p, cfg, rng)?;
    values.iter().map(|s| assemble_from_singular_values(&s.values, p.rows, p.cols, rng)).collect()
}

/// `U diag(s) V^T` with random Haar/Stiefel factors, shaped `rows x cols`.
pub fn assemble_from_singular_values<R: Rng + ?Sized>(
    s: &[f64],
    rows: usize,
    cols: usize,
    rng: &mut R,
) -> Result<DenseMatrix> {
    let (n, m) = (rows.min(cols), rows.max(cols));
    if s.len() != n {
        return arg_err("singular value count does not match shape");
    }
    let u = sample_haar_orthogonal(n, rng)?;
    let v = sample_uniform_stiefel(n, m, rng)?;
    let x = scale_columns(&u, s) * v.transpose();
    Ok(if rows <= cols { x } else { x.transpose() })
}

/// `X1 X2` with `X1, X2` iid `n x n` matrices of `N(0, sigma2)` entries.
pub fn sample_normal_product<R: Rng + ?Sized>(p: &NpParams, rng: &mut R) -> DenseMatrix {
    let sd = p.sigma2.sqrt();
    let a = gaussian_matrix(p.n, p.n, rng) * sd;
    let b = gaussian_matrix(p.n, p.n, rng) * sd;
    a * b
}

/// Small-`tau` asymptotic log-density of `NP(1)` evaluated at `x / tau` for a
/// square `x` with `n > 1` distinct positive singular values `d_i`:
///
/// `log D(n) - 1/2 log prod_{i<j}(sqrt(d_i/d_j) + sqrt(d_j/d_i))
///  + 1/2 log[((1 + S_{-1/2} S_{1/2})^2 - n^2 S_1 S_{-1}) / prod_{i,j}(d_i + d_j)]
///  - ||x||_* / tau`
///
/// with `D(n) = n! / (2 pi tau)^(3n^2/4 - n/4)` and `S_p = sum_i d_i^p`.
pub fn np_asymptotic_log_density(x: &DenseMatrix, tau: f64) -> Result<f64> {
    let (rows, cols) = x.shape();
    if rows != cols {
        return Err(NndError::Domain("normal product asymptotic needs a square matrix".into()));
    }
    if rows < 2 {
        return Err(NndError::Domain("normal product asymptotic needs n > 1".into()));
    }
    if !(tau > 0.0) {
        return arg_err(format!("tau must be positive, got {tau}"));
    }
    let d = singular_values(x)?;
    if d.iter().any(|&v| v <= 0.0) {
        return Err(NndError::Domain("singular values must be strictly positive".into()));
    }
    if d.windows(2).any(|w| w[0] == w[1]) {
        return Err(NndError::Domain("singular values must be distinct".into()));
    }
    let n = d.len();
    let nf = n as f64;
    let pow_sum = |e: f64| d.iter().map(|v| v.powf(e)).sum::<f64>();
    let (s_mh, s_h, s_1, s_m1) = (pow_sum(-0.5), pow_sum(0.5), pow_sum(1.0), pow_sum(-1.0));
    let numer = (1.0 + s_mh * s_h).powi(2) - nf * nf * s_1 * s_m1;
    if !(numer > 0.0) {
        return Err(NndError::Domain(format!("volume term is non-positive ({numer}) for these singular values")));
    }
    let mut log_pair = 0.0;
    let mut log_denom = 0.0;
    for i in 0..n {
        for j in 0..n {
            log_denom += (d[i] + d[j]).ln();
            if i < j {
                log_pair += ((d[i] / d[j]).sqrt() + (d[j] / d[i]).sqrt()).ln();
            }
        }
    }
    let exponent = 0.75 * nf * nf - 0.25 * nf;
    let log_d = special::ln_factorial(n as u64) - exponent * (2.0 * PI * tau).ln();
    let norm: f64 = d.iter().sum();
    Ok(log_d - 0.5 * log_pair + 0.5 * (numer.ln() - log_denom) - norm / tau)
}

/// Large-`n` eigenvalue density of `n^-1 X1 X2` (unit-variance factors) in the
/// complex plane: `1 / (2 pi |z|)` on the unit disk, zero outside.
///
/// Radially this is the uniform law on `[0, 1]` for `|z|`.
pub fn np_limit_eigenvalue_density(z_modulus: f64) -> Result<f64> {
    if !(z_modulus > 0.0) {
        return Err(NndError::Domain(format!(
            "eigenvalue density is singular at |z| = {z_modulus}; integrate radially"
        )));
    }
    Ok(if z_modulus <= 1.0 { 1.0 / (2.0 * PI * z_modulus) } else { 0.0 })
}

/// `P(|z| <= r)` under [`np_limit_eigenvalue_density`].
pub fn np_limit_eigenvalue_radial_cdf(r: f64) -> f64 {
    r.clamp(0.0, 1.0)
}

/// Right edge of the squared-singular-value support of `n^-1 X1 X2`: the
/// positive zero of the discriminant `lam^4 (4 lam - 27)` of
/// `lam^2 G^3 - lam G + 1`, located by bisection.
pub fn np_squared_sv_support_edge() -> f64 {
    let disc = |lam: f64| {
        // a = lam^2, b = 0, c = -lam, d = 1: -4 a c^3 - 27 a^2 d^2.
        let a = lam * lam;
        let c = -lam;
        -4.0 * a * c * c * c - 27.0 * a * a
    };
    let (mut lo, mut hi) = (1e-6, 1.0);
    while disc(hi) < 0.0 {
        hi *= 2.0;
    }
    while hi - lo > 1e-13 * hi {
        let mid = 0.5 * (lo + hi);
        if disc(mid) < 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

/// Real root of `lam^2 g^3 - lam g + 1 = 0` by bisection (it is negative on
/// the support).
fn cubic_real_root(lam: f64) -> f64 {
    let f = |g: f64| lam * lam * g * g * g - lam * g + 1.0;
    let mut lo = -1.0;
    while f(lo) > 0.0 {
        lo *= 2.0;
    }
    let mut hi = 0.0;
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if f(mid) > 0.0 {
            hi = mid;
        } else {
            lo = mid;
        }
        if hi - lo <= 1e-12 * lo.abs().max(1e-300) {
            break;
        }
    }
    0.5 * (lo + hi)
}

/// Large-`n` density of the squared singular values of `n^-1 X1 X2`.
///
/// The resolvent `G` satisfies `lam^2 G^3 - lam G + 1 = 0`; the density is
/// `|Im G| / pi` from the complex root pair, which exists for
/// `0 < lam < 27/4`. Zero elsewhere.
pub fn np_limit_squared_sv_density(lam: f64) -> f64 {
    if !(lam > 0.0) {
        return 0.0;
    }
    let r = cubic_real_root(lam);
    // Deflated quadratic lam^2 g^2 + lam^2 r g + (lam^2 r^2 - lam).
    let disc = 4.0 * lam * lam * lam - 3.0 * lam.powi(4) * r * r;
    if disc >= 0.0 {
        return 0.0;
    }
    (-disc).sqrt() / (2.0 * lam * lam) / PI
}

/// Gamma(shape, rate) variate.
pub fn sample_gamma<R: Rng + ?Sized>(shape: f64, rate: f64, rng: &mut R) -> Result<f64> {
    if !(shape > 0.0 && rate > 0.0) || !shape.is_finite() || !rate.is_finite() {
        return arg_err(format!("gamma parameters must be positive, got ({shape}, {rate})"));
    }
    let g = Gamma::new(shape, 1.0 / rate).map_err(|e| NndError::Argument(e.to_string()))?;
    Ok(g.sample(rng))
}

/// Inverse-gamma variate with density proportional to `z^(-a-1) exp(-b/z)`.
pub fn sample_inverse_gamma<R: Rng + ?Sized>(shape: f64, scale: f64, rng: &mut R) -> Result<f64> {
    if !(shape > 0.0 && scale > 0.0) || !shape.is_finite() || !scale.is_finite() {
        return arg_err(format!("inverse-gamma parameters must be positive, got ({shape}, {scale})"));
    }
    Ok(scale / sample_gamma(shape, 1.0, rng)?)
}

/// CDF of Gamma(shape, rate).
pub fn gamma_cdf(x: f64, shape: f64, rate: f64) -> Result<f64> {
    if !(shape > 0.0 && rate > 0.0) {
        return arg_err(format!("gamma parameters must be positive, got ({shape}, {rate})"));
    }
    Ok(special::gamma_cdf_raw(x, shape, rate))
}

/// CDF of the Laplace law with density `(lambda/2) exp(-lambda |x|)`, which is
/// `NND_{1,1}(lambda)`.
pub fn laplace_cdf(x: f64, lambda: f64) -> f64 {
    if x < 0.0 {
        0.5 * (lambda * x).exp()
    } else {
        1.0 - 0.5 * (-lambda * x).exp()
    }
}

/// Density of the 1x1 `NP(1)` law, `K_0(|z|) / pi`.
pub fn np_scalar_density(z: f64) -> f64 {
    special::bessel_k0(z.abs()) / PI
}

/// Probability that a 1x1 `NP(1)` draw falls in `[a, b]`.
pub fn np_scalar_interval_prob(a: f64, b: f64) -> f64 {
    assert!(a <= b);
    let half = |lo: f64, hi: f64| special::bessel_k0_integral(lo, hi) / PI;
    if a >= 0.0 {
        half(a, b)
    } else if b <= 0.0 {
        half(-b, -a)
    } else {
        half(0.0, -a) + half(0.0, b)
    }
}

/// Laplace-method asymptotic of the 1x1 `NP(1)` density, `exp(-z) / sqrt(2 pi z)`.
pub fn np_scalar_asymptotic_density(z: f64) -> f64 {
    let z = z.abs();
    (-z).exp() / (2.0 * PI * z).sqrt()
}

pub fn to_dvector(v: &[f64]) -> DVector<f64> {
    DVector::from_column_slice(v)
}
