//! Chain and goodness-of-fit diagnostics: effective sample size,
//! Kolmogorov-Smirnov tests, 1-D Wasserstein distance, binned chi-square and
//! spectral comparisons between matrix samples.

use serde::{Deserialize, Serialize};

use crate::distributions::{gamma_cdf, np_limit_eigenvalue_radial_cdf};
use crate::error::{arg_err, Result};
use crate::linalg::{singular_values, DenseMatrix};
use crate::special::{chi_square_sf, kolmogorov_sf};

/// Minimum trace length accepted by [`ess`].
pub const ESS_MIN_LEN: usize = 10;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EssReport {
    pub ess: f64,
    pub n_samples: usize,
    pub autocorr_cutoff_lag: usize,
    pub method: String,
}

/// Effective sample size `N / (1 + 2 sum_k rho_k)`, with the autocorrelation
/// sum truncated by Geyer's initial monotone positive sequence rule.
pub fn ess(trace: &[f64]) -> Result<EssReport> {
    let n = trace.len();
    if n < ESS_MIN_LEN {
        return arg_err(format!("ESS needs at least {ESS_MIN_LEN} values, got {n}"));
    }
    if trace.iter().any(|v| !v.is_finite()) {
        return arg_err("trace contains non-finite values");
    }
    let mean = trace.iter().sum::<f64>() / n as f64;
    let centred: Vec<f64> = trace.iter().map(|v| v - mean).collect();
    let c0 = centred.iter().map(|v| v * v).sum::<f64>() / n as f64;
    if !(c0 > 0.0) {
        return arg_err("trace is constant; autocorrelation is undefined");
    }
    let rho = |k: usize| -> f64 {
        centred[..n - k].iter().zip(&centred[k..]).map(|(a, b)| a * b).sum::<f64>() / (n as f64 * c0)
    };

    // Gamma_k = rho_{2k} + rho_{2k+1}; keep while positive, forced monotone.
    let mut sum_pairs = 0.0;
    let mut prev = f64::INFINITY;
    let mut cutoff = 0;
    let mut k = 0;
    while 2 * k + 1 < n {
        let r0 = if k == 0 { 1.0 } else { rho(2 * k) };
        let pair = r0 + rho(2 * k + 1);
        if pair <= 0.0 {
            break;
        }
        let pair = pair.min(prev);
        sum_pairs += pair;
        prev = pair;
        cutoff = 2 * k + 1;
        k += 1;
    }
    let tau = (2.0 * sum_pairs - 1.0).max(1.0 / n as f64);
    let ess = (n as f64 / tau).min(n as f64);
    Ok(EssReport { ess, n_samples: n, autocorr_cutoff_lag: cutoff, method: "geyer-initial-monotone".into() })
}

fn sorted_copy(a: &[f64]) -> Vec<f64> {
    let mut v = a.to_vec();
    v.sort_by(f64::total_cmp);
    v
}

/// Asymptotic p-value of a KS statistic `d` at effective size `ne`.
fn ks_p_value(d: f64, ne: f64) -> f64 {
    let s = ne.sqrt();
    kolmogorov_sf((s + 0.12 + 0.11 / s) * d)
}

/// One-sample Kolmogorov-Smirnov statistic of `sample` against `cdf`, with the
/// asymptotic p-value. The sample is sorted internally if needed.
pub fn ks_statistic<F: Fn(f64) -> f64>(sample: &[f64], cdf: F) -> Result<(f64, f64)> {
    if sample.is_empty() {
        return arg_err("KS test needs a nonempty sample");
    }
    if sample.iter().any(|v| v.is_nan()) {
        return arg_err("sample contains NaN");
    }
    let owned;
    let s = if sample.windows(2).all(|w| w[0] <= w[1]) {
        sample
    } else {
        owned = sorted_copy(sample);
        &owned
    };
    let n = s.len() as f64;
    let mut d: f64 = 0.0;
    for (i, &x) in s.iter().enumerate() {
        let f = cdf(x);
        d = d.max((i as f64 + 1.0) / n - f).max(f - i as f64 / n);
    }
    Ok((d, ks_p_value(d, n)))
}

/// Two-sample Kolmogorov-Smirnov statistic and asymptotic p-value.
pub fn two_sample_ks(a: &[f64], b: &[f64]) -> Result<(f64, f64)> {
    if a.is_empty() || b.is_empty() {
        return arg_err("two-sample KS needs nonempty samples");
    }
    if a.iter().chain(b).any(|v| v.is_nan()) {
        return arg_err("sample contains NaN");
    }
    let (a, b) = (sorted_copy(a), sorted_copy(b));
    let (na, nb) = (a.len(), b.len());
    let (mut i, mut j) = (0, 0);
    let mut d: f64 = 0.0;
    while i < na && j < nb {
        let x = a[i].min(b[j]);
        while i < na && a[i] <= x {
            i += 1;
        }
        while j < nb && b[j] <= x {
            j += 1;
        }
        d = d.max((i as f64 / na as f64 - j as f64 / nb as f64).abs());
    }
    let ne = (na * nb) as f64 / (na + nb) as f64;
    Ok((d, ks_p_value(d, ne)))
}

/// 1-D Wasserstein-1 distance between two empirical distributions,
/// `integral |F_a - F_b|`. For equal sizes this is the mean absolute
/// difference of matched order statistics.
pub fn wasserstein_1d(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.is_empty() || b.is_empty() {
        return arg_err("Wasserstein distance needs nonempty samples");
    }
    if a.iter().chain(b).any(|v| !v.is_finite()) {
        return arg_err("sample contains non-finite values");
    }
    let (a, b) = (sorted_copy(a), sorted_copy(b));
    if a.len() == b.len() {
        return Ok(a.iter().zip(&b).map(|(x, y)| (x - y).abs()).sum::<f64>() / a.len() as f64);
    }
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let mut all: Vec<f64> = a.iter().chain(&b).cloned().collect();
    all.sort_by(f64::total_cmp);
    let (mut i, mut j) = (0, 0);
    let mut total = 0.0;
    for w in all.windows(2) {
        while i < a.len() && a[i] <= w[0] {
            i += 1;
        }
        while j < b.len() && b[j] <= w[0] {
            j += 1;
        }
        total += (i as f64 / na - j as f64 / nb).abs() * (w[1] - w[0]);
    }
    Ok(total)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChiSquareReport {
    pub statistic: f64,
    pub dof: usize,
    pub p_value: f64,
    pub observed: Vec<usize>,
    pub expected: Vec<f64>,
}

/// Pearson chi-square test of `sample` binned on `edges` (values outside the
/// outer edges are dropped into the first/last bin) against the bin
/// probabilities `bin_prob(lo, hi)`. Degrees of freedom: bins - 1.
pub fn binned_chi_square<F: Fn(f64, f64) -> f64>(
    sample: &[f64],
    edges: &[f64],
    bin_prob: F,
) -> Result<ChiSquareReport> {
    if edges.len() < 3 {
        return arg_err("need at least two bins");
    }
    if edges.windows(2).any(|w| !(w[0] < w[1])) {
        return arg_err("bin edges must be strictly increasing");
    }
    if sample.is_empty() {
        return arg_err("empty sample");
    }
    let bins = edges.len() - 1;
    let mut observed = vec![0usize; bins];
    for &x in sample {
        let idx = edges.partition_point(|&e| e <= x).saturating_sub(1).min(bins - 1);
        observed[idx] += 1;
    }
    let n = sample.len() as f64;
    let probs: Vec<f64> = edges.windows(2).map(|w| bin_prob(w[0], w[1])).collect();
    let total: f64 = probs.iter().sum();
    if !(total > 0.0) {
        return arg_err("bin probabilities sum to zero");
    }
    let expected: Vec<f64> = probs.iter().map(|p| n * p / total).collect();
    if expected.iter().any(|&e| !(e > 0.0)) {
        return arg_err("every bin needs positive expected count");
    }
    let statistic = observed.iter().zip(&expected).map(|(&o, &e)| (o as f64 - e).powi(2) / e).sum::<f64>();
    let dof = bins - 1;
    Ok(ChiSquareReport { statistic, dof, p_value: chi_square_sf(statistic, dof as f64), observed, expected })
}

/// Histogram of `sample` on equal-width bins over `[lo, hi]`, returned as
/// `(bin_centre, density)` pairs. Values outside the range are ignored but
/// still count towards the normalization.
pub fn histogram(sample: &[f64], lo: f64, hi: f64, bins: usize) -> Vec<(f64, f64)> {
    let width = (hi - lo) / bins as f64;
    let mut counts = vec![0usize; bins];
    for &x in sample {
        if x >= lo && x < hi {
            counts[(((x - lo) / width) as usize).min(bins - 1)] += 1;
        } else if x == hi {
            counts[bins - 1] += 1;
        }
    }
    let n = sample.len().max(1) as f64;
    counts.iter().enumerate().map(|(i, &c)| (lo + (i as f64 + 0.5) * width, c as f64 / (n * width))).collect()
}

/// Comparison of two matrix samples through their spectra.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpectralReport {
    pub rows: usize,
    pub cols: usize,
    pub scale: f64,
    /// Pooled singular values of the rescaled draws, sorted.
    pub singular_values_a: Vec<f64>,
    pub singular_values_b: Vec<f64>,
    pub sv_wasserstein: f64,
    pub sv_ks: (f64, f64),
    pub nuclear_norm_ks: (f64, f64),
    /// One-sample KS of the unscaled nuclear norms against `Gamma(nm, lambda)`.
    pub gamma_ks_a: (f64, f64),
    pub gamma_ks_b: (f64, f64),
    /// Eigenvalue moduli of the rescaled draws (square shapes only).
    pub eigen_moduli_a: Vec<f64>,
    pub eigen_moduli_b: Vec<f64>,
}

/// Compare two sets of equally shaped draws. Spectral quantities use draws
/// multiplied by `scale` (e.g. `1/n`); the nuclear-norm tests use the raw
/// draws, with `lambda` the rate of the reference Gamma law.
pub fn spectral_compare(a: &[DenseMatrix], b: &[DenseMatrix], scale: f64, lambda: f64) -> Result<SpectralReport> {
    if a.is_empty() || b.is_empty() {
        return arg_err("spectral comparison needs draws on both sides");
    }
    let (rows, cols) = a[0].shape();
    if a.iter().chain(b).any(|x| x.shape() != (rows, cols)) {
        return arg_err("all draws must share one shape");
    }
    if !(scale > 0.0) || !(lambda > 0.0) {
        return arg_err("scale and lambda must be positive");
    }
    let dim = (rows * cols) as f64;
    let spectra = |draws: &[DenseMatrix]| -> Result<(Vec<f64>, Vec<f64>)> {
        let mut sv = Vec::with_capacity(draws.len() * rows.min(cols));
        let mut norms = Vec::with_capacity(draws.len());
        for x in draws {
            let s = singular_values(x)?;
            norms.push(s.iter().sum());
            sv.extend(s.iter().map(|v| v * scale));
        }
        sv.sort_by(f64::total_cmp);
        norms.sort_by(f64::total_cmp);
        Ok((sv, norms))
    };
    let (sv_a, norm_a) = spectra(a)?;
    let (sv_b, norm_b) = spectra(b)?;
    let gamma = |x: f64| gamma_cdf(x, dim, lambda).unwrap_or(f64::NAN);
    let (eig_a, eig_b) = if rows == cols {
        (eigenvalue_moduli(a, scale), eigenvalue_moduli(b, scale))
    } else {
        (Vec::new(), Vec::new())
    };
    Ok(SpectralReport {
        rows,
        cols,
        scale,
        sv_wasserstein: wasserstein_1d(&sv_a, &sv_b)?,
        sv_ks: two_sample_ks(&sv_a, &sv_b)?,
        nuclear_norm_ks: two_sample_ks(&norm_a, &norm_b)?,
        gamma_ks_a: ks_statistic(&norm_a, gamma)?,
        gamma_ks_b: ks_statistic(&norm_b, gamma)?,
        singular_values_a: sv_a,
        singular_values_b: sv_b,
        eigen_moduli_a: eig_a,
        eigen_moduli_b: eig_b,
    })
}

/// Sorted moduli of the eigenvalues of `scale * x` pooled over square draws.
pub fn eigenvalue_moduli(draws: &[DenseMatrix], scale: f64) -> Vec<f64> {
    let mut out: Vec<f64> = draws
        .iter()
        .flat_map(|x| (x * scale).complex_eigenvalues().iter().map(|z| z.norm()).collect::<Vec<_>>())
        .collect();
    out.sort_by(f64::total_cmp);
    out
}

/// KS test of eigenvalue moduli against the radial law of the limiting
/// normal-product eigenvalue density (uniform on `[0, 1]`).
pub fn eigen_radial_ks(moduli: &[f64]) -> Result<(f64, f64)> {
    ks_statistic(moduli, np_limit_eigenvalue_radial_cdf)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::StandardNormal;
    use statrs::distribution::{ContinuousCDF, Normal};

    fn normals(n: usize, seed: u64) -> Vec<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n).map(|_| rng.sample(StandardNormal)).collect()
    }

    #[test]
    fn iid_ess_is_close_to_n() {
        let r = ess(&normals(10_000, 1)).unwrap();
        assert!(r.ess >= 9_000.0 && r.ess <= 10_000.0, "{}", r.ess);
    }

    #[test]
    fn ar1_ess_matches_integrated_autocorrelation() {
        let phi: f64 = 0.5;
        let e = normals(10_000, 2);
        let mut x = vec![0.0; e.len()];
        x[0] = e[0] / (1.0 - phi * phi).sqrt();
        for t in 1..e.len() {
            x[t] = phi * x[t - 1] + e[t];
        }
        let expected = 10_000.0 * (1.0 - phi) / (1.0 + phi);
        let r = ess(&x).unwrap();
        assert!((r.ess - expected).abs() < 0.15 * expected, "{} vs {}", r.ess, expected);
    }

    #[test]
    fn ess_rejects_short_and_constant_traces() {
        assert!(ess(&[1.0; 9]).is_err());
        assert!(ess(&[2.0; 50]).is_err());
    }

    #[test]
    fn thinned_iid_ess_is_thinned_length() {
        let x = normals(20_000, 3);
        let thin: Vec<f64> = x.iter().step_by(4).cloned().collect();
        let r = ess(&thin).unwrap();
        assert!((r.ess - 5_000.0).abs() < 500.0, "{}", r.ess);
    }

    #[test]
    fn ks_single_point_at_median() {
        let normal = Normal::new(0.0, 1.0).unwrap();
        let (d, _) = ks_statistic(&[0.0], |x| normal.cdf(x)).unwrap();
        assert_abs_diff_eq!(d, 0.5, epsilon = 1e-12);
    }

    #[test]
    fn ks_detects_shift() {
        let normal = Normal::new(0.0, 1.0).unwrap();
        let shifted: Vec<f64> = normals(10_000, 4).iter().map(|v| v + 1.0).collect();
        let (d, p) = ks_statistic(&shifted, |x| normal.cdf(x)).unwrap();
        assert!(d > 0.3 && p < 1e-10);
    }

    #[test]
    fn ks_calibration_inverse_transform() {
        // Exponential(1) by inverse transform against its own CDF.
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut passes = 0;
        for _ in 0..100 {
            let s: Vec<f64> = (0..10_000).map(|_| -(1.0 - rng.random::<f64>()).ln()).collect();
            let (_, p) = ks_statistic(&s, |x| 1.0 - (-x).exp()).unwrap();
            passes += (p > 0.01) as usize;
        }
        assert!(passes >= 98, "{passes}");
    }

    #[test]
    fn two_sample_ks_trivial_cases() {
        let a = normals(100, 6);
        assert_eq!(two_sample_ks(&a, &a).unwrap().0, 0.0);
        let b: Vec<f64> = a.iter().map(|v| v + 100.0).collect();
        assert_eq!(two_sample_ks(&a, &b).unwrap().0, 1.0);
        let mut rev = a.clone();
        rev.reverse();
        assert_eq!(two_sample_ks(&a, &b).unwrap(), two_sample_ks(&rev, &b).unwrap());
        assert_eq!(two_sample_ks(&a, &b).unwrap(), two_sample_ks(&b, &a).unwrap());
    }

    #[test]
    fn two_sample_ks_calibration() {
        let mut passes = 0;
        for rep in 0..100 {
            let a = normals(10_000, 1_000 + 2 * rep);
            let b = normals(10_000, 1_001 + 2 * rep);
            passes += (two_sample_ks(&a, &b).unwrap().1 > 0.01) as usize;
        }
        assert!(passes >= 98, "{passes}");
    }

    #[test]
    fn wasserstein_cases() {
        let a = normals(1_000, 7);
        assert_eq!(wasserstein_1d(&a, &a).unwrap(), 0.0);
        let shifted: Vec<f64> = a.iter().map(|v| v - 0.7).collect();
        assert_abs_diff_eq!(wasserstein_1d(&a, &shifted).unwrap(), 0.7, epsilon = 1e-12);
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let u1: Vec<f64> = (0..10_000).map(|_| rng.random::<f64>()).collect();
        let u2: Vec<f64> = (0..10_000).map(|_| 2.0 * rng.random::<f64>()).collect();
        assert_abs_diff_eq!(wasserstein_1d(&u1, &u2).unwrap(), 0.5, epsilon = 0.02);
    }

    #[test]
    fn wasserstein_unequal_sizes_uses_cdf_integral() {
        // F_a - F_b on [0, 1]: a = {0, 1}, b = {0.5}.
        let w = wasserstein_1d(&[0.0, 1.0], &[0.5]).unwrap();
        assert_abs_diff_eq!(w, 0.5, epsilon = 1e-12);
        assert!(wasserstein_1d(&[], &[1.0]).is_err());
    }

    #[test]
    fn chi_square_uniform_bins() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let s: Vec<f64> = (0..10_000).map(|_| rng.random::<f64>()).collect();
        let edges: Vec<f64> = (0..=10).map(|i| i as f64 / 10.0).collect();
        let r = binned_chi_square(&s, &edges, |a, b| b - a).unwrap();
        assert_eq!(r.dof, 9);
        assert!(r.p_value > 0.001);
        let skewed: Vec<f64> = s.iter().map(|v| v * v).collect();
        assert!(binned_chi_square(&skewed, &edges, |a, b| b - a).unwrap().p_value < 1e-10);
    }

    #[test]
    fn spectral_self_comparison_is_zero() {
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        let draws: Vec<DenseMatrix> = (0..50).map(|_| crate::distributions::gaussian_matrix(3, 3, &mut rng)).collect();
        let r = spectral_compare(&draws, &draws, 1.0 / 3.0, 1.0).unwrap();
        assert_eq!(r.sv_wasserstein, 0.0);
        assert_eq!(r.sv_ks.0, 0.0);
        assert_eq!(r.nuclear_norm_ks.0, 0.0);
        assert_eq!(r.eigen_moduli_a.len(), 150);
    }

    #[test]
    fn histogram_integrates_to_one() {
        let s = normals(1_000, 11);
        let h = histogram(&s, -10.0, 10.0, 40);
        let total: f64 = h.iter().map(|(_, d)| d * 0.5).sum();
        assert_abs_diff_eq!(total, 1.0, epsilon = 1e-12);
    }
}
