//! Acceptance suite: one test per criterion, each printing a single
//! `PASS`/`FAIL` line with its statistics before asserting.

use std::io::Write;
use std::path::Path;
use std::process::Command;
use std::sync::OnceLock;
use std::time::{Duration, Instant};

use nnd::diagnostics::{
    binned_chi_square, eigen_radial_ks, eigenvalue_moduli, ess, ks_statistic, spectral_compare, two_sample_ks,
    wasserstein_1d,
};
use nnd::distributions::{
    gamma_cdf, gaussian_matrix, laplace_cdf, np_asymptotic_log_density, np_scalar_asymptotic_density,
    np_scalar_density, np_scalar_interval_prob, sample_haar_orthogonal, sample_nnd_via_svd, sample_normal_product,
    NndParams, NpParams,
};
use nnd::linalg::{frobenius_sq, nuclear_norm, prox_nuclear, singular_values};
use nnd::models::{add_noise, default_lambda_grid, run_experiment, run_lambda_grid, Problem};
use nnd::samplers::{
    chain_rng, run_chain, ChainConfig, Gamma2Mode, Kernel, LambdaMode, ModelSpec, MATRIX_TARGET_ACCEPTANCE,
};
use nnd::DenseMatrix;

/// Written straight to the stderr handle so the line shows up even when the
/// test harness captures output.
fn report(id: u32, name: &str, pass: bool, detail: &str) {
    let line = format!("[{}] criterion {id:>2} {name}: {detail}\n", if pass { "PASS" } else { "FAIL" });
    let _ = std::io::stderr().write_all(line.as_bytes());
}

fn norms_of(draws: &[DenseMatrix]) -> Vec<f64> {
    draws.iter().map(|x| nuclear_norm(x).unwrap()).collect()
}

fn thinned(iterations_after_burn_in: usize, thinning: usize, seed: u64) -> ChainConfig {
    ChainConfig { iterations: 2_000 + iterations_after_burn_in, burn_in: 2_000, thinning, seed, ..Default::default() }
}

// ---------------------------------------------------------------- 1

#[test]
fn criterion_01_gamma_law_of_the_nuclear_norm() {
    let cases = [(1, 1, 1.0), (2, 2, 1.0), (2, 7, 1.0), (3, 3, 2.0)];
    let mut lines = Vec::new();
    let mut all = true;
    for (ci, &(n, m, lambda)) in cases.iter().enumerate() {
        let start = Instant::now();
        for (ki, kernel) in [Kernel::Prox, Kernel::SvdGibbs].into_iter().enumerate() {
            let cfg = thinned(8_000 * 40, 40, 100 + ci as u64);
            let spec = ModelSpec::prior(n, m, lambda).with_kernel(kernel);
            let out = run_chain(&spec, &cfg, &mut chain_rng(cfg.seed, ki as u64)).unwrap();
            let norms = norms_of(&out.draws);
            let eff = ess(&norms).unwrap().ess;
            let (d, p) = ks_statistic(&norms, |x| gamma_cdf(x, (n * m) as f64, lambda).unwrap()).unwrap();
            let ok = eff >= 5_000.0 && p > 0.01;
            all &= ok;
            lines.push(format!("{n}x{m} l={lambda} {kernel:?}: ess={eff:.0} D={d:.4} p={p:.3}"));
        }
        let elapsed = start.elapsed();
        all &= elapsed < Duration::from_secs(300);
        lines.push(format!("{n}x{m} time={:.1}s", elapsed.as_secs_f64()));
    }
    report(1, "Gamma(nm, lambda) law, both kernels", all, &lines.join("; "));
    assert!(all);
}

// ---------------------------------------------------------------- 2

#[test]
fn criterion_02_orthogonal_invariance() {
    let (n, m) = (2, 3);
    let draws = |index: u64| {
        let cfg = thinned(10_000 * 20, 20, 200);
        run_chain(&ModelSpec::prior(n, m, 1.0), &cfg, &mut chain_rng(cfg.seed, index)).unwrap().draws
    };
    let mut rng = chain_rng(200, 99);
    let p = sample_haar_orthogonal(n, &mut rng).unwrap();
    let q = sample_haar_orthogonal(m, &mut rng).unwrap();
    let a = gaussian_matrix(m, n, &mut rng);
    // Linear functional tr(A X).
    let f = |x: &DenseMatrix| (&a * x).trace();
    let plain: Vec<f64> = draws(0).iter().map(f).collect();
    let rotated: Vec<f64> = draws(1).iter().map(|x| f(&(&p * x * &q))).collect();
    let (d, pv) = two_sample_ks(&plain, &rotated).unwrap();
    let ok = d < 0.02;
    report(2, "orthogonal invariance X vs PXQ", ok, &format!("n={} D={d:.4} p={pv:.3}", plain.len()));
    assert!(ok);
}

// ---------------------------------------------------------------- 3

#[test]
fn criterion_03_scalar_special_cases() {
    let cfg = thinned(6_000 * 10, 10, 300);
    let lap: Vec<f64> = run_chain(&ModelSpec::prior(1, 1, 1.0), &cfg, &mut chain_rng(300, 0))
        .unwrap()
        .draws
        .iter()
        .map(|x| x[(0, 0)])
        .collect();
    let (d, p_lap) = ks_statistic(&lap, |x| laplace_cdf(x, 1.0)).unwrap();

    let mut rng = chain_rng(301, 0);
    let np = NpParams::new(1.0, 1).unwrap();
    let z: Vec<f64> = (0..20_000).map(|_| sample_normal_product(&np, &mut rng)[(0, 0)]).collect();
    let mut edges = vec![-60.0];
    edges.extend((-12..=12).map(|k| k as f64 * 0.5));
    edges.push(60.0);
    let chi = binned_chi_square(&z, &edges, np_scalar_interval_prob).unwrap();

    let ok = p_lap > 0.01 && chi.p_value > 0.01;
    report(
        3,
        "1x1 Laplace and K0 laws",
        ok,
        &format!("Laplace KS D={d:.4} p={p_lap:.3}; K0 chi2={:.2} dof={} p={:.3}", chi.statistic, chi.dof, chi.p_value),
    );
    assert!(ok);
}

// ---------------------------------------------------------------- 4

/// `||X||_*` of a 2x2 matrix without an SVD: `sqrt(||X||_F^2 + 2 |det X|)`.
fn nuclear_2x2(x: &DenseMatrix) -> f64 {
    let det = x[(0, 0)] * x[(1, 1)] - x[(0, 1)] * x[(1, 0)];
    (frobenius_sq(x) + 2.0 * det.abs()).sqrt()
}

fn prox_objective(a: &DenseMatrix, x: &DenseMatrix, t: f64) -> f64 {
    0.5 * (a - x).norm_squared() + t * nuclear_2x2(x)
}

/// Derivative-free descent over random directions with a halving step.
fn random_search(f: &dyn Fn(&[f64]) -> f64, mut x: Vec<f64>, next_dir: &mut dyn FnMut() -> Vec<f64>) -> f64 {
    let mut fx = f(&x);
    let mut step = 1.0;
    while step > 1e-10 {
        let mut improved = false;
        for _ in 0..64 {
            let dir = next_dir();
            let len = dir.iter().map(|d| d * d).sum::<f64>().sqrt();
            for s in [step, -step] {
                let y: Vec<f64> = x.iter().zip(&dir).map(|(xi, di)| xi + s * di / len).collect();
                let fy = f(&y);
                if fy < fx {
                    x = y;
                    fx = fy;
                    improved = true;
                }
            }
        }
        if !improved {
            step *= 0.5;
        }
    }
    fx
}

/// Minimum of the proximal objective over each smooth piece of 2x2 matrix
/// space: full rank (searched from `A`), rank one (`r u v^T` with unit
/// `u, v` at angles `theta, phi`, grid then local search) and zero.
fn brute_force_minimum(a: &DenseMatrix, t: f64, next_dir: &mut dyn FnMut(usize) -> Vec<f64>) -> f64 {
    let full = |x: &[f64]| prox_objective(a, &DenseMatrix::from_column_slice(2, 2, x), t);
    let best_full = random_search(&full, a.as_slice().to_vec(), &mut || next_dir(4));

    let rank_one = |p: &[f64]| {
        let (u, v) = ([p[0].cos(), p[0].sin()], [p[1].cos(), p[1].sin()]);
        let x = DenseMatrix::from_fn(2, 2, |i, j| p[2] * u[i] * v[j]);
        prox_objective(a, &x, t)
    };
    let mut start = vec![0.0, 0.0, 0.0];
    let mut best_grid = f64::INFINITY;
    let steps = 180;
    for i in 0..steps {
        for j in 0..2 * steps {
            let (th, ph) =
                (std::f64::consts::PI * i as f64 / steps as f64, std::f64::consts::PI * j as f64 / steps as f64);
            let (u, v) = ([th.cos(), th.sin()], [ph.cos(), ph.sin()]);
            let c: f64 = (0..2).flat_map(|r| (0..2).map(move |k| (r, k))).map(|(r, k)| u[r] * a[(r, k)] * v[k]).sum();
            let r = c.signum() * (c.abs() - t).max(0.0);
            let val = rank_one(&[th, ph, r]);
            if val < best_grid {
                best_grid = val;
                start = vec![th, ph, r];
            }
        }
    }
    let best_rank_one = random_search(&rank_one, start, &mut || next_dir(3));
    let zero = prox_objective(a, &DenseMatrix::zeros(2, 2), t);
    best_full.min(best_rank_one).min(zero)
}

#[test]
fn criterion_04_prox_matches_brute_force() {
    let mut rng = chain_rng(400, 0);
    let mut worst: f64 = 0.0;
    for i in 0..50 {
        let a = gaussian_matrix(2, 2, &mut rng) * 2.0;
        let t = 0.2 + 0.3 * (i % 7) as f64;
        let fp = prox_objective(&a, &prox_nuclear(&a, t).unwrap(), t);
        let fb = brute_force_minimum(&a, t, &mut |k| gaussian_matrix(k, 1, &mut rng).as_slice().to_vec());
        worst = worst.max((fp - fb).abs());
    }
    let ok = worst < 1e-6;
    report(4, "prox_nuclear vs brute-force minimisation", ok, &format!("50 inputs, max |objective gap| = {worst:.2e}"));
    assert!(ok);
}

// ---------------------------------------------------------------- 5

#[test]
fn criterion_05_two_sampler_equivalence() {
    let y = DenseMatrix::from_row_slice(3, 3, &[1.0, 0.4, -0.2, 0.3, 0.8, 0.1, -0.5, 0.2, 0.6]);
    let mut norms = Vec::new();
    let mut effs = Vec::new();
    for (ki, kernel) in [Kernel::Prox, Kernel::SvdGibbs].into_iter().enumerate() {
        let spec = ModelSpec::denoise(y.clone(), LambdaMode::Fixed(1.0), Gamma2Mode::Fixed(0.25)).with_kernel(kernel);
        let cfg = thinned(6_000 * 20, 20, 500);
        let out = run_chain(&spec, &cfg, &mut chain_rng(500, ki as u64)).unwrap();
        let v = norms_of(&out.draws);
        effs.push(ess(&v).unwrap().ess);
        norms.push(v);
    }
    let (d, p) = two_sample_ks(&norms[0], &norms[1]).unwrap();
    let ok = d < 0.05 && effs.iter().all(|&e| e >= 5_000.0);
    report(
        5,
        "prox vs SVD-Gibbs on 3x3 denoising",
        ok,
        &format!("ess prox={:.0} svd={:.0}; KS D={d:.4} p={p:.3}", effs[0], effs[1]),
    );
    assert!(ok);
}

// ---------------------------------------------------------------- 6 and 7

struct EssRun {
    size: (usize, usize),
    kernel: Kernel,
    ess: f64,
    terminal_acceptance: f64,
}

const ESS_SIZES: [(usize, usize); 3] = [(5, 5), (25, 25), (75, 25)];
const ESS_SEEDS: u64 = 10;

/// Rank-1 normal-product truth `u v^T`, noise sd 0.1, lambda = 1 and
/// gamma2 = 0.01 fixed, 1000 burn-in + 10000 iterations.
fn ess_benchmark() -> &'static Vec<EssRun> {
    static RUNS: OnceLock<Vec<EssRun>> = OnceLock::new();
    RUNS.get_or_init(|| {
        let mut runs = Vec::new();
        for &(n, m) in &ESS_SIZES {
            for seed in 0..ESS_SEEDS {
                let mut rng = chain_rng(600 + seed, 1_000);
                let u = gaussian_matrix(n, 1, &mut rng);
                let v = gaussian_matrix(m, 1, &mut rng);
                let y = add_noise(&(u * v.transpose()), 0.1, &mut rng);
                for (ki, kernel) in [Kernel::Prox, Kernel::SvdGibbs].into_iter().enumerate() {
                    let spec = ModelSpec::denoise(y.clone(), LambdaMode::Fixed(1.0), Gamma2Mode::Fixed(0.01))
                        .with_kernel(kernel);
                    let cfg = ChainConfig {
                        iterations: 11_000,
                        burn_in: 1_000,
                        seed: 600 + seed,
                        keep_draws: false,
                        ..Default::default()
                    };
                    let out = run_chain(&spec, &cfg, &mut chain_rng(cfg.seed, ki as u64)).unwrap();
                    let trace = out.retained_values(&out.traces.nuclear_norm, &cfg);
                    runs.push(EssRun {
                        size: (n, m),
                        kernel,
                        ess: ess(&trace).unwrap().ess,
                        terminal_acceptance: out.traces.terminal_acceptance(2_000),
                    });
                }
            }
        }
        runs
    })
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    let k = v.len();
    if k % 2 == 1 {
        v[k / 2]
    } else {
        0.5 * (v[k / 2 - 1] + v[k / 2])
    }
}

#[test]
fn criterion_06_svd_gibbs_has_better_ess() {
    let runs = ess_benchmark();
    let mut ok = true;
    let mut parts = Vec::new();
    for &size in &ESS_SIZES {
        let med = |k: Kernel| median(runs.iter().filter(|r| r.size == size && r.kernel == k).map(|r| r.ess).collect());
        let (prox, svd) = (med(Kernel::Prox), med(Kernel::SvdGibbs));
        ok &= svd >= prox;
        parts.push(format!("{}x{} median ESS prox={prox:.0} svd={svd:.0}", size.0, size.1));
    }
    report(6, "ESS ordering on rank-1 problems", ok, &parts.join("; "));
    assert!(ok);
}

/// Grid and adaptive chains of criterion 8.
struct LambdaStudy {
    label: String,
    grid: Vec<(f64, f64)>,
    adaptive_mse: f64,
    adaptive_lambda: f64,
    acceptances: Vec<f64>,
    seconds: f64,
}

fn lambda_study() -> &'static Vec<LambdaStudy> {
    static RUNS: OnceLock<Vec<LambdaStudy>> = OnceLock::new();
    RUNS.get_or_init(|| {
        let mut out = Vec::new();
        for rank in [1usize, 3] {
            for completion in [false, true] {
                let start = Instant::now();
                let seed = 800 + rank as u64;
                let problem = if completion {
                    Problem::completion(20, 20, rank, 0.1, 0.5, seed)
                } else {
                    Problem::denoising(20, 20, rank, 0.1, seed)
                };
                let cfg =
                    ChainConfig { iterations: 11_000, burn_in: 1_000, seed, keep_draws: false, ..Default::default() };
                let key = |r: &nnd::models::ExperimentResult| {
                    let m = r.metrics.unwrap();
                    if completion {
                        m.mse_hidden.unwrap()
                    } else {
                        m.mse_all
                    }
                };
                let grid = run_lambda_grid(&problem, &default_lambda_grid(), &cfg).unwrap();
                let spec = problem.spec(LambdaMode::Adaptive { initial: 1.0 });
                let adaptive = run_experiment(&spec, Some(&problem.truth), &cfg, &mut chain_rng(seed, 100)).unwrap();
                let mut acceptances: Vec<f64> =
                    grid.iter().map(|(_, r)| r.output.traces.terminal_acceptance(2_000)).collect();
                acceptances.push(adaptive.output.traces.terminal_acceptance(2_000));
                out.push(LambdaStudy {
                    label: format!(
                        "rank-{rank} {}",
                        if completion { "completion (mse_hidden)" } else { "denoising (mse)" }
                    ),
                    grid: grid.iter().map(|(l, r)| (*l, key(r))).collect(),
                    adaptive_mse: key(&adaptive),
                    adaptive_lambda: adaptive.lambda.median,
                    acceptances,
                    seconds: start.elapsed().as_secs_f64(),
                });
            }
        }
        out
    })
}

#[test]
fn criterion_07_terminal_acceptance_near_target() {
    let mut worst = (0.0f64, String::new());
    let mut count = 0;
    let mut note = |acc: f64, what: String| {
        count += 1;
        let gap = (acc - MATRIX_TARGET_ACCEPTANCE).abs();
        if gap >= worst.0 {
            worst = (gap, format!("{what} acc={acc:.3}"));
        }
    };
    for r in ess_benchmark() {
        note(r.terminal_acceptance, format!("{}x{} {:?}", r.size.0, r.size.1, r.kernel));
    }
    for s in lambda_study() {
        for &a in &s.acceptances {
            note(a, s.label.clone());
        }
    }
    let ok = worst.0 <= 0.05;
    report(
        7,
        "terminal acceptance within 0.05 of 0.574",
        ok,
        &format!("{count} chains, last 2000 iterations; worst gap {:.3} ({})", worst.0, worst.1),
    );
    assert!(ok);
}

// ---------------------------------------------------------------- 8

#[test]
fn criterion_08_adaptive_lambda_is_competitive() {
    let studies = lambda_study();
    let mut ok = true;
    let mut parts = Vec::new();
    let mut seconds = 0.0;
    for s in studies {
        let (best_l, best) = s.grid.iter().copied().min_by(|a, b| a.1.total_cmp(&b.1)).unwrap();
        let ratio = s.adaptive_mse / best;
        ok &= ratio <= 1.15;
        seconds += s.seconds;
        parts.push(format!(
            "{}: adaptive {:.5} (lambda~{:.2}) vs grid min {best:.5} at lambda={best_l:.3}, ratio {ratio:.2}",
            s.label, s.adaptive_mse, s.adaptive_lambda
        ));
    }
    ok &= seconds < 900.0;
    parts.push(format!("time {seconds:.0}s"));
    report(8, "adaptive-lambda MSE <= 1.15 x grid minimum", ok, &parts.join("; "));
    assert!(ok);
}

// ---------------------------------------------------------------- 9

#[test]
fn criterion_09_lambda_recovery() {
    let (n, lambda_true, gamma2) = (10, 5.0, 0.01f64);
    let mut medians = Vec::new();
    for seed in 0..3u64 {
        let mut rng = chain_rng(900 + seed, 0);
        // X from the conditional prior NND(lambda / sqrt(gamma2)), Y = X + noise.
        let p = NndParams::new(lambda_true / gamma2.sqrt(), n, n).unwrap();
        let cfg0 = ChainConfig { iterations: 3_000, burn_in: 2_000, thinning: 1_000, ..Default::default() };
        let x = sample_nnd_via_svd(&p, &cfg0, &mut rng).unwrap().pop().unwrap();
        let y = add_noise(&x, gamma2.sqrt(), &mut rng);
        let spec = ModelSpec::denoise(y, LambdaMode::Adaptive { initial: 1.0 }, Gamma2Mode::Fixed(gamma2));
        let cfg = ChainConfig {
            iterations: 6_000,
            burn_in: 1_000,
            seed: 900 + seed,
            keep_draws: false,
            ..Default::default()
        };
        let r = run_experiment(&spec, None, &cfg, &mut chain_rng(cfg.seed, 1)).unwrap();
        medians.push(r.lambda.median);
    }
    let ok = medians.iter().all(|&m| m >= lambda_true / 2.0 && m <= lambda_true * 2.0);
    report(9, "posterior median of lambda within 2x of 5", ok, &format!("medians {medians:.3?}"));
    assert!(ok);
}

// ---------------------------------------------------------------- 10

#[test]
fn criterion_10_normal_product_approximation() {
    let (n, draws) = (10, 20_000);
    let p = NndParams::new(1.0, n, n).unwrap();
    let cfg = ChainConfig { iterations: 1_000 + draws * 5, burn_in: 1_000, thinning: 5, ..Default::default() };
    let nnd_draws = sample_nnd_via_svd(&p, &cfg, &mut chain_rng(1_000, 0)).unwrap();
    let mut rng = chain_rng(1_000, 1);
    let np = NpParams::new(4.0 / 3.0, n).unwrap();
    let np_draws: Vec<DenseMatrix> = (0..draws).map(|_| sample_normal_product(&np, &mut rng)).collect();
    let scale = 1.0 / n as f64;
    let rep = spectral_compare(&nnd_draws, &np_draws, scale, 1.0).unwrap();

    let sd = (nnd_draws.iter().map(frobenius_sq).sum::<f64>() / (draws * n * n) as f64).sqrt();
    let mut gauss = Vec::with_capacity(draws * n);
    for _ in 0..draws {
        gauss.extend(singular_values(&(gaussian_matrix(n, n, &mut rng) * (sd * scale))).unwrap());
    }
    gauss.sort_by(f64::total_cmp);
    let w_gauss = wasserstein_1d(&rep.singular_values_a, &gauss).unwrap();
    let ok = rep.sv_wasserstein < w_gauss;
    report(
        10,
        "W1(NND(1), NP(4/3)) < W1(NND(1), Gaussian)",
        ok,
        &format!("n={n}, {draws} draws each: W1 NP={:.4}, W1 Gaussian(sd {sd:.3})={w_gauss:.4}", rep.sv_wasserstein),
    );
    assert!(ok);
}

// ---------------------------------------------------------------- 11

#[test]
fn criterion_11_eigenvalue_limit_law() {
    let n = 200;
    let np = NpParams::new(1.0, n).unwrap();
    let mut rng = chain_rng(1_100, 0);
    let draws: Vec<DenseMatrix> = (0..10).map(|_| sample_normal_product(&np, &mut rng)).collect();
    let moduli = eigenvalue_moduli(&draws, 1.0 / n as f64);
    let (d, p) = eigen_radial_ks(&moduli).unwrap();
    let ok = d < 0.05;
    report(11, "radial law of NP eigenvalues at n=200", ok, &format!("{} moduli, KS D={d:.4} p={p:.3}", moduli.len()));
    assert!(ok);
}

// ---------------------------------------------------------------- 12

#[test]
fn criterion_12_small_tau_asymptotics() {
    let x = DenseMatrix::from_row_slice(2, 2, &[2.0, 0.5, -0.3, 1.0]);
    let norm = nuclear_norm(&x).unwrap();
    let g = |log_tau: f64| {
        let tau = log_tau.exp();
        np_asymptotic_log_density(&x, tau).unwrap() + norm / tau
    };
    let mut slope_gap: f64 = 0.0;
    for log_tau in [-6.0, -3.0, -1.0] {
        let h = 1e-4;
        let slope = (g(log_tau + h) - g(log_tau - h)) / (2.0 * h);
        slope_gap = slope_gap.max((slope + 2.5).abs());
    }
    let slope_ok = slope_gap <= 1e-6;

    let rel: Vec<(f64, f64)> = [10.0, 20.0, 50.0, 100.0]
        .iter()
        .map(|&z| (z, (np_scalar_asymptotic_density(z) / np_scalar_density(z) - 1.0).abs()))
        .collect();
    let k0_ok = rel.iter().all(|&(_, r)| r < 0.01);
    let ok = slope_ok && k0_ok;
    report(
        12,
        "asymptotic slope -2.5 and K0 asymptotic within 1% for z >= 10",
        ok,
        &format!(
            "max |slope + 2.5| = {slope_gap:.1e}; relative K0 errors {}",
            rel.iter().map(|(z, r)| format!("z={z}: {:.3}%", 100.0 * r)).collect::<Vec<_>>().join(", ")
        ),
    );
    assert!(slope_ok, "slope");
    assert!(k0_ok, "K0 asymptotic");
}

// ---------------------------------------------------------------- 13

fn nnd_bin() -> &'static str {
    env!("CARGO_BIN_EXE_nnd")
}

/// Run in `dir`, returning stdout and the bytes of every file in `dir`.
type Capture = (i32, Vec<u8>, Vec<(String, Vec<u8>)>);

fn run_capture(dir: &Path, args: &[&str]) -> Capture {
    let out = Command::new(nnd_bin()).args(args).current_dir(dir).env_remove("NND_FAULT").output().unwrap();
    let mut files = Vec::new();
    for entry in walk(dir) {
        files.push((entry.strip_prefix(dir).unwrap().display().to_string(), std::fs::read(&entry).unwrap()));
    }
    files.sort();
    (out.status.code().unwrap_or(-1), out.stdout, files)
}

fn walk(dir: &Path) -> Vec<std::path::PathBuf> {
    let mut out = Vec::new();
    for e in std::fs::read_dir(dir).unwrap() {
        let p = e.unwrap().path();
        if p.is_dir() {
            out.extend(walk(&p));
        } else {
            out.push(p);
        }
    }
    out
}

#[test]
fn criterion_13_cli_is_deterministic() {
    let setup = tempfile::tempdir().unwrap();
    let data = setup.path();
    let synth = |extra: &[&str], sub: &str| {
        let mut args = vec!["synth", "--rows", "6", "--cols", "5", "--rank", "2", "--seed", "13", "--out-dir"];
        let dir = data.join(sub);
        let dir_s = dir.display().to_string();
        args.push(&dir_s);
        args.extend_from_slice(extra);
        let st = Command::new(nnd_bin()).args(&args).output().unwrap();
        assert!(st.status.success());
        dir
    };
    let den = synth(&[], "den");
    let com = synth(&["--p-hidden", "0.5"], "com");
    let s = |p: std::path::PathBuf| p.display().to_string();
    let (dy, dt) = (s(den.join("y.csv")), s(den.join("truth.csv")));
    let (cy, ct, cm) = (s(com.join("y.csv")), s(com.join("truth.csv")), s(com.join("mask.csv")));

    let short = ["--iters", "600", "--burn-in", "100"];
    let with =
        |base: &[&str], extra: &[&str]| -> Vec<String> { base.iter().chain(extra).map(|x| x.to_string()).collect() };
    let commands: Vec<(&str, Vec<String>)> = vec![
        (
            "sample-prior",
            with(
                &[
                    "sample-prior",
                    "--rows",
                    "2",
                    "--cols",
                    "3",
                    "--seed",
                    "5",
                    "--out-draws",
                    "d.csv",
                    "--out-trace",
                    "t.csv",
                    "--manifest",
                    "m.json",
                ],
                &short,
            ),
        ),
        (
            "sample-prior svd",
            with(
                &[
                    "sample-prior",
                    "--rows",
                    "2",
                    "--cols",
                    "3",
                    "--kernel",
                    "svd",
                    "--seed",
                    "5",
                    "--out-draws",
                    "d.csv",
                    "--out-trace",
                    "t.csv",
                ],
                &short,
            ),
        ),
        (
            "denoise",
            with(
                &[
                    "denoise",
                    "--input",
                    &dy,
                    "--truth",
                    &dt,
                    "--gamma2",
                    "0.01",
                    "--seed",
                    "5",
                    "--out-mean",
                    "mean.csv",
                    "--out-trace",
                    "t.csv",
                    "--manifest",
                    "m.json",
                ],
                &short,
            ),
        ),
        (
            "denoise svd",
            with(
                &[
                    "denoise",
                    "--input",
                    &dy,
                    "--gamma2",
                    "0.01",
                    "--kernel",
                    "svd",
                    "--lambda",
                    "2",
                    "--seed",
                    "5",
                    "--out-mean",
                    "mean.csv",
                ],
                &short,
            ),
        ),
        (
            "complete",
            with(
                &[
                    "complete",
                    "--input",
                    &cy,
                    "--mask",
                    &cm,
                    "--truth",
                    &ct,
                    "--gamma2",
                    "0.01",
                    "--sample-gamma2",
                    "--seed",
                    "5",
                    "--out-mean",
                    "mean.csv",
                    "--out-trace",
                    "t.csv",
                    "--out-draws",
                    "d.csv",
                ],
                &short,
            ),
        ),
        (
            "grid-denoise",
            with(
                &[
                    "grid-denoise",
                    "--input",
                    &cy,
                    "--mask",
                    &cm,
                    "--truth",
                    &ct,
                    "--gamma2",
                    "0.01",
                    "--grid-n",
                    "3",
                    "--adaptive",
                    "--seed",
                    "5",
                    "--out-table",
                    "g.csv",
                ],
                &short,
            ),
        ),
        ("fit-lambda", with(&["fit-lambda", "--inputs", &dy, &dt, "--manifest", "m.json"], &[])),
        ("validate", with(&["validate", "--n-draws", "200", "--seed", "5"], &[])),
        (
            "compare-np",
            with(&["compare-np", "--n", "4", "--n-draws", "300", "--thin", "2", "--seed", "5", "--out", "cmp"], &[]),
        ),
        (
            "synth",
            with(&["synth", "--rows", "4", "--cols", "4", "--p-hidden", "0.5", "--seed", "5", "--out-dir", "s"], &[]),
        ),
    ];

    let mut failures = Vec::new();
    let mut checked = 0;
    for (name, args) in &commands {
        let args: Vec<&str> = args.iter().map(String::as_str).collect();
        let work = tempfile::tempdir().unwrap();
        let first = run_capture(work.path(), &args);
        let second = run_capture(work.path(), &args);
        // The ess command reads a trace the first command wrote.
        if *name == "sample-prior" {
            let ess_args = ["ess", "--trace", "t.csv", "--column", "nuclear_norm"];
            let a = run_capture(work.path(), &ess_args);
            let b = run_capture(work.path(), &ess_args);
            checked += 1;
            if a != b || a.0 != 0 {
                failures.push("ess".to_string());
            }
        }
        checked += 1;
        if first.0 != 0 || first != second {
            failures.push(format!("{name} (exit {})", first.0));
        }
    }
    let ok = failures.is_empty();
    report(
        13,
        "byte-identical CLI re-runs",
        ok,
        &format!("{checked} command lines, mismatches: {}", if ok { "none".to_string() } else { failures.join(", ") }),
    );
    assert!(ok);
}
