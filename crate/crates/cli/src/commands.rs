use std::path::{Path, PathBuf};

use serde::Serialize;
use serde_json::json;

use nnd::diagnostics::{
    binned_chi_square, eigen_radial_ks, eigenvalue_moduli, ess, histogram, ks_statistic, spectral_compare,
    two_sample_ks, wasserstein_1d,
};
use nnd::distributions::{
    gamma_cdf, gaussian_matrix, laplace_cdf, np_scalar_interval_prob, sample_haar_orthogonal, sample_normal_product,
    NndParams, NpParams,
};
use nnd::linalg::{frobenius_sq, nuclear_norm, singular_values};
use nnd::models::{
    add_noise, fit_lambda_moment, log_grid, mean_nuclear_norm, metrics, naive_impute, random_mask, run_experiment,
    run_lambda_grid, synthetic_low_rank, CompletionModel, Problem, TraceSummary,
};
use nnd::samplers::{
    chain_rng, ensure_binary_mask, ChainConfig, ChainOutput, Gamma2Mode, HyperState, Kernel, LambdaMode, ModelSpec,
};
use nnd::special::ln_factorial;
use nnd::DenseMatrix;

use crate::args::*;
use crate::error::{CliError, CliResult};
use crate::io::{self, Table};
use crate::manifest::RunManifest;

/// Environment variable for fault injection; `skip-mh` accepts every
/// proposal without the Metropolis-Hastings test.
pub const FAULT_ENV: &str = "NND_FAULT";

fn fault_skip_mh() -> bool {
    std::env::var(FAULT_ENV).map(|v| v == "skip-mh").unwrap_or(false)
}

fn config_value(v: &impl Serialize) -> serde_json::Value {
    serde_json::to_value(v).unwrap_or(serde_json::Value::Null)
}

fn chain_config(a: &ChainArgs, keep_draws: bool) -> CliResult<ChainConfig> {
    let cfg = ChainConfig {
        iterations: a.iters,
        burn_in: a.burn_in,
        thinning: a.thin,
        seed: a.seed,
        adapt_during_burn_in_only: !a.adapt_always,
        keep_draws,
        fault_skip_mh: fault_skip_mh(),
        ..Default::default()
    };
    cfg.validate()?;
    Ok(cfg)
}

fn lambda_mode(l: LambdaArg) -> LambdaMode {
    match l {
        LambdaArg::Adaptive => LambdaMode::Adaptive { initial: 1.0 },
        LambdaArg::Fixed(v) => LambdaMode::Fixed(v),
    }
}

fn gamma2_mode(gamma2: f64, sampled: bool) -> CliResult<Gamma2Mode> {
    if !(gamma2 > 0.0 && gamma2.is_finite()) {
        return Err(CliError::Usage(format!("--gamma2 must be positive, got {gamma2}")));
    }
    Ok(if sampled { Gamma2Mode::Sampled { initial: gamma2 } } else { Gamma2Mode::Fixed(gamma2) })
}

fn write_chain_trace(path: &Path, out: &ChainOutput, full: bool) -> CliResult<()> {
    let t = &out.traces;
    let table = Table::new().column("iter", &t.iter).column("nuclear_norm", &t.nuclear_norm);
    let table = if full {
        table
            .column("lambda", &t.lambda)
            .column("gamma2", &t.gamma2)
            .column("delta", &t.delta)
            .column("log_post", &t.log_post)
    } else {
        table.column("delta", &t.delta)
    };
    table.column("accepted", t.accepted.iter().map(|&a| a as u8)).write(path)
}

fn write_draws(path: &Path, draws: &[DenseMatrix], per_file: bool) -> CliResult<()> {
    if per_file {
        io::write_draws_per_file(path, draws).map(|_| ())
    } else {
        io::write_draws_concatenated(path, draws)
    }
}

#[derive(Serialize)]
struct KsResult {
    statistic: f64,
    p_value: f64,
}

impl From<(f64, f64)> for KsResult {
    fn from((statistic, p_value): (f64, f64)) -> Self {
        Self { statistic, p_value }
    }
}

fn chain_summary(m: &mut RunManifest, out: &ChainOutput, cfg: &ChainConfig) -> CliResult<()> {
    m.record("retained", out.retained)?;
    m.record("acceptance", &out.acceptance_rates)?;
    m.record("terminal_acceptance_2000", out.traces.terminal_acceptance(2000))?;
    m.record("final_delta", out.final_delta)?;
    let norms = out.retained_values(&out.traces.nuclear_norm, cfg);
    m.record("nuclear_norm", TraceSummary::of(&norms))?;
    if norms.len() >= 10 && norms.iter().any(|v| *v != norms[0]) {
        m.record("nuclear_norm_ess", ess(&norms)?)?;
    }
    Ok(())
}

pub fn sample_prior(a: &SamplePriorArgs, m: &mut RunManifest) -> CliResult<()> {
    let cfg = chain_config(&a.chain, a.out_draws.is_some())?;
    let p = NndParams::new(a.lambda, a.rows, a.cols)?;
    let spec = ModelSpec::prior(a.rows, a.cols, a.lambda).with_kernel(a.kernel.into());
    let out = nnd::samplers::run_chain(&spec, &cfg, &mut chain_rng(cfg.seed, 0))?;
    chain_summary(m, &out, &cfg)?;
    let mut norms = out.retained_values(&out.traces.nuclear_norm, &cfg);
    norms.sort_by(f64::total_cmp);
    let gamma = KsResult::from(ks_statistic(&norms, |x| gamma_cdf(x, p.dim() as f64, a.lambda).unwrap_or(f64::NAN))?);
    m.record("gamma_ks", gamma)?;
    if let Some(path) = &a.out_draws {
        write_draws(path, &out.draws, a.per_draw_files)?;
    }
    if let Some(path) = &a.out_trace {
        write_chain_trace(path, &out, false)?;
    }
    Ok(())
}

fn posterior_outputs(
    spec: &ModelSpec,
    out_args: &PosteriorOutArgs,
    chain: &ChainArgs,
    mask: Option<&DenseMatrix>,
    m: &mut RunManifest,
) -> CliResult<()> {
    let truth = out_args.truth.as_deref().map(io::load_matrix).transpose()?;
    if let Some(t) = &truth {
        if t.shape() != spec.shape() {
            return Err(CliError::Usage(format!("truth is {:?}, data is {:?}", t.shape(), spec.shape())));
        }
    }
    let cfg = chain_config(chain, out_args.out_draws.is_some())?;
    let res = run_experiment(spec, truth.as_ref(), &cfg, &mut chain_rng(cfg.seed, 0))?;
    chain_summary(m, &res.output, &cfg)?;
    m.record("lambda", res.lambda)?;
    m.record("final_lambda", res.output.final_hyper.lambda)?;
    m.record("final_gamma2", res.output.final_hyper.gamma2)?;
    m.record("gamma2", TraceSummary::of(&res.output.retained_values(&res.output.traces.gamma2, &cfg)))?;
    m.record("posterior_mean_nuclear_norm", nuclear_norm(&res.posterior_mean)?)?;
    if let Some(met) = res.metrics {
        m.record("metrics", met)?;
    }
    if let (Some(t), Some(mask)) = (&truth, mask) {
        let naive = naive_impute(
            match &spec.kind {
                nnd::samplers::ModelKind::Complete { y, .. } => y,
                _ => unreachable!("mask implies completion"),
            },
            mask,
        )?;
        m.record("naive_metrics", metrics(t, &naive, Some(mask))?)?;
    }
    if let Some(path) = &out_args.out_mean {
        io::write_csv_matrix(path, &res.posterior_mean)?;
    }
    if let Some(path) = &out_args.out_trace {
        write_chain_trace(path, &res.output, true)?;
    }
    if let Some(path) = &out_args.out_draws {
        io::write_draws_concatenated(path, &res.output.draws)?;
    }
    Ok(())
}

pub fn denoise(a: &DenoiseArgs, m: &mut RunManifest) -> CliResult<()> {
    let y = io::load_matrix(&a.input)?;
    let spec = ModelSpec::denoise(y, lambda_mode(a.lambda), gamma2_mode(a.gamma2, a.sample_gamma2)?)
        .with_kernel(a.kernel.into());
    posterior_outputs(&spec, &a.out, &a.chain, None, m)
}

pub fn complete(a: &CompleteArgs, m: &mut RunManifest) -> CliResult<()> {
    let y = io::load_matrix(&a.input)?;
    let mask = io::load_matrix(&a.mask)?;
    let lambda = lambda_mode(a.lambda);
    // Validates shape, binary entries and at least one observed entry.
    let hyper = HyperState::new(
        match lambda {
            LambdaMode::Fixed(l) => l,
            LambdaMode::Adaptive { initial } => initial,
        },
        a.gamma2,
        !a.sample_gamma2,
    )?;
    CompletionModel::new(y.clone(), mask.clone(), hyper, lambda)?;
    let spec = ModelSpec::complete(y, mask.clone(), lambda, gamma2_mode(a.gamma2, a.sample_gamma2)?);
    posterior_outputs(&spec, &a.out, &a.chain, Some(&mask), m)
}

pub fn grid_denoise(a: &GridArgs, m: &mut RunManifest) -> CliResult<()> {
    let y = io::load_matrix(&a.input)?;
    let truth = io::load_matrix(&a.truth)?;
    let mask = a.mask.as_deref().map(io::load_matrix).transpose()?;
    if let Some(mk) = &mask {
        ensure_binary_mask(mk)?;
    }
    if truth.shape() != y.shape() || mask.as_ref().is_some_and(|mk| mk.shape() != y.shape()) {
        return Err(CliError::Usage("input, truth and mask must share one shape".into()));
    }
    if !(a.grid_lo > 0.0 && a.grid_hi > a.grid_lo) || a.grid_n < 2 {
        return Err(CliError::Usage("grid needs 0 < grid-lo < grid-hi and grid-n >= 2".into()));
    }
    gamma2_mode(a.gamma2, false)?;
    let problem = Problem { truth, y, mask, noise_sd: a.gamma2.sqrt() };
    let cfg = chain_config(&a.chain, false)?;
    let grid = log_grid(a.grid_lo, a.grid_hi, a.grid_n);
    let runs = run_lambda_grid(&problem, &grid, &cfg)?;
    let score = |r: &nnd::models::ExperimentResult| {
        let met = r.metrics.expect("truth given");
        met.mse_hidden.unwrap_or(met.mse_all)
    };
    let scores: Vec<f64> = runs.iter().map(|(_, r)| score(r)).collect();
    let (best_i, best) = scores.iter().copied().enumerate().min_by(|x, y| x.1.total_cmp(&y.1)).expect("non-empty grid");
    let rows: Vec<_> =
        runs.iter().map(|(l, r)| json!({"lambda": l, "metrics": r.metrics, "acceptance": r.acceptance})).collect();
    m.record("criterion", if problem.mask.is_some() { "mse_hidden" } else { "mse_all" })?;
    m.record("grid", rows)?;
    m.record("best_lambda", grid[best_i])?;
    m.record("best_mse", best)?;
    if a.adaptive {
        let spec = problem.spec(LambdaMode::Adaptive { initial: 1.0 });
        let r = run_experiment(&spec, Some(&problem.truth), &cfg, &mut chain_rng(cfg.seed, grid.len() as u64))?;
        let s = score(&r);
        m.record("adaptive", json!({"metrics": r.metrics, "lambda": r.lambda, "mse": s, "ratio_to_best": s / best}))?;
    }
    if let Some(path) = &a.out_table {
        let met: Vec<_> = runs.iter().map(|(_, r)| r.metrics.expect("truth given")).collect();
        Table::new()
            .column("lambda", &grid)
            .column("mse_all", met.iter().map(|x| x.mse_all))
            .column("mse_hidden", met.iter().map(|x| x.mse_hidden.map_or(String::new(), |v| v.to_string())))
            .column("sse", met.iter().map(|x| x.sse))
            .write(path)?;
    }
    Ok(())
}

fn expand_inputs(patterns: &[String]) -> CliResult<Vec<PathBuf>> {
    let mut out = Vec::new();
    for p in patterns {
        if p.contains(['*', '?', '[']) {
            let mut hits: Vec<PathBuf> = glob::glob(p)
                .map_err(|e| CliError::Usage(format!("bad pattern '{p}': {e}")))?
                .filter_map(|r| r.ok())
                .collect();
            if hits.is_empty() {
                return Err(CliError::Usage(format!("pattern '{p}' matched no files")));
            }
            hits.sort();
            out.extend(hits);
        } else {
            out.push(PathBuf::from(p));
        }
    }
    Ok(out)
}

pub fn fit_lambda(a: &FitLambdaArgs, m: &mut RunManifest) -> CliResult<()> {
    let paths = expand_inputs(&a.inputs)?;
    let data = paths.iter().map(|p| io::load_matrix(p)).collect::<CliResult<Vec<_>>>()?;
    let (mean, nm) = mean_nuclear_norm(&data)?;
    m.record("lambda_hat", fit_lambda_moment(&data)?)?;
    m.record("nm", nm)?;
    m.record("mean_nuclear_norm", mean)?;
    m.record("n_matrices", data.len())?;
    m.record("files", paths.iter().map(|p| p.display().to_string()).collect::<Vec<_>>())?;
    Ok(())
}

#[derive(Serialize)]
struct Check {
    name: String,
    statistic: f64,
    p_value: f64,
    passed: bool,
}

/// Minimum draws accepted by `validate`.
pub const MIN_VALIDATE_DRAWS: usize = 100;
const VALIDATE_THIN: usize = 20;

fn prior_draws(p: &NndParams, kernel: Kernel, n: usize, seed: u64, index: u64) -> CliResult<Vec<DenseMatrix>> {
    let cfg = ChainConfig {
        iterations: 1_000 + n * VALIDATE_THIN,
        burn_in: 1_000,
        thinning: VALIDATE_THIN,
        seed,
        fault_skip_mh: fault_skip_mh(),
        ..Default::default()
    };
    let spec = ModelSpec::prior(p.rows, p.cols, p.lambda).with_kernel(kernel);
    Ok(nnd::samplers::run_chain(&spec, &cfg, &mut chain_rng(seed, index))?.draws)
}

pub fn validate(a: &ValidateArgs, m: &mut RunManifest) -> CliResult<()> {
    if a.n_draws < MIN_VALIDATE_DRAWS {
        return Err(CliError::Usage(format!(
            "--n-draws {} is underpowered; need at least {MIN_VALIDATE_DRAWS}",
            a.n_draws
        )));
    }
    if !(a.level > 0.0 && a.level < 1.0) {
        return Err(CliError::Usage("--level must lie in (0, 1)".into()));
    }
    let p = NndParams::new(a.lambda, a.rows, a.cols)?;
    let dim = p.dim() as f64;
    let mut checks = Vec::new();
    let mut push = |name: &str, (statistic, p_value): (f64, f64)| {
        checks.push(Check { name: name.into(), statistic, p_value, passed: p_value > a.level });
    };

    let mut prox_draws = Vec::new();
    for (i, (label, kernel)) in [("prox", Kernel::Prox), ("svd", Kernel::SvdGibbs)].into_iter().enumerate() {
        let draws = prior_draws(&p, kernel, a.n_draws, a.seed, i as u64)?;
        let norms = draws.iter().map(nuclear_norm).collect::<nnd::Result<Vec<_>>>()?;
        push(&format!("gamma_ks_{label}"), ks_statistic(&norms, |x| gamma_cdf(x, dim, a.lambda).unwrap_or(f64::NAN))?);
        if kernel == Kernel::Prox {
            prox_draws = draws;
        }
    }

    // Orthogonal invariance: X_11 on one half of the draws against (P X Q)_11
    // on the other half, for fixed Haar P and Q.
    let mut rng = chain_rng(a.seed, 2);
    let pm = sample_haar_orthogonal(a.rows, &mut rng)?;
    let qm = sample_haar_orthogonal(a.cols, &mut rng)?;
    let half = prox_draws.len() / 2;
    let plain: Vec<f64> = prox_draws[..half].iter().map(|x| x[(0, 0)]).collect();
    let rotated: Vec<f64> = prox_draws[half..].iter().map(|x| (&pm * x * &qm)[(0, 0)]).collect();
    push("orthogonal_invariance_ks", two_sample_ks(&plain, &rotated)?);

    let scalar = NndParams::new(a.lambda, 1, 1)?;
    let lap: Vec<f64> = prior_draws(&scalar, Kernel::Prox, a.n_draws, a.seed, 3)?.iter().map(|x| x[(0, 0)]).collect();
    push("laplace_1x1_ks", ks_statistic(&lap, |x| laplace_cdf(x, a.lambda))?);

    let mut rng = chain_rng(a.seed, 4);
    let np = NpParams::new(1.0, 1)?;
    let z: Vec<f64> = (0..a.n_draws).map(|_| sample_normal_product(&np, &mut rng)[(0, 0)]).collect();
    let mut edges = vec![-60.0];
    edges.extend((-6..=6).map(|k| k as f64 * 0.5));
    edges.push(60.0);
    let chi = binned_chi_square(&z, &edges, np_scalar_interval_prob)?;
    push("np_1x1_k0_chi2", (chi.statistic, chi.p_value));

    for c in &checks {
        println!(
            "{} {} statistic={:.6} p={:.6}",
            if c.passed { "PASS" } else { "FAIL" },
            c.name,
            c.statistic,
            c.p_value
        );
    }
    let failed: Vec<String> = checks.iter().filter(|c| !c.passed).map(|c| c.name.clone()).collect();
    m.record("checks", &checks)?;
    m.record("all_passed", failed.is_empty())?;
    m.record("fault", std::env::var(FAULT_ENV).ok())?;
    if failed.is_empty() {
        Ok(())
    } else {
        Err(CliError::Failed(failed.join(", ")))
    }
}

fn gamma_pdf(x: f64, shape: u64, rate: f64) -> f64 {
    if x <= 0.0 {
        return 0.0;
    }
    let k = shape as f64;
    (k * rate.ln() + (k - 1.0) * x.ln() - rate * x - ln_factorial(shape - 1)).exp()
}

fn densities_table(path: &Path, lo: f64, hi: f64, bins: usize, series: &[(&str, &[f64])]) -> CliResult<Vec<f64>> {
    let mut table = Table::new();
    let mut centres = Vec::new();
    for (i, (name, sample)) in series.iter().enumerate() {
        let h = histogram(sample, lo, hi, bins);
        if i == 0 {
            centres = h.iter().map(|x| x.0).collect();
            table = table.column("bin_centre", &centres);
        }
        table = table.column(name, h.iter().map(|x| x.1));
    }
    table.write(path)?;
    Ok(centres)
}

pub fn compare_np(a: &CompareNpArgs, m: &mut RunManifest) -> CliResult<()> {
    if a.n == 0 || a.n_draws < 2 || a.thin == 0 || a.bins == 0 {
        return Err(CliError::Usage("--n, --thin, --bins must be positive and --n-draws >= 2".into()));
    }
    let (n, sigma2) = (a.n, 4.0 / 3.0);
    let p = NndParams::new(1.0, n, n)?;
    let cfg = ChainConfig {
        iterations: 1_000 + a.n_draws * a.thin,
        burn_in: 1_000,
        thinning: a.thin,
        seed: a.seed,
        fault_skip_mh: fault_skip_mh(),
        ..Default::default()
    };
    let out = nnd::samplers::run_chain(&ModelSpec::prior(n, n, 1.0), &cfg, &mut chain_rng(a.seed, 0))?;
    let nnd_draws = out.draws;
    let np_draws: Vec<DenseMatrix> = if a.self_compare {
        nnd_draws.clone()
    } else {
        let mut rng = chain_rng(a.seed, 1);
        let np = NpParams::new(sigma2, n)?;
        (0..a.n_draws).map(|_| sample_normal_product(&np, &mut rng)).collect()
    };
    let scale = 1.0 / n as f64;
    let report = spectral_compare(&nnd_draws, &np_draws, scale, p.lambda)?;

    // Gaussian-entry comparator with the NND sample's mean squared Frobenius norm.
    let mean_fro = nnd_draws.iter().map(frobenius_sq).sum::<f64>() / nnd_draws.len() as f64;
    let sd = (mean_fro / (n * n) as f64).sqrt();
    let mut rng = chain_rng(a.seed, 2);
    let mut gauss_sv = Vec::with_capacity(a.n_draws * n);
    for _ in 0..a.n_draws {
        gauss_sv.extend(singular_values(&(gaussian_matrix(n, n, &mut rng) * (sd * scale)))?);
    }
    gauss_sv.sort_by(f64::total_cmp);
    let w1_gauss = wasserstein_1d(&report.singular_values_a, &gauss_sv)?;

    let np_unit = eigenvalue_moduli(&np_draws, 1.0 / (n as f64 * sigma2));
    let radial = if a.self_compare { None } else { Some(KsResult::from(eigen_radial_ks(&np_unit)?)) };

    m.record("n", n)?;
    m.record("n_draws", a.n_draws)?;
    m.record("np_sigma2", if a.self_compare { None } else { Some(sigma2) })?;
    m.record("nnd_acceptance", out.acceptance_rates.get("x"))?;
    m.record("w1_singular_values_nnd_np", report.sv_wasserstein)?;
    m.record("w1_singular_values_nnd_gaussian", w1_gauss)?;
    m.record("gaussian_entry_sd", sd)?;
    m.record("ks_singular_values", KsResult::from(report.sv_ks))?;
    m.record("ks_nuclear_norm", KsResult::from(report.nuclear_norm_ks))?;
    m.record("gamma_ks_nnd", KsResult::from(report.gamma_ks_a))?;
    m.record("gamma_ks_np", KsResult::from(report.gamma_ks_b))?;
    m.record("np_eigen_radial_ks", radial)?;

    let dir = &a.out;
    let sv_hi = report
        .singular_values_a
        .last()
        .copied()
        .unwrap_or(1.0)
        .max(report.singular_values_b.last().copied().unwrap_or(1.0));
    densities_table(
        &dir.join("singular_values.csv"),
        0.0,
        sv_hi,
        a.bins,
        &[("nnd", &report.singular_values_a), ("np", &report.singular_values_b), ("gaussian", &gauss_sv)],
    )?;
    let norms = |d: &[DenseMatrix]| d.iter().map(nuclear_norm).collect::<nnd::Result<Vec<_>>>();
    let (na, nb) = (norms(&nnd_draws)?, norms(&np_draws)?);
    let norm_hi = na.iter().chain(&nb).copied().fold(0.0, f64::max);
    let centres = densities_table(&dir.join("nuclear_norms.csv"), 0.0, norm_hi, a.bins, &[("nnd", &na), ("np", &nb)])?;
    Table::new()
        .column("bin_centre", &centres)
        .column("gamma_density", centres.iter().map(|&x| gamma_pdf(x, (n * n) as u64, 1.0)))
        .write(&dir.join("nuclear_norm_gamma.csv"))?;
    let eig_hi =
        report.eigen_moduli_a.last().copied().unwrap_or(1.0).max(report.eigen_moduli_b.last().copied().unwrap_or(1.0));
    densities_table(
        &dir.join("eigen_moduli.csv"),
        0.0,
        eig_hi,
        a.bins,
        &[("nnd", &report.eigen_moduli_a), ("np", &report.eigen_moduli_b)],
    )?;
    let limit = histogram(&np_unit, 0.0, 1.5, a.bins);
    Table::new()
        .column("modulus", limit.iter().map(|x| x.0))
        .column("np_normalised", limit.iter().map(|x| x.1))
        .column("limit_radial_density", limit.iter().map(|x| if x.0 <= 1.0 { 1.0 } else { 0.0 }))
        .write(&dir.join("eigen_radial_limit.csv"))?;
    Ok(())
}

pub fn ess_cmd(a: &EssArgs, m: &mut RunManifest) -> CliResult<()> {
    let values = io::read_column(&a.trace, &a.column)?;
    m.record("ess", ess(&values)?)?;
    m.record("column", &a.column)?;
    Ok(())
}

pub fn synth(a: &SynthArgs, m: &mut RunManifest) -> CliResult<()> {
    if a.rows == 0 || a.cols == 0 || a.rank == 0 || !(a.noise_sd >= 0.0) {
        return Err(CliError::Usage("rows, cols, rank must be positive and noise-sd non-negative".into()));
    }
    if let Some(p) = a.p_hidden {
        if !(0.0..1.0).contains(&p) {
            return Err(CliError::Usage("--p-hidden must lie in [0, 1)".into()));
        }
    }
    let mut rng = chain_rng(a.seed, 0);
    let truth = synthetic_low_rank(a.rows, a.cols, a.rank, &mut rng);
    let mask = a.p_hidden.map(|p| random_mask(a.rows, a.cols, p, &mut rng));
    let mut y = add_noise(&truth, a.noise_sd, &mut rng);
    if let Some(mk) = &mask {
        y = y.component_mul(mk);
        io::write_csv_matrix(&a.out_dir.join("mask.csv"), mk)?;
        m.record("hidden_entries", mk.iter().filter(|v| **v == 0.0).count())?;
    }
    io::write_csv_matrix(&a.out_dir.join("truth.csv"), &truth)?;
    io::write_csv_matrix(&a.out_dir.join("y.csv"), &y)?;
    m.record("gamma2", a.noise_sd * a.noise_sd)?;
    m.record("truth_nuclear_norm", nuclear_norm(&truth)?)?;
    Ok(())
}

/// Run one parsed command line; the manifest is written even when a
/// statistical check fails.
pub fn run(cli: &crate::args::Cli, args: Vec<String>) -> CliResult<()> {
    let start = std::time::Instant::now();
    let (name, seed, config) = match &cli.command {
        Command::SamplePrior(a) => ("sample-prior", Some(a.chain.seed), config_value(a)),
        Command::Denoise(a) => ("denoise", Some(a.chain.seed), config_value(a)),
        Command::Complete(a) => ("complete", Some(a.chain.seed), config_value(a)),
        Command::GridDenoise(a) => ("grid-denoise", Some(a.chain.seed), config_value(a)),
        Command::FitLambda(a) => ("fit-lambda", None, config_value(a)),
        Command::Validate(a) => ("validate", Some(a.seed), config_value(a)),
        Command::CompareNp(a) => ("compare-np", Some(a.seed), config_value(a)),
        Command::Ess(a) => ("ess", None, config_value(a)),
        Command::Synth(a) => ("synth", Some(a.seed), config_value(a)),
    };
    let mut m = RunManifest::new(name, args, seed, config);
    let outcome = match &cli.command {
        Command::SamplePrior(a) => sample_prior(a, &mut m),
        Command::Denoise(a) => denoise(a, &mut m),
        Command::Complete(a) => complete(a, &mut m),
        Command::GridDenoise(a) => grid_denoise(a, &mut m),
        Command::FitLambda(a) => fit_lambda(a, &mut m),
        Command::Validate(a) => validate(a, &mut m),
        Command::CompareNp(a) => {
            compare_np(a, &mut m).and_then(|_| io::write_json(&a.out.join("report.json"), &m.results))
        }
        Command::Ess(a) => ess_cmd(a, &mut m),
        Command::Synth(a) => synth(a, &mut m),
    };
    match &outcome {
        Ok(()) | Err(CliError::Failed(_)) => {
            if cli.timing {
                m.timing = Some(start.elapsed().as_secs_f64());
            }
            match &cli.manifest {
                Some(path) => io::write_json(path, &m)?,
                None => println!("{}", m.to_json()?),
            }
        }
        Err(_) => {}
    }
    outcome
}
