//! Scalar special functions and one-dimensional quadrature.

use std::f64::consts::PI;

const GK_NODES: [f64; 8] = [
    0.991_455_371_120_812_6,
    0.949_107_912_342_758_5,
    0.864_864_423_359_769_1,
    0.741_531_185_599_394_4,
    0.586_087_235_467_691_1,
    0.405_845_151_377_397_2,
    0.207_784_955_007_898_5,
    0.0,
];
const GK_KRONROD_W: [f64; 8] = [
    0.022_935_322_010_529_22,
    0.063_092_092_629_978_55,
    0.104_790_010_322_250_2,
    0.140_653_259_715_525_9,
    0.169_004_726_639_267_9,
    0.190_350_578_064_785_4,
    0.204_432_940_075_298_9,
    0.209_482_141_084_727_8,
];
const GK_GAUSS_W: [f64; 4] =
    [0.129_484_966_168_869_7, 0.279_705_391_489_276_7, 0.381_830_050_505_118_9, 0.417_959_183_673_469_4];

fn gauss_kronrod_15<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64) -> (f64, f64) {
    let c = 0.5 * (a + b);
    let h = 0.5 * (b - a);
    let fc = f(c);
    let mut kronrod = GK_KRONROD_W[7] * fc;
    let mut gauss = GK_GAUSS_W[3] * fc;
    for i in 0..7 {
        let dx = h * GK_NODES[i];
        let pair = f(c - dx) + f(c + dx);
        kronrod += GK_KRONROD_W[i] * pair;
        if i % 2 == 1 {
            gauss += GK_GAUSS_W[i / 2] * pair;
        }
    }
    (kronrod * h, ((kronrod - gauss) * h).abs())
}

fn adapt<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64, tol: f64, depth: u32) -> f64 {
    let (val, err) = gauss_kronrod_15(f, a, b);
    if err <= tol.max(1e-15 * val.abs()) || depth == 0 {
        return val;
    }
    let m = 0.5 * (a + b);
    adapt(f, a, m, 0.5 * tol, depth - 1) + adapt(f, m, b, 0.5 * tol, depth - 1)
}

/// Adaptive Gauss-Kronrod (7/15) quadrature of `f` over a finite interval.
pub fn integrate<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, abs_tol: f64) -> f64 {
    if a == b {
        return 0.0;
    }
    if a > b {
        return -integrate(f, b, a, abs_tol);
    }
    // A few equal panels first so narrow features are not missed.
    let panels = 8;
    let w = (b - a) / panels as f64;
    (0..panels)
        .map(|i| {
            let lo = a + i as f64 * w;
            let hi = if i + 1 == panels { b } else { lo + w };
            adapt(&f, lo, hi, abs_tol / panels as f64, 40)
        })
        .sum()
}

/// Upper limit `t` beyond which `exp(-z cosh t)` underflows.
fn cosh_cutoff(z: f64) -> f64 {
    (750.0 / z).max(1.0).acosh().max(1.0)
}

/// Modified Bessel function `K_0(z)` for `z > 0`, evaluated through
/// `K_0(z) = int_0^inf exp(-z cosh t) dt`.
pub fn bessel_k0(z: f64) -> f64 {
    assert!(z > 0.0, "K_0 requires z > 0");
    let upper = cosh_cutoff(z);
    // The integrand decays like exp(-z e^t / 2); scale the tolerance to its peak.
    let tol = 1e-14 * (-z).exp();
    integrate(|t| (-z * t.cosh()).exp(), 0.0, upper, tol)
}

/// `int_a^b K_0(z) dz` for `0 <= a <= b`, using
/// `int_a^b K_0 = int_0^inf (exp(-a cosh t) - exp(-b cosh t)) / cosh t dt`.
pub fn bessel_k0_integral(a: f64, b: f64) -> f64 {
    assert!(0.0 <= a && a <= b, "need 0 <= a <= b");
    if a == b {
        return 0.0;
    }
    let upper = if a > 0.0 { cosh_cutoff(a) } else { 40.0 };
    integrate(
        |t| {
            let c = t.cosh();
            ((-a * c).exp() - (-b * c).exp()) / c
        },
        0.0,
        upper,
        1e-13,
    )
}

/// `log I_0(x)` for `x >= 0` (modified Bessel function of the first kind).
pub fn log_bessel_i0(x: f64) -> f64 {
    let x = x.abs();
    if x < 50.0 {
        let q = 0.25 * x * x;
        let mut term = 1.0;
        let mut sum = 1.0;
        for k in 1..200 {
            let kf = k as f64;
            term *= q / (kf * kf);
            sum += term;
            if term < 1e-17 * sum {
                break;
            }
        }
        sum.ln()
    } else {
        let r = 1.0 / (8.0 * x);
        let series = 1.0 + r * (1.0 + r * (4.5 + r * (37.5 + r * 459.375)));
        x - 0.5 * (2.0 * PI * x).ln() + series.ln()
    }
}

/// Regularized lower incomplete gamma: CDF of Gamma(shape, rate) at `x`.
pub fn gamma_cdf_raw(x: f64, shape: f64, rate: f64) -> f64 {
    if x <= 0.0 {
        0.0
    } else {
        statrs::function::gamma::gamma_lr(shape, rate * x)
    }
}

/// Survival function of the chi-square distribution with `dof` degrees of freedom.
pub fn chi_square_sf(x: f64, dof: f64) -> f64 {
    if x <= 0.0 {
        1.0
    } else {
        statrs::function::gamma::gamma_ur(0.5 * dof, 0.5 * x)
    }
}

/// `ln n!`.
pub fn ln_factorial(n: u64) -> f64 {
    statrs::function::factorial::ln_factorial(n)
}

/// Limiting distribution of `sqrt(n) D` for the Kolmogorov-Smirnov statistic:
/// `Q(t) = 2 sum_{k>=1} (-1)^{k-1} exp(-2 k^2 t^2)`.
pub fn kolmogorov_sf(t: f64) -> f64 {
    if t < 0.2 {
        return 1.0;
    }
    let mut sum = 0.0;
    for k in 1..=100 {
        let kf = k as f64;
        let term = (-2.0 * kf * kf * t * t).exp();
        sum += if k % 2 == 1 { term } else { -term };
        if term < 1e-16 {
            break;
        }
    }
    (2.0 * sum).clamp(0.0, 1.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn quadrature_polynomial_and_exp() {
        assert_relative_eq!(integrate(|x| x * x, 0.0, 3.0, 1e-12), 9.0, max_relative = 1e-12);
        assert_relative_eq!(
            integrate(|x: f64| (-x).exp(), 0.0, 40.0, 1e-14),
            1.0 - (-40.0f64).exp(),
            max_relative = 1e-12
        );
    }

    #[test]
    fn k0_reference_values() {
        // Abramowitz & Stegun table 9.8.
        assert_relative_eq!(bessel_k0(1.0), 0.421_024_438_240_708_3, max_relative = 1e-10);
        assert_relative_eq!(bessel_k0(0.1), 2.427_069_024_702_017, max_relative = 1e-10);
        assert_relative_eq!(bessel_k0(5.0), 3.691_098_334_042_594e-3, max_relative = 1e-10);
    }

    #[test]
    fn k0_integral_total_mass() {
        // int_0^inf K_0 = pi / 2.
        assert_relative_eq!(bessel_k0_integral(0.0, 60.0), PI / 2.0, max_relative = 1e-10);
        let direct = integrate(bessel_k0, 1.0, 2.0, 1e-13);
        assert_relative_eq!(bessel_k0_integral(1.0, 2.0), direct, max_relative = 1e-9);
    }

    #[test]
    fn log_i0_matches_series_across_switch() {
        assert_relative_eq!(log_bessel_i0(0.0), 0.0);
        assert_relative_eq!(log_bessel_i0(1.0), 1.266_065_877_752_008_4f64.ln(), max_relative = 1e-12);
        // Slope of log I0 is I1/I0 = 1 - 1/(2x) - 1/(8x^2) + ... at large x.
        let below = log_bessel_i0(49.999_999);
        let above = log_bessel_i0(50.000_001);
        let slope = 1.0 - 1.0 / 100.0 - 1.0 / 20_000.0;
        assert!(((above - below) - 2e-6 * slope).abs() < 1e-9);
    }

    #[test]
    fn kolmogorov_tail_values() {
        assert_relative_eq!(kolmogorov_sf(1.358_1), 0.05, max_relative = 1e-3);
        assert_relative_eq!(kolmogorov_sf(1.627_6), 0.01, max_relative = 1e-3);
    }
}
