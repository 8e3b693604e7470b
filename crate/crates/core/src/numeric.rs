//! Scalar numerics shared by the estimators and the state-evolution code:
//! normal tail probabilities in log space, truncated normal moments,
//! Gauss quadrature rules and an adaptive Gauss–Kronrod integrator.

use std::f64::consts::{FRAC_1_SQRT_2, PI, SQRT_2};

use crate::error::{Error, Result};

pub const LN_SQRT_2PI: f64 = 0.918_938_533_204_672_8;
pub const INV_SQRT_2PI: f64 = 0.398_942_280_401_432_7;

#[inline]
pub fn norm_pdf(x: f64) -> f64 {
    INV_SQRT_2PI * (-0.5 * x * x).exp()
}

#[inline]
pub fn ln_norm_pdf(x: f64) -> f64 {
    -0.5 * x * x - LN_SQRT_2PI
}

/// Density of N(mean, var) at `x`.
#[inline]
pub fn gauss_density(x: f64, mean: f64, var: f64) -> f64 {
    let d = x - mean;
    (-0.5 * d * d / var).exp() / (2.0 * PI * var).sqrt()
}

#[inline]
pub fn ln_gauss_density(x: f64, mean: f64, var: f64) -> f64 {
    let d = x - mean;
    -0.5 * d * d / var - 0.5 * (2.0 * PI * var).ln()
}

/// Standard normal CDF.
#[inline]
pub fn norm_cdf(x: f64) -> f64 {
    0.5 * libm::erfc(-x * FRAC_1_SQRT_2)
}

/// Standard normal survival function `1 - Φ(x)`, accurate in the upper tail.
#[inline]
pub fn norm_sf(x: f64) -> f64 {
    0.5 * libm::erfc(x * FRAC_1_SQRT_2)
}

/// `ln Φ(x)` without underflow for very negative `x`.
pub fn ln_norm_cdf(x: f64) -> f64 {
    if x == f64::NEG_INFINITY {
        return f64::NEG_INFINITY;
    }
    if x == f64::INFINITY {
        return 0.0;
    }
    if x < -37.0 {
        // Asymptotic Mills-ratio expansion.
        let x2 = x * x;
        let series = 1.0 - 1.0 / x2 + 3.0 / (x2 * x2) - 15.0 / (x2 * x2 * x2);
        ln_norm_pdf(x) - (-x).ln() + series.ln()
    } else if x > 5.0 {
        (-norm_sf(x)).ln_1p()
    } else {
        norm_cdf(x).ln()
    }
}

/// `ln(Φ(b) - Φ(a))` for `a < b`, stable in both tails.
pub fn ln_norm_cdf_diff(a: f64, b: f64) -> f64 {
    debug_assert!(a <= b);
    if a >= b {
        return f64::NEG_INFINITY;
    }
    if a == f64::NEG_INFINITY {
        return ln_norm_cdf(b);
    }
    if b == f64::INFINITY {
        return ln_norm_cdf(-a);
    }
    if a >= 0.0 {
        return ln_norm_cdf_diff(-b, -a);
    }
    if b <= 0.0 {
        let lb = ln_norm_cdf(b);
        let la = ln_norm_cdf(a);
        return lb + (-(la - lb).exp()).ln_1p();
    }
    (0.5 * (libm::erf(b * FRAC_1_SQRT_2) - libm::erf(a * FRAC_1_SQRT_2))).ln()
}

/// Mass (in log space), mean and variance of N(mean, sd²) restricted to `[lo, hi]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Truncated {
    pub ln_mass: f64,
    pub mean: f64,
    pub var: f64,
}

pub fn truncated_normal(mean: f64, sd: f64, lo: f64, hi: f64) -> Truncated {
    let a = (lo - mean) / sd;
    let b = (hi - mean) / sd;
    // Reflect into the lower half so the differences below stay well conditioned.
    let (a, b, sign) = if a > 0.0 { (-b, -a, -1.0) } else { (a, b, 1.0) };
    let ln_mass = ln_norm_cdf_diff(a, b);
    if ln_mass == f64::NEG_INFINITY {
        return Truncated {
            ln_mass,
            mean: mean + sign * sd * 0.5 * (a + b).clamp(-1e300, 1e300),
            var: 0.0,
        };
    }
    let (lam_a, a_lam_a) = if a == f64::NEG_INFINITY {
        (0.0, 0.0)
    } else {
        let l = (ln_norm_pdf(a) - ln_mass).exp();
        (l, a * l)
    };
    let (lam_b, b_lam_b) = if b == f64::INFINITY {
        (0.0, 0.0)
    } else {
        let l = (ln_norm_pdf(b) - ln_mass).exp();
        (l, b * l)
    };
    let m = lam_a - lam_b;
    let mut v = 1.0 + a_lam_a - b_lam_b - m * m;
    if v < 0.0 {
        v = 0.0;
    }
    if a.is_finite() && b.is_finite() {
        v = v.min(0.25 * (b - a) * (b - a));
    }
    Truncated {
        ln_mass,
        mean: mean + sign * sd * m,
        var: sd * sd * v,
    }
}

/// Numerically stable `ln Σ exp(x_i)`.
pub fn log_sum_exp(xs: &[f64]) -> f64 {
    let max = xs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return max;
    }
    max + xs.iter().map(|x| (x - max).exp()).sum::<f64>().ln()
}

/// Gauss–Legendre nodes and weights on `[-1, 1]`.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    assert!(n >= 1);
    let mut x = vec![0.0; n];
    let mut w = vec![0.0; n];
    let m = n.div_ceil(2);
    for i in 0..m {
        let mut z = (PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (mut p1, mut p2) = (1.0, 0.0);
            for j in 0..n {
                let p3 = p2;
                p2 = p1;
                p1 = ((2 * j + 1) as f64 * z * p2 - j as f64 * p3) / (j + 1) as f64;
            }
            dp = n as f64 * (z * p1 - p2) / (z * z - 1.0);
            let dz = p1 / dp;
            z -= dz;
            if dz.abs() < 1e-15 {
                break;
            }
        }
        x[i] = -z;
        x[n - 1 - i] = z;
        w[i] = 2.0 / ((1.0 - z * z) * dp * dp);
        w[n - 1 - i] = w[i];
    }
    (x, w)
}

/// Gauss–Hermite rule for `E[f(Z)]`, `Z ~ N(0, 1)` (probabilists' weights, summing to one).
pub fn gauss_hermite_normal(n: usize) -> (Vec<f64>, Vec<f64>) {
    assert!(n >= 1);
    // Physicists' rule by Newton iteration on orthonormal Hermite recurrences.
    let mut x = vec![0.0; n];
    let mut w = vec![0.0; n];
    let pim4 = PI.powf(-0.25);
    let m = n.div_ceil(2);
    let nf = n as f64;
    let mut z = 0.0;
    for i in 0..m {
        z = match i {
            0 => (2.0 * nf + 1.0).sqrt() - 1.85575 * (2.0 * nf + 1.0).powf(-1.0 / 6.0),
            1 => z - 1.14 * nf.powf(0.426) / z,
            2 => 1.86 * z - 0.86 * x[0],
            3 => 1.91 * z - 0.91 * x[1],
            _ => 2.0 * z - x[i - 2],
        };
        let mut pp = 0.0;
        for _ in 0..200 {
            let mut p1 = pim4;
            let mut p2 = 0.0;
            for j in 0..n {
                let p3 = p2;
                p2 = p1;
                let jf = j as f64;
                p1 = z * (2.0 / (jf + 1.0)).sqrt() * p2 - (jf / (jf + 1.0)).sqrt() * p3;
            }
            pp = (2.0 * nf).sqrt() * p2;
            let dz = p1 / pp;
            z -= dz;
            if dz.abs() < 1e-14 {
                break;
            }
        }
        x[i] = z;
        x[n - 1 - i] = -z;
        w[i] = 2.0 / (pp * pp);
        w[n - 1 - i] = w[i];
    }
    let nodes: Vec<f64> = x.iter().rev().map(|v| v * SQRT_2).collect();
    let weights: Vec<f64> = w.iter().rev().map(|v| v / PI.sqrt()).collect();
    (nodes, weights)
}

const GK_XK: [f64; 8] = [
    0.991_455_371_120_812_6,
    0.949_107_912_342_758_5,
    0.864_864_423_359_769_1,
    0.741_531_185_599_394_4,
    0.586_087_235_467_691_1,
    0.405_845_151_377_397_2,
    0.207_784_955_007_898_5,
    0.0,
];
const GK_WK: [f64; 8] = [
    0.022_935_322_010_529_22,
    0.063_092_092_629_978_55,
    0.104_790_010_322_250_2,
    0.140_653_259_715_525_9,
    0.169_004_726_639_267_9,
    0.190_350_578_064_785_4,
    0.204_432_940_075_298_9,
    0.209_482_141_084_727_8,
];
const GK_WG: [f64; 4] = [
    0.129_484_966_168_869_7,
    0.279_705_391_489_276_7,
    0.381_830_050_505_118_9,
    0.417_959_183_673_469_4,
];

fn gk15<F: FnMut(f64) -> f64>(f: &mut F, a: f64, b: f64) -> (f64, f64) {
    let c = 0.5 * (a + b);
    let h = 0.5 * (b - a);
    let fc = f(c);
    let mut kron = fc * GK_WK[7];
    let mut gauss = fc * GK_WG[3];
    for j in 0..7 {
        let dx = h * GK_XK[j];
        let s = f(c - dx) + f(c + dx);
        kron += GK_WK[j] * s;
        if j % 2 == 1 {
            gauss += GK_WG[j / 2] * s;
        }
    }
    (kron * h, ((kron - gauss) * h).abs())
}

/// Options for [`integrate`].
#[derive(Debug, Clone, Copy)]
pub struct QuadOpts {
    pub abs_tol: f64,
    pub rel_tol: f64,
    pub max_intervals: usize,
}

impl Default for QuadOpts {
    fn default() -> Self {
        Self {
            abs_tol: 1e-12,
            rel_tol: 1e-10,
            max_intervals: 4000,
        }
    }
}

/// Adaptive Gauss–Kronrod (7/15) integration of `f` over `[a, b]`, split first at `breaks`.
pub fn integrate<F: FnMut(f64) -> f64>(
    mut f: F,
    a: f64,
    b: f64,
    breaks: &[f64],
    opts: QuadOpts,
) -> Result<f64> {
    if a == b {
        return Ok(0.0);
    }
    let (lo, hi, sign) = if a < b { (a, b, 1.0) } else { (b, a, -1.0) };
    let mut pts = vec![lo];
    let mut inner: Vec<f64> = breaks.iter().cloned().filter(|&p| p > lo && p < hi).collect();
    inner.sort_by(|x, y| x.partial_cmp(y).unwrap());
    inner.dedup();
    pts.extend(inner);
    pts.push(hi);

    // Max-heap on error estimate, kept as a plain vector; interval counts are small.
    let mut work: Vec<(f64, f64, f64, f64)> = Vec::new();
    let mut total = 0.0;
    let mut err = 0.0;
    for w in pts.windows(2) {
        let (v, e) = gk15(&mut f, w[0], w[1]);
        total += v;
        err += e;
        work.push((w[0], w[1], v, e));
    }
    while err > opts.abs_tol.max(opts.rel_tol * total.abs()) {
        if work.len() >= opts.max_intervals {
            if err <= 1e3 * opts.abs_tol.max(opts.rel_tol * total.abs()) {
                break;
            }
            return Err(Error::Quadrature(format!(
                "no convergence on [{lo}, {hi}]: estimate {total:e}, error {err:e}"
            )));
        }
        let (idx, _) = work
            .iter()
            .enumerate()
            .max_by(|x, y| x.1 .3.partial_cmp(&y.1 .3).unwrap())
            .unwrap();
        let (a0, b0, v0, e0) = work.swap_remove(idx);
        let mid = 0.5 * (a0 + b0);
        let (v1, e1) = gk15(&mut f, a0, mid);
        let (v2, e2) = gk15(&mut f, mid, b0);
        total += v1 + v2 - v0;
        err += e1 + e2 - e0;
        if !total.is_finite() {
            return Err(Error::Quadrature(format!(
                "non-finite integrand on [{a0}, {b0}]"
            )));
        }
        work.push((a0, mid, v1, e1));
        work.push((mid, b0, v2, e2));
        if err < 0.0 {
            err = work.iter().map(|w| w.3).sum();
        }
    }
    Ok(sign * total)
}

/// Pool-adjacent-violators fit of a nonincreasing sequence (weighted least squares).
pub fn isotonic_nonincreasing(values: &[f64], weights: &[f64]) -> Vec<f64> {
    assert_eq!(values.len(), weights.len());
    let mut blocks: Vec<(f64, f64, usize)> = Vec::with_capacity(values.len());
    for (&v, &w) in values.iter().zip(weights) {
        let w = if w > 0.0 { w } else { 1e-300 };
        blocks.push((v, w, 1));
        while blocks.len() >= 2 {
            let n = blocks.len();
            if blocks[n - 2].0 >= blocks[n - 1].0 {
                break;
            }
            let (v2, w2, c2) = blocks.pop().unwrap();
            let (v1, w1, c1) = blocks.pop().unwrap();
            let w = w1 + w2;
            blocks.push(((v1 * w1 + v2 * w2) / w, w, c1 + c2));
        }
    }
    let mut out = Vec::with_capacity(values.len());
    for (v, _, c) in blocks {
        out.extend(std::iter::repeat_n(v, c));
    }
    out
}

/// Sample excess-free kurtosis `E[(x-μ)^4] / Var²`.
pub fn kurtosis(xs: &[f64]) -> f64 {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let (mut m2, mut m4) = (0.0, 0.0);
    for &x in xs {
        let d = (x - mean) * (x - mean);
        m2 += d;
        m4 += d * d;
    }
    m2 /= n;
    m4 /= n;
    m4 / (m2 * m2)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn log_cdf_tails() {
        assert!((ln_norm_cdf(0.0) - 0.5f64.ln()).abs() < 1e-15);
        // Matches the direct value where it is still representable.
        let x = -30.0;
        assert!((ln_norm_cdf(x) - norm_cdf(x).ln()).abs() < 1e-10);
        let x = -38.0;
        let y = -38.0 * 38.0 / 2.0 - LN_SQRT_2PI - 38f64.ln();
        assert!((ln_norm_cdf(x) - y).abs() < 1e-3);
        assert!(ln_norm_cdf(-1e3).is_finite());
    }

    #[test]
    fn cdf_diff_matches_direct() {
        for &(a, b) in &[(-1.0, 2.0), (0.5, 1.5), (-3.0, -2.0), (4.0, 9.0), (-9.0, -4.0)] {
            let direct = (norm_cdf(b) - norm_cdf(a)).ln();
            assert!((ln_norm_cdf_diff(a, b) - direct).abs() < 1e-9, "{a} {b}");
        }
        let far = ln_norm_cdf_diff(40.0, 41.0);
        assert!(far.is_finite() && far < -700.0);
    }

    #[test]
    fn truncated_moments_match_quadrature() {
        for &(m, s, lo, hi) in &[
            (0.3, 0.7, -1.0, 1.2),
            (0.0, 1.0, f64::NEG_INFINITY, -2.0),
            (2.0, 0.5, 1.0, f64::INFINITY),
            (-5.0, 0.2, -1.0, 1.0),
        ] {
            let t = truncated_normal(m, s, lo, hi);
            let l = if lo.is_finite() { lo } else { m - 40.0 * s };
            let h = if hi.is_finite() { hi } else { m + 40.0 * s };
            let opts = QuadOpts {
                abs_tol: 1e-300,
                rel_tol: 1e-12,
                ..Default::default()
            };
            let z = integrate(|x| gauss_density(x, m, s * s), l, h, &[], opts).unwrap();
            let m1 = integrate(|x| x * gauss_density(x, m, s * s), l, h, &[], opts).unwrap() / z;
            let m2 = integrate(|x| x * x * gauss_density(x, m, s * s), l, h, &[], opts).unwrap() / z;
            assert!((t.ln_mass - z.ln()).abs() < 1e-8, "mass {m} {s} {lo} {hi}");
            assert!((t.mean - m1).abs() < 1e-8, "mean {m} {s} {lo} {hi}");
            assert!((t.var - (m2 - m1 * m1)).abs() < 1e-8, "var {m} {s} {lo} {hi}");
        }
    }

    #[test]
    fn legendre_and_hermite_rules() {
        let (x, w) = gauss_legendre(10);
        let s: f64 = x.iter().zip(&w).map(|(x, w)| w * x.powi(6)).sum();
        assert!((s - 2.0 / 7.0).abs() < 1e-14);
        let (x, w) = gauss_hermite_normal(40);
        let m0: f64 = w.iter().sum();
        let m4: f64 = x.iter().zip(&w).map(|(x, w)| w * x.powi(4)).sum();
        assert!((m0 - 1.0).abs() < 1e-12);
        assert!((m4 - 3.0).abs() < 1e-10);
    }

    #[test]
    fn adaptive_integration() {
        let v = integrate(|x| (-x * x).exp(), -10.0, 10.0, &[], QuadOpts::default()).unwrap();
        assert!((v - PI.sqrt()).abs() < 1e-12);
        let v = integrate(|x| x.abs(), -1.0, 2.0, &[0.0], QuadOpts::default()).unwrap();
        assert!((v - 2.5).abs() < 1e-14);
        let v = integrate(|x| x, 1.0, 0.0, &[], QuadOpts::default()).unwrap();
        assert!((v + 0.5).abs() < 1e-15);
    }

    #[test]
    fn isotonic_pools_violations() {
        let fit = isotonic_nonincreasing(&[1.0, 0.8, 0.9, 0.3, 0.35, 0.1], &[1.0; 6]);
        assert_eq!(fit.len(), 6);
        for w in fit.windows(2) {
            assert!(w[0] >= w[1]);
        }
        assert!((fit[1] - 0.85).abs() < 1e-15 && (fit[2] - 0.85).abs() < 1e-15);
    }
}
