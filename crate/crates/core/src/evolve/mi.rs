//! Information measures of the Markov chain `p̂ → x → y` with
//! `p̂ ~ N(0, 1-v)`, `x | p̂ ~ N(p̂, v)`, `y ~ p(y|x)`.

use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

use super::curve::{Axis, TransferCurve};
use crate::error::{invalid, Result};
use crate::model::OutputChannel;
use crate::numeric::{self, QuadOpts};
use crate::recon::output_posterior;
use crate::seed::{self, Role};

const INNER: QuadOpts = QuadOpts {
    abs_tol: 1e-14,
    rel_tol: 1e-12,
    max_intervals: 2000,
};
const OUTER: QuadOpts = QuadOpts {
    abs_tol: 1e-13,
    rel_tol: 1e-11,
    max_intervals: 2000,
};

/// `(h(y | p̂), E[Var(x | p̂, y) | p̂])` for one value of `p̂`.
///
/// For the quantizer `h` is a discrete entropy.
pub fn conditional_terms(ch: &OutputChannel, p_hat: f64, v: f64) -> Result<(f64, f64)> {
    match ch {
        OutputChannel::Quant(q) => {
            let (mut h, mut e) = (0.0, 0.0);
            for &y in &q.values {
                let post = output_posterior(ch, p_hat, v, y)?;
                let p = post.ln_evidence.exp();
                if p > 0.0 {
                    h -= p * post.ln_evidence;
                    e += p * post.var;
                }
            }
            Ok((h, e))
        }
        _ => {
            let (alpha, z) = match ch {
                OutputChannel::Clip(c) => (c.alpha, c.z),
                _ => (1.0, f64::INFINITY),
            };
            let s2 = ch.sigma2();
            let sd = (alpha * alpha * v + s2).sqrt();
            let sig = s2.sqrt();
            let c = alpha * p_hat;
            let lo = (c - 12.0 * sd).max(-alpha * z - 12.0 * sig);
            let hi = (c + 12.0 * sd).min(alpha * z + 12.0 * sig);
            let mut breaks = vec![c];
            if z.is_finite() {
                breaks.extend([-alpha * z, alpha * z]);
            }
            let h = numeric::integrate(
                |y| {
                    let p = output_posterior(ch, p_hat, v, y).expect("continuous output");
                    let d = p.ln_evidence.exp();
                    if d > 0.0 {
                        -d * p.ln_evidence
                    } else {
                        0.0
                    }
                },
                lo,
                hi,
                &breaks,
                INNER,
            )?;
            let e = if v == 0.0 {
                0.0
            } else {
                numeric::integrate(
                    |y| {
                        let p = output_posterior(ch, p_hat, v, y).expect("continuous output");
                        p.ln_evidence.exp() * p.var
                    },
                    lo,
                    hi,
                    &breaks,
                    QuadOpts {
                        abs_tol: 1e-15 * v.max(1e-300),
                        ..INNER
                    },
                )?
            };
            Ok((h, e))
        }
    }
}

/// Expectation over `p̂ ~ N(0, 1-v)` of `f(p̂)`.
fn over_phat(v: f64, f: impl Fn(f64) -> Result<f64>) -> Result<f64> {
    let s = (1.0 - v).max(0.0).sqrt();
    if s == 0.0 {
        return f(0.0);
    }
    let mut err = None;
    let val = numeric::integrate(
        |z| match f(s * z) {
            Ok(x) => x * numeric::norm_pdf(z),
            Err(e) => {
                err.get_or_insert(e);
                0.0
            }
        },
        -9.0,
        9.0,
        &[0.0],
        OUTER,
    )?;
    match err {
        Some(e) => Err(e),
        None => Ok(val),
    }
}

/// Output entropy `h(y)` for `x ~ N(0, 1)`.
pub fn output_entropy(ch: &OutputChannel) -> Result<f64> {
    Ok(conditional_terms(ch, 0.0, 1.0)?.0)
}

/// `I(p̂; y)` in nats.
pub fn mi_phat(ch: &OutputChannel, v: f64) -> Result<f64> {
    if !(0.0..=1.0).contains(&v) {
        return invalid("v must lie in [0, 1]");
    }
    let hy = output_entropy(ch)?;
    let hc = over_phat(v, |p| Ok(conditional_terms(ch, p, v)?.0))?;
    Ok(hy - hc)
}

/// `I(y; x)` in nats for `x ~ N(0, 1)`.
pub fn mutual_info_channel(ch: &OutputChannel) -> Result<f64> {
    match ch {
        OutputChannel::Awgn { sigma2 } => Ok(0.5 * (1.0 / sigma2).ln_1p()),
        _ => mi_phat(ch, 0.0),
    }
}

/// `mmse(x | p̂, y)` at prior variance `v`.
pub fn output_mmse_avg(ch: &OutputChannel, v: f64) -> Result<f64> {
    if !(v > 0.0 && v <= 1.0) {
        return invalid("v must lie in (0, 1]");
    }
    if let OutputChannel::Awgn { sigma2 } = ch {
        return Ok(v * sigma2 / (v + sigma2));
    }
    over_phat(v, |p| Ok(conditional_terms(ch, p, v)?.1))
}

/// `φ̄(v) = (δ/v)(1 - mmse(x|p̂,y)/v)` by deterministic quadrature.
pub fn varphi_quad(v: f64, delta: f64, ch: &OutputChannel) -> Result<f64> {
    let m = output_mmse_avg(ch, v)?;
    Ok(delta / v * (1.0 - m / v))
}

/// `φ̄(v)/δ` tabulated on `v_grid` (which must start at 0 and end at 1); the
/// value at `v = 0` is extrapolated linearly from the next two points.
pub fn varphi_curve(ch: &OutputChannel, v_grid: &[f64]) -> Result<TransferCurve> {
    if v_grid.len() < 3 || v_grid[0] != 0.0 || *v_grid.last().unwrap() != 1.0 {
        return invalid("φ̄ grid must run from 0 to 1 with at least 3 points");
    }
    let inner: Vec<f64> = v_grid[1..]
        .par_iter()
        .map(|&v| varphi_quad(v, 1.0, ch))
        .collect::<Result<_>>()?;
    let (v1, v2) = (v_grid[1], v_grid[2]);
    let g0 = inner[0] + (inner[0] - inner[1]) * v1 / (v2 - v1);
    let mut vals = vec![g0.max(inner[0])];
    vals.extend(inner);
    // Quadrature noise can leave tiny upward wiggles; force monotonicity.
    let w = vec![1.0; vals.len()];
    let vals = numeric::isotonic_nonincreasing(&vals, &w);
    TransferCurve::new(Axis::V, v_grid.to_vec(), vals)
}

/// Monte Carlo `φ̄(v)` with its standard error.
///
/// Samples `(p̂, x, y)` from common random numbers keyed by `seed`, so curves over
/// a `v` grid are smooth.
pub fn varphi_general(
    v: f64,
    delta: f64,
    ch: &OutputChannel,
    samples: usize,
    seed: u64,
) -> Result<(f64, f64)> {
    if v == 0.0 {
        return invalid("φ̄ is defined for v > 0; use the limit of the tabulated curve");
    }
    if !(v > 0.0 && v <= 1.0) {
        return invalid("v must lie in (0, 1]");
    }
    if samples < 2 {
        return invalid("need at least two samples");
    }
    const CHUNK: usize = 4096;
    let chunks = samples.div_ceil(CHUNK);
    let parts: Vec<(f64, f64, usize)> = (0..chunks)
        .into_par_iter()
        .map(|c| {
            let mut rng = seed::rng(seed, Role::Varphi, &[c as u64]);
            let n = CHUNK.min(samples - c * CHUNK);
            let (mut s1, mut s2) = (0.0, 0.0);
            for _ in 0..n {
                let u: f64 = rng.sample(StandardNormal);
                let e: f64 = rng.sample(StandardNormal);
                let w: f64 = rng.sample(StandardNormal);
                let p = (1.0 - v).sqrt() * u;
                let x = p + v.sqrt() * e;
                let y = ch.sample(x, w);
                let var = output_posterior(ch, p, v, y).map(|q| q.var).unwrap_or(v);
                let t = 1.0 - var / v;
                s1 += t;
                s2 += t * t;
            }
            (s1, s2, n)
        })
        .collect();
    let (mut s1, mut s2, mut n) = (0.0, 0.0, 0usize);
    for (a, b, k) in parts {
        s1 += a;
        s2 += b;
        n += k;
    }
    let nf = n as f64;
    let mean = s1 / nf;
    let var = (s2 / nf - mean * mean).max(0.0) * nf / (nf - 1.0);
    let scale = delta / v;
    Ok((scale * mean, scale * (var / nf).sqrt()))
}

/// Largest deviation between `-∂I(p̂;y)/∂v` (central differences with one
/// Richardson step) and `(1/2v)(1 - mmse(x|p̂,y)/v)` over `v_list`.
pub fn mi_identity_check(ch: &OutputChannel, v_list: &[f64]) -> Result<f64> {
    let mut worst: f64 = 0.0;
    for &v in v_list {
        if !(v > 0.0 && v < 1.0) {
            return invalid("identity check needs v strictly inside (0, 1)");
        }
        let h = 2e-3 * v.min(1.0 - v).min(0.5);
        let d = |h: f64| -> Result<f64> {
            Ok(-(mi_phat(ch, v + h)? - mi_phat(ch, v - h)?) / (2.0 * h))
        };
        let d1 = d(h)?;
        let d2 = d(0.5 * h)?;
        let lhs = (4.0 * d2 - d1) / 3.0;
        let m = output_mmse_avg(ch, v)?;
        let rhs = (1.0 - m / v) / (2.0 * v);
        worst = worst.max((lhs - rhs).abs());
    }
    Ok(worst)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{ClipChannel, QuantChannel};

    #[test]
    fn awgn_closed_forms() {
        let ch = OutputChannel::awgn(1.0).unwrap();
        let i = mutual_info_channel(&ch).unwrap();
        assert!((i - 0.5 * 2f64.ln()).abs() < 1e-15);
        // Quadrature path against the closed form.
        let iq = mi_phat(&ch, 0.0).unwrap();
        assert!((iq - i).abs() < 1e-9, "{iq} {i}");
        let v = 0.4;
        let want = 0.5 * (2.0f64 / (v + 1.0)).ln();
        assert!((mi_phat(&ch, v).unwrap() - want).abs() < 1e-9);
        assert!((varphi_quad(v, 0.5, &ch).unwrap() - 0.5 / (v + 1.0)).abs() < 1e-12);
    }

    #[test]
    fn clip_at_infinity_is_linear() {
        let ch = OutputChannel::Clip(ClipChannel::new(f64::INFINITY, 0.5).unwrap());
        let i = mutual_info_channel(&ch).unwrap();
        assert!((i - 0.5 * 3f64.ln()).abs() < 1e-9);
    }

    #[test]
    fn quantizer_information_bounded() {
        let ch = OutputChannel::Quant(QuantChannel::uniform(1, 1.0, 0.25).unwrap());
        let i = mutual_info_channel(&ch).unwrap();
        assert!(i > 0.0 && i < 2f64.ln());
    }

    #[test]
    fn monte_carlo_matches_quadrature() {
        let ch = OutputChannel::Clip(ClipChannel::new(1.0, 1.0).unwrap());
        for &v in &[0.2, 0.7] {
            let q = varphi_quad(v, 0.5, &ch).unwrap();
            let (m, se) = varphi_general(v, 0.5, &ch, 40_000, 3).unwrap();
            assert!((m - q).abs() < 4.0 * se + 1e-4, "v={v}: {m} ± {se} vs {q}");
        }
        assert!(varphi_general(0.0, 0.5, &ch, 100, 1).is_err());
    }
}
