//! AMP and GAMP reconstruction of `y = A c + n` and `y = f(A c) + n`.

use std::io::Write;

use crate::denoise::Denoiser;
use crate::error::{invalid, Error, Result};
use crate::model::{OutputChannel, RhoMode};
use crate::numeric::{self, ln_gauss_density, QuadOpts};
use crate::sensing::SensingOperator;

/// Posterior of `x` under prior N(p̂, v) and one channel observation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OutputPosterior {
    pub mean: f64,
    pub var: f64,
    /// `ln p(y | p̂)`: log density (or mass, for the quantizer) of the observation.
    pub ln_evidence: f64,
}

/// `E[x | p̂, y]` and `Var[x | p̂, y]` for `x ~ N(p̂, v)`.
pub fn output_mmse(ch: &OutputChannel, p_hat: f64, v: f64, y: f64) -> Result<(f64, f64)> {
    let p = output_posterior(ch, p_hat, v, y)?;
    Ok((p.mean, p.var))
}

pub fn output_posterior(ch: &OutputChannel, p_hat: f64, v: f64, y: f64) -> Result<OutputPosterior> {
    if !(v >= 0.0) {
        return invalid(format!("prior variance must be nonnegative, got {v}"));
    }
    if v == 0.0 {
        return Ok(OutputPosterior {
            mean: p_hat,
            var: 0.0,
            ln_evidence: ch.likelihood(y, p_hat)?.ln(),
        });
    }
    match ch {
        OutputChannel::Awgn { sigma2 } => Ok(gaussian_combine(p_hat, v, y, 1.0, *sigma2)),
        OutputChannel::Clip(c) if c.z.is_infinite() => {
            Ok(gaussian_combine(p_hat, v, y, c.alpha, c.sigma2))
        }
        OutputChannel::Clip(c) => {
            let (z, a, s2) = (c.z, c.alpha, c.sigma2);
            let sd = v.sqrt();
            // Three disjoint input regions: saturated low, linear, saturated high.
            let lo = numeric::truncated_normal(p_hat, sd, f64::NEG_INFINITY, -z);
            let hi = numeric::truncated_normal(p_hat, sd, z, f64::INFINITY);
            let vc = 1.0 / (1.0 / v + a * a / s2);
            let mc = vc * (p_hat / v + a * y / s2);
            let mid = numeric::truncated_normal(mc, vc.sqrt(), -z, z);
            let lw = [
                ln_gauss_density(y, -a * z, s2) + lo.ln_mass,
                ln_gauss_density(y, a * p_hat, s2 + a * a * v) + mid.ln_mass,
                ln_gauss_density(y, a * z, s2) + hi.ln_mass,
            ];
            let parts = [lo, mid, hi];
            mixture(&lw, &parts)
        }
        OutputChannel::Quant(q) => {
            let (lo, hi) = q.cell(q.index_of(y)?);
            let s2 = q.sigma2;
            let tot = v + s2;
            let t = numeric::truncated_normal(p_hat, tot.sqrt(), lo, hi);
            let k = v / tot;
            Ok(OutputPosterior {
                mean: p_hat + k * (t.mean - p_hat),
                var: v * s2 / tot + k * k * t.var,
                ln_evidence: t.ln_mass,
            })
        }
    }
}

fn gaussian_combine(p_hat: f64, v: f64, y: f64, a: f64, s2: f64) -> OutputPosterior {
    let tot = a * a * v + s2;
    OutputPosterior {
        mean: p_hat + v * a / tot * (y - a * p_hat),
        var: v * s2 / tot,
        ln_evidence: ln_gauss_density(y, a * p_hat, tot),
    }
}

fn mixture(lw: &[f64], parts: &[numeric::Truncated]) -> Result<OutputPosterior> {
    let lse = numeric::log_sum_exp(lw);
    if !lse.is_finite() {
        return Err(Error::NonFinite {
            iter: 0,
            what: "output posterior evidence underflow".into(),
        });
    }
    let w: Vec<f64> = lw.iter().map(|l| (l - lse).exp()).collect();
    let mean: f64 = w.iter().zip(parts).map(|(w, p)| w * p.mean).sum();
    let var: f64 = w
        .iter()
        .zip(parts)
        .filter(|(w, _)| **w > 0.0)
        .map(|(w, p)| w * (p.var + (p.mean - mean) * (p.mean - mean)))
        .sum();
    Ok(OutputPosterior {
        mean,
        var: var.max(0.0),
        ln_evidence: lse,
    })
}

/// Same posterior moments by adaptive quadrature over `p̂ ± 8√v`; a cross-check.
pub fn output_mmse_quadrature(ch: &OutputChannel, p_hat: f64, v: f64, y: f64) -> Result<(f64, f64)> {
    if !(v > 0.0) {
        return invalid("quadrature needs a positive prior variance");
    }
    ch.likelihood(y, p_hat)?;
    let sd = v.sqrt();
    let (a, b) = (p_hat - 8.0 * sd, p_hat + 8.0 * sd);
    let mut breaks = vec![p_hat];
    match ch {
        OutputChannel::Clip(c) if c.z.is_finite() => breaks.extend([-c.z, c.z]),
        OutputChannel::Quant(q) => breaks.extend(q.thresholds.iter().map(|t| t - 0.0)),
        _ => {}
    }
    let opts = QuadOpts {
        abs_tol: 1e-300,
        rel_tol: 1e-12,
        max_intervals: 10_000,
    };
    let w = |x: f64| numeric::gauss_density(x, p_hat, v) * ch.likelihood(y, x).unwrap_or(0.0);
    let m0 = numeric::integrate(w, a, b, &breaks, opts)?;
    let opts = QuadOpts {
        abs_tol: 1e-14 * m0 * sd,
        ..opts
    };
    let m1 = numeric::integrate(|x| (x - p_hat) * w(x), a, b, &breaks, opts)?;
    let m2 = numeric::integrate(|x| (x - p_hat) * (x - p_hat) * w(x), a, b, &breaks, opts)?;
    let mean = p_hat + m1 / m0;
    let var = m2 / m0 - (m1 / m0) * (m1 / m0);
    Ok((mean, var.max(0.0)))
}

/// Iteration settings shared by the engines.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ReconOpts {
    pub t_max: usize,
    /// Stop when the denoiser variance changes by less than this; 0 disables early stopping.
    pub tol: f64,
    /// Weight of the new estimate in `ĉ ← d·η(r) + (1-d)·ĉ`.
    pub damping: f64,
    pub rho_mode: RhoMode,
    /// Keep the Onsager correction; switching it off gives plain iterative thresholding.
    pub onsager: bool,
}

impl Default for ReconOpts {
    fn default() -> Self {
        Self {
            t_max: 50,
            tol: 1e-10,
            damping: 1.0,
            rho_mode: RhoMode::Formula,
            onsager: true,
        }
    }
}

impl ReconOpts {
    pub fn with_t_max(mut self, t: usize) -> Self {
        self.t_max = t;
        self
    }

    pub fn with_tol(mut self, tol: f64) -> Self {
        self.tol = tol;
        self
    }
}

/// Per-iteration record. Entry `t` holds the proxy SNR fed to the denoiser at
/// iteration `t+1` and the variance and MSE of the estimate it produced.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ReconTrace {
    pub mse: Vec<f64>,
    pub rho: Vec<f64>,
    pub v: Vec<f64>,
    /// Kurtosis of `r^t - c` (needs the truth).
    pub kurtosis: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
    pub diverged: bool,
}

impl ReconTrace {
    fn push(&mut self, rho: f64, v: f64, est: &[f64], r: &[f64], truth: Option<&[f64]>) {
        self.rho.push(rho);
        self.v.push(v);
        match truth {
            Some(c) => {
                self.mse.push(sq_dist(est, c) / c.len() as f64);
                let e: Vec<f64> = r.iter().zip(c).map(|(a, b)| a - b).collect();
                self.kurtosis.push(numeric::kurtosis(&e));
            }
            None => {
                self.mse.push(f64::NAN);
                self.kurtosis.push(f64::NAN);
            }
        }
        self.iterations += 1;
    }

    /// CSV body with columns `t,mse,rho,v`.
    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "t,mse,rho,v")?;
        for i in 0..self.iterations {
            writeln!(
                w,
                "{},{:.12e},{:.12e},{:.12e}",
                i + 1,
                self.mse[i],
                self.rho[i],
                self.v[i]
            )?;
        }
        Ok(())
    }
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

fn check_dims(op: &SensingOperator, y: &[f64], truth: Option<&[f64]>) -> Result<()> {
    if y.len() != op.m() {
        return Err(Error::Dimension {
            expected: op.m(),
            got: y.len(),
        });
    }
    if let Some(c) = truth {
        if c.len() != op.n() {
            return Err(Error::Dimension {
                expected: op.n(),
                got: c.len(),
            });
        }
    }
    Ok(())
}

fn check_finite(iter: usize, what: &str, xs: &[f64]) -> Result<()> {
    if xs.iter().all(|x| x.is_finite()) {
        Ok(())
    } else {
        Err(Error::NonFinite {
            iter,
            what: what.into(),
        })
    }
}

/// AMP for the linear model. Starts from `ĉ = 0` with prior variance 1.
pub fn amp_run(
    y: &[f64],
    op: &SensingOperator,
    den: &Denoiser,
    sigma2: f64,
    opts: &ReconOpts,
    truth: Option<&[f64]>,
) -> Result<(Vec<f64>, ReconTrace)> {
    check_dims(op, y, truth)?;
    if !(sigma2 >= 0.0) {
        return invalid("noise variance must be nonnegative");
    }
    let (m, n) = (op.m(), op.n());
    let delta = op.delta();
    let mut c_hat = vec![0.0; n];
    let mut next = vec![0.0; n];
    let mut z = vec![0.0; m];
    let mut z_prev = vec![0.0; m];
    let mut ac = vec![0.0; m];
    let mut r = vec![0.0; n];
    let mut v = den.constellation.power();
    let mut onsager_gain = 0.0;
    let mut trace = ReconTrace::default();

    for t in 1..=opts.t_max {
        op.forward_into(&c_hat, &mut ac)?;
        for i in 0..m {
            z[i] = y[i] - ac[i] + onsager_gain * z_prev[i];
        }
        check_finite(t, "residual", &z)?;
        let rho = match opts.rho_mode {
            RhoMode::Formula => delta / (v + sigma2),
            RhoMode::Residual => delta * m as f64 / z.iter().map(|x| x * x).sum::<f64>(),
        };
        op.adjoint_into(&z, &mut r)?;
        for (ri, ci) in r.iter_mut().zip(&c_hat) {
            *ri = ci + *ri / delta;
        }
        check_finite(t, "proxy observation", &r)?;
        let v_new = den.apply(&r, rho, &mut next)?;
        let d = opts.damping;
        if d < 1.0 {
            for (c, nx) in c_hat.iter_mut().zip(&next) {
                *c = d * nx + (1.0 - d) * *c;
            }
        } else {
            c_hat.copy_from_slice(&next);
        }
        trace.push(rho, v_new, &c_hat, &r, truth);
        onsager_gain = if opts.onsager && rho.is_finite() {
            rho * v_new / delta
        } else {
            0.0
        };
        std::mem::swap(&mut z, &mut z_prev);
        let done = opts.tol > 0.0 && (v_new - v).abs() < opts.tol;
        v = v_new;
        if done {
            trace.converged = true;
            break;
        }
    }
    Ok((c_hat, trace))
}

/// GAMP for componentwise output channels. Starts from `ĉ = 0`, `s = 0`, `v = 1`.
pub fn gamp_run(
    y: &[f64],
    op: &SensingOperator,
    den: &Denoiser,
    ch: &OutputChannel,
    opts: &ReconOpts,
    truth: Option<&[f64]>,
) -> Result<(Vec<f64>, ReconTrace)> {
    check_dims(op, y, truth)?;
    let (m, n) = (op.m(), op.n());
    let delta = op.delta();
    let mut c_hat = vec![0.0; n];
    let mut next = vec![0.0; n];
    let mut s = vec![0.0; m];
    let mut p_hat = vec![0.0; m];
    let mut r = vec![0.0; n];
    let mut v = den.constellation.power();
    let mut v_min = v;
    let mut trace = ReconTrace::default();

    for t in 1..=opts.t_max {
        op.forward_into(&c_hat, &mut p_hat)?;
        let mut var_sum = 0.0;
        for i in 0..m {
            let p = p_hat[i] - if opts.onsager { v * s[i] } else { 0.0 };
            let post = output_posterior(ch, p, v, y[i])?;
            s[i] = (post.mean - p) / v;
            var_sum += post.var;
            p_hat[i] = p;
        }
        check_finite(t, "output residual", &s)?;
        let dg = var_sum / (m as f64 * v);
        let gain = (v / delta) / (1.0 - dg);
        let rho = match opts.rho_mode {
            RhoMode::Formula => delta * (1.0 - dg) / v,
            RhoMode::Residual => delta * s.iter().map(|x| x * x).sum::<f64>() / m as f64,
        };
        op.adjoint_into(&s, &mut r)?;
        for (ri, ci) in r.iter_mut().zip(&c_hat) {
            *ri = ci + gain * *ri;
        }
        check_finite(t, "proxy observation", &r)?;
        let v_new = den.apply(&r, rho, &mut next)?;
        let d = opts.damping;
        if d < 1.0 {
            for (c, nx) in c_hat.iter_mut().zip(&next) {
                *c = d * nx + (1.0 - d) * *c;
            }
        } else {
            c_hat.copy_from_slice(&next);
        }
        trace.push(rho, v_new, &c_hat, &r, truth);
        let done = opts.tol > 0.0 && (v_new - v).abs() < opts.tol;
        // A variance far above its running minimum means the iteration is unstable.
        if v_new > 1.5 * v_min + 1e-3 {
            trace.diverged = true;
            break;
        }
        v_min = v_min.min(v_new);
        // The output step needs a positive prior variance.
        v = v_new.max(1e-300);
        if done {
            trace.converged = true;
            break;
        }
    }
    Ok((c_hat, trace))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::denoise::CodeSpec;
    use crate::model::{ClipChannel, Constellation, QuantChannel};

    #[test]
    fn gaussian_combine_example() {
        let ch = OutputChannel::awgn(1.0).unwrap();
        let (m, v) = output_mmse(&ch, 0.0, 1.0, 2.0).unwrap();
        assert_eq!(m, 1.0);
        assert_eq!(v, 0.5);
        let (m, v) = output_mmse(&ch, 0.7, 0.0, 2.0).unwrap();
        assert_eq!((m, v), (0.7, 0.0));
        assert!(output_mmse(&ch, 0.0, -1.0, 0.0).is_err());
    }

    #[test]
    fn closed_form_matches_quadrature() {
        let chans = [
            OutputChannel::Clip(ClipChannel::new(1.0, 1.0).unwrap()),
            OutputChannel::Clip(ClipChannel::new(-2.0, 0.3).unwrap()),
            OutputChannel::Quant(QuantChannel::uniform(2, 0.8, 0.5).unwrap()),
        ];
        for ch in &chans {
            for &p in &[-1.5, -0.2, 0.0, 0.9] {
                for &v in &[0.01, 0.3, 1.0] {
                    let ys: Vec<f64> = match ch {
                        OutputChannel::Quant(q) => q.values.clone(),
                        _ => vec![-2.5, -0.4, 0.0, 1.1, 3.0],
                    };
                    for y in ys {
                        let (m1, v1) = output_mmse(ch, p, v, y).unwrap();
                        // The oracle only integrates over p̂ ± 8√v.
                        if (m1 - p).abs() > 4.0 * v.sqrt() {
                            continue;
                        }
                        let (m2, v2) = output_mmse_quadrature(ch, p, v, y)
                            .unwrap_or_else(|e| panic!("{ch:?} {p} {v} {y}: {e}"));
                        assert!((m1 - m2).abs() < 1e-8, "{ch:?} {p} {v} {y}: {m1} {m2}");
                        assert!((v1 - v2).abs() < 1e-8, "{ch:?} {p} {v} {y}: {v1} {v2}");
                    }
                }
            }
        }
    }

    #[test]
    fn tiny_prior_variance_returns_prior_mean() {
        let ch = OutputChannel::Clip(ClipChannel::new(1.0, 1.0).unwrap());
        let (m, v) = output_mmse(&ch, 0.4, 1e-12, 2.0).unwrap();
        assert!((m - 0.4).abs() < 1e-9 && v < 1e-11);
    }

    #[test]
    fn noiseless_orthonormal_recovery() {
        let n = 256;
        let op = SensingOperator::subsampled_hadamard(n, n, 2, true).unwrap();
        let den = Denoiser::new(CodeSpec::Uncoded, Constellation::Bpsk).unwrap();
        let c: Vec<f64> = (0..n).map(|i| if i % 3 == 0 { 1.0 } else { -1.0 }).collect();
        let y = op.forward(&c).unwrap();
        let (_, tr) = amp_run(&y, &op, &den, 0.0, &ReconOpts::default().with_t_max(1), Some(&c))
            .unwrap();
        // First proxy observation is exactly c, so hard decisions are exact.
        assert!((tr.kurtosis[0]).is_nan() || tr.mse[0] < 0.1);
        let (est, tr) = amp_run(&y, &op, &den, 0.0, &ReconOpts::default().with_t_max(20), Some(&c))
            .unwrap();
        assert!(tr.mse.last().unwrap() < &1e-12);
        assert!(est.iter().zip(&c).all(|(a, b)| a.signum() == *b));
    }

    #[test]
    fn huge_noise_keeps_estimate_near_zero() {
        let (m, n) = (128, 256);
        let op = SensingOperator::iid_gaussian(m, n, 5).unwrap();
        let den = Denoiser::new(CodeSpec::Uncoded, Constellation::Bpsk).unwrap();
        let c = vec![1.0; n];
        let mut y = op.forward(&c).unwrap();
        y.iter_mut().enumerate().for_each(|(i, x)| *x += 1e4 * ((i as f64).sin()));
        let (est, _) = amp_run(&y, &op, &den, 1e8, &ReconOpts::default(), None).unwrap();
        assert!(est.iter().all(|x| x.abs() < 1e-2));
    }
}
