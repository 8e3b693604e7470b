//! Posterior-mean denoisers for the proxy model `r = c + ρ^{-1/2} w`.

use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::evolve::curve::{Axis, TransferCurve};
use crate::model::Constellation;
use crate::numeric::{self, QuadOpts};
use crate::seed::{self, Role};
use crate::sensing::fht_raw;

/// FEC code applied before compression. Coded variants map bits to BPSK.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum CodeSpec {
    #[default]
    Uncoded,
    /// Every bit sent `l` times.
    Repetition { l: usize },
    /// Bi-orthogonal code: the rows of an `n × n` Hadamard matrix and their negations.
    HadamardBlock { n: usize },
}

impl CodeSpec {
    pub fn block_len(&self) -> usize {
        match *self {
            CodeSpec::Uncoded => 1,
            CodeSpec::Repetition { l } => l.max(1),
            CodeSpec::HadamardBlock { n } => n.max(1),
        }
    }

    /// Information bits per code block.
    pub fn info_bits(&self) -> usize {
        match *self {
            CodeSpec::Uncoded | CodeSpec::Repetition { .. } => 1,
            CodeSpec::HadamardBlock { n } => (2 * n).trailing_zeros() as usize,
        }
    }

    /// Code rate in information bits per coded binary symbol.
    pub fn rate(&self) -> f64 {
        self.info_bits() as f64 / self.block_len() as f64
    }

    pub fn validate(&self) -> Result<()> {
        match *self {
            CodeSpec::Uncoded => Ok(()),
            CodeSpec::Repetition { l } if l >= 1 => Ok(()),
            CodeSpec::HadamardBlock { n } if n >= 2 && n.is_power_of_two() => Ok(()),
            _ => invalid(format!("unsupported code {self:?}")),
        }
    }
}

/// Posterior means with their average variance and divergence.
#[derive(Debug, Clone, PartialEq)]
pub struct DenoiseResult {
    pub mean: Vec<f64>,
    pub avg_var: f64,
    pub divergence: f64,
}

fn check_rho(rho: f64) -> Result<()> {
    if rho >= 0.0 {
        Ok(())
    } else {
        invalid(format!("proxy SNR must be nonnegative, got {rho}"))
    }
}

#[inline]
fn soft_bit(rho: f64, r: f64) -> f64 {
    if rho.is_infinite() {
        if r > 0.0 {
            1.0
        } else if r < 0.0 {
            -1.0
        } else {
            0.0
        }
    } else {
        (rho * r).tanh()
    }
}

/// Separable BPSK posterior mean `tanh(ρ r)`.
pub fn denoise_bpsk(r: &[f64], rho: f64) -> Result<DenoiseResult> {
    Denoiser::new(CodeSpec::Uncoded, Constellation::Bpsk)?.denoise(r, rho)
}

/// Exact symbol-wise APP decoding of a block code.
pub fn denoise_block_app(code: CodeSpec, r: &[f64], rho: f64) -> Result<DenoiseResult> {
    Denoiser::new(code, Constellation::Bpsk)?.denoise(r, rho)
}

/// Bayes denoiser for a code over a constellation.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Denoiser {
    pub code: CodeSpec,
    pub constellation: Constellation,
}

impl Denoiser {
    pub fn new(code: CodeSpec, constellation: Constellation) -> Result<Self> {
        code.validate()?;
        if code != CodeSpec::Uncoded && constellation != Constellation::Bpsk {
            return invalid("coded transmission is only defined over BPSK");
        }
        Ok(Self {
            code,
            constellation,
        })
    }

    pub fn block_len(&self) -> usize {
        self.code.block_len()
    }

    pub fn denoise(&self, r: &[f64], rho: f64) -> Result<DenoiseResult> {
        let mut mean = vec![0.0; r.len()];
        let avg_var = self.apply(r, rho, &mut mean)?;
        let divergence = if avg_var == 0.0 { 0.0 } else { rho * avg_var };
        Ok(DenoiseResult {
            mean,
            avg_var,
            divergence,
        })
    }

    /// Writes posterior means into `mean` and returns the average posterior variance.
    pub fn apply(&self, r: &[f64], rho: f64, mean: &mut [f64]) -> Result<f64> {
        check_rho(rho)?;
        if r.len() != mean.len() {
            return Err(Error::Dimension {
                expected: r.len(),
                got: mean.len(),
            });
        }
        let b = self.block_len();
        if !r.len().is_multiple_of(b) {
            return invalid(format!(
                "length {} is not a multiple of the block length {b}",
                r.len()
            ));
        }
        if r.is_empty() {
            return Ok(0.0);
        }
        let total_var = match (self.code, self.constellation) {
            (CodeSpec::Uncoded, Constellation::Bpsk) => {
                let mut s = 0.0;
                for (m, &x) in mean.iter_mut().zip(r) {
                    *m = soft_bit(rho, x);
                    s += 1.0 - *m * *m;
                }
                s
            }
            (CodeSpec::Uncoded, c) => {
                let pts = c.points();
                let mut s = 0.0;
                let mut logw = vec![0.0; pts.len()];
                for (m, &x) in mean.iter_mut().zip(r) {
                    let (mu, var) = discrete_posterior(pts, x, rho, &mut logw);
                    *m = mu;
                    s += var;
                }
                s
            }
            (CodeSpec::Repetition { l }, _) => {
                let mut s = 0.0;
                for (mb, rb) in mean.chunks_exact_mut(l).zip(r.chunks_exact(l)) {
                    let m = soft_bit(rho, rb.iter().sum());
                    mb.iter_mut().for_each(|x| *x = m);
                    s += l as f64 * (1.0 - m * m);
                }
                s
            }
            (CodeSpec::HadamardBlock { n }, _) => {
                let mut s = 0.0;
                let mut buf = vec![0.0; n];
                for (mb, rb) in mean.chunks_exact_mut(n).zip(r.chunks_exact(n)) {
                    s += hadamard_app(rb, rho, &mut buf, mb);
                }
                s
            }
        };
        Ok((total_var / r.len() as f64).clamp(0.0, 1.0))
    }

    /// Monte Carlo divergence `(1/N) Σ bᵢ ∂ηᵢ/∂rᵢ` with Rademacher probes and finite differences.
    pub fn divergence_mc(&self, r: &[f64], rho: f64, probes: usize, seed: u64) -> Result<f64> {
        let eps = 1e-5 * (1.0 + r.iter().map(|x| x.abs()).sum::<f64>() / r.len().max(1) as f64);
        let mut base = vec![0.0; r.len()];
        self.apply(r, rho, &mut base)?;
        let mut acc = 0.0;
        let mut pert = vec![0.0; r.len()];
        let mut out = vec![0.0; r.len()];
        for p in 0..probes.max(1) {
            let mut rng = seed::rng(seed, Role::Divergence, &[p as u64]);
            let signs: Vec<f64> = (0..r.len())
                .map(|_| if rng.random::<bool>() { 1.0 } else { -1.0 })
                .collect();
            for ((q, &x), &s) in pert.iter_mut().zip(r).zip(&signs) {
                *q = x + eps * s;
            }
            self.apply(&pert, rho, &mut out)?;
            acc += signs
                .iter()
                .zip(out.iter().zip(&base))
                .map(|(s, (o, b))| s * (o - b))
                .sum::<f64>()
                / eps;
        }
        Ok(acc / (probes.max(1) * r.len()) as f64)
    }

    /// Draw a random codeword of `len` symbols.
    pub fn random_codeword<R: Rng>(&self, len: usize, rng: &mut R) -> Vec<f64> {
        let mut c = vec![0.0; len];
        match self.code {
            CodeSpec::Uncoded => {
                let pts = self.constellation.points();
                for x in c.iter_mut() {
                    *x = pts[rng.random_range(0..pts.len())];
                }
            }
            CodeSpec::Repetition { l } => {
                for blk in c.chunks_mut(l) {
                    let s = if rng.random::<bool>() { 1.0 } else { -1.0 };
                    blk.iter_mut().for_each(|x| *x = s);
                }
            }
            CodeSpec::HadamardBlock { n } => {
                for blk in c.chunks_mut(n) {
                    let row = rng.random_range(0..n);
                    let s = if rng.random::<bool>() { 1.0 } else { -1.0 };
                    for (j, x) in blk.iter_mut().enumerate() {
                        *x = if (row & j).count_ones() % 2 == 0 { s } else { -s };
                    }
                }
            }
        }
        c
    }
}

/// Posterior mean and variance of a uniform discrete prior observed in Gaussian noise.
fn discrete_posterior(pts: &[f64], r: f64, rho: f64, logw: &mut [f64]) -> (f64, f64) {
    if rho.is_infinite() {
        let s = pts
            .iter()
            .cloned()
            .min_by(|a, b| (a - r).abs().partial_cmp(&(b - r).abs()).unwrap())
            .unwrap();
        return (s, 0.0);
    }
    for (l, &s) in logw.iter_mut().zip(pts) {
        *l = -0.5 * rho * (r - s) * (r - s);
    }
    let lse = numeric::log_sum_exp(logw);
    let (mut m1, mut m2) = (0.0, 0.0);
    for (l, &s) in logw.iter().zip(pts) {
        let p = (l - lse).exp();
        m1 += p * s;
        m2 += p * s * s;
    }
    (m1, (m2 - m1 * m1).max(0.0))
}

/// APP means for one bi-orthogonal Hadamard block; returns the summed posterior variance.
fn hadamard_app(r: &[f64], rho: f64, buf: &mut [f64], mean: &mut [f64]) -> f64 {
    let n = r.len();
    buf.copy_from_slice(r);
    fht_raw(buf).expect("block length is a power of two");
    // Codeword ±h_i has log-likelihood ±ρ t_i up to a constant.
    if rho.is_infinite() {
        let (best, _) = buf
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.abs().partial_cmp(&b.1.abs()).unwrap())
            .unwrap();
        let s = buf[best].signum();
        for (j, m) in mean.iter_mut().enumerate() {
            *m = if (best & j).count_ones() % 2 == 0 { s } else { -s };
        }
        return 0.0;
    }
    let top = buf.iter().fold(0.0f64, |a, &t| a.max((rho * t).abs()));
    let mut z = 0.0;
    for t in buf.iter_mut() {
        let a = rho * *t;
        let ep = (a - top).exp();
        let em = (-a - top).exp();
        z += ep + em;
        *t = ep - em;
    }
    buf.iter_mut().for_each(|w| *w /= z);
    fht_raw(buf).expect("block length is a power of two");
    let mut s = 0.0;
    for (m, &b) in mean.iter_mut().zip(buf.iter()) {
        *m = b.clamp(-1.0, 1.0);
        s += 1.0 - *m * *m;
    }
    debug_assert_eq!(mean.len(), n);
    s
}

/// `mmse(S, ρ)`: MMSE of a uniform symbol from `S` observed at SNR `ρ`.
pub fn mmse_scalar(c: Constellation, rho: f64) -> f64 {
    if rho <= 0.0 {
        return c.power();
    }
    if rho.is_infinite() {
        return 0.0;
    }
    let pts = c.points();
    let sq = rho.sqrt();
    let opts = QuadOpts {
        abs_tol: 1e-300,
        rel_tol: 1e-11,
        max_intervals: 2000,
    };
    match c {
        Constellation::Bpsk => {
            // E_z[1 - tanh(ρ + √ρ z)], written to avoid cancellation.
            let f = |z: f64| 2.0 / (1.0 + (2.0 * (rho + sq * z)).exp()) * numeric::norm_pdf(z);
            let val = numeric::integrate(f, -40.0, 40.0, &[-sq], opts)
                .unwrap_or_else(|_| hermite_fallback(|z| 1.0 - (rho + sq * z).tanh()));
            val.clamp(0.0, 1.0)
        }
        _ => {
            let mut total = 0.0;
            let mids: Vec<f64> = pts.windows(2).map(|w| 0.5 * (w[0] + w[1])).collect();
            for &s in pts {
                let breaks: Vec<f64> = mids.iter().map(|&b| (b - s) * sq).collect();
                let f = |z: f64| {
                    let mut logw = vec![0.0; pts.len()];
                    let (_, v) = discrete_posterior(pts, s + z / sq, rho, &mut logw);
                    v * numeric::norm_pdf(z)
                };
                total += numeric::integrate(f, -40.0, 40.0, &breaks, opts).unwrap_or_else(|_| {
                    hermite_fallback(|z| {
                        let mut logw = vec![0.0; pts.len()];
                        discrete_posterior(pts, s + z / sq, rho, &mut logw).1
                    })
                });
            }
            (total / pts.len() as f64).clamp(0.0, c.power())
        }
    }
}

fn hermite_fallback(f: impl Fn(f64) -> f64) -> f64 {
    let (x, w) = numeric::gauss_hermite_normal(120);
    x.iter().zip(&w).map(|(&x, &w)| w * f(x)).sum()
}

/// Symbols per Monte Carlo trial in [`psi_estimate`], rounded up to whole blocks.
pub const TRIAL_SYMBOLS: usize = 1024;

/// Monte Carlo transfer curve `ψ(ρ)` with standard errors, made nonincreasing.
///
/// Each trial uses its own substream, shared across the grid so the curve is smooth.
pub fn psi_estimate(
    code: CodeSpec,
    constellation: Constellation,
    rho_grid: &[f64],
    trials: usize,
    seed: u64,
) -> Result<TransferCurve> {
    if rho_grid.is_empty() {
        return invalid("empty SNR grid");
    }
    if trials == 0 {
        return invalid("need at least one trial");
    }
    if rho_grid.windows(2).any(|w| w[0] >= w[1]) || rho_grid[0] < 0.0 {
        return invalid("SNR grid must be nonnegative and strictly increasing");
    }
    let den = Denoiser::new(code, constellation)?;
    let b = den.block_len();
    let len = TRIAL_SYMBOLS.div_ceil(b) * b;

    // per_trial[t][g] = squared-error average of trial t at grid point g.
    let per_trial: Vec<Vec<f64>> = (0..trials)
        .into_par_iter()
        .map(|t| {
            let mut rng = seed::rng(seed, Role::Psi, &[t as u64]);
            let c = den.random_codeword(len, &mut rng);
            let w: Vec<f64> = (0..len).map(|_| rng.sample(StandardNormal)).collect();
            let mut r = vec![0.0; len];
            let mut m = vec![0.0; len];
            rho_grid
                .iter()
                .map(|&rho| {
                    if rho == 0.0 {
                        return c.iter().map(|x| x * x).sum::<f64>() / len as f64;
                    }
                    let s = 1.0 / rho.sqrt();
                    for ((ri, ci), wi) in r.iter_mut().zip(&c).zip(&w) {
                        *ri = ci + s * wi;
                    }
                    den.apply(&r, rho, &mut m).expect("lengths are consistent");
                    m.iter().zip(&c).map(|(a, b)| (a - b) * (a - b)).sum::<f64>() / len as f64
                })
                .collect()
        })
        .collect();

    let g = rho_grid.len();
    let mut mean = vec![0.0; g];
    let mut se = vec![0.0; g];
    for j in 0..g {
        let xs: Vec<f64> = per_trial.iter().map(|row| row[j]).collect();
        let mu = xs.iter().sum::<f64>() / trials as f64;
        let var = if trials > 1 {
            xs.iter().map(|x| (x - mu) * (x - mu)).sum::<f64>() / (trials - 1) as f64
        } else {
            0.0
        };
        mean[j] = mu;
        se[j] = (var / trials as f64).sqrt();
    }
    let weights: Vec<f64> = se.iter().map(|s| 1.0 / (s * s).max(1e-30)).collect();
    let fitted = numeric::isotonic_nonincreasing(&mean, &weights);

    let (mut knots, mut vals, mut errs) = (Vec::new(), Vec::new(), Vec::new());
    if rho_grid[0] > 0.0 {
        knots.push(0.0);
        vals.push(constellation.power());
        errs.push(0.0);
    }
    knots.extend_from_slice(rho_grid);
    vals.extend(fitted.iter().map(|v| v.min(constellation.power())));
    errs.extend(se);
    Ok(TransferCurve::new(Axis::Rho, knots, vals)?
        .with_stderr(errs)
        .with_tail(constellation))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn bpsk_examples() {
        let d = denoise_bpsk(&[0.5, -2.0, 0.0], 0.0).unwrap();
        assert!(d.mean.iter().all(|&m| m == 0.0));
        assert_eq!(d.avg_var, 1.0);
        let d = denoise_bpsk(&[0.5], 1.0).unwrap();
        assert!((d.mean[0] - 0.5f64.tanh()).abs() < 1e-15);
        assert!((d.divergence - d.avg_var).abs() < 1e-15);
        let d = denoise_bpsk(&[0.3], 1e6).unwrap();
        assert!((d.mean[0] - 1.0).abs() < 1e-12);
        assert!(denoise_bpsk(&[0.3], -1.0).is_err());
    }

    #[test]
    fn repetition_equals_combined_bpsk() {
        let r = [0.3, -0.1, 0.5, 0.2, 0.2, -0.9];
        let d = denoise_block_app(CodeSpec::Repetition { l: 3 }, &r, 0.8).unwrap();
        for (k, blk) in r.chunks(3).enumerate() {
            let m = (0.8 * blk.iter().sum::<f64>()).tanh();
            for j in 0..3 {
                assert!((d.mean[3 * k + j] - m).abs() < 1e-15);
            }
        }
    }

    fn brute_force(n: usize, r: &[f64], rho: f64) -> Vec<f64> {
        let mut num = vec![0.0; n];
        let mut den = 0.0;
        for row in 0..n {
            for s in [1.0, -1.0] {
                let c: Vec<f64> = (0..n)
                    .map(|j| if (row & j).count_ones() % 2 == 0 { s } else { -s })
                    .collect();
                let ll: f64 = c.iter().zip(r).map(|(c, r)| -0.5 * rho * (r - c) * (r - c)).sum();
                let p = ll.exp();
                den += p;
                for j in 0..n {
                    num[j] += p * c[j];
                }
            }
        }
        num.iter().map(|x| x / den).collect()
    }

    #[test]
    fn hadamard_app_matches_enumeration() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for &n in &[4usize, 8, 16] {
            let r: Vec<f64> = (0..n).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
            let d = denoise_block_app(CodeSpec::HadamardBlock { n }, &r, 2.0).unwrap();
            let want = brute_force(n, &r, 2.0);
            for (a, b) in d.mean.iter().zip(&want) {
                assert!((a - b).abs() < 1e-12, "n={n}");
            }
        }
        let d = denoise_block_app(CodeSpec::HadamardBlock { n: 4 }, &[0.3, -1.0, 2.0, 0.1], 0.0)
            .unwrap();
        assert!(d.mean.iter().all(|m| m.abs() < 1e-15));
        assert!(denoise_block_app(CodeSpec::HadamardBlock { n: 4 }, &[0.0; 6], 1.0).is_err());
    }

    #[test]
    fn code_rates() {
        assert_eq!(CodeSpec::Uncoded.rate(), 1.0);
        assert_eq!(CodeSpec::Repetition { l: 4 }.rate(), 0.25);
        assert_eq!(CodeSpec::HadamardBlock { n: 16 }.rate(), 5.0 / 16.0);
        assert!(CodeSpec::HadamardBlock { n: 12 }.validate().is_err());
    }

    #[test]
    fn mmse_limits_and_order() {
        assert_eq!(mmse_scalar(Constellation::Bpsk, 0.0), 1.0);
        let h = 1e-5;
        let slope = (mmse_scalar(Constellation::Bpsk, h) - 1.0) / h;
        assert!((slope + 1.0).abs() < 1e-3);
        let mut prev = 1.0;
        for k in 1..60 {
            let rho = 0.25 * k as f64;
            let b = mmse_scalar(Constellation::Bpsk, rho);
            let p = mmse_scalar(Constellation::Pam4, rho);
            assert!(b < prev);
            assert!(p >= b);
            prev = b;
        }
    }

    #[test]
    fn divergence_estimator_agrees() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let r: Vec<f64> = (0..2048).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
        for code in [CodeSpec::Uncoded, CodeSpec::HadamardBlock { n: 8 }] {
            let den = Denoiser::new(code, Constellation::Bpsk).unwrap();
            let mc = den.divergence_mc(&r, 1.3, 4, 1).unwrap();
            if code == CodeSpec::Uncoded {
                let d = den.denoise(&r, 1.3).unwrap();
                assert!((mc - d.divergence).abs() < 1e-6);
            } else {
                assert!(mc > 0.0 && mc.is_finite());
            }
        }
    }

    #[test]
    fn psi_uncoded_matches_mmse() {
        let grid = [0.5, 1.0, 2.0, 4.0];
        let c = psi_estimate(CodeSpec::Uncoded, Constellation::Bpsk, &grid, 64, 3).unwrap();
        assert_eq!(c.knots[0], 0.0);
        assert_eq!(c.values[0], 1.0);
        for (i, &rho) in grid.iter().enumerate() {
            let se = c.stderr.as_ref().unwrap()[i + 1];
            let want = mmse_scalar(Constellation::Bpsk, rho);
            assert!((c.values[i + 1] - want).abs() < 4.0 * se + 1e-3, "rho={rho}");
        }
        assert!(c.is_nonincreasing(0.0));
    }
}
