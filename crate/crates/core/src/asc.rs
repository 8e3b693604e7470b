//! Analog spatial coupling: `K` codeword sections spread over `K+W-1`
//! measurement blocks, decoded jointly by a block-structured GAMP.

use std::io::Write;

use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::denoise::{CodeSpec, Denoiser};
use crate::error::{invalid, Error, Result};
use crate::evolve::Boundary;
use crate::model::{
    sigma2_from_snr_db, ChannelSpec, Constellation, OutputChannel, RhoMode, SensingSpec,
};
use crate::recon::output_posterior;
use crate::seed::{self, Role};
use crate::sensing::SensingOperator;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Scaling {
    /// `x_j = (1/W) Σ_k A c_k`; block power is `1/W`.
    Average,
    /// `x_j = (1/√W) Σ_k A c_k`, unit block power.
    #[default]
    PowerNormalized,
}

impl Scaling {
    pub fn gamma(&self, w: usize) -> f64 {
        match self {
            Scaling::Average => 1.0 / w as f64,
            Scaling::PowerNormalized => 1.0 / (w as f64).sqrt(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum AscMode {
    /// Section `k` enters every block it touches as is.
    #[default]
    Shared,
    /// An independent interleaver per (block, section) pair.
    Interleaved,
    /// One interleaver shared by every pair.
    InterleavedCommon,
    /// Users play the role of sections; same signal model as `Interleaved`.
    Multiuser,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AscConfig {
    pub k: usize,
    pub w: usize,
    /// Symbols per section.
    pub n: usize,
    /// Measurements per block before puncturing.
    pub m: usize,
    pub snr_db: f64,
    #[serde(default)]
    pub scaling: Scaling,
    #[serde(default)]
    pub mode: AscMode,
    #[serde(default = "hadamard")]
    pub sensing: SensingSpec,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub puncture: f64,
    #[serde(default)]
    pub channel: ChannelSpec,
    #[serde(default)]
    pub code: CodeSpec,
    #[serde(default)]
    pub constellation: Constellation,
    #[serde(default = "default_t_max")]
    pub t_max: usize,
    #[serde(default)]
    pub boundary: Boundary,
    #[serde(default)]
    pub rho_mode: RhoMode,
}

fn hadamard() -> SensingSpec {
    SensingSpec::SubsampledHadamard { signs: true }
}

fn default_t_max() -> usize {
    200
}

impl AscConfig {
    pub fn new(k: usize, w: usize, n: usize, m: usize, snr_db: f64) -> Self {
        Self {
            k,
            w,
            n,
            m,
            snr_db,
            scaling: Scaling::PowerNormalized,
            mode: AscMode::Shared,
            sensing: hadamard(),
            seed: 0,
            puncture: 0.0,
            channel: ChannelSpec::Awgn,
            code: CodeSpec::Uncoded,
            constellation: Constellation::Bpsk,
            t_max: default_t_max(),
            boundary: Boundary::ZeroSnr,
            rho_mode: RhoMode::Formula,
        }
    }

    pub fn blocks(&self) -> usize {
        self.k + self.w - 1
    }

    pub fn delta(&self) -> f64 {
        self.m as f64 / self.n as f64
    }

    pub fn sigma2(&self) -> f64 {
        sigma2_from_snr_db(self.snr_db)
    }

    pub fn validate(&self) -> Result<()> {
        if self.k == 0 || self.w == 0 {
            return Err(Error::Config("K and W must be at least 1".into()));
        }
        if self.n == 0 || self.m == 0 {
            return Err(Error::Config("n and m must be at least 1".into()));
        }
        if !(0.0..1.0).contains(&self.puncture) {
            return Err(Error::Config("puncture fraction must lie in [0, 1)".into()));
        }
        if self.kept_rows() == 0 {
            return Err(Error::Config("puncturing leaves no measurements".into()));
        }
        if !self.n.is_multiple_of(self.code.block_len()) {
            return Err(Error::Config("n must be a multiple of the code block length".into()));
        }
        Denoiser::new(self.code, self.constellation)?;
        self.channel.build(self.sigma2())?;
        Ok(())
    }

    /// Rows per block that survive puncturing.
    pub fn kept_rows(&self) -> usize {
        self.m - (self.puncture * self.m as f64).round() as usize
    }

    /// Information bits carried by one frame.
    pub fn info_bits(&self) -> usize {
        let per_section = (self.n / self.code.block_len()) * self.code.info_bits();
        let per_symbol = if self.code == CodeSpec::Uncoded {
            self.constellation.bits()
        } else {
            1
        };
        self.k * per_section * per_symbol
    }

    /// Real symbols sent per frame.
    pub fn channel_uses(&self) -> usize {
        self.blocks() * self.kept_rows()
    }

    /// Realized rate in bits per real channel use.
    pub fn rate(&self) -> f64 {
        self.info_bits() as f64 / self.channel_uses() as f64
    }
}

struct Pair {
    op: SensingOperator,
    perm: Option<Vec<usize>>,
}

impl Pair {
    fn build(cfg: &AscConfig, j: usize, k: usize, common: &Option<Vec<usize>>) -> Result<Self> {
        let key = [j as u64, k as u64];
        let op = match cfg.sensing {
            SensingSpec::DenseGaussian => SensingOperator::iid_gaussian_keyed(cfg.m, cfg.n, cfg.seed, &key)?,
            SensingSpec::SubsampledHadamard { signs } => {
                SensingOperator::subsampled_hadamard_keyed(cfg.m, cfg.n, cfg.seed, signs, &key)?
            }
        };
        let perm = match cfg.mode {
            AscMode::Shared => None,
            AscMode::InterleavedCommon => common.clone(),
            AscMode::Interleaved | AscMode::Multiuser => Some(permutation(cfg.n, cfg.seed, &key)),
        };
        Ok(Self { op, perm })
    }

    /// `A π(c)`, full `m` rows.
    fn forward(&self, c: &[f64]) -> Result<Vec<f64>> {
        match &self.perm {
            None => self.op.forward(c),
            Some(p) => {
                let pc: Vec<f64> = p.iter().map(|&i| c[i]).collect();
                self.op.forward(&pc)
            }
        }
    }

    /// `π⁻¹(Aᵀ s)`.
    fn adjoint(&self, s: &[f64]) -> Result<Vec<f64>> {
        let u = self.op.adjoint(s)?;
        Ok(match &self.perm {
            None => u,
            Some(p) => {
                let mut out = vec![0.0; u.len()];
                for (pos, &i) in p.iter().enumerate() {
                    out[i] = u[pos];
                }
                out
            }
        })
    }
}

fn permutation(n: usize, seed: u64, key: &[u64]) -> Vec<usize> {
    let mut p: Vec<usize> = (0..n).collect();
    p.shuffle(&mut seed::rng(seed, Role::Interleaver, key));
    p
}

/// Rows of block `j` that survive puncturing, in increasing order.
fn kept(cfg: &AscConfig, j: usize) -> Option<Vec<usize>> {
    if cfg.puncture == 0.0 {
        return None;
    }
    let mut idx: Vec<usize> = (0..cfg.m).collect();
    idx.shuffle(&mut seed::rng(cfg.seed, Role::Puncture, &[j as u64]));
    idx.truncate(cfg.kept_rows());
    idx.sort_unstable();
    Some(idx)
}

/// The matrices and interleavers of one coupled system.
pub struct AscSystem {
    pub cfg: AscConfig,
    /// `pairs[j][t]` couples block `j` with section `j - t`.
    pairs: Vec<Vec<Option<Pair>>>,
    keep: Vec<Option<Vec<usize>>>,
    checksum: u64,
}

impl AscSystem {
    pub fn build(cfg: &AscConfig) -> Result<Self> {
        cfg.validate()?;
        let common = (cfg.mode == AscMode::InterleavedCommon).then(|| permutation(cfg.n, cfg.seed, &[u64::MAX]));
        let mut pairs = Vec::with_capacity(cfg.blocks());
        let mut path = vec![cfg.k as u64, cfg.w as u64];
        for j in 0..cfg.blocks() {
            let mut row = Vec::with_capacity(cfg.w);
            for t in 0..cfg.w {
                if j >= t && j - t < cfg.k {
                    let p = Pair::build(cfg, j, j - t, &common)?;
                    path.push(p.op.fingerprint());
                    row.push(Some(p));
                } else {
                    row.push(None);
                }
            }
            pairs.push(row);
        }
        let keep: Vec<_> = (0..cfg.blocks()).map(|j| kept(cfg, j)).collect();
        for k in keep.iter().flatten() {
            path.push(k.len() as u64);
            path.extend(k.iter().take(4).map(|&x| x as u64));
        }
        Ok(Self {
            cfg: cfg.clone(),
            pairs,
            keep,
            checksum: seed::derive(cfg.seed, &path),
        })
    }

    pub fn checksum(&self) -> u64 {
        self.checksum
    }

    fn gamma(&self) -> f64 {
        self.cfg.scaling.gamma(self.cfg.w)
    }

    fn rows(&self, j: usize) -> usize {
        self.keep[j].as_ref().map_or(self.cfg.m, |k| k.len())
    }

    fn select(&self, j: usize, full: Vec<f64>) -> Vec<f64> {
        match &self.keep[j] {
            None => full,
            Some(k) => k.iter().map(|&i| full[i]).collect(),
        }
    }

    fn scatter(&self, j: usize, s: &[f64]) -> Vec<f64> {
        match &self.keep[j] {
            None => s.to_vec(),
            Some(k) => {
                let mut full = vec![0.0; self.cfg.m];
                for (&i, &x) in k.iter().zip(s) {
                    full[i] = x;
                }
                full
            }
        }
    }

    /// `γ Σ_k A_{jk} π_{jk}(c_k)` for every block, after puncturing.
    fn mix(&self, c: &[Vec<f64>]) -> Result<Vec<Vec<f64>>> {
        let g = self.gamma();
        (0..self.cfg.blocks())
            .into_par_iter()
            .map(|j| {
                let mut acc = vec![0.0; self.cfg.m];
                // Ascending section order, as in the multiple-access aggregate.
                for (t, p) in self.pairs[j].iter().enumerate().rev() {
                    if let Some(p) = p {
                        let part = p.forward(&c[j - t])?;
                        for (a, b) in acc.iter_mut().zip(&part) {
                            *a += b;
                        }
                    }
                }
                acc.iter_mut().for_each(|x| *x *= g);
                Ok(self.select(j, acc))
            })
            .collect()
    }

    /// `Σ_j γ π⁻¹(A_{jk}ᵀ s_j)` for every section.
    fn unmix(&self, s: &[Vec<f64>]) -> Result<Vec<Vec<f64>>> {
        let g = self.gamma();
        let full: Vec<Vec<f64>> = (0..self.cfg.blocks()).map(|j| self.scatter(j, &s[j])).collect();
        (0..self.cfg.k)
            .into_par_iter()
            .map(|k| {
                let mut acc = vec![0.0; self.cfg.n];
                for t in 0..self.cfg.w {
                    let j = k + t;
                    if let Some(p) = &self.pairs[j][t] {
                        let part = p.adjoint(&full[j])?;
                        for (a, b) in acc.iter_mut().zip(&part) {
                            *a += b;
                        }
                    }
                }
                acc.iter_mut().for_each(|x| *x *= g);
                Ok(acc)
            })
            .collect()
    }
}

/// Transmitted blocks with the checksum of the matrices that produced them.
#[derive(Debug, Clone, PartialEq)]
pub struct AscFrame {
    pub blocks: Vec<Vec<f64>>,
    pub checksum: u64,
}

pub fn asc_encode(sys: &AscSystem, codewords: &[Vec<f64>]) -> Result<AscFrame> {
    if codewords.len() != sys.cfg.k {
        return Err(Error::Dimension {
            expected: sys.cfg.k,
            got: codewords.len(),
        });
    }
    for c in codewords {
        if c.len() != sys.cfg.n {
            return Err(Error::Dimension {
                expected: sys.cfg.n,
                got: c.len(),
            });
        }
    }
    Ok(AscFrame {
        blocks: sys.mix(codewords)?,
        checksum: sys.checksum,
    })
}

/// `y_j = f(x_j) + n_j`, noise drawn per `(frame, block)`.
pub fn asc_transmit(frame: &AscFrame, ch: &OutputChannel, seed: u64, frame_id: u64) -> AscFrame {
    let blocks = frame
        .blocks
        .iter()
        .enumerate()
        .map(|(j, x)| {
            let mut rng = seed::rng(seed, Role::Noise, &[frame_id, j as u64]);
            x.iter()
                .map(|&xi| ch.sample(xi, rng.sample(StandardNormal)))
                .collect()
        })
        .collect();
    AscFrame {
        blocks,
        checksum: frame.checksum,
    }
}

/// Per-iteration decoder state.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct AscTrace {
    /// `section_mse[t][k]` (NaN without the truth).
    pub section_mse: Vec<Vec<f64>>,
    pub section_v: Vec<Vec<f64>>,
    pub rho: Vec<Vec<f64>>,
    pub iterations: usize,
    pub converged: bool,
}

impl AscTrace {
    /// CSV body with columns `t,section,mse`.
    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "t,section,mse")?;
        for (t, row) in self.section_mse.iter().enumerate() {
            for (k, m) in row.iter().enumerate() {
                writeln!(w, "{},{},{:.12e}", t + 1, k + 1, m)?;
            }
        }
        Ok(())
    }
}

/// Block GAMP over the banded operator.
pub fn asc_decode(
    sys: &AscSystem,
    obs: &AscFrame,
    den: &Denoiser,
    ch: &OutputChannel,
    tol: f64,
    truth: Option<&[Vec<f64>]>,
) -> Result<(Vec<Vec<f64>>, AscTrace)> {
    if obs.checksum != sys.checksum {
        return Err(Error::Checksum(format!(
            "observations were produced by operator set {:016x}, decoder holds {:016x}",
            obs.checksum, sys.checksum
        )));
    }
    let cfg = &sys.cfg;
    let (kk, bl, n) = (cfg.k, cfg.blocks(), cfg.n);
    for (j, y) in obs.blocks.iter().enumerate() {
        if y.len() != sys.rows(j) {
            return Err(Error::Dimension {
                expected: sys.rows(j),
                got: y.len(),
            });
        }
    }
    let g2 = sys.gamma() * sys.gamma();
    let power = den.constellation.power();
    let mut c_hat = vec![vec![0.0; n]; kk];
    let mut sec_v = vec![power; kk];
    let mut s: Vec<Vec<f64>> = (0..bl).map(|j| vec![0.0; sys.rows(j)]).collect();
    let mut trace = AscTrace::default();

    for t in 1..=cfg.t_max {
        let mixed = sys.mix(&c_hat)?;
        let tau: Vec<f64> = (0..bl)
            .map(|j| {
                let sum: f64 = (0..cfg.w)
                    .filter(|&w| j >= w && j - w < kk)
                    .map(|w| sec_v[j - w])
                    .sum();
                (g2 * sum).max(1e-300)
            })
            .collect();
        // Output step per block: returns (1 - ⟨Var⟩/τ) and ‖s‖².
        let out: Vec<(Vec<f64>, f64, f64)> = (0..bl)
            .into_par_iter()
            .map(|j| {
                let mut sj = vec![0.0; s[j].len()];
                let (mut var_sum, mut s2) = (0.0, 0.0);
                for i in 0..sj.len() {
                    let p = mixed[j][i] - tau[j] * s[j][i];
                    let post = output_posterior(ch, p, tau[j], obs.blocks[j][i])?;
                    sj[i] = (post.mean - p) / tau[j];
                    var_sum += post.var;
                    s2 += sj[i] * sj[i];
                }
                let mj = sj.len() as f64;
                Ok((sj, 1.0 - var_sum / (mj * tau[j]), s2 / mj))
            })
            .collect::<Result<_>>()?;
        let mut gain = vec![0.0; bl];
        for (j, (sj, one_minus_dg, s2)) in out.into_iter().enumerate() {
            let dj = sj.len() as f64 / n as f64;
            gain[j] = match cfg.rho_mode {
                RhoMode::Formula => dj * g2 * one_minus_dg / tau[j],
                RhoMode::Residual => dj * g2 * s2,
            };
            if !sj.iter().all(|x| x.is_finite()) {
                return Err(Error::NonFinite {
                    iter: t,
                    what: format!("output residual of block {}", j + 1),
                });
            }
            s[j] = sj;
        }
        let rho: Vec<f64> = (0..kk)
            .map(|k| (0..cfg.w).map(|w| gain[k + w]).sum())
            .collect();
        let back = sys.unmix(&s)?;
        let mut new_v = vec![0.0; kk];
        let res: Vec<(Vec<f64>, f64)> = (0..kk)
            .into_par_iter()
            .map(|k| {
                let r: Vec<f64> = c_hat[k]
                    .iter()
                    .zip(&back[k])
                    .map(|(c, b)| c + b / rho[k])
                    .collect();
                let mut m = vec![0.0; n];
                let v = den.apply(&r, rho[k], &mut m)?;
                Ok((m, v))
            })
            .collect::<Result<_>>()?;
        for (k, (m, v)) in res.into_iter().enumerate() {
            c_hat[k] = m;
            new_v[k] = v;
        }
        let change = new_v
            .iter()
            .zip(&sec_v)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        sec_v = new_v;
        trace.rho.push(rho);
        trace.section_v.push(sec_v.clone());
        trace.section_mse.push(match truth {
            Some(c) => c
                .iter()
                .zip(&c_hat)
                .map(|(a, b)| a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>() / n as f64)
                .collect(),
            None => vec![f64::NAN; kk],
        });
        trace.iterations = t;
        if tol > 0.0 && change < tol {
            trace.converged = true;
            break;
        }
    }
    Ok((c_hat, trace))
}

/// Drop a fraction of the entries of each block, keeping the survivors in order.
pub fn puncture(blocks: &[Vec<f64>], fraction: f64, seed: u64) -> Result<Vec<Vec<f64>>> {
    if !(0.0..1.0).contains(&fraction) {
        return invalid("puncture fraction must lie in [0, 1)");
    }
    blocks
        .iter()
        .enumerate()
        .map(|(j, b)| {
            let drop = (fraction * b.len() as f64).round() as usize;
            if drop >= b.len() {
                return invalid(format!("puncturing leaves block {} empty", j + 1));
            }
            let mut idx: Vec<usize> = (0..b.len()).collect();
            idx.shuffle(&mut seed::rng(seed, Role::Puncture, &[j as u64]));
            idx.truncate(b.len() - drop);
            idx.sort_unstable();
            Ok(idx.into_iter().map(|i| b[i]).collect())
        })
        .collect()
}

/// One user of the multiple-access construction: it owns the `W` matrices and
/// interleavers it uses in slots `slot .. slot+W`.
pub struct UserEncoder {
    pub user: usize,
    pub slot: usize,
    pairs: Vec<Pair>,
}

impl UserEncoder {
    /// Contributions of this user's codeword to its `W` slots (before the shared scaling).
    pub fn encode(&self, c: &[f64]) -> Result<Vec<Vec<f64>>> {
        self.pairs.iter().map(|p| p.forward(c)).collect()
    }
}

pub struct Multiuser {
    pub users: Vec<UserEncoder>,
    /// `schedule[j]` lists the users active in slot `j`, in increasing order.
    pub schedule: Vec<Vec<usize>>,
    gamma: f64,
    slots: usize,
    m: usize,
}

/// Per-user encoders and the slot schedule: user `k` transmits in slots `k..k+W`.
pub fn multiuser_build(users: usize, cfg: &AscConfig) -> Result<Multiuser> {
    if users != cfg.k {
        return invalid(format!("config has K = {} sections but {users} users were requested", cfg.k));
    }
    if cfg.mode != AscMode::Multiuser && cfg.mode != AscMode::Interleaved {
        return invalid("multiple access needs per-user interleavers");
    }
    if cfg.puncture != 0.0 {
        return invalid("puncturing is not part of the multiple-access schedule");
    }
    cfg.validate()?;
    let mut list = Vec::with_capacity(users);
    let mut schedule = vec![Vec::new(); cfg.blocks()];
    for k in 0..users {
        let pairs = (0..cfg.w)
            .map(|t| Pair::build(cfg, k + t, k, &None))
            .collect::<Result<Vec<_>>>()?;
        for t in 0..cfg.w {
            if schedule[k + t].contains(&k) {
                return invalid(format!("user {k} scheduled twice in slot {}", k + t));
            }
            schedule[k + t].push(k);
        }
        list.push(UserEncoder {
            user: k,
            slot: k,
            pairs,
        });
    }
    Ok(Multiuser {
        users: list,
        schedule,
        gamma: cfg.scaling.gamma(cfg.w),
        slots: cfg.blocks(),
        m: cfg.m,
    })
}

impl Multiuser {
    /// Superposition received in each slot.
    pub fn aggregate(&self, codewords: &[Vec<f64>]) -> Result<Vec<Vec<f64>>> {
        if codewords.len() != self.users.len() {
            return Err(Error::Dimension {
                expected: self.users.len(),
                got: codewords.len(),
            });
        }
        let parts: Vec<Vec<Vec<f64>>> = self
            .users
            .iter()
            .zip(codewords)
            .map(|(u, c)| u.encode(c))
            .collect::<Result<_>>()?;
        let mut out = vec![vec![0.0; self.m]; self.slots];
        for (j, active) in self.schedule.iter().enumerate() {
            for &k in active {
                let part = &parts[k][j - self.users[k].slot];
                for (a, b) in out[j].iter_mut().zip(part) {
                    *a += b;
                }
            }
            out[j].iter_mut().for_each(|x| *x *= self.gamma);
        }
        Ok(out)
    }
}

/// Random codewords for all sections of a frame.
pub fn random_sections(cfg: &AscConfig, den: &Denoiser, frame_id: u64) -> Vec<Vec<f64>> {
    (0..cfg.k)
        .map(|k| {
            let mut rng = seed::rng(cfg.seed, Role::Data, &[frame_id, k as u64]);
            den.random_codeword(cfg.n, &mut rng)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::recon::{amp_run, ReconOpts};

    fn den() -> Denoiser {
        Denoiser::new(CodeSpec::Uncoded, Constellation::Bpsk).unwrap()
    }

    #[test]
    fn single_section_reduces_to_amp() {
        let mut cfg = AscConfig::new(1, 1, 512, 256, 8.0);
        cfg.t_max = 12;
        let sys = AscSystem::build(&cfg).unwrap();
        let c = random_sections(&cfg, &den(), 0);
        let ch = OutputChannel::awgn(cfg.sigma2()).unwrap();
        let frame = asc_encode(&sys, &c).unwrap();
        let obs = asc_transmit(&frame, &ch, 1, 0);
        let (est, tr) = asc_decode(&sys, &obs, &den(), &ch, 0.0, Some(&c)).unwrap();

        let op = SensingOperator::subsampled_hadamard_keyed(256, 512, 0, true, &[0, 0]).unwrap();
        assert_eq!(frame.blocks[0], op.forward(&c[0]).unwrap());
        let opts = ReconOpts::default().with_t_max(12).with_tol(0.0);
        let (est2, tr2) = amp_run(&obs.blocks[0], &op, &den(), cfg.sigma2(), &opts, Some(&c[0])).unwrap();
        for (a, b) in est[0].iter().zip(&est2) {
            assert!((a - b).abs() < 1e-9);
        }
        for (a, b) in tr.section_mse.iter().zip(&tr2.mse) {
            assert!((a[0] - b).abs() < 1e-9);
        }
    }

    #[test]
    fn noiseless_orthonormal_single_block() {
        let mut cfg = AscConfig::new(1, 1, 256, 256, 300.0);
        cfg.t_max = 30;
        let sys = AscSystem::build(&cfg).unwrap();
        let c = random_sections(&cfg, &den(), 3);
        let ch = OutputChannel::awgn(cfg.sigma2()).unwrap();
        let obs = asc_encode(&sys, &c).unwrap();
        let (est, _) = asc_decode(&sys, &obs, &den(), &ch, 0.0, None).unwrap();
        assert!(est[0].iter().zip(&c[0]).all(|(a, b)| (a - b).abs() < 1e-6));
    }

    #[test]
    fn common_interleaver_equals_shared_mode_on_permuted_input() {
        let mut cfg = AscConfig::new(3, 2, 64, 32, 10.0);
        cfg.mode = AscMode::InterleavedCommon;
        let inter = AscSystem::build(&cfg).unwrap();
        let mut shared_cfg = cfg.clone();
        shared_cfg.mode = AscMode::Shared;
        let shared = AscSystem::build(&shared_cfg).unwrap();
        let c = random_sections(&cfg, &den(), 0);
        let perm = permutation(cfg.n, cfg.seed, &[u64::MAX]);
        let pc: Vec<Vec<f64>> = c.iter().map(|x| perm.iter().map(|&i| x[i]).collect()).collect();
        assert_eq!(
            asc_encode(&inter, &c).unwrap().blocks,
            asc_encode(&shared, &pc).unwrap().blocks
        );
    }

    #[test]
    fn multiuser_aggregate_is_bit_exact() {
        let mut cfg = AscConfig::new(4, 3, 128, 64, 10.0);
        cfg.mode = AscMode::Multiuser;
        let sys = AscSystem::build(&cfg).unwrap();
        let mu = multiuser_build(4, &cfg).unwrap();
        let c = random_sections(&cfg, &den(), 5);
        assert_eq!(mu.aggregate(&c).unwrap(), asc_encode(&sys, &c).unwrap().blocks);
        assert_eq!(mu.schedule[0], vec![0]);
        assert_eq!(mu.schedule[2], vec![0, 1, 2]);
        assert!(multiuser_build(3, &cfg).is_err());
    }

    #[test]
    fn checksum_mismatch_detected() {
        let cfg = AscConfig::new(2, 2, 64, 32, 10.0);
        let mut other = cfg.clone();
        other.seed = 9;
        let sys = AscSystem::build(&cfg).unwrap();
        let wrong = AscSystem::build(&other).unwrap();
        let c = random_sections(&cfg, &den(), 0);
        let ch = OutputChannel::awgn(cfg.sigma2()).unwrap();
        let obs = asc_encode(&sys, &c).unwrap();
        assert!(matches!(
            asc_decode(&wrong, &obs, &den(), &ch, 0.0, None),
            Err(Error::Checksum(_))
        ));
    }

    #[test]
    fn puncture_rates_and_errors() {
        let b = vec![vec![1.0; 10], vec![2.0; 10]];
        assert_eq!(puncture(&b, 0.0, 1).unwrap(), b);
        let p = puncture(&b, 0.5, 1).unwrap();
        assert!(p.iter().all(|x| x.len() == 5));
        assert!(puncture(&[vec![1.0]], 0.9, 1).is_err());
        let mut cfg = AscConfig::new(100, 3, 4096, 4096, 0.0);
        cfg.constellation = Constellation::Bpsk;
        cfg.code = CodeSpec::Repetition { l: 2 };
        let master = cfg.rate();
        cfg.puncture = 0.5;
        assert!((cfg.rate() - 2.0 * master).abs() < 1e-12);
    }
}
