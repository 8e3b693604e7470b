//! Experiment orchestration: Monte Carlo BER sweeps, SE/rate/MI tables, and
//! their CSV/JSON artifacts.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::asc::{asc_decode, asc_encode, asc_transmit, random_sections, AscConfig, AscSystem};
use crate::denoise::{psi_estimate, CodeSpec, Denoiser};
use crate::error::{Error, Result};
use crate::evolve::curve::log_grid;
use crate::evolve::fixed_point::{se_fixed_point, ERROR_FREE_V};
use crate::evolve::mi::{mi_identity_check, mutual_info_channel, varphi_curve};
use crate::evolve::transfer::{GaussianInput, Mmse, PhiInverse};
use crate::evolve::{
    area_rate_report, coupled_se, threshold_search, CoupledOpts, Phi, Target, Transfer,
};
use crate::model::{sigma2_from_snr_db, Constellation, OutputChannel, SensingSpec, SystemConfig};
use crate::recon::{amp_run, gamp_run, ReconOpts};
use crate::sensing::{fht_raw, SensingOperator};
use crate::seed::{self, Role};

pub const CSV_HEADER: &str = "# ampcc-csv v1";
const LN2: f64 = std::f64::consts::LN_2;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Kind {
    Se,
    CoupleSe,
    Rate,
    Mi,
    Ber,
    Asc,
}

impl Kind {
    pub fn name(&self) -> &'static str {
        match self {
            Kind::Se => "se",
            Kind::CoupleSe => "couple-se",
            Kind::Rate => "rate",
            Kind::Mi => "mi",
            Kind::Ber => "ber",
            Kind::Asc => "asc",
        }
    }
}

/// Where the code transfer curve comes from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum PsiSource {
    /// Exact `mmse` for uncoded transmission, Monte Carlo for block codes.
    #[default]
    Code,
    /// Gaussian input, `1/(1+ρ)`.
    Gaussian,
    /// `ψ = φ⁻¹`: a code matched to the channel.
    Matched,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StopRule {
    #[serde(default = "d_min_errors")]
    pub min_errors: u64,
    #[serde(default = "d_max_frames")]
    pub max_frames: usize,
    /// Frames simulated between stop checks; fixing it keeps results independent of
    /// the worker count.
    #[serde(default = "d_batch")]
    pub batch: usize,
}

fn d_min_errors() -> u64 {
    100
}
fn d_max_frames() -> usize {
    100
}
fn d_batch() -> usize {
    4
}

impl Default for StopRule {
    fn default() -> Self {
        Self {
            min_errors: d_min_errors(),
            max_frames: d_max_frames(),
            batch: d_batch(),
        }
    }
}

fn d_psi_trials() -> usize {
    400
}

/// Everything an experiment needs besides its kind and output directory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default)]
    pub system: Option<SystemConfig>,
    #[serde(default)]
    pub asc: Option<AscConfig>,
    /// SNR points in dB; empty means the config's own SNR.
    #[serde(default)]
    pub sweep: Vec<f64>,
    #[serde(default)]
    pub stop: StopRule,
    #[serde(default)]
    pub psi: PsiSource,
    #[serde(default = "d_psi_trials")]
    pub psi_trials: usize,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            system: None,
            asc: None,
            sweep: Vec::new(),
            stop: StopRule::default(),
            psi: PsiSource::Code,
            psi_trials: d_psi_trials(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Experiment {
    pub kind: Kind,
    pub config: ExperimentConfig,
    pub out: PathBuf,
}

/// Written next to the artifacts; `config` alone reproduces them.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Manifest {
    pub kind: Kind,
    pub seed: u64,
    pub config: ExperimentConfig,
    pub git_describe: String,
    pub wall_time_s: f64,
    pub outputs: Vec<String>,
    pub version: String,
}

impl Manifest {
    pub fn load(path: &Path) -> Result<Self> {
        Ok(serde_json::from_str(&fs::read_to_string(path)?)?)
    }
}

impl ExperimentConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)?;
        // A manifest is accepted in place of a config.
        if let Ok(m) = serde_json::from_str::<Manifest>(&text) {
            return Ok(m.config);
        }
        Ok(serde_json::from_str(&text)?)
    }

    pub fn system(&self) -> Result<&SystemConfig> {
        self.system
            .as_ref()
            .ok_or_else(|| Error::Config("this experiment needs a \"system\" section".into()))
    }

    pub fn asc(&self) -> Result<&AscConfig> {
        self.asc
            .as_ref()
            .ok_or_else(|| Error::Config("this experiment needs an \"asc\" section".into()))
    }

    pub fn seed(&self) -> u64 {
        self.system
            .as_ref()
            .map(|s| s.seed)
            .or(self.asc.as_ref().map(|a| a.seed))
            .unwrap_or(0)
    }

    pub fn set_seed(&mut self, seed: u64) {
        if let Some(s) = self.system.as_mut() {
            s.seed = seed;
        }
        if let Some(a) = self.asc.as_mut() {
            a.seed = seed;
        }
    }

    fn snr_list(&self, own: f64) -> Vec<f64> {
        if self.sweep.is_empty() {
            vec![own]
        } else {
            self.sweep.clone()
        }
    }

    pub fn validate(&self, kind: Kind) -> Result<()> {
        match kind {
            Kind::CoupleSe | Kind::Asc => self.asc()?.validate()?,
            _ => self.system()?.validate()?,
        }
        if self.sweep.iter().any(|s| !s.is_finite()) {
            return Err(Error::Config("sweep values must be finite".into()));
        }
        if self.stop.batch == 0 || self.stop.max_frames == 0 {
            return Err(Error::Config("stop rule needs batch ≥ 1 and max_frames ≥ 1".into()));
        }
        Ok(())
    }
}

/// One point of a BER curve.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BerPoint {
    pub snr_db: f64,
    pub ber: f64,
    pub ber_lo: f64,
    pub ber_hi: f64,
    pub mse: f64,
    pub frames: usize,
    pub bit_errors: u64,
    pub bits: u64,
    pub mean_iterations: f64,
}

/// 95% Wilson score interval for `k` successes out of `n`.
pub fn wilson(k: u64, n: u64) -> (f64, f64) {
    if n == 0 {
        return (0.0, 1.0);
    }
    let z = 1.959_963_984_540_054;
    let nf = n as f64;
    let p = k as f64 / nf;
    let d = 1.0 + z * z / nf;
    let c = (p + z * z / (2.0 * nf)) / d;
    let h = z * (p * (1.0 - p) / nf + z * z / (4.0 * nf * nf)).sqrt() / d;
    let lo = if k == 0 { 0.0 } else { (c - h).max(0.0) };
    let hi = if k == n { 1.0 } else { (c + h).min(1.0) };
    (lo, hi)
}

/// Information bits recovered by hard decisions on `est`.
pub fn hard_bits(den: &Denoiser, est: &[f64]) -> Vec<bool> {
    let mut out = Vec::new();
    match den.code {
        CodeSpec::Uncoded => match den.constellation {
            Constellation::Bpsk => out.extend(est.iter().map(|&x| x > 0.0)),
            Constellation::Pam4 => {
                let pts = den.constellation.points();
                const GRAY: [u8; 4] = [0b00, 0b01, 0b11, 0b10];
                for &x in est {
                    let i = (0..4)
                        .min_by(|&a, &b| (x - pts[a]).abs().total_cmp(&(x - pts[b]).abs()))
                        .unwrap();
                    out.push(GRAY[i] & 2 != 0);
                    out.push(GRAY[i] & 1 != 0);
                }
            }
        },
        CodeSpec::Repetition { l } => {
            out.extend(est.chunks(l).map(|b| b.iter().sum::<f64>() > 0.0));
        }
        CodeSpec::HadamardBlock { n } => {
            let mut buf = vec![0.0; n];
            let bits = n.trailing_zeros();
            for b in est.chunks(n) {
                buf.copy_from_slice(b);
                fht_raw(&mut buf).expect("block length is a power of two");
                let (row, t) = buf
                    .iter()
                    .enumerate()
                    .max_by(|a, b| a.1.abs().total_cmp(&b.1.abs()))
                    .unwrap();
                out.extend((0..bits).map(|i| row >> i & 1 == 1));
                out.push(*t > 0.0);
            }
        }
    }
    out
}

fn bit_errors(den: &Denoiser, est: &[f64], truth: &[f64]) -> (u64, u64) {
    let a = hard_bits(den, est);
    let b = hard_bits(den, truth);
    let e = a.iter().zip(&b).filter(|(x, y)| x != y).count();
    (e as u64, b.len() as u64)
}

#[derive(Debug, Clone, Copy)]
struct FrameResult {
    errors: u64,
    bits: u64,
    mse: f64,
    iterations: usize,
}

fn link_frame(cfg: &SystemConfig, den: &Denoiser, ch: &OutputChannel, frame: u64) -> Result<FrameResult> {
    let key = [frame];
    let op = match cfg.sensing {
        SensingSpec::DenseGaussian => SensingOperator::iid_gaussian_keyed(cfg.m, cfg.n, cfg.seed, &key)?,
        SensingSpec::SubsampledHadamard { signs } => {
            SensingOperator::subsampled_hadamard_keyed(cfg.m, cfg.n, cfg.seed, signs, &key)?
        }
    };
    let c = den.random_codeword(cfg.n, &mut seed::rng(cfg.seed, Role::Data, &key));
    let x = op.forward(&c)?;
    let mut rng = seed::rng(cfg.seed, Role::Noise, &key);
    let y: Vec<f64> = x.iter().map(|&xi| ch.sample(xi, rng.sample(StandardNormal))).collect();
    let opts = ReconOpts {
        t_max: cfg.t_max,
        damping: cfg.damping,
        rho_mode: cfg.rho_mode,
        ..ReconOpts::default()
    };
    let (est, tr) = match ch {
        OutputChannel::Awgn { sigma2 } => amp_run(&y, &op, den, *sigma2, &opts, Some(&c))?,
        _ => gamp_run(&y, &op, den, ch, &opts, Some(&c))?,
    };
    let (errors, bits) = bit_errors(den, &est, &c);
    Ok(FrameResult {
        errors,
        bits,
        mse: tr.mse.last().copied().unwrap_or(f64::NAN),
        iterations: tr.iterations,
    })
}

fn asc_frame(cfg: &AscConfig, den: &Denoiser, ch: &OutputChannel, frame: u64) -> Result<FrameResult> {
    let mut fcfg = cfg.clone();
    fcfg.seed = seed::derive(cfg.seed, &[frame]);
    let sys = AscSystem::build(&fcfg)?;
    let c = random_sections(&fcfg, den, frame);
    let obs = asc_transmit(&asc_encode(&sys, &c)?, ch, fcfg.seed, frame);
    let (est, tr) = asc_decode(&sys, &obs, den, ch, 1e-10, Some(&c))?;
    let (mut errors, mut bits, mut se) = (0, 0, 0.0);
    for (e, t) in est.iter().zip(&c) {
        let (a, b) = bit_errors(den, e, t);
        errors += a;
        bits += b;
        se += e.iter().zip(t).map(|(x, y)| (x - y) * (x - y)).sum::<f64>();
    }
    Ok(FrameResult {
        errors,
        bits,
        mse: se / (cfg.k * cfg.n) as f64,
        iterations: tr.iterations,
    })
}

/// Runs frames in fixed-size batches until the stop rule fires; the batch
/// results are reduced in frame order.
fn sweep_point(
    snr_db: f64,
    stop: &StopRule,
    frame: impl Fn(u64) -> Result<FrameResult> + Sync,
) -> Result<BerPoint> {
    let (mut errors, mut bits, mut mse, mut iters, mut frames) = (0u64, 0u64, 0.0, 0usize, 0usize);
    while frames < stop.max_frames && errors < stop.min_errors {
        let end = (frames + stop.batch).min(stop.max_frames);
        let batch: Vec<FrameResult> = (frames..end)
            .into_par_iter()
            .map(|f| frame(f as u64))
            .collect::<Result<_>>()?;
        for r in batch {
            errors += r.errors;
            bits += r.bits;
            mse += r.mse;
            iters += r.iterations;
        }
        frames = end;
    }
    let (lo, hi) = wilson(errors, bits);
    Ok(BerPoint {
        snr_db,
        ber: errors as f64 / bits as f64,
        ber_lo: lo,
        ber_hi: hi,
        mse: mse / frames as f64,
        frames,
        bit_errors: errors,
        bits,
        mean_iterations: iters as f64 / frames as f64,
    })
}

/// Monte Carlo BER of the uncoupled link at each SNR. Frames share their matrices,
/// data and noise shapes across SNR points, which smooths the curve.
pub fn ber_sweep(cfg: &SystemConfig, snr_list: &[f64], stop: &StopRule) -> Result<Vec<BerPoint>> {
    let den = Denoiser::new(cfg.code, cfg.constellation)?;
    snr_list
        .iter()
        .map(|&snr| {
            let mut c = cfg.clone();
            c.snr_db = snr;
            c.validate()?;
            let ch = c.channel()?;
            sweep_point(snr, stop, |f| link_frame(&c, &den, &ch, f))
        })
        .collect()
}

/// Same as [`ber_sweep`] for the coupled system.
pub fn asc_ber_sweep(cfg: &AscConfig, snr_list: &[f64], stop: &StopRule) -> Result<Vec<BerPoint>> {
    let den = Denoiser::new(cfg.code, cfg.constellation)?;
    snr_list
        .iter()
        .map(|&snr| {
            let mut c = cfg.clone();
            c.snr_db = snr;
            c.validate()?;
            let ch = c.channel.build(c.sigma2())?;
            sweep_point(snr, stop, |f| asc_frame(&c, &den, &ch, f))
        })
        .collect()
}

/// Shortest round-trip decimal, so equal values always print the same bytes.
fn fmt(x: f64) -> String {
    if x.is_nan() {
        "nan".into()
    } else if x.is_infinite() {
        if x > 0.0 { "inf".into() } else { "-inf".into() }
    } else {
        format!("{x:?}")
    }
}

/// Schema-v1 CSV: the version line, a header, then rows.
pub fn write_table(path: &Path, columns: &[&str], rows: &[Vec<f64>]) -> Result<()> {
    let mut f = std::io::BufWriter::new(fs::File::create(path)?);
    writeln!(f, "{CSV_HEADER}")?;
    writeln!(f, "{}", columns.join(","))?;
    for r in rows {
        let cells: Vec<String> = r.iter().map(|&x| fmt(x)).collect();
        writeln!(f, "{}", cells.join(","))?;
    }
    f.flush()?;
    Ok(())
}

/// Writes a schema-v1 CSV whose body comes from an existing serializer.
fn write_with(path: &Path, body: impl FnOnce(&mut Vec<u8>) -> std::io::Result<()>) -> Result<()> {
    let mut buf = format!("{CSV_HEADER}\n").into_bytes();
    body(&mut buf)?;
    fs::write(path, buf)?;
    Ok(())
}

fn write_json(path: &Path, v: &serde_json::Value) -> Result<()> {
    fs::write(path, serde_json::to_string_pretty(v)? + "\n")?;
    Ok(())
}

fn ber_rows(points: &[BerPoint]) -> Vec<Vec<f64>> {
    points
        .iter()
        .map(|p| {
            vec![
                p.snr_db,
                p.ber,
                p.ber_lo,
                p.ber_hi,
                p.mse,
                p.frames as f64,
                p.bit_errors as f64,
                p.bits as f64,
                p.mean_iterations,
            ]
        })
        .collect()
}

const BER_COLUMNS: [&str; 9] = [
    "snr_db",
    "ber",
    "ber_lo",
    "ber_hi",
    "mse",
    "frames",
    "bit_errors",
    "bits",
    "mean_iterations",
];

fn psi_grid(delta: f64, sigma2: f64) -> Vec<f64> {
    log_grid(1e-3, 50.0 * (delta / sigma2).max(1.0), 64)
}

/// The code curve the SE uses for `code` over `constellation`.
fn code_psi(
    code: CodeSpec,
    constellation: Constellation,
    grid: &[f64],
    trials: usize,
    seed: u64,
) -> Result<Box<dyn Transfer>> {
    Ok(match code {
        CodeSpec::Uncoded => Box::new(Mmse(constellation)),
        _ => Box::new(psi_estimate(code, constellation, grid, trials, seed)?),
    })
}

/// `φ` for the channel: closed form for AWGN, tabulated otherwise.
pub fn channel_phi(delta: f64, ch: &OutputChannel) -> Result<Phi> {
    match ch {
        OutputChannel::Awgn { sigma2 } => Ok(Phi::awgn(delta, *sigma2)),
        _ => {
            let mut grid = vec![0.0];
            grid.extend(log_grid(1e-4, 1.0, 80));
            Phi::curve(delta, varphi_curve(ch, &grid)?)
        }
    }
}

fn opt(x: Result<f64>) -> serde_json::Value {
    x.map_or(serde_json::Value::Null, |v| json!(v))
}

/// Runs one experiment and returns the files it wrote (manifest last).
pub fn run_experiment(exp: &Experiment) -> Result<Vec<PathBuf>> {
    let t0 = Instant::now();
    let cfg = &exp.config;
    cfg.validate(exp.kind)?;
    fs::create_dir_all(&exp.out)?;
    let dir = &exp.out;
    let mut files: Vec<PathBuf> = Vec::new();
    let mut out = |name: &str| {
        let p = dir.join(name);
        files.push(p.clone());
        p
    };

    match exp.kind {
        Kind::Se => {
            let sys = cfg.system()?;
            let delta = sys.delta();
            let den = Denoiser::new(sys.code, sys.constellation)?;
            let grid = psi_grid(delta, sys.sigma2());
            let psi = code_psi(den.code, den.constellation, &grid, cfg.psi_trials, sys.seed)?;
            let mut rows = Vec::new();
            let mut first = None;
            for snr in cfg.snr_list(sys.snr_db) {
                let ch = sys.channel.build(sigma2_from_snr_db(snr))?;
                let phi = channel_phi(delta, &ch)?;
                let rep = se_fixed_point(&phi, psi.as_ref())?;
                rows.push(vec![
                    snr,
                    rep.rho_star,
                    rep.v_star,
                    rep.error_free as u8 as f64,
                    rep.intersections.len() as f64,
                ]);
                first.get_or_insert((phi, rep));
            }
            write_table(
                &out("se.csv"),
                &["snr_db", "rho_star", "v_star", "error_free", "intersections"],
                &rows,
            )?;
            let (phi, rep) = first.expect("sweep is nonempty");
            let top = phi.rho_max().min(grid[grid.len() - 1]);
            let mut t = Vec::new();
            for r in log_grid(1e-3, top, 400) {
                t.push(vec![r, phi.inverse(r), psi.eval(r)]);
            }
            write_table(&out("transfer.csv"), &["rho", "phi_inv", "psi"], &t)?;
            let th = if sys.channel.is_awgn() {
                json!({
                    "uncoupled_error_free_db": opt(threshold_search(
                        &Target::UncoupledErrorFree { delta, psi: psi.as_ref() }, (-10.0, 40.0), 0.01)),
                    "coupled_critical_db": opt(threshold_search(
                        &Target::CoupledCritical { delta, psi: psi.as_ref() }, (-10.0, 40.0), 0.01)),
                })
            } else {
                serde_json::Value::Null
            };
            write_json(
                &out("se.json"),
                &json!({ "fixed_point": rep, "thresholds": th, "error_free_v": ERROR_FREE_V }),
            )?;
        }
        Kind::CoupleSe => {
            let a = cfg.asc()?;
            let den = Denoiser::new(a.code, a.constellation)?;
            let grid = psi_grid(a.delta(), a.sigma2());
            let psi = code_psi(den.code, den.constellation, &grid, cfg.psi_trials, a.seed)?;
            let opts = CoupledOpts {
                boundary: a.boundary,
                record: true,
                ..CoupledOpts::default()
            };
            let mut final_rows = Vec::new();
            let mut traj_rows = Vec::new();
            for snr in cfg.snr_list(a.snr_db) {
                let ch = a.channel.build(sigma2_from_snr_db(snr))?;
                let phi = channel_phi(a.delta(), &ch)?;
                let rep = coupled_se(a.k, a.w, &phi, psi.as_ref(), &opts)?;
                for (k, v) in rep.section_v.iter().enumerate() {
                    final_rows.push(vec![snr, (k + 1) as f64, *v, rep.profile.rho[k]]);
                }
                if traj_rows.is_empty() {
                    for (t, row) in rep.trajectory.iter().enumerate() {
                        for (k, v) in row.iter().enumerate() {
                            traj_rows.push(vec![(t + 1) as f64, (k + 1) as f64, *v]);
                        }
                    }
                }
            }
            write_table(&out("couple_se.csv"), &["snr_db", "section", "v", "rho"], &final_rows)?;
            write_table(&out("couple_se_trajectory.csv"), &["t", "section", "mse"], &traj_rows)?;
            let delta = a.delta();
            let th = if a.channel.is_awgn() {
                json!({
                    "uncoupled_error_free_db": opt(threshold_search(
                        &Target::UncoupledErrorFree { delta, psi: psi.as_ref() }, (-10.0, 40.0), 0.01)),
                    "coupled_critical_db": opt(threshold_search(
                        &Target::CoupledCritical { delta, psi: psi.as_ref() }, (-10.0, 40.0), 0.01)),
                })
            } else {
                serde_json::Value::Null
            };
            write_json(&out("couple_se.json"), &json!({ "thresholds": th }))?;
        }
        Kind::Rate => {
            let sys = cfg.system()?;
            let delta = sys.delta();
            let coupling = cfg.asc.as_ref().map(|a| (a.k, a.w));
            let mut rows = Vec::new();
            let mut reports = Vec::new();
            for snr in cfg.snr_list(sys.snr_db) {
                let s2 = sigma2_from_snr_db(snr);
                let ch = sys.channel.build(s2)?;
                let phi = channel_phi(delta, &ch)?;
                let i_yx = mutual_info_channel(&ch)?;
                let rep = match cfg.psi {
                    PsiSource::Matched => area_rate_report(&phi, &PhiInverse(&phi), s2, i_yx, coupling)?,
                    PsiSource::Gaussian => area_rate_report(&phi, &GaussianInput, s2, i_yx, coupling)?,
                    PsiSource::Code => {
                        let grid = psi_grid(delta, s2);
                        let psi = code_psi(sys.code, sys.constellation, &grid, cfg.psi_trials, sys.seed)?;
                        area_rate_report(&phi, psi.as_ref(), s2, i_yx, coupling)?
                    }
                };
                rows.push(vec![
                    snr,
                    rep.c_g / LN2,
                    rep.i_yx / LN2,
                    rep.r_c / LN2,
                    rep.r_ac / LN2,
                    rep.gap / LN2,
                    rep.r_asc.map_or(f64::NAN, |r| r / LN2),
                ]);
                reports.push(rep);
            }
            write_table(
                &out("rate.csv"),
                &["snr_db", "c_g_bits", "i_yx_bits", "r_c_bits", "r_ac_bits", "gap_bits", "r_asc_bits"],
                &rows,
            )?;
            write_json(&out("rate.json"), &json!({ "units": "nats", "reports": reports }))?;
        }
        Kind::Mi => {
            let sys = cfg.system()?;
            let mut rows = Vec::new();
            let mut checks = Vec::new();
            for snr in cfg.snr_list(sys.snr_db) {
                let s2 = sigma2_from_snr_db(snr);
                let ch = sys.channel.build(s2)?;
                let i = mutual_info_channel(&ch)?;
                rows.push(vec![snr, i / LN2, crate::evolve::capacity_awgn(s2) / LN2]);
                checks.push(json!({
                    "snr_db": snr,
                    "max_identity_deviation": mi_identity_check(&ch, &[0.3, 0.6, 0.9])?,
                }));
            }
            write_table(&out("mi.csv"), &["snr_db", "i_yx_bits", "c_g_bits"], &rows)?;
            write_json(&out("mi.json"), &json!({ "identity_check": checks }))?;
        }
        Kind::Ber => {
            let sys = cfg.system()?;
            let pts = ber_sweep(sys, &cfg.snr_list(sys.snr_db), &cfg.stop)?;
            write_table(&out("ber.csv"), &BER_COLUMNS, &ber_rows(&pts))?;
            let den = Denoiser::new(sys.code, sys.constellation)?;
            let th = if sys.channel.is_awgn() {
                let grid = psi_grid(sys.delta(), sys.sigma2());
                let psi = code_psi(den.code, den.constellation, &grid, cfg.psi_trials, sys.seed)?;
                json!([{
                    "label": "SE threshold",
                    "snr_db": opt(threshold_search(
                        &Target::UncoupledErrorFree { delta: sys.delta(), psi: psi.as_ref() }, (-10.0, 40.0), 0.01)),
                }])
            } else {
                json!([])
            };
            write_json(&out("ber.json"), &json!({ "csv": "ber.csv", "thresholds": th }))?;
        }
        Kind::Asc => {
            let a = cfg.asc()?;
            let snrs = cfg.snr_list(a.snr_db);
            let pts = asc_ber_sweep(a, &snrs, &cfg.stop)?;
            write_table(&out("asc_ber.csv"), &BER_COLUMNS, &ber_rows(&pts))?;
            // Section trajectory of frame 0 at the first SNR.
            let mut c0 = a.clone();
            c0.snr_db = snrs[0];
            c0.seed = seed::derive(a.seed, &[0]);
            let den = Denoiser::new(a.code, a.constellation)?;
            let ch = c0.channel.build(c0.sigma2())?;
            let sys = AscSystem::build(&c0)?;
            let c = random_sections(&c0, &den, 0);
            let obs = asc_transmit(&asc_encode(&sys, &c)?, &ch, c0.seed, 0);
            let (_, tr) = asc_decode(&sys, &obs, &den, &ch, 1e-10, Some(&c))?;
            write_with(&out("asc_trajectory.csv"), |b| tr.write_csv(b))?;
            write_json(
                &out("asc.json"),
                &json!({
                    "csv": "asc_ber.csv",
                    "rate_bits": a.rate(),
                    "info_bits": a.info_bits(),
                    "channel_uses": a.channel_uses(),
                }),
            )?;
        }
    }

    let outputs: Vec<String> = files
        .iter()
        .map(|p| p.file_name().unwrap().to_string_lossy().into_owned())
        .collect();
    let manifest = Manifest {
        kind: exp.kind,
        seed: cfg.seed(),
        config: cfg.clone(),
        git_describe: git_describe(),
        wall_time_s: t0.elapsed().as_secs_f64(),
        outputs,
        version: env!("CARGO_PKG_VERSION").into(),
    };
    let mpath = dir.join("manifest.json");
    fs::write(&mpath, serde_json::to_string_pretty(&manifest)? + "\n")?;
    files.push(mpath);
    Ok(files)
}

fn git_describe() -> String {
    std::process::Command::new("git")
        .args(["describe", "--always", "--dirty"])
        .output()
        .ok()
        .filter(|o| o.status.success())
        .map(|o| String::from_utf8_lossy(&o.stdout).trim().to_string())
        .unwrap_or_else(|| "unknown".into())
}

/// SE-predicted uncoded BPSK bit error rate at proxy SNR `rho`: `Q(√ρ)`.
pub fn bpsk_ber(rho: f64) -> f64 {
    crate::numeric::norm_sf(rho.sqrt())
}

/// BER predicted by the coupled SE for each SNR, averaged over sections.
pub fn coupled_ber_prediction(cfg: &AscConfig, psi: &dyn Transfer, snr_db: f64) -> Result<f64> {
    let ch = cfg.channel.build(sigma2_from_snr_db(snr_db))?;
    let phi = channel_phi(cfg.delta(), &ch)?;
    let opts = CoupledOpts {
        boundary: cfg.boundary,
        ..CoupledOpts::default()
    };
    let rep = coupled_se(cfg.k, cfg.w, &phi, psi, &opts)?;
    Ok(rep.profile.rho.iter().map(|&r| bpsk_ber(r)).sum::<f64>() / cfg.k as f64)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn wilson_bounds() {
        let (lo, hi) = wilson(0, 100);
        assert_eq!(lo, 0.0);
        assert!(hi > 0.0 && hi < 0.05);
        let (lo, hi) = wilson(50, 100);
        assert!(lo < 0.5 && hi > 0.5);
    }

    #[test]
    fn hard_bits_roundtrip() {
        let den = Denoiser::new(CodeSpec::HadamardBlock { n: 8 }, Constellation::Bpsk).unwrap();
        let c = den.random_codeword(32, &mut seed::rng(1, Role::Data, &[]));
        assert_eq!(hard_bits(&den, &c).len(), 4 * 4);
        let noisy: Vec<f64> = c.iter().map(|x| 0.3 * x).collect();
        assert_eq!(bit_errors(&den, &noisy, &c), (0, 16));
        let pam = Denoiser::new(CodeSpec::Uncoded, Constellation::Pam4).unwrap();
        let pts = Constellation::Pam4.points();
        let b = hard_bits(&pam, pts);
        assert_eq!(b, vec![false, false, false, true, true, true, true, false]);
    }

    #[test]
    fn noiseless_orthonormal_link_is_error_free() {
        let mut sys = SystemConfig::new(256, 256, 300.0);
        sys.sensing = SensingSpec::SubsampledHadamard { signs: true };
        let stop = StopRule {
            min_errors: 1,
            max_frames: 4,
            batch: 2,
        };
        let p = ber_sweep(&sys, &[300.0], &stop).unwrap();
        assert_eq!(p[0].bit_errors, 0);
        assert_eq!(p[0].frames, 4);
    }

    #[test]
    fn chance_level_far_below_threshold() {
        let sys = SystemConfig::new(512, 256, -30.0);
        let stop = StopRule {
            min_errors: 500,
            max_frames: 8,
            batch: 4,
        };
        let p = ber_sweep(&sys, &[-30.0], &stop).unwrap();
        assert!((p[0].ber - 0.5).abs() < 0.05, "{}", p[0].ber);
    }
}
