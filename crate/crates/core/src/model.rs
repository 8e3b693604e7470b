//! Constellations, scalar output channels and the run configuration.

use std::f64::consts::FRAC_1_SQRT_2;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::denoise::CodeSpec;
use crate::error::{invalid, Error, Result};
use crate::numeric::{self, norm_pdf, QuadOpts};

/// Equiprobable real constellation with unit average power.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Constellation {
    #[default]
    Bpsk,
    /// 4-PAM, the real part of 16-QAM.
    Pam4,
}

impl Constellation {
    pub fn points(&self) -> &'static [f64] {
        const S5: f64 = 0.447_213_595_499_957_9; // 1/sqrt(5)
        match self {
            Constellation::Bpsk => &[-1.0, 1.0],
            Constellation::Pam4 => &[-3.0 * S5, -S5, S5, 3.0 * S5],
        }
    }

    pub fn power(&self) -> f64 {
        let p = self.points();
        p.iter().map(|s| s * s).sum::<f64>() / p.len() as f64
    }

    pub fn is_symmetric(&self) -> bool {
        let p = self.points();
        p.iter().all(|s| p.iter().any(|t| (s + t).abs() < 1e-15))
    }

    /// Bits carried per symbol.
    pub fn bits(&self) -> usize {
        self.points().len().trailing_zeros() as usize
    }
}

/// Saturate `x` to `[-z, z]`. `z = ∞` is the identity.
#[inline]
pub fn clip(x: f64, z: f64) -> f64 {
    x.clamp(-z, z)
}

/// `E[clip(x, z)²]` for standard normal `x`, closed form.
pub fn clip_power(z: f64) -> f64 {
    if z.is_infinite() {
        return 1.0;
    }
    let t = z * FRAC_1_SQRT_2;
    libm::erf(t) - 2.0 * z * norm_pdf(z) + z * z * libm::erfc(t)
}

/// Same quantity by adaptive quadrature; used to cross-check [`clip_power`].
pub fn clip_power_quadrature(z: f64) -> Result<f64> {
    let f = |x: f64| {
        let c = clip(x, z);
        c * c * norm_pdf(x)
    };
    numeric::integrate(
        f,
        -40.0,
        40.0,
        &[-z, 0.0, z],
        QuadOpts {
            abs_tol: 1e-15,
            rel_tol: 1e-14,
            ..Default::default()
        },
    )
}

/// Clipping threshold and power renormalizer for a clipping ratio in dB.
pub fn clip_params_from_cr(cr_db: f64) -> Result<(f64, f64)> {
    if cr_db.is_nan() || cr_db == f64::NEG_INFINITY {
        return invalid(format!("clipping ratio must be finite or +inf, got {cr_db}"));
    }
    if cr_db == f64::INFINITY {
        return Ok((f64::INFINITY, 1.0));
    }
    let z = 10f64.powf(cr_db / 20.0);
    Ok((z, 1.0 / clip_power(z).sqrt()))
}

/// `y = α·clip(x, Z) + n`, `n ~ N(0, σ²)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ClipChannel {
    pub z: f64,
    pub cr_db: f64,
    pub alpha: f64,
    pub sigma2: f64,
}

impl ClipChannel {
    pub fn new(cr_db: f64, sigma2: f64) -> Result<Self> {
        check_sigma2(sigma2)?;
        let (z, alpha) = clip_params_from_cr(cr_db)?;
        Ok(Self {
            z,
            cr_db,
            alpha,
            sigma2,
        })
    }

    #[inline]
    pub fn f(&self, x: f64) -> f64 {
        self.alpha * clip(x, self.z)
    }
}

/// `y = Q(x + n)`: noise first, then a scalar quantizer.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct QuantChannel {
    /// Interior cell boundaries, strictly increasing (one fewer than `values`).
    pub thresholds: Vec<f64>,
    /// Reproduction value of each cell.
    pub values: Vec<f64>,
    pub sigma2: f64,
}

impl QuantChannel {
    pub fn new(thresholds: Vec<f64>, values: Vec<f64>, sigma2: f64) -> Result<Self> {
        check_sigma2(sigma2)?;
        if values.len() != thresholds.len() + 1 || values.is_empty() {
            return invalid("quantizer needs exactly one more value than thresholds");
        }
        if thresholds.windows(2).any(|w| w[0] >= w[1]) || thresholds.iter().any(|t| !t.is_finite())
        {
            return invalid("quantizer thresholds must be finite and strictly increasing");
        }
        for (i, &v) in values.iter().enumerate() {
            let (lo, hi) = cell_bounds(&thresholds, i);
            if !(v >= lo && v < hi) {
                return invalid(format!("reproduction value {v} outside its cell [{lo}, {hi})"));
            }
        }
        Ok(Self {
            thresholds,
            values,
            sigma2,
        })
    }

    /// Uniform mid-rise quantizer with `2^bits` cells of width `step`; outer cells open.
    pub fn uniform(bits: u32, step: f64, sigma2: f64) -> Result<Self> {
        if bits == 0 || bits > 16 || step.partial_cmp(&0.0) != Some(std::cmp::Ordering::Greater) {
            return invalid("uniform quantizer needs 1..=16 bits and a positive step");
        }
        let levels = 1usize << bits;
        let half = (levels / 2) as f64;
        let thresholds = (1..levels).map(|k| (k as f64 - half) * step).collect();
        let values = (0..levels).map(|k| (k as f64 - half + 0.5) * step).collect();
        Self::new(thresholds, values, sigma2)
    }

    pub fn levels(&self) -> usize {
        self.values.len()
    }

    /// Index of the cell `u` falls in.
    pub fn cell_of(&self, u: f64) -> usize {
        self.thresholds.partition_point(|&t| t <= u)
    }

    pub fn cell(&self, i: usize) -> (f64, f64) {
        cell_bounds(&self.thresholds, i)
    }

    #[inline]
    pub fn quantize(&self, u: f64) -> f64 {
        self.values[self.cell_of(u)]
    }

    /// Cell index of a reproduction value.
    pub fn index_of(&self, y: f64) -> Result<usize> {
        let i = self.cell_of(y);
        if self.values[i] == y {
            Ok(i)
        } else {
            Err(Error::NotInAlphabet(y))
        }
    }
}

fn cell_bounds(thresholds: &[f64], i: usize) -> (f64, f64) {
    let lo = if i == 0 { f64::NEG_INFINITY } else { thresholds[i - 1] };
    let hi = if i == thresholds.len() { f64::INFINITY } else { thresholds[i] };
    (lo, hi)
}

fn check_sigma2(sigma2: f64) -> Result<()> {
    if sigma2 > 0.0 && sigma2.is_finite() {
        Ok(())
    } else {
        invalid(format!("noise variance must be positive and finite, got {sigma2}"))
    }
}

/// Scalar law p(y|x) applied componentwise to the compressed signal.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub enum OutputChannel {
    Awgn { sigma2: f64 },
    Clip(ClipChannel),
    Quant(QuantChannel),
}

impl OutputChannel {
    pub fn awgn(sigma2: f64) -> Result<Self> {
        check_sigma2(sigma2)?;
        Ok(OutputChannel::Awgn { sigma2 })
    }

    pub fn sigma2(&self) -> f64 {
        match self {
            OutputChannel::Awgn { sigma2 } => *sigma2,
            OutputChannel::Clip(c) => c.sigma2,
            OutputChannel::Quant(q) => q.sigma2,
        }
    }

    /// True when the law is exactly Gaussian around `x`.
    pub fn is_gaussian(&self) -> bool {
        match self {
            OutputChannel::Awgn { .. } => true,
            OutputChannel::Clip(c) => c.z.is_infinite() && c.alpha == 1.0,
            OutputChannel::Quant(_) => false,
        }
    }

    /// Channel output for input `x` given a standard normal draw `w`.
    #[inline]
    pub fn sample(&self, x: f64, w: f64) -> f64 {
        match self {
            OutputChannel::Awgn { sigma2 } => x + sigma2.sqrt() * w,
            OutputChannel::Clip(c) => c.f(x) + c.sigma2.sqrt() * w,
            OutputChannel::Quant(q) => q.quantize(x + q.sigma2.sqrt() * w),
        }
    }

    /// Density (continuous outputs) or probability mass (quantizer) of `y` given `x`.
    pub fn likelihood(&self, y: f64, x: f64) -> Result<f64> {
        match self {
            OutputChannel::Awgn { sigma2 } => Ok(numeric::gauss_density(y, x, *sigma2)),
            OutputChannel::Clip(c) => Ok(numeric::gauss_density(y, c.f(x), c.sigma2)),
            OutputChannel::Quant(q) => {
                let (lo, hi) = q.cell(q.index_of(y)?);
                let s = q.sigma2.sqrt();
                Ok(numeric::ln_norm_cdf_diff((lo - x) / s, (hi - x) / s).exp())
            }
        }
    }
}

/// Serialized channel selection; the noise level comes from the SNR.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
#[derive(Default)]
pub enum ChannelSpec {
    #[default]
    Awgn,
    Clip { cr_db: f64 },
    Quant { bits: u32, step: f64 },
}

impl ChannelSpec {
    pub fn is_awgn(&self) -> bool {
        matches!(self, ChannelSpec::Awgn)
    }

    pub fn build(&self, sigma2: f64) -> Result<OutputChannel> {
        match self {
            ChannelSpec::Awgn => OutputChannel::awgn(sigma2),
            ChannelSpec::Clip { cr_db } => Ok(OutputChannel::Clip(ClipChannel::new(*cr_db, sigma2)?)),
            ChannelSpec::Quant { bits, step } => {
                Ok(OutputChannel::Quant(QuantChannel::uniform(*bits, *step, sigma2)?))
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
#[derive(Default)]
pub enum SensingSpec {
    #[default]
    DenseGaussian,
    SubsampledHadamard {
        #[serde(default = "yes")]
        signs: bool,
    },
}

fn yes() -> bool {
    true
}


/// How the receiver learns the proxy SNR fed to the denoiser.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum RhoMode {
    /// From the state-evolution formula with known noise variance.
    #[default]
    Formula,
    /// From the empirical residual energy.
    Residual,
}

/// One compressed-coding link: `y = f(A c) + n`, `A` of size `m × n`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SystemConfig {
    pub n: usize,
    pub m: usize,
    pub snr_db: f64,
    #[serde(default)]
    pub constellation: Constellation,
    #[serde(default)]
    pub code: CodeSpec,
    #[serde(default)]
    pub channel: ChannelSpec,
    #[serde(default)]
    pub sensing: SensingSpec,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_t_max")]
    pub t_max: usize,
    #[serde(default = "default_damping")]
    pub damping: f64,
    #[serde(default)]
    pub rho_mode: RhoMode,
}

fn default_t_max() -> usize {
    50
}

fn default_damping() -> f64 {
    1.0
}

impl SystemConfig {
    pub fn new(n: usize, m: usize, snr_db: f64) -> Self {
        Self {
            n,
            m,
            snr_db,
            constellation: Constellation::Bpsk,
            code: CodeSpec::Uncoded,
            channel: ChannelSpec::Awgn,
            sensing: SensingSpec::DenseGaussian,
            seed: 0,
            t_max: default_t_max(),
            damping: default_damping(),
            rho_mode: RhoMode::Formula,
        }
    }

    pub fn delta(&self) -> f64 {
        self.m as f64 / self.n as f64
    }

    pub fn sigma2(&self) -> f64 {
        sigma2_from_snr_db(self.snr_db)
    }

    pub fn channel(&self) -> Result<OutputChannel> {
        self.channel.build(self.sigma2())
    }

    pub fn validate(&self) -> Result<()> {
        if self.n == 0 || self.m == 0 {
            return Err(Error::Config("n and m must be at least 1".into()));
        }
        if !self.snr_db.is_finite() {
            return Err(Error::Config("snr_db must be finite".into()));
        }
        if self.t_max == 0 {
            return Err(Error::Config("t_max must be at least 1".into()));
        }
        if !(self.damping > 0.0 && self.damping <= 1.0) {
            return Err(Error::Config("damping must lie in (0, 1]".into()));
        }
        if !self.n.is_multiple_of(self.code.block_len()) {
            return Err(Error::Config(format!(
                "n = {} is not a multiple of the code block length {}",
                self.n,
                self.code.block_len()
            )));
        }
        self.code.validate()?;
        self.channel()?;
        Ok(())
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: Self = serde_json::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }
}

pub fn sigma2_from_snr_db(snr_db: f64) -> f64 {
    10f64.powf(-snr_db / 10.0)
}

pub fn snr_db_from_sigma2(sigma2: f64) -> f64 {
    -10.0 * sigma2.log10()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn constellations_unit_power_and_symmetric() {
        for c in [Constellation::Bpsk, Constellation::Pam4] {
            assert!((c.power() - 1.0).abs() < 1e-12);
            assert!(c.is_symmetric());
        }
        assert_eq!(Constellation::Pam4.bits(), 2);
    }

    #[test]
    fn clip_basics() {
        assert_eq!(clip(1.7, 1.2), 1.2);
        assert_eq!(clip(-0.3, 1.2), -0.3);
        assert_eq!(clip(-7.5, f64::INFINITY), -7.5);
        assert_eq!(clip(clip(3.0, 1.0), 1.0), 1.0);
    }

    #[test]
    fn clip_params() {
        let (z, a) = clip_params_from_cr(0.0).unwrap();
        assert_eq!(z, 1.0);
        assert!(a > 1.0);
        assert_eq!(clip_params_from_cr(f64::INFINITY).unwrap(), (f64::INFINITY, 1.0));
        assert!(clip_params_from_cr(f64::NEG_INFINITY).is_err());
        assert!(clip_params_from_cr(f64::NAN).is_err());
        for cr in [-3.0, 0.0, 1.0, 3.0, 6.0] {
            let (z, _) = clip_params_from_cr(cr).unwrap();
            assert!((clip_power(z) - clip_power_quadrature(z).unwrap()).abs() < 1e-10);
        }
    }

    #[test]
    fn likelihood_shapes() {
        let ch = OutputChannel::awgn(0.5).unwrap();
        let peak = ch.likelihood(0.3, 0.3).unwrap();
        assert!((peak - 1.0 / (std::f64::consts::PI).sqrt()).abs() < 1e-14);
        let c = OutputChannel::Clip(ClipChannel::new(1.0, 0.5).unwrap());
        let OutputChannel::Clip(cc) = &c else { unreachable!() };
        let l = c.likelihood(0.7, 50.0).unwrap();
        assert!((l - numeric::gauss_density(0.7, cc.alpha * cc.z, 0.5)).abs() < 1e-15);
        let q = OutputChannel::Quant(QuantChannel::uniform(2, 1.0, 0.5).unwrap());
        assert!(q.likelihood(0.3, 0.0).is_err());
        let total: f64 = [-1.5, -0.5, 0.5, 1.5]
            .iter()
            .map(|&y| q.likelihood(y, 0.2).unwrap())
            .sum();
        assert!((total - 1.0).abs() < 1e-14);
    }

    #[test]
    fn quantizer_validation() {
        assert!(QuantChannel::new(vec![0.0, 0.0], vec![-1.0, 0.0, 1.0], 1.0).is_err());
        assert!(QuantChannel::new(vec![0.0], vec![-1.0, -0.5], 1.0).is_err());
        let q = QuantChannel::uniform(1, 1.0, 1.0).unwrap();
        assert_eq!(q.thresholds, vec![0.0]);
        assert_eq!(q.values, vec![-0.5, 0.5]);
        assert_eq!(q.quantize(-0.0), 0.5);
    }

    #[test]
    fn config_json_round_trip_and_rejection() {
        let cfg = SystemConfig::new(1024, 512, 6.0);
        let text = serde_json::to_string(&cfg).unwrap();
        assert_eq!(SystemConfig::from_json(&text).unwrap(), cfg);
        let bad = r#"{"n": 8, "m": 4, "snr_db": 3.0, "bogus": 1}"#;
        assert!(SystemConfig::from_json(bad).is_err());
        let min = r#"{"n": 8, "m": 4, "snr_db": 3.0, "channel": {"kind": "clip", "cr_db": 1.0}}"#;
        let cfg = SystemConfig::from_json(min).unwrap();
        assert_eq!(cfg.delta(), 0.5);
        assert!(matches!(cfg.channel().unwrap(), OutputChannel::Clip(_)));
    }
}
