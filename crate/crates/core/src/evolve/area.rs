use serde::Serialize;

use super::transfer::{MatchedPsi, Phi, Transfer};
use crate::denoise::mmse_scalar;
use crate::error::{invalid, Error, Result};
use crate::model::Constellation;
use crate::numeric::{self, QuadOpts};

/// Area-theorem rate accounting, all in nats.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AreaReport {
    pub delta: f64,
    pub sigma2: f64,
    pub c_g: f64,
    /// Information rate of the channel for Gaussian input (`C_G` for AWGN).
    pub i_yx: f64,
    /// Area between `φ⁻¹` and `ψ^opt`.
    pub area: f64,
    pub r_c: f64,
    pub r_ac: f64,
    pub gap: f64,
    pub r_asc: Option<f64>,
    /// `½∫₀¹ φ(v) dv`, which should equal `δ·i_yx`.
    pub half_area_phi: f64,
}

const QUAD: QuadOpts = QuadOpts {
    abs_tol: 1e-14,
    rel_tol: 1e-12,
    max_intervals: 20_000,
};

pub fn capacity_awgn(sigma2: f64) -> f64 {
    0.5 * (1.0 / sigma2).ln_1p()
}

/// `½∫₀¹ φ(v) dv`.
pub fn half_area_phi(phi: &Phi) -> Result<f64> {
    let breaks: Vec<f64> = match phi {
        Phi::Curve { g, .. } => g.knots.clone(),
        Phi::Awgn { .. } => Vec::new(),
    };
    Ok(0.5 * numeric::integrate(|v| phi.eval(v), 0.0, 1.0, &breaks, QUAD)?)
}

/// Rates achieved by matching `ψ` to `φ⁻¹`: `ψ^opt = min{φ⁻¹, ψ}`.
///
/// `i_yx` is the Gaussian-input information rate of the channel that `φ` describes.
pub fn area_rate_report(
    phi: &Phi,
    psi: &dyn Transfer,
    sigma2: f64,
    i_yx: f64,
    coupling: Option<(usize, usize)>,
) -> Result<AreaReport> {
    let delta = phi.delta();
    let opt = MatchedPsi { phi, psi };
    let mut breaks = opt.breaks();
    breaks.retain(|b| b.is_finite());
    let top = phi.rho_max();
    let r_c = 0.5 * numeric::integrate(|r| opt.eval(r), 0.0, top, &breaks, QUAD)?;
    let inv = 0.5 * numeric::integrate(|r| phi.inverse(r), 0.0, top, &breaks, QUAD)?;
    let area = (2.0 * (inv - r_c)).max(0.0);
    let r_ac = r_c / delta;
    Ok(AreaReport {
        delta,
        sigma2,
        c_g: capacity_awgn(sigma2),
        i_yx,
        area,
        r_c,
        r_ac,
        gap: area / (2.0 * delta),
        r_asc: coupling.map(|(k, w)| super::asc_rate(r_ac, k, w)),
        half_area_phi: half_area_phi(phi)?,
    })
}

/// `½∫₀^∞ mmse(S, ρ) dρ`; equals the constellation's entropy in nats.
pub fn mmse_area(c: Constellation) -> Result<f64> {
    let f = |r: f64| mmse_scalar(c, r);
    let mut breaks = Vec::new();
    let mut p = 0.5;
    while p < 4000.0 {
        breaks.push(p);
        p *= 2.0;
    }
    Ok(0.5 * numeric::integrate(f, 0.0, 4000.0, &breaks, QUAD)?)
}

/// The three values of `ρ_B`: exact first crossing of `mmse(B,ρ) = φ⁻¹(ρ)`,
/// the small-δ closed form, and the asymptote `δ/(1+σ²)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RhoB {
    pub exact: f64,
    pub closed_form: f64,
    pub asymptote: f64,
}

pub fn rho_b_closed_form(delta: f64, sigma2: f64) -> Result<RhoB> {
    let h = 0.5 * (1.0 + sigma2);
    let disc = h * h - delta;
    if disc < 0.0 || delta <= 0.0 {
        return invalid(format!("no real root: δ = {delta} exceeds ((1+σ²)/2)²"));
    }
    let closed_form = h - disc.sqrt();
    let phi = Phi::awgn(delta, sigma2);
    let g = |r: f64| mmse_scalar(Constellation::Bpsk, r) - phi.inverse(r);
    let lo = phi.rho0();
    // Step up from ρ₀ until mmse overtakes φ⁻¹.
    let mut a = lo;
    let mut b = lo * 1.01;
    while g(b) < 0.0 {
        a = b;
        b *= 1.01;
        if b > phi.rho_max() {
            return Err(Error::NoBracket { lo, hi: b });
        }
    }
    for _ in 0..200 {
        let m = 0.5 * (a + b);
        if g(m) < 0.0 {
            a = m;
        } else {
            b = m;
        }
        if b - a <= 1e-15 * b {
            break;
        }
    }
    Ok(RhoB {
        exact: 0.5 * (a + b),
        closed_form,
        asymptote: delta / (1.0 + sigma2),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::evolve::transfer::{Mmse, PhiInverse};

    #[test]
    fn capacity_examples() {
        assert!((capacity_awgn(1.0) / std::f64::consts::LN_2 - 0.5).abs() < 1e-15);
    }

    #[test]
    fn matched_decoder_achieves_capacity() {
        let phi = Phi::awgn(0.3, 0.5);
        let r = area_rate_report(&phi, &PhiInverse(&phi), 0.5, capacity_awgn(0.5), None).unwrap();
        assert!(r.area.abs() < 1e-10);
        assert!((r.r_ac - r.c_g).abs() < 1e-9);
        assert!((r.half_area_phi - 0.3 * r.c_g).abs() < 1e-10);
    }

    #[test]
    fn bpsk_gap_small_delta() {
        let phi = Phi::awgn(0.1, 1.0);
        let r = area_rate_report(&phi, &Mmse(Constellation::Bpsk), 1.0, capacity_awgn(1.0), Some((50, 3)))
            .unwrap();
        assert!(r.gap > 0.0);
        assert!(r.gap <= 0.00625 + 0.1 * 0.1);
        assert!((r.r_ac + r.gap - r.c_g).abs() < 1e-8);
    }

    #[test]
    fn rho_b_examples() {
        let r = rho_b_closed_form(0.1, 1.0).unwrap();
        assert!((r.closed_form - (1.0 - 0.9f64.sqrt())).abs() < 1e-15);
        assert!(rho_b_closed_form(2.0, 1.0).is_err());
        let r = rho_b_closed_form(0.01, 1.0).unwrap();
        assert!(r.exact > r.asymptote);
    }
}
