use super::coupled::{coupled_se, Boundary, CoupledOpts};
use super::fixed_point::se_fixed_point;
use super::potential::potential_report;
use super::transfer::{Phi, Transfer};
use crate::error::{Error, Result};
use crate::model::sigma2_from_snr_db;
use crate::numeric::{self, QuadOpts};

/// What "decodable" means for a threshold search.
pub enum Target<'a> {
    /// Scalar SE reaches `v ≤ 1e-6`.
    UncoupledErrorFree { delta: f64, psi: &'a dyn Transfer },
    /// The potential favours the low fixed point: `a3 ≥ a2`. With fewer than three
    /// intersections the unique fixed point must lie below `1e-2`.
    CoupledCritical { delta: f64, psi: &'a dyn Transfer },
    /// Coupled SE drives every section variance to `≤ max_v`.
    CoupledSe {
        delta: f64,
        psi: &'a dyn Transfer,
        k: usize,
        w: usize,
        boundary: Boundary,
        max_v: f64,
    },
    /// `½∫₀^snr ψ(ρ) dρ ≥ rate` (nats): the I-MMSE limit for the input ψ describes.
    RateLimit { rate: f64, psi: &'a dyn Transfer },
}

impl Target<'_> {
    pub fn decodable(&self, snr_db: f64) -> Result<bool> {
        let sigma2 = sigma2_from_snr_db(snr_db);
        match *self {
            Target::UncoupledErrorFree { delta, psi } => {
                Ok(se_fixed_point(&Phi::awgn(delta, sigma2), psi)?.error_free)
            }
            Target::CoupledCritical { delta, psi } => {
                let rep = potential_report(&Phi::awgn(delta, sigma2), psi)?;
                Ok(match (rep.a2, rep.a3) {
                    (Some(a2), Some(a3)) => a3 >= a2,
                    _ => rep.intersections.first().is_some_and(|i| i.v <= 1e-2),
                })
            }
            Target::CoupledSe {
                delta,
                psi,
                k,
                w,
                boundary,
                max_v,
            } => {
                let opts = CoupledOpts {
                    boundary,
                    ..CoupledOpts::default()
                };
                let rep = coupled_se(k, w, &Phi::awgn(delta, sigma2), psi, &opts)?;
                Ok(rep.max_section_v() <= max_v)
            }
            Target::RateLimit { rate, psi } => {
                let snr = 1.0 / sigma2;
                let mut breaks = Vec::new();
                let mut p = 0.25;
                while p < snr {
                    breaks.push(p);
                    p *= 2.0;
                }
                let area = numeric::integrate(
                    |r| psi.eval(r),
                    0.0,
                    snr,
                    &breaks,
                    QuadOpts {
                        abs_tol: 1e-14,
                        rel_tol: 1e-12,
                        max_intervals: 10_000,
                    },
                )?;
                Ok(0.5 * area >= rate)
            }
        }
    }
}

/// Smallest SNR (dB) in `bracket` at which `target` becomes decodable, to `tol_db`.
pub fn threshold_search(target: &Target, bracket: (f64, f64), tol_db: f64) -> Result<f64> {
    bisect_snr(|s| target.decodable(s), bracket, tol_db)
}

/// Bisection on a predicate that is false at `bracket.0` and true at `bracket.1`.
pub fn bisect_snr(
    pred: impl Fn(f64) -> Result<bool>,
    bracket: (f64, f64),
    tol_db: f64,
) -> Result<f64> {
    let (mut lo, mut hi) = bracket;
    if pred(lo)? || !pred(hi)? {
        return Err(Error::NoBracket { lo, hi });
    }
    while hi - lo > tol_db {
        let mid = 0.5 * (lo + hi);
        if pred(mid)? {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::evolve::transfer::GaussianInput;

    #[test]
    fn gaussian_rate_half_bit_at_zero_db() {
        let t = Target::RateLimit {
            rate: 0.5 * std::f64::consts::LN_2,
            psi: &GaussianInput,
        };
        let s = threshold_search(&t, (-3.0, 3.0), 0.001).unwrap();
        assert!(s.abs() < 2e-3);
    }

    #[test]
    fn empty_bracket_is_an_error() {
        let t = Target::RateLimit {
            rate: 0.5 * std::f64::consts::LN_2,
            psi: &GaussianInput,
        };
        assert!(threshold_search(&t, (1.0, 3.0), 0.01).is_err());
    }
}
