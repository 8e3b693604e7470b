//! State evolution, transfer curves, areas, potentials and rates.

pub mod area;
pub mod coupled;
pub mod curve;
pub mod fixed_point;
pub mod mi;
pub mod potential;
pub mod threshold;
pub mod transfer;

pub use area::{area_rate_report, capacity_awgn, rho_b_closed_form, AreaReport, RhoB};
pub use coupled::{coupled_se, Boundary, CoupledOpts, CoupledProfile, CoupledReport};
pub use curve::{Axis, TransferCurve};
pub use fixed_point::{se_fixed_point, FixedPointReport, Intersection};
pub use mi::{mi_identity_check, mutual_info_channel, varphi_general, varphi_quad};
pub use potential::{potential_report, PotentialReport};
pub use threshold::{threshold_search, Target};
pub use transfer::{phi_awgn, Phi, Transfer};

/// Rate of a coupled chain: `R_AC·K/(K+W-1)`.
pub fn asc_rate(r_ac: f64, k: usize, w: usize) -> f64 {
    r_ac * k as f64 / (k + w - 1) as f64
}

/// Rate after puncturing a fraction `f` of the transmitted symbols.
pub fn puncture_rate(r: f64, f: f64) -> f64 {
    r / (1.0 - f)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rate_constants() {
        assert!((asc_rate(1.0, 50, 3) - 0.9615).abs() < 5e-5);
        assert!((asc_rate(0.5, 100, 3) - 0.4902).abs() < 5e-5);
        assert_eq!(asc_rate(0.7, 9, 1), 0.7);
        let m = asc_rate(0.5, 100, 3);
        assert!((puncture_rate(m, 0.5) - 0.9804).abs() < 5e-5);
        assert!((puncture_rate(m, 2.0 / 3.0) - 1.4706).abs() < 5e-5);
    }
}
