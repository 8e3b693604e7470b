use serde::Serialize;

use super::curve::{lin_grid, log_grid};
use super::fixed_point::{intersections, Intersection};
use super::transfer::{Phi, Transfer};
use crate::error::Result;
use crate::numeric::{self, QuadOpts};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PotentialReport {
    pub v: Vec<f64>,
    pub u: Vec<f64>,
    /// Global minimizer of `U`; ties go to the smaller `v`.
    pub minimizer: f64,
    pub intersections: Vec<Intersection>,
    pub a1: Option<f64>,
    pub a2: Option<f64>,
    pub a3: Option<f64>,
    pub critical: Option<bool>,
}

const QUAD: QuadOpts = QuadOpts {
    abs_tol: 1e-13,
    rel_tol: 1e-10,
    max_intervals: 4000,
};

/// `∫_a^b [ψ(ρ) - φ⁻¹(ρ)] dρ`.
pub(crate) fn signed_area(phi: &Phi, psi: &dyn Transfer, breaks: &[f64], a: f64, b: f64) -> Result<f64> {
    numeric::integrate(|r| psi.eval(r) - phi.inverse(r), a, b, breaks, QUAD)
}

fn all_breaks(phi: &Phi, psi: &dyn Transfer) -> Vec<f64> {
    let mut b = psi.breaks();
    b.push(phi.rho0());
    b.push(phi.rho_max());
    if let Phi::Curve { delta, g } = phi {
        b.extend(g.values.iter().map(|x| delta * x));
    }
    b.sort_by(|x, y| x.partial_cmp(y).unwrap());
    b.dedup();
    b
}

/// `U(v) = ∫_{φ(1)}^{φ(v)} [ψ(ρ) - φ⁻¹(ρ)] dρ`.
pub fn potential_at(phi: &Phi, psi: &dyn Transfer, v: f64) -> Result<f64> {
    let b = all_breaks(phi, psi);
    signed_area(phi, psi, &b, phi.rho0(), phi.eval(v))
}

/// The 2000 abscissae on which `U` is tabulated.
pub fn potential_grid() -> Vec<f64> {
    let mut g = lin_grid(0.0, 1.0, 1900);
    g.extend(log_grid(1e-9, 5e-4, 100));
    g.sort_by(|a, b| a.partial_cmp(b).unwrap());
    g
}

pub fn potential_report(phi: &Phi, psi: &dyn Transfer) -> Result<PotentialReport> {
    let breaks = all_breaks(phi, psi);
    let v = potential_grid();
    let n = v.len();
    let mut u = vec![0.0; n];
    // Walk down from v = 1 where U vanishes.
    for i in (0..n - 1).rev() {
        let seg = signed_area(phi, psi, &breaks, phi.eval(v[i + 1]), phi.eval(v[i]))?;
        u[i] = u[i + 1] + seg;
    }
    let umin = u.iter().cloned().fold(f64::INFINITY, f64::min);
    let tie = 1e-12 * (1.0 + umin.abs());
    let minimizer = v[u.iter().position(|&x| x <= umin + tie).unwrap()];
    let ints = intersections(phi, psi);
    let area = |a: f64, b: f64| signed_area(phi, psi, &breaks, a, b);
    let (mut a1, mut a2, mut a3) = (None, None, None);
    if let Some(first) = ints.first() {
        a1 = Some(-area(0.0, first.rho)?);
    }
    if ints.len() >= 3 {
        a2 = Some(area(ints[0].rho, ints[1].rho)?);
        a3 = Some(-area(ints[1].rho, ints[2].rho)?);
    }
    let critical = match (a2, a3) {
        (Some(x), Some(y)) => Some((x - y).abs() <= 1e-4 * x.max(y)),
        _ => None,
    };
    Ok(PotentialReport {
        v,
        u,
        minimizer,
        intersections: ints,
        a1,
        a2,
        a3,
        critical,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::evolve::transfer::{FnTransfer, Mmse};
    use crate::model::Constellation;

    #[test]
    fn u_vanishes_at_one_and_decreases_under_good_decoder() {
        let phi = Phi::awgn(0.5, 0.3);
        let psi = FnTransfer(|r: f64| 0.5 * phi.inverse(r));
        assert_eq!(potential_at(&phi, &psi, 1.0).unwrap(), 0.0);
        let rep = potential_report(&phi, &psi).unwrap();
        assert!(rep.u.windows(2).all(|w| w[0] <= w[1] + 1e-15));
        assert!(rep.minimizer < 1e-6);
    }

    #[test]
    fn stationary_at_intersections() {
        // Uncoded BPSK at δ = 0.5 has three fixed points around 14 dB.
        let phi = Phi::awgn(0.5, 10f64.powf(-1.4));
        let psi = Mmse(Constellation::Bpsk);
        let rep = potential_report(&phi, &psi).unwrap();
        assert!(rep.intersections.len() >= 3, "{:?}", rep.intersections);
        for it in &rep.intersections {
            let h = 1e-4 * it.v.max(1e-3);
            let d = (potential_at(&phi, &psi, it.v + h).unwrap()
                - potential_at(&phi, &psi, it.v - h).unwrap())
                / (2.0 * h);
            let scale = phi.derivative(it.v).abs();
            assert!(d.abs() / scale < 1e-5, "v = {}: {d}", it.v);
        }
        let (a2, a3) = (rep.a2.unwrap(), rep.a3.unwrap());
        let v1 = rep.intersections[0].v;
        let v3 = rep.intersections[2].v;
        let du = potential_at(&phi, &psi, v3).unwrap() - potential_at(&phi, &psi, v1).unwrap();
        assert!((du - (a2 - a3)).abs() < 1e-8);
    }
}
