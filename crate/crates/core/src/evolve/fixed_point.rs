use serde::Serialize;

use super::curve::{lin_grid, log_grid};
use super::transfer::{Phi, Transfer};
use crate::error::{invalid, Result};

/// A solution of `ψ(φ(v)) = v`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Intersection {
    pub rho: f64,
    pub v: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FixedPointReport {
    /// `(v^t, ρ^t)` starting from `v¹ = 1`.
    pub trajectory: Vec<(f64, f64)>,
    pub rho_star: f64,
    pub v_star: f64,
    /// Ordered by decreasing `v`.
    pub intersections: Vec<Intersection>,
    pub error_free: bool,
}

pub const ERROR_FREE_V: f64 = 1e-6;
const MAX_STEPS: usize = 10_000;

/// Grid used to locate intersections: 10⁴ even points plus a log-spaced stretch near zero.
pub(crate) fn scan_grid() -> Vec<f64> {
    let mut g = lin_grid(0.0, 1.0, 10_000);
    g.extend(log_grid(1e-12, 1e-4, 200));
    g.sort_by(|a, b| a.partial_cmp(b).unwrap());
    g.dedup();
    g
}

/// Rejects ψ that increases anywhere on a coarse ρ grid.
pub(crate) fn check_psi_monotone(phi: &Phi, psi: &dyn Transfer) -> Result<()> {
    let grid = lin_grid(0.0, phi.rho_max().min(1e6), 257);
    let mut prev = psi.eval(grid[0]);
    for &r in &grid[1..] {
        let cur = psi.eval(r);
        if !cur.is_finite() || cur > prev + 1e-9 {
            return invalid(format!("ψ is not nonincreasing near ρ = {r}"));
        }
        prev = cur;
    }
    Ok(())
}

/// All solutions of `ψ(φ(v)) = v` on `[0, 1]`, polished by bisection.
pub fn intersections(phi: &Phi, psi: &dyn Transfer) -> Vec<Intersection> {
    let g = |v: f64| psi.eval(phi.eval(v)) - v;
    let grid = scan_grid();
    let vals: Vec<f64> = grid.iter().map(|&v| g(v)).collect();
    let zero = |x: f64| x.abs() <= 1e-14;
    let mut out: Vec<f64> = Vec::new();
    let mut i = 0;
    while i < grid.len() {
        if zero(vals[i]) {
            // Collapse a run of exact zeros to its midpoint.
            let mut j = i;
            while j + 1 < grid.len() && zero(vals[j + 1]) {
                j += 1;
            }
            out.push(0.5 * (grid[i] + grid[j]));
            i = j + 1;
            continue;
        }
        if i + 1 < grid.len() && !zero(vals[i + 1]) && vals[i] * vals[i + 1] < 0.0 {
            let (mut a, mut b) = (grid[i], grid[i + 1]);
            let sa = vals[i].signum();
            for _ in 0..80 {
                let m = 0.5 * (a + b);
                if g(m).signum() == sa {
                    a = m;
                } else {
                    b = m;
                }
            }
            out.push(0.5 * (a + b));
        }
        i += 1;
    }
    out.sort_by(|a, b| b.partial_cmp(a).unwrap());
    out.into_iter()
        .map(|v| Intersection {
            rho: phi.eval(v),
            v,
        })
        .collect()
}

/// Scalar SE `ρ^t = φ(v^t)`, `v^{t+1} = ψ(ρ^t)` from `v¹ = 1`.
pub fn se_fixed_point(phi: &Phi, psi: &dyn Transfer) -> Result<FixedPointReport> {
    check_psi_monotone(phi, psi)?;
    let (trajectory, v_star, rho_star) = se_iterate(phi, psi, 1e-12, MAX_STEPS);
    Ok(FixedPointReport {
        trajectory,
        rho_star,
        v_star,
        intersections: intersections(phi, psi),
        error_free: v_star <= ERROR_FREE_V,
    })
}

/// Runs the recursion and returns the trajectory and the final `(v, ρ)`.
pub fn se_iterate(
    phi: &Phi,
    psi: &dyn Transfer,
    tol: f64,
    max_steps: usize,
) -> (Vec<(f64, f64)>, f64, f64) {
    let mut v = 1.0;
    let mut traj = Vec::new();
    for _ in 0..max_steps {
        let rho = phi.eval(v);
        traj.push((v, rho));
        let next = psi.eval(rho);
        let step = (next - v).abs();
        v = next;
        if step < tol {
            break;
        }
    }
    let rho = phi.eval(v);
    traj.push((v, rho));
    (traj, v, rho)
}

/// Predicted SE trajectory `v^{t+1}` for `t = 1..=iters`, used against simulations.
pub fn se_trajectory(phi: &Phi, psi: &dyn Transfer, iters: usize) -> Vec<f64> {
    let mut v = 1.0;
    (0..iters)
        .map(|_| {
            v = psi.eval(phi.eval(v));
            v
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::evolve::transfer::{Mmse, Perfect, PhiInverse};
    use crate::model::Constellation;

    #[test]
    fn perfect_decoder_one_step() {
        let phi = Phi::awgn(0.5, 0.25);
        let r = se_fixed_point(&phi, &Perfect).unwrap();
        assert_eq!(r.v_star, 0.0);
        assert!(r.error_free);
        assert_eq!(r.trajectory[1].0, 0.0);
    }

    #[test]
    fn matched_decoder_is_stuck_at_one() {
        let phi = Phi::awgn(0.5, 0.25);
        let r = se_fixed_point(&phi, &PhiInverse(&phi)).unwrap();
        assert_eq!(r.v_star, 1.0);
        for &v in &[0.1, 0.4, 0.9] {
            assert!((phi.inverse(phi.eval(v)) - v).abs() < 1e-14);
        }
    }

    #[test]
    fn bpsk_fixed_point_matches_grid_scan() {
        let sigma2 = 10f64.powf(-0.6);
        let phi = Phi::awgn(0.5, sigma2);
        let psi = Mmse(Constellation::Bpsk);
        let r = se_fixed_point(&phi, &psi).unwrap();
        // Largest root of ψ(φ(v)) - v from a dense independent scan.
        let mut best = None;
        let n = 200_000;
        let mut prev = psi.eval(phi.eval(1.0)) - 1.0;
        for i in (0..n).rev() {
            let v = i as f64 / n as f64;
            let g = psi.eval(phi.eval(v)) - v;
            if g.signum() != prev.signum() {
                best = Some(v);
                break;
            }
            prev = g;
        }
        let want = best.unwrap();
        assert!((r.v_star - want).abs() < 1e-5, "{} {}", r.v_star, want);
        assert!((r.v_star - psi.eval(phi.eval(r.v_star))).abs() <= 1e-9);
    }
}
