use serde::{Deserialize, Serialize};

use super::transfer::{Phi, Transfer};
use crate::error::{invalid, Result};

/// How sections outside `1..=K` enter the boundary blocks.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Boundary {
    /// `ρ_k = 0` outside the chain, so `ψ(0)` is averaged in.
    #[default]
    ZeroSnr,
    /// Missing sections contribute zero variance.
    AbsentBlocks,
}

/// Per-block variances `v_j` (`K+W-1` entries) and per-section SNRs `ρ_k` (`K` entries).
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CoupledProfile {
    pub v: Vec<f64>,
    pub rho: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CoupledOpts {
    pub boundary: Boundary,
    pub tol: f64,
    pub max_iter: usize,
    /// Keep the section variances of every iteration.
    pub record: bool,
}

impl Default for CoupledOpts {
    fn default() -> Self {
        Self {
            boundary: Boundary::ZeroSnr,
            tol: 1e-10,
            max_iter: 200_000,
            record: false,
        }
    }
}

impl CoupledOpts {
    pub fn absent() -> Self {
        Self {
            boundary: Boundary::AbsentBlocks,
            ..Self::default()
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CoupledReport {
    pub profile: CoupledProfile,
    /// Section variances `ψ(ρ_k)` at the final iterate.
    pub section_v: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
    /// Section variances after each iteration, when recorded.
    pub trajectory: Vec<Vec<f64>>,
}

impl CoupledReport {
    pub fn max_section_v(&self) -> f64 {
        self.section_v.iter().cloned().fold(0.0, f64::max)
    }
}

/// Vector SE of a chain of `k` sections coupled over `w` blocks.
pub fn coupled_se(
    k: usize,
    w: usize,
    phi: &Phi,
    psi: &dyn Transfer,
    opts: &CoupledOpts,
) -> Result<CoupledReport> {
    if k == 0 || w == 0 {
        return invalid("coupled chain needs K >= 1 and W >= 1");
    }
    let blocks = k + w - 1;
    let wf = w as f64;
    let outside = match opts.boundary {
        Boundary::ZeroSnr => psi.eval(0.0),
        Boundary::AbsentBlocks => 0.0,
    };
    let mut sec = vec![1.0; k];
    let mut v = vec![0.0; blocks];
    let mut rho = vec![0.0; k];
    let mut phis = vec![0.0; blocks];
    let mut trajectory = Vec::new();
    let block_v = |sec: &[f64], v: &mut [f64]| {
        for (j, vj) in v.iter_mut().enumerate() {
            let mut s = 0.0;
            for t in 0..w {
                // Block j (0-based) sees sections j-w+1 ..= j.
                let kk = j as isize - t as isize;
                s += if kk >= 0 && (kk as usize) < k {
                    sec[kk as usize]
                } else {
                    outside
                };
            }
            *vj = s / wf;
        }
    };
    block_v(&sec, &mut v);
    let mut iterations = 0;
    let mut converged = false;
    while iterations < opts.max_iter {
        iterations += 1;
        for (p, &vj) in phis.iter_mut().zip(&v) {
            *p = phi.eval(vj);
        }
        for (kk, r) in rho.iter_mut().enumerate() {
            *r = phis[kk..kk + w].iter().sum::<f64>() / wf;
        }
        for (s, &r) in sec.iter_mut().zip(&rho) {
            *s = psi.eval(r);
        }
        if opts.record {
            trajectory.push(sec.clone());
        }
        let prev = v.clone();
        block_v(&sec, &mut v);
        let delta = v
            .iter()
            .zip(&prev)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        if delta < opts.tol {
            converged = true;
            break;
        }
    }
    Ok(CoupledReport {
        profile: CoupledProfile { v, rho },
        section_v: sec,
        iterations,
        converged,
        trajectory,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::evolve::fixed_point::se_fixed_point;
    use crate::evolve::transfer::{Mmse, Perfect};
    use crate::model::Constellation;

    #[test]
    fn single_section_matches_scalar_se() {
        let phi = Phi::awgn(0.5, 0.2);
        let psi = Mmse(Constellation::Bpsk);
        let c = coupled_se(1, 1, &phi, &psi, &CoupledOpts::default()).unwrap();
        let s = se_fixed_point(&phi, &psi).unwrap();
        assert!((c.profile.v[0] - s.v_star).abs() < 1e-9);
    }

    #[test]
    fn perfect_decoder_clears_in_one_step() {
        let phi = Phi::awgn(0.5, 0.2);
        let c = coupled_se(5, 3, &phi, &Perfect, &CoupledOpts::absent()).unwrap();
        assert!(c.section_v.iter().all(|&x| x == 0.0));
        assert_eq!(c.profile.v.len(), 7);
        assert_eq!(c.profile.rho.len(), 5);
    }
}
