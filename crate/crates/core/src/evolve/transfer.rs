use serde::{Deserialize, Serialize};

use super::curve::{Axis, TransferCurve};
use crate::denoise::mmse_scalar;
use crate::error::{invalid, Result};
use crate::model::Constellation;

/// A scalar transfer map evaluated by the SE and area code.
pub trait Transfer: Sync {
    fn eval(&self, x: f64) -> f64;

    /// Points where the map may have kinks; used to split quadrature intervals.
    fn breaks(&self) -> Vec<f64> {
        Vec::new()
    }
}

impl<T: Transfer + ?Sized> Transfer for &T {
    fn eval(&self, x: f64) -> f64 {
        (**self).eval(x)
    }
    fn breaks(&self) -> Vec<f64> {
        (**self).breaks()
    }
}

impl Transfer for TransferCurve {
    fn eval(&self, x: f64) -> f64 {
        TransferCurve::eval(self, x)
    }
    fn breaks(&self) -> Vec<f64> {
        if self.knots.len() <= 8192 {
            self.knots.clone()
        } else {
            Vec::new()
        }
    }
}

/// `ψ(ρ) = mmse(S, ρ)`: the uncoded decoder.
#[derive(Debug, Clone, Copy)]
pub struct Mmse(pub Constellation);

impl Transfer for Mmse {
    fn eval(&self, rho: f64) -> f64 {
        mmse_scalar(self.0, rho)
    }
}

/// `ψ(ρ) = 1/(1+ρ)`: Gaussian input with a linear estimator.
#[derive(Debug, Clone, Copy)]
pub struct GaussianInput;

impl Transfer for GaussianInput {
    fn eval(&self, rho: f64) -> f64 {
        1.0 / (1.0 + rho)
    }
}

/// `ψ ≡ 0`: a genie decoder.
#[derive(Debug, Clone, Copy)]
pub struct Perfect;

impl Transfer for Perfect {
    fn eval(&self, _: f64) -> f64 {
        0.0
    }
}

/// Wraps a closure.
pub struct FnTransfer<F>(pub F);

impl<F: Fn(f64) -> f64 + Sync> Transfer for FnTransfer<F> {
    fn eval(&self, x: f64) -> f64 {
        (self.0)(x)
    }
}

/// The linear-step map `ρ = φ(v)` with its inverse.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Phi {
    /// `φ(v) = δ/(v+σ²)`.
    Awgn { delta: f64, sigma2: f64 },
    /// `φ(v) = δ·g(v)` with `g` tabulated on `v ∈ [0, 1]` and decreasing.
    Curve { delta: f64, g: TransferCurve },
}

impl Phi {
    pub fn awgn(delta: f64, sigma2: f64) -> Self {
        Phi::Awgn { delta, sigma2 }
    }

    pub fn curve(delta: f64, g: TransferCurve) -> Result<Self> {
        if g.axis != Axis::V {
            return invalid("a φ curve must be tabulated over v");
        }
        if g.first() > 0.0 || g.last() < 1.0 {
            return invalid("a φ curve must cover v ∈ [0, 1]");
        }
        if !g.is_nonincreasing(1e-12) {
            return invalid("a φ curve must be nonincreasing in v");
        }
        Ok(Phi::Curve { delta, g })
    }

    pub fn delta(&self) -> f64 {
        match self {
            Phi::Awgn { delta, .. } | Phi::Curve { delta, .. } => *delta,
        }
    }

    pub fn with_delta(&self, delta: f64) -> Self {
        match self {
            Phi::Awgn { sigma2, .. } => Phi::Awgn {
                delta,
                sigma2: *sigma2,
            },
            Phi::Curve { g, .. } => Phi::Curve {
                delta,
                g: g.clone(),
            },
        }
    }

    pub fn eval(&self, v: f64) -> f64 {
        match self {
            Phi::Awgn { delta, sigma2 } => delta / (v + sigma2),
            Phi::Curve { delta, g } => delta * g.eval(v),
        }
    }

    /// `ρ₀ = φ(1)`, below which the inverse is pinned at 1.
    pub fn rho0(&self) -> f64 {
        self.eval(1.0)
    }

    /// `φ(0)`, above which the inverse is 0.
    pub fn rho_max(&self) -> f64 {
        self.eval(0.0)
    }

    /// `φ⁻¹(ρ)`, clamped to `[0, 1]`.
    pub fn inverse(&self, rho: f64) -> f64 {
        match self {
            Phi::Awgn { delta, sigma2 } => {
                if rho <= delta / (1.0 + sigma2) {
                    1.0
                } else {
                    (delta / rho - sigma2).clamp(0.0, 1.0)
                }
            }
            Phi::Curve { delta, g } => {
                let t = rho / delta;
                let vals = &g.values;
                let n = vals.len();
                if t <= vals[n - 1] {
                    return 1.0;
                }
                if t >= vals[0] {
                    return 0.0;
                }
                // Values are nonincreasing: find the first index with value <= t.
                let i = vals.partition_point(|&x| x > t);
                let (v0, v1) = (g.knots[i - 1], g.knots[i]);
                let (f0, f1) = (vals[i - 1], vals[i]);
                if f0 == f1 {
                    return v0;
                }
                v0 + (f0 - t) / (f0 - f1) * (v1 - v0)
            }
        }
    }

    /// Derivative `φ'(v)` (one-sided differences for tabulated curves).
    pub fn derivative(&self, v: f64) -> f64 {
        match self {
            Phi::Awgn { delta, sigma2 } => -delta / ((v + sigma2) * (v + sigma2)),
            Phi::Curve { .. } => {
                let h = 1e-6;
                let (a, b) = ((v - h).max(0.0), (v + h).min(1.0));
                (self.eval(b) - self.eval(a)) / (b - a)
            }
        }
    }

    fn rho_breaks(&self) -> Vec<f64> {
        match self {
            Phi::Awgn { .. } => vec![self.rho0(), self.rho_max()],
            Phi::Curve { delta, g } => g.values.iter().map(|x| delta * x).rev().collect(),
        }
    }
}

/// `φ⁻¹` viewed as a transfer over ρ; the matched decoder of the area theorem.
#[derive(Debug, Clone)]
pub struct PhiInverse<'a>(pub &'a Phi);

impl Transfer for PhiInverse<'_> {
    fn eval(&self, rho: f64) -> f64 {
        self.0.inverse(rho)
    }
    fn breaks(&self) -> Vec<f64> {
        self.0.rho_breaks()
    }
}

/// `ψ^opt(ρ) = min{φ⁻¹(ρ), ψ(ρ)}`.
pub struct MatchedPsi<'a, P: Transfer> {
    pub phi: &'a Phi,
    pub psi: P,
}

impl<P: Transfer> Transfer for MatchedPsi<'_, P> {
    fn eval(&self, rho: f64) -> f64 {
        self.phi.inverse(rho).min(self.psi.eval(rho))
    }
    fn breaks(&self) -> Vec<f64> {
        let mut b = self.phi.rho_breaks();
        b.extend(self.psi.breaks());
        b
    }
}

/// `φ(v) = δ/(v+σ²)` or its inverse.
pub fn phi_awgn(x: f64, delta: f64, sigma2: f64, inverse: bool) -> f64 {
    let p = Phi::awgn(delta, sigma2);
    if inverse {
        p.inverse(x)
    } else {
        p.eval(x)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::evolve::curve::lin_grid;

    #[test]
    fn awgn_examples() {
        assert_eq!(phi_awgn(1.0, 0.5, 1.0, false), 0.25);
        assert_eq!(phi_awgn(0.1, 0.5, 1.0, true), 1.0);
        assert_eq!(phi_awgn(0.5, 0.5, 1.0, true), 0.0);
        let p = Phi::awgn(0.5, 0.3);
        for k in 1..50 {
            let v = k as f64 / 50.0;
            assert!((p.inverse(p.eval(v)) - v).abs() < 1e-14);
        }
    }

    #[test]
    fn tabulated_inverse_round_trip() {
        let g = TransferCurve::from_fn(Axis::V, lin_grid(0.0, 1.0, 1001), |v| 1.0 / (v + 0.5))
            .unwrap();
        let p = Phi::curve(0.4, g).unwrap();
        for k in 0..=20 {
            let v = k as f64 / 20.0;
            assert!((p.inverse(p.eval(v)) - v).abs() < 1e-9);
        }
        assert_eq!(p.inverse(0.0), 1.0);
        assert_eq!(p.inverse(10.0), 0.0);
        let up = TransferCurve::from_fn(Axis::V, lin_grid(0.0, 1.0, 5), |v| v).unwrap();
        assert!(Phi::curve(0.4, up).is_err());
    }
}
