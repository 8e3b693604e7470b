use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::denoise::mmse_scalar;
use crate::error::{invalid, Result};
use crate::model::Constellation;
use crate::numeric::{self, QuadOpts};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Axis {
    /// Abscissa is a variance in `[0, 1]`.
    V,
    /// Abscissa is an SNR in `[0, ρ_max]`.
    Rho,
}

/// Tabulated monotone curve with piecewise-linear interpolation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransferCurve {
    pub axis: Axis,
    pub knots: Vec<f64>,
    pub values: Vec<f64>,
    #[serde(default)]
    pub stderr: Option<Vec<f64>>,
    /// Beyond the last knot the curve follows `min(last value, mmse_scalar(S, ·))`.
    #[serde(default)]
    pub tail: Option<Constellation>,
}

impl TransferCurve {
    pub fn new(axis: Axis, knots: Vec<f64>, values: Vec<f64>) -> Result<Self> {
        if knots.is_empty() || knots.len() != values.len() {
            return invalid("curve needs matching, nonempty knots and values");
        }
        if knots.windows(2).any(|w| w[0] >= w[1]) {
            return invalid("curve knots must be strictly increasing");
        }
        if values.iter().chain(&knots).any(|x| !x.is_finite()) {
            return invalid("curve contains non-finite entries");
        }
        Ok(Self {
            axis,
            knots,
            values,
            stderr: None,
            tail: None,
        })
    }

    /// Tabulate `f` on `knots`.
    pub fn from_fn(axis: Axis, knots: Vec<f64>, f: impl Fn(f64) -> f64) -> Result<Self> {
        let values = knots.iter().map(|&x| f(x)).collect();
        Self::new(axis, knots, values)
    }

    pub fn with_tail(mut self, c: Constellation) -> Self {
        self.tail = Some(c);
        self
    }

    pub fn with_stderr(mut self, se: Vec<f64>) -> Self {
        assert_eq!(se.len(), self.knots.len());
        self.stderr = Some(se);
        self
    }

    pub fn first(&self) -> f64 {
        self.knots[0]
    }

    pub fn last(&self) -> f64 {
        *self.knots.last().unwrap()
    }

    pub fn is_nonincreasing(&self, slack: f64) -> bool {
        self.values.windows(2).all(|w| w[1] <= w[0] + slack)
    }

    pub fn eval(&self, x: f64) -> f64 {
        let k = &self.knots;
        let v = &self.values;
        if x <= k[0] {
            return v[0];
        }
        let n = k.len();
        if x >= k[n - 1] {
            let last = v[n - 1];
            return match self.tail {
                Some(c) if x > k[n - 1] => last.min(mmse_scalar(c, x)),
                _ => last,
            };
        }
        let i = k.partition_point(|&t| t <= x) - 1;
        let t = (x - k[i]) / (k[i + 1] - k[i]);
        v[i] + t * (v[i + 1] - v[i])
    }

    /// Exact integral of the interpolant over `[a, b]` within the knot range.
    pub fn integrate_knots(&self, a: f64, b: f64) -> f64 {
        if b <= a {
            return -self.integrate_knots(b, a);
        }
        let k = &self.knots;
        let lo = a.max(k[0]);
        let hi = b.min(*k.last().unwrap());
        let mut s = 0.0;
        // Clamped flat extension to the left of the first knot.
        if a < k[0] {
            s += (k[0].min(b) - a) * self.values[0];
        }
        if hi > lo {
            let mut pts = vec![lo];
            pts.extend(k.iter().cloned().filter(|&t| t > lo && t < hi));
            pts.push(hi);
            for w in pts.windows(2) {
                s += 0.5 * (w[1] - w[0]) * (self.eval(w[0]) + self.eval(w[1]));
            }
        }
        s
    }

    /// Integral over `[a, b]`, including the tail beyond the last knot.
    pub fn integrate(&self, a: f64, b: f64) -> Result<f64> {
        let end = self.last();
        if b <= end || self.tail.is_none() {
            let mut s = self.integrate_knots(a, b.min(end));
            if b > end {
                s += (b - end.max(a)) * self.values[self.values.len() - 1];
            }
            return Ok(s);
        }
        let mut s = if a < end { self.integrate_knots(a, end) } else { 0.0 };
        let from = a.max(end);
        s += self.integrate_tail(from, b)?;
        Ok(s)
    }

    /// Integral of the tail from `from` to `to` (`to` may be infinite).
    fn integrate_tail(&self, from: f64, to: f64) -> Result<f64> {
        let c = self.tail.expect("tail checked by caller");
        let last = *self.values.last().unwrap();
        let upper = if to.is_finite() { to } else { from + 4000.0 };
        let f = |x: f64| last.min(mmse_scalar(c, x));
        let mut breaks = Vec::new();
        let mut p = from + 1.0;
        while p < upper {
            breaks.push(p);
            p = from + 2.0 * (p - from);
        }
        numeric::integrate(
            f,
            from,
            upper,
            &breaks,
            QuadOpts {
                abs_tol: 1e-13,
                rel_tol: 1e-11,
                max_intervals: 20_000,
            },
        )
    }

    /// CSV body with columns `<axis>,value,stderr` (no header comment).
    pub fn write_csv<W: Write>(&self, mut w: W, names: (&str, &str)) -> std::io::Result<()> {
        writeln!(w, "{},{},stderr", names.0, names.1)?;
        for (i, (x, y)) in self.knots.iter().zip(&self.values).enumerate() {
            let se = self.stderr.as_ref().map_or(0.0, |s| s[i]);
            writeln!(w, "{x:.12e},{y:.12e},{se:.6e}")?;
        }
        Ok(())
    }
}

/// `n` log-spaced points on `[lo, hi]`.
pub fn log_grid(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    assert!(lo > 0.0 && hi > lo && n >= 2);
    let (a, b) = (lo.ln(), hi.ln());
    (0..n)
        .map(|i| (a + (b - a) * i as f64 / (n - 1) as f64).exp())
        .collect()
}

/// `n` evenly spaced points on `[lo, hi]`.
pub fn lin_grid(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    assert!(n >= 2);
    (0..n)
        .map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64)
        .collect()
}
