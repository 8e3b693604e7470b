//! Compression matrices: dense i.i.d. Gaussian and row-subsampled Hadamard.

use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

use crate::error::{invalid, Error, Result};
use crate::seed::{self, Role};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Direction {
    Forward,
    Adjoint,
}

/// In-place unnormalized Walsh–Hadamard transform (Sylvester ordering).
pub fn fht_raw(v: &mut [f64]) -> Result<()> {
    let n = v.len();
    if n == 0 || !n.is_power_of_two() {
        return invalid(format!("transform length {n} is not a power of two"));
    }
    let mut h = 1;
    while h < n {
        for block in v.chunks_exact_mut(2 * h) {
            let (a, b) = block.split_at_mut(h);
            for (x, y) in a.iter_mut().zip(b.iter_mut()) {
                let s = *x + *y;
                *y = *x - *y;
                *x = s;
            }
        }
        h *= 2;
    }
    Ok(())
}

/// Orthonormal Walsh–Hadamard transform; an involution.
pub fn fht(v: &mut [f64]) -> Result<()> {
    fht_raw(v)?;
    let s = 1.0 / (v.len() as f64).sqrt();
    v.iter_mut().for_each(|x| *x *= s);
    Ok(())
}

#[derive(Debug, Clone)]
enum Kind {
    /// Row-major `m × n`.
    Dense(Vec<f64>),
    Hadamard {
        rows: Vec<usize>,
        signs: Option<Vec<f64>>,
    },
}

/// The matrix `A` with forward and adjoint application.
#[derive(Debug, Clone)]
pub struct SensingOperator {
    m: usize,
    n: usize,
    seed: u64,
    kind: Kind,
    fingerprint: u64,
}

const ROW_CHUNK: usize = 64;
const COL_CHUNK: usize = 512;

impl SensingOperator {
    /// Entries i.i.d. N(0, 1/n).
    pub fn iid_gaussian(m: usize, n: usize, seed: u64) -> Result<Self> {
        Self::iid_gaussian_keyed(m, n, seed, &[])
    }

    /// Like [`iid_gaussian`](Self::iid_gaussian) with an extra stream key, e.g. a block index.
    pub fn iid_gaussian_keyed(m: usize, n: usize, seed: u64, key: &[u64]) -> Result<Self> {
        if m == 0 || n == 0 {
            return invalid("sensing dimensions must be at least 1");
        }
        let scale = 1.0 / (n as f64).sqrt();
        let mut a = vec![0.0; m * n];
        // Row chunks draw from their own substreams so generation can run in parallel.
        a.par_chunks_mut(ROW_CHUNK * n)
            .enumerate()
            .for_each(|(c, chunk)| {
                let mut path = key.to_vec();
                path.push(c as u64);
                let mut rng = seed::rng(seed, Role::Matrix, &path);
                for x in chunk.iter_mut() {
                    let g: f64 = rng.sample(StandardNormal);
                    *x = g * scale;
                }
            });
        let fingerprint = fingerprint_of(0, m, n, seed, key, &a[..a.len().min(16)]);
        Ok(Self {
            m,
            n,
            seed,
            kind: Kind::Dense(a),
            fingerprint,
        })
    }

    /// `m` distinct rows of the orthonormal `n × n` Hadamard matrix, with an optional
    /// random ±1 column diagonal applied before the transform.
    pub fn subsampled_hadamard(m: usize, n: usize, seed: u64, signs: bool) -> Result<Self> {
        Self::subsampled_hadamard_keyed(m, n, seed, signs, &[])
    }

    pub fn subsampled_hadamard_keyed(
        m: usize,
        n: usize,
        seed: u64,
        signs: bool,
        key: &[u64],
    ) -> Result<Self> {
        if m == 0 || n == 0 {
            return invalid("sensing dimensions must be at least 1");
        }
        if !n.is_power_of_two() {
            return invalid(format!("Hadamard size {n} is not a power of two"));
        }
        if m > n {
            return invalid(format!("cannot select {m} rows from a {n}-point Hadamard matrix"));
        }
        let mut rng = seed::rng(seed, Role::Rows, key);
        let mut perm: Vec<usize> = (0..n).collect();
        for i in 0..m {
            let j = rng.random_range(i..n);
            perm.swap(i, j);
        }
        perm.truncate(m);
        let signs = signs.then(|| {
            let mut rng = seed::rng(seed, Role::Signs, key);
            (0..n)
                .map(|_| if rng.random::<bool>() { 1.0 } else { -1.0 })
                .collect::<Vec<f64>>()
        });
        let rows_f: Vec<f64> = perm.iter().take(16).map(|&r| r as f64).collect();
        let tag = if signs.is_some() { 2 } else { 1 };
        let fingerprint = fingerprint_of(tag, m, n, seed, key, &rows_f);
        Ok(Self {
            m,
            n,
            seed,
            kind: Kind::Hadamard { rows: perm, signs },
            fingerprint,
        })
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn delta(&self) -> f64 {
        self.m as f64 / self.n as f64
    }

    pub fn is_hadamard(&self) -> bool {
        matches!(self.kind, Kind::Hadamard { .. })
    }

    /// Selected Hadamard rows (empty for the dense kind).
    pub fn rows(&self) -> &[usize] {
        match &self.kind {
            Kind::Hadamard { rows, .. } => rows,
            Kind::Dense(_) => &[],
        }
    }

    /// Checksum of the construction, used to detect encoder/decoder seed mismatch.
    pub fn fingerprint(&self) -> u64 {
        self.fingerprint
    }

    /// Squared Frobenius norm.
    pub fn frobenius2(&self) -> f64 {
        match &self.kind {
            Kind::Dense(a) => a.iter().map(|x| x * x).sum(),
            Kind::Hadamard { .. } => self.m as f64,
        }
    }

    /// Squared norm of each column.
    pub fn column_norms2(&self) -> Vec<f64> {
        match &self.kind {
            Kind::Dense(a) => {
                let mut out = vec![0.0; self.n];
                for row in a.chunks_exact(self.n) {
                    for (o, x) in out.iter_mut().zip(row) {
                        *o += x * x;
                    }
                }
                out
            }
            Kind::Hadamard { .. } => vec![self.m as f64 / self.n as f64; self.n],
        }
    }

    pub fn apply(&self, dir: Direction, v: &[f64]) -> Result<Vec<f64>> {
        let mut out = vec![0.0; if dir == Direction::Forward { self.m } else { self.n }];
        match dir {
            Direction::Forward => self.forward_into(v, &mut out)?,
            Direction::Adjoint => self.adjoint_into(v, &mut out)?,
        }
        Ok(out)
    }

    pub fn forward(&self, u: &[f64]) -> Result<Vec<f64>> {
        self.apply(Direction::Forward, u)
    }

    pub fn adjoint(&self, w: &[f64]) -> Result<Vec<f64>> {
        self.apply(Direction::Adjoint, w)
    }

    /// `out = A u`.
    pub fn forward_into(&self, u: &[f64], out: &mut [f64]) -> Result<()> {
        check_len(self.n, u.len())?;
        check_len(self.m, out.len())?;
        match &self.kind {
            Kind::Dense(a) => {
                out.par_chunks_mut(ROW_CHUNK)
                    .zip(a.par_chunks(ROW_CHUNK * self.n))
                    .for_each(|(o, rows)| {
                        for (oi, row) in o.iter_mut().zip(rows.chunks_exact(self.n)) {
                            *oi = dot(row, u);
                        }
                    });
            }
            Kind::Hadamard { rows, signs } => {
                let mut buf = match signs {
                    Some(s) => u.iter().zip(s).map(|(x, s)| x * s).collect(),
                    None => u.to_vec(),
                };
                fht(&mut buf)?;
                for (o, &r) in out.iter_mut().zip(rows) {
                    *o = buf[r];
                }
            }
        }
        Ok(())
    }

    /// `out = Aᵀ w`.
    pub fn adjoint_into(&self, w: &[f64], out: &mut [f64]) -> Result<()> {
        check_len(self.m, w.len())?;
        check_len(self.n, out.len())?;
        match &self.kind {
            Kind::Dense(a) => {
                let n = self.n;
                out.par_chunks_mut(COL_CHUNK)
                    .enumerate()
                    .for_each(|(c, o)| {
                        let c0 = c * COL_CHUNK;
                        o.iter_mut().for_each(|x| *x = 0.0);
                        for (row, &wm) in a.chunks_exact(n).zip(w) {
                            let seg = &row[c0..c0 + o.len()];
                            for (x, aij) in o.iter_mut().zip(seg) {
                                *x += wm * aij;
                            }
                        }
                    });
            }
            Kind::Hadamard { rows, signs } => {
                out.iter_mut().for_each(|x| *x = 0.0);
                for (&r, &wm) in rows.iter().zip(w) {
                    out[r] = wm;
                }
                fht(out)?;
                if let Some(s) = signs {
                    out.iter_mut().zip(s).for_each(|(x, s)| *x *= s);
                }
            }
        }
        Ok(())
    }

    /// Explicit dense copy, row-major. Intended for small operators and tests.
    pub fn to_dense(&self) -> Vec<f64> {
        match &self.kind {
            Kind::Dense(a) => a.clone(),
            Kind::Hadamard { .. } => {
                let mut out = vec![0.0; self.m * self.n];
                let mut e = vec![0.0; self.n];
                let mut col = vec![0.0; self.m];
                for j in 0..self.n {
                    e.iter_mut().for_each(|x| *x = 0.0);
                    e[j] = 1.0;
                    self.forward_into(&e, &mut col).expect("dimensions checked");
                    for i in 0..self.m {
                        out[i * self.n + j] = col[i];
                    }
                }
                out
            }
        }
    }
}

fn check_len(expected: usize, got: usize) -> Result<()> {
    if expected == got {
        Ok(())
    } else {
        Err(Error::Dimension { expected, got })
    }
}

#[inline]
fn dot(a: &[f64], b: &[f64]) -> f64 {
    // Four accumulators; the summation order is fixed so results are thread-count independent.
    let mut acc = [0.0; 4];
    let ca = a.chunks_exact(4);
    let cb = b.chunks_exact(4);
    let (ra, rb) = (ca.remainder(), cb.remainder());
    for (x, y) in ca.zip(cb) {
        acc[0] += x[0] * y[0];
        acc[1] += x[1] * y[1];
        acc[2] += x[2] * y[2];
        acc[3] += x[3] * y[3];
    }
    let mut s = (acc[0] + acc[1]) + (acc[2] + acc[3]);
    for (x, y) in ra.iter().zip(rb) {
        s += x * y;
    }
    s
}

fn fingerprint_of(tag: u64, m: usize, n: usize, seed: u64, key: &[u64], sample: &[f64]) -> u64 {
    let mut path = vec![tag, m as u64, n as u64];
    path.extend_from_slice(key);
    path.extend(sample.iter().map(|x| x.to_bits()));
    seed::derive(seed, &path)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn randn(n: usize, seed: u64) -> Vec<f64> {
        let mut r = ChaCha8Rng::seed_from_u64(seed);
        (0..n).map(|_| r.sample(StandardNormal)).collect()
    }

    fn inner(a: &[f64], b: &[f64]) -> f64 {
        a.iter().zip(b).map(|(x, y)| x * y).sum()
    }

    #[test]
    fn fht_examples() {
        let mut e = vec![1.0, 0.0, 0.0, 0.0];
        fht(&mut e).unwrap();
        assert_eq!(e, vec![0.5; 4]);
        let v = randn(256, 1);
        let mut w = v.clone();
        fht(&mut w).unwrap();
        assert!((inner(&w, &w) - inner(&v, &v)).abs() < 1e-10);
        fht(&mut w).unwrap();
        for (a, b) in v.iter().zip(&w) {
            assert!((a - b).abs() < 1e-12);
        }
        assert!(fht(&mut [1.0, 2.0, 3.0]).is_err());
    }

    #[test]
    fn hadamard_matches_explicit_rows() {
        for &(m, n, signs) in &[(16, 64, false), (40, 64, true), (8, 8, false)] {
            let op = SensingOperator::subsampled_hadamard(m, n, 3, signs).unwrap();
            let dense = op.to_dense();
            // Sylvester entries: H[i][j] = (-1)^{popcount(i & j)} / sqrt(n).
            let s = if signs {
                let mut u = vec![0.0; n];
                let mut sg = vec![0.0; n];
                for j in 0..n {
                    u.iter_mut().for_each(|x| *x = 0.0);
                    u[j] = 1.0;
                    let col = op.forward(&u).unwrap();
                    let r = op.rows()[0];
                    let h = if (r & j).count_ones().is_multiple_of(2) { 1.0 } else { -1.0 };
                    sg[j] = col[0] * (n as f64).sqrt() * h;
                }
                sg
            } else {
                vec![1.0; n]
            };
            for (i, &r) in op.rows().iter().enumerate() {
                for j in 0..n {
                    let h = if (r & j).count_ones() % 2 == 0 { 1.0 } else { -1.0 };
                    let want = s[j] * h / (n as f64).sqrt();
                    assert!((dense[i * n + j] - want).abs() <= 1e-12);
                }
            }
            let mut sorted = op.rows().to_vec();
            sorted.sort();
            sorted.dedup();
            assert_eq!(sorted.len(), m);
        }
    }

    #[test]
    fn full_hadamard_is_orthonormal() {
        let op = SensingOperator::subsampled_hadamard(32, 32, 9, false).unwrap();
        let mut e = vec![0.0; 32];
        e[0] = 1.0;
        let back = op.adjoint(&op.forward(&e).unwrap()).unwrap();
        for (a, b) in back.iter().zip(&e) {
            assert!((a - b).abs() < 1e-14);
        }
    }

    #[test]
    fn adjoint_consistency() {
        let ops = [
            SensingOperator::iid_gaussian(300, 700, 5).unwrap(),
            SensingOperator::subsampled_hadamard(300, 1024, 5, true).unwrap(),
        ];
        for op in &ops {
            let u = randn(op.n(), 11);
            let w = randn(op.m(), 12);
            let lhs = inner(&op.forward(&u).unwrap(), &w);
            let rhs = inner(&u, &op.adjoint(&w).unwrap());
            assert!((lhs - rhs).abs() < 1e-10, "{lhs} {rhs}");
            assert!(op.forward(&vec![0.0; op.n()]).unwrap().iter().all(|&x| x == 0.0));
            assert!(op.forward(&[1.0]).is_err());
        }
    }

    #[test]
    fn errors_and_delta() {
        assert!(SensingOperator::iid_gaussian(0, 4, 1).is_err());
        assert!(SensingOperator::subsampled_hadamard(4, 12, 1, true).is_err());
        assert!(SensingOperator::subsampled_hadamard(20, 16, 1, true).is_err());
        let op = SensingOperator::subsampled_hadamard(1725, 4096, 1, true).unwrap();
        assert!((op.delta() - 0.4211).abs() < 1e-4);
        let op = SensingOperator::subsampled_hadamard(1956, 4096, 1, true).unwrap();
        assert!((op.delta() - 0.4775).abs() < 1e-4);
    }

    #[test]
    fn reproducible_from_seed() {
        let a = SensingOperator::iid_gaussian(70, 90, 42).unwrap();
        let b = SensingOperator::iid_gaussian(70, 90, 42).unwrap();
        let c = SensingOperator::iid_gaussian(70, 90, 43).unwrap();
        assert_eq!(a.to_dense(), b.to_dense());
        assert_eq!(a.fingerprint(), b.fingerprint());
        assert_ne!(a.fingerprint(), c.fingerprint());
    }
}
