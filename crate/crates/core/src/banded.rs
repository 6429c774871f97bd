//! Symmetric banded matrices, their Cholesky factors, and the band of the
//! inverse.
//!
//! Storage is by rows of the upper triangle: row `i` holds entries
//! `(i, i), (i, i+1), …, (i, i+bw)`, zero-padded past the last column.
//! Toroidal lattices become banded under [`interleave`], which places each
//! pair of wrap-around neighbours next to each other.

use alloc::vec;
use alloc::vec::Vec;
#[allow(unused_imports)] // inherent f64 methods shadow these when std is linked
use num_traits::Float;

use crate::error::{Error, Result};

/// Symmetric `n × n` matrix with half-bandwidth `bw`.
#[derive(Debug, Clone, PartialEq)]
pub struct SymBand {
    n: usize,
    bw: usize,
    data: Vec<f64>,
}

impl SymBand {
    pub fn zeros(n: usize, bw: usize) -> Self {
        let bw = bw.min(n.saturating_sub(1));
        SymBand { n, bw, data: vec![0.0; n * (bw + 1)] }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn bandwidth(&self) -> usize {
        self.bw
    }

    #[inline]
    fn slot(&self, i: usize, j: usize) -> Option<usize> {
        let (lo, hi) = if i <= j { (i, j) } else { (j, i) };
        (hi < self.n && hi - lo <= self.bw).then(|| lo * (self.bw + 1) + hi - lo)
    }

    /// Entry `(i, j)`; zero outside the band.
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.slot(i, j).map_or(0.0, |s| self.data[s])
    }

    /// Add `v` to entries `(i, j)` and `(j, i)` (once on the diagonal).
    pub fn add(&mut self, i: usize, j: usize, v: f64) -> Result<()> {
        let s = self.slot(i, j).ok_or(Error::Domain("entry lies outside the band"))?;
        self.data[s] += v;
        Ok(())
    }

    /// Upper-band row `i`, starting at the diagonal.
    fn row(&self, i: usize) -> &[f64] {
        let w = self.bw + 1;
        &self.data[i * w..(i + 1) * w]
    }

    /// `A·x`.
    pub fn matvec(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.n {
            return Err(Error::ShapeMismatch { expected: self.n, found: x.len() });
        }
        let mut y = vec![0.0; self.n];
        for i in 0..self.n {
            let len = (self.n - i).min(self.bw + 1);
            let row = &self.row(i)[..len];
            y[i] += row.iter().zip(&x[i..i + len]).map(|(a, b)| a * b).sum::<f64>();
            for (k, a) in row.iter().enumerate().skip(1) {
                y[i + k] += a * x[i];
            }
        }
        Ok(y)
    }

    /// Factor `A = UᵀU` with `U` upper triangular and banded.
    pub fn cholesky(mut self) -> Result<BandCholesky> {
        let (n, bw, w) = (self.n, self.bw, self.bw + 1);
        for i in 0..n {
            let d = self.data[i * w];
            if !(d > 0.0 && d.is_finite()) {
                return Err(Error::NotPositiveDefinite { min_eigenvalue: d });
            }
            let pivot = d.sqrt();
            let len = (n - i).min(bw + 1);
            let (head, tail) = self.data.split_at_mut((i + 1) * w);
            let row = &mut head[i * w..i * w + len];
            row[0] = pivot;
            for v in &mut row[1..] {
                *v /= pivot;
            }
            // rank-one update of the trailing block
            for k in 1..len {
                let u = row[k];
                if u == 0.0 {
                    continue;
                }
                let target = &mut tail[(k - 1) * w..(k - 1) * w + len - k];
                for (t, &r) in target.iter_mut().zip(&row[k..len]) {
                    *t -= u * r;
                }
            }
        }
        Ok(BandCholesky { u: self })
    }
}

/// Upper Cholesky factor of a [`SymBand`].
#[derive(Debug, Clone, PartialEq)]
pub struct BandCholesky {
    u: SymBand,
}

impl BandCholesky {
    pub fn n(&self) -> usize {
        self.u.n
    }

    /// Solve `A·x = b` in place.
    pub fn solve_in_place(&self, b: &mut [f64]) -> Result<()> {
        let n = self.u.n;
        if b.len() != n {
            return Err(Error::ShapeMismatch { expected: n, found: b.len() });
        }
        for i in 0..n {
            let row = self.u.row(i);
            let len = (n - i).min(self.u.bw + 1);
            let z = b[i] / row[0];
            b[i] = z;
            for (t, &r) in b[i + 1..i + len].iter_mut().zip(&row[1..len]) {
                *t -= r * z;
            }
        }
        for i in (0..n).rev() {
            let row = self.u.row(i);
            let len = (n - i).min(self.u.bw + 1);
            let s: f64 = row[1..len].iter().zip(&b[i + 1..i + len]).map(|(a, x)| a * x).sum();
            b[i] = (b[i] - s) / row[0];
        }
        Ok(())
    }

    pub fn solve(&self, b: &[f64]) -> Result<Vec<f64>> {
        let mut x = b.to_vec();
        self.solve_in_place(&mut x)?;
        Ok(x)
    }

    pub fn log_det(&self) -> f64 {
        2.0 * (0..self.u.n).map(|i| self.u.row(i)[0].ln()).sum::<f64>()
    }

    /// Entries of `A⁻¹` inside the band, by the Takahashi recursion
    /// `Σ_ij = δ_ij/U_ii² − (1/U_ii) Σ_{k>i} U_ik Σ_kj`.
    pub fn inverse_band(&self) -> SymBand {
        let (n, bw, w) = (self.u.n, self.u.bw, self.u.bw + 1);
        let mut sigma = SymBand::zeros(n, bw);
        let mut t = vec![0.0; w];
        for i in (0..n).rev() {
            let row = self.u.row(i);
            let len = (n - i).min(w);
            let u = &row[1..len];
            // t = S·u with S the already known block Σ[i+1.., i+1..]
            t[..len - 1].fill(0.0);
            for k in 0..len - 1 {
                let srow = sigma.row(i + 1 + k);
                let span = len - 1 - k;
                let uk = u[k];
                let mut acc = srow[0] * uk;
                for (j, (&s, &uj)) in srow[1..span].iter().zip(&u[k + 1..]).enumerate() {
                    t[k + 1 + j] += s * uk;
                    acc += s * uj;
                }
                t[k] += acc;
            }
            let d = row[0];
            let out = &mut sigma.data[i * w..i * w + len];
            let mut diag = 1.0 / (d * d);
            for k in 0..len - 1 {
                let v = -t[k] / d;
                out[k + 1] = v;
                diag -= u[k] * v / d;
            }
            out[0] = diag;
        }
        sigma
    }

    /// Diagonal of `A⁻¹`.
    pub fn inverse_diagonal(&self) -> Vec<f64> {
        let inv = self.inverse_band();
        (0..inv.n).map(|i| inv.row(i)[0]).collect()
    }
}

/// Ordering `0, n−1, 1, n−2, …`: `order[t]` is the index placed at position
/// `t`. Indices adjacent on a cycle of length `n` end up at most two
/// positions apart.
pub fn interleave(n: usize) -> Vec<usize> {
    (0..n).map(|t| if t % 2 == 0 { t / 2 } else { n - 1 - t / 2 }).collect()
}

/// Inverse permutation of [`interleave`]: position of each index.
pub fn interleave_positions(n: usize) -> Vec<usize> {
    let mut pos = vec![0; n];
    for (t, i) in interleave(n).into_iter().enumerate() {
        pos[i] = t;
    }
    pos
}
