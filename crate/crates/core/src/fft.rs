//! Radix-2 complex FFT on square power-of-two lattices.
//!
//! The forward transform is unnormalised; the inverse carries the `1/n²`
//! factor, so `inverse(forward(x)) == x`.
//!
//! Rows are transformed one at a time; the column pass runs the same
//! butterflies on whole rows at once, so every inner loop walks contiguous
//! memory and no transpose is needed.

use alloc::vec::Vec;
use core::f64::consts::PI;
use num_complex::Complex64;
#[allow(unused_imports)] // inherent f64 methods shadow these when std is linked
use num_traits::Float;

use crate::error::{Error, Result};

/// Precomputed twiddles and bit-reversal table for an `n`-point transform,
/// applied along both axes of an `n × n` array.
#[derive(Debug, Clone)]
pub struct Fft2 {
    n: usize,
    // stage with butterfly span `half` uses entries `half-1 .. 2·half-1`
    forward_tw: Vec<Complex64>,
    swaps: Vec<(usize, usize)>,
    inverse_tw: Vec<Complex64>,
}

impl Fft2 {
    pub fn new(n: usize) -> Result<Self> {
        if n == 0 || !n.is_power_of_two() {
            return Err(Error::Domain("FFT size must be a power of two"));
        }
        let mut forward_tw = Vec::with_capacity(n.saturating_sub(1));
        let mut half = 1;
        while half < n {
            for k in 0..half {
                let angle = -PI * k as f64 / half as f64;
                forward_tw.push(Complex64::new(angle.cos(), angle.sin()));
            }
            half *= 2;
        }
        let inverse_tw = forward_tw.iter().map(|w| w.conj()).collect();
        let bits = n.trailing_zeros();
        let bitrev: Vec<usize> =
            (0..n).map(|i| if bits == 0 { 0 } else { i.reverse_bits() >> (usize::BITS - bits) }).collect();
        let swaps = bitrev.iter().enumerate().filter(|(i, j)| i < j).map(|(i, &j)| (i, j)).collect();
        Ok(Fft2 { n, forward_tw, inverse_tw, swaps })
    }

    /// Side length of the lattice.
    pub fn side(&self) -> usize {
        self.n
    }

    /// Number of lattice cells, `n²`.
    pub fn len(&self) -> usize {
        self.n * self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    fn rows(&self, data: &mut [Complex64], tw: &[Complex64], inverse: bool) {
        let n = self.n;
        for row in data.chunks_exact_mut(n) {
            for &(i, j) in &self.swaps {
                row.swap(i, j);
            }
            let mut half = 1;
            if n >= 4 {
                // first two stages fused: twiddles are 1 and ∓i
                for q in row.chunks_exact_mut(4) {
                    let (b0, b1) = (q[0] + q[1], q[0] - q[1]);
                    let (b2, b3) = (q[2] + q[3], q[2] - q[3]);
                    let r3 = if inverse { Complex64::new(-b3.im, b3.re) } else { Complex64::new(b3.im, -b3.re) };
                    q[0] = b0 + b2;
                    q[2] = b0 - b2;
                    q[1] = b1 + r3;
                    q[3] = b1 - r3;
                }
                half = 4;
            }
            while half < n {
                let w = &tw[half - 1..2 * half - 1];
                for block in row.chunks_exact_mut(2 * half) {
                    let (lo, hi) = block.split_at_mut(half);
                    for ((a, b), &w) in lo.iter_mut().zip(hi.iter_mut()).zip(w) {
                        let t = *b * w;
                        *b = *a - t;
                        *a += t;
                    }
                }
                half *= 2;
            }
        }
    }

    fn columns(&self, data: &mut [Complex64], tw: &[Complex64]) {
        let n = self.n;
        for &(i, j) in &self.swaps {
            {
                let (head, tail) = data.split_at_mut(j * n);
                head[i * n..(i + 1) * n].swap_with_slice(&mut tail[..n]);
            }
        }
        let mut half = 1;
        while half < n {
            let w = &tw[half - 1..2 * half - 1];
            for block in data.chunks_exact_mut(2 * half * n) {
                let (lo, hi) = block.split_at_mut(half * n);
                for (k, &w) in w.iter().enumerate() {
                    let a = &mut lo[k * n..(k + 1) * n];
                    let b = &mut hi[k * n..(k + 1) * n];
                    if k == 0 {
                        for (a, b) in a.iter_mut().zip(b.iter_mut()) {
                            let t = *b;
                            *b = *a - t;
                            *a += t;
                        }
                    } else {
                        for (a, b) in a.iter_mut().zip(b.iter_mut()) {
                            let t = *b * w;
                            *b = *a - t;
                            *a += t;
                        }
                    }
                }
            }
            half *= 2;
        }
    }

    fn check(&self, data: &[Complex64]) {
        assert_eq!(data.len(), self.len(), "FFT buffer has the wrong length");
    }

    /// Forward 2-D DFT, `X[k][l] = Σ x[i][j] e^{-2πi(ki+lj)/n}`.
    pub fn forward(&self, data: &mut [Complex64]) {
        self.check(data);
        self.rows(data, &self.forward_tw, false);
        self.columns(data, &self.forward_tw);
    }

    /// Inverse 2-D DFT with `1/n²` scaling.
    pub fn inverse(&self, data: &mut [Complex64]) {
        self.check(data);
        self.rows(data, &self.inverse_tw, true);
        self.columns(data, &self.inverse_tw);
        let scale = 1.0 / self.len() as f64;
        for z in data.iter_mut() {
            *z *= scale;
        }
    }
}

/// Transpose a square row-major array in place.
pub fn transpose_in_place<T: Copy>(data: &mut [T], n: usize) {
    const BLOCK: usize = 16;
    for bi in (0..n).step_by(BLOCK) {
        for bj in (bi..n).step_by(BLOCK) {
            for i in bi..(bi + BLOCK).min(n) {
                let j_start = if bi == bj { i + 1 } else { bj };
                for j in j_start..(bj + BLOCK).min(n) {
                    data.swap(i * n + j, j * n + i);
                }
            }
        }
    }
}
