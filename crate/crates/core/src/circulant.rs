//! Symmetric block-circulant matrices represented by their base matrix.
//!
//! A base `b` on an `n × n` torus defines the `n² × n²` matrix
//! `A[(i,j),(k,l)] = b[(k-i) mod n][(l-j) mod n]`. Its eigenvalues are the
//! unnormalised 2-D DFT of `b`, and every product `f(A)·v` is
//! `IDFT(f(λ) ⊙ DFT(v))` with the `1/n²` carried by the inverse transform.

use alloc::vec::Vec;
use num_complex::Complex64;
#[allow(unused_imports)] // inherent f64 methods shadow these when std is linked
use num_traits::Float;

use crate::error::{Error, Result};
use crate::fft::Fft2;
use crate::grid::{Grid, GridSpec};

/// Relative bound on the imaginary part of a base's DFT.
pub const SYMMETRY_TOLERANCE: f64 = 1e-8;

/// Base matrix of a symmetric block-circulant matrix on the extended lattice.
#[derive(Debug, Clone, PartialEq)]
pub struct CirculantBase {
    grid: GridSpec,
    base: Grid,
}

impl CirculantBase {
    pub fn new(grid: GridSpec, base: Grid) -> Result<Self> {
        base.check_side(grid.side())?;
        Ok(CirculantBase { grid, base })
    }

    /// Base of the identity matrix.
    pub fn identity(grid: GridSpec) -> Self {
        let mut base = grid.zeros();
        base[(0, 0)] = 1.0;
        CirculantBase { grid, base }
    }

    pub fn grid(&self) -> &GridSpec {
        &self.grid
    }

    pub fn base(&self) -> &Grid {
        &self.base
    }

    pub fn into_base(self) -> Grid {
        self.base
    }

    /// Entry of the base at lattice offset `(i, j)`.
    pub fn at(&self, i: usize, j: usize) -> f64 {
        self.base[(i, j)]
    }

    pub fn scaled(&self, s: f64) -> Self {
        CirculantBase { grid: self.grid, base: self.base.scale(s) }
    }

    /// Largest violation of `b[i][j] = b[-i][-j]`, relative to `max |b|`.
    pub fn asymmetry(&self) -> f64 {
        let n = self.grid.side();
        let b = &self.base;
        let mut worst: f64 = 0.0;
        for i in 0..n {
            for j in 0..n {
                let d = (b[(i, j)] - b[((n - i) % n, (n - j) % n)]).abs();
                worst = worst.max(d);
            }
        }
        worst / b.max_abs().max(f64::MIN_POSITIVE)
    }

    /// Eigenvalues of the matrix: the real part of the unnormalised 2-D DFT
    /// of the base, after checking the imaginary residue.
    pub fn spectrum(&self) -> Result<Spectrum> {
        let fft = Fft2::new(self.grid.side())?;
        let mut buf: Vec<Complex64> = self.base.iter().map(|&x| Complex64::new(x, 0.0)).collect();
        fft.forward(&mut buf);
        let max_re = buf.iter().fold(0.0f64, |m, z| m.max(z.re.abs()));
        let max_im = buf.iter().fold(0.0f64, |m, z| m.max(z.im.abs()));
        let rel = max_im / max_re.max(f64::MIN_POSITIVE);
        if rel > SYMMETRY_TOLERANCE {
            return Err(Error::InvalidBase { relative_imaginary: rel });
        }
        let values = Grid::from_vec(self.grid.side(), buf.iter().map(|z| z.re).collect())?;
        Ok(Spectrum { grid: self.grid, values, fft })
    }

    pub fn matvec(&self, v: &Grid) -> Result<Grid> {
        self.spectrum()?.matvec(v)
    }

    pub fn sqrt_matvec(&self, v: &Grid) -> Result<Grid> {
        self.spectrum()?.sqrt_matvec(v)
    }

    pub fn inv_matvec(&self, v: &Grid) -> Result<Grid> {
        self.spectrum()?.inv_matvec(v)
    }

    pub fn inv_sqrt_matvec(&self, v: &Grid) -> Result<Grid> {
        self.spectrum()?.inv_sqrt_matvec(v)
    }
}

/// Eigenvalue grid of a block-circulant matrix, indexed by 2-D frequency.
#[derive(Debug, Clone)]
pub struct Spectrum {
    grid: GridSpec,
    values: Grid,
    fft: Fft2,
}

impl Spectrum {
    /// Wrap an eigenvalue grid computed elsewhere (e.g. a precision spectrum
    /// assembled in closed form).
    pub fn from_values(grid: GridSpec, values: Grid) -> Result<Self> {
        values.check_side(grid.side())?;
        Ok(Spectrum { grid, values, fft: Fft2::new(grid.side())? })
    }

    pub fn grid(&self) -> &GridSpec {
        &self.grid
    }

    pub fn values(&self) -> &Grid {
        &self.values
    }

    pub fn fft(&self) -> &Fft2 {
        &self.fft
    }

    pub fn min_value(&self) -> f64 {
        self.values.min()
    }

    /// Base of the matrix with these eigenvalues.
    pub fn to_base(&self) -> CirculantBase {
        let mut buf: Vec<Complex64> = self.values.iter().map(|&x| Complex64::new(x, 0.0)).collect();
        self.fft.inverse(&mut buf);
        let base = Grid::from_vec(self.grid.side(), buf.iter().map(|z| z.re).collect())
            .expect("spectrum and grid sizes agree");
        CirculantBase { grid: self.grid, base }
    }

    fn require_positive(&self) -> Result<()> {
        let min = self.min_value();
        if !(min > 0.0) {
            return Err(Error::NotPositiveDefinite { min_eigenvalue: min });
        }
        Ok(())
    }

    /// Filter multiplying each eigenvalue by `f(λ)`.
    pub fn filter(&self, f: impl Fn(f64) -> f64) -> SpectralFilter {
        SpectralFilter::new(&self.fft, self.values.map(f))
    }

    /// Filter for `A^p`; requires positive eigenvalues unless `p` is a
    /// positive integer.
    pub fn power_filter(&self, p: f64) -> Result<SpectralFilter> {
        if !(p > 0.0 && p.fract() == 0.0) {
            self.require_positive()?;
        }
        Ok(self.filter(|x| x.powf(p)))
    }

    pub fn matvec(&self, v: &Grid) -> Result<Grid> {
        self.filter(|x| x).apply(v)
    }

    pub fn sqrt_matvec(&self, v: &Grid) -> Result<Grid> {
        self.require_positive()?;
        self.filter(|x| x.sqrt()).apply(v)
    }

    pub fn inv_matvec(&self, v: &Grid) -> Result<Grid> {
        self.require_positive()?;
        self.filter(|x| 1.0 / x).apply(v)
    }

    pub fn inv_sqrt_matvec(&self, v: &Grid) -> Result<Grid> {
        self.require_positive()?;
        self.filter(|x| 1.0 / x.sqrt()).apply(v)
    }
}

/// Precomputed spectral multiplier `f(λ)`, applied as
/// `IDFT(f(λ) ⊙ DFT(v))`.
///
/// The multiplier must be symmetric under `k ↦ -k` for real inputs to map to
/// real outputs; this holds for any function of the spectrum of a symmetric
/// base. Two real vectors can then share one complex transform.
#[derive(Debug, Clone)]
pub struct SpectralFilter {
    fft: Fft2,
    multiplier: Vec<f64>,
}

/// Reusable complex buffer for allocation-free filter application.
#[derive(Debug, Clone)]
pub struct Workspace {
    buf: Vec<Complex64>,
}

impl Workspace {
    pub fn new(len: usize) -> Self {
        Workspace { buf: alloc::vec![Complex64::new(0.0, 0.0); len] }
    }
}

impl SpectralFilter {
    pub fn new(fft: &Fft2, multiplier: Grid) -> Self {
        SpectralFilter { fft: fft.clone(), multiplier: multiplier.into_vec() }
    }

    pub fn side(&self) -> usize {
        self.fft.side()
    }

    pub fn fft(&self) -> &Fft2 {
        &self.fft
    }

    /// Multiplier values, row-major over frequencies.
    pub fn multiplier(&self) -> &[f64] {
        &self.multiplier
    }

    pub fn workspace(&self) -> Workspace {
        Workspace::new(self.fft.len())
    }

    fn check(&self, v: &[f64]) -> Result<()> {
        if v.len() != self.fft.len() {
            return Err(Error::ShapeMismatch { expected: self.fft.len(), found: v.len() });
        }
        Ok(())
    }

    pub fn apply(&self, v: &Grid) -> Result<Grid> {
        let mut out = Grid::zeros(self.side());
        self.apply_into(v.as_slice(), out.as_mut_slice(), &mut self.workspace())?;
        Ok(out)
    }

    /// Filter two real vectors with one complex transform pair.
    pub fn apply_pair(&self, a: &Grid, b: &Grid) -> Result<(Grid, Grid)> {
        let mut oa = Grid::zeros(self.side());
        let mut ob = Grid::zeros(self.side());
        self.apply_pair_into(a.as_slice(), b.as_slice(), oa.as_mut_slice(), ob.as_mut_slice(), &mut self.workspace())?;
        Ok((oa, ob))
    }

    pub fn apply_into(&self, v: &[f64], out: &mut [f64], ws: &mut Workspace) -> Result<()> {
        self.check(v)?;
        self.check(out)?;
        let buf = &mut ws.buf;
        buf.resize(self.fft.len(), Complex64::new(0.0, 0.0));
        for (z, &x) in buf.iter_mut().zip(v) {
            *z = Complex64::new(x, 0.0);
        }
        self.run(buf);
        for (o, z) in out.iter_mut().zip(buf.iter()) {
            *o = z.re;
        }
        Ok(())
    }

    pub fn apply_pair_into(
        &self,
        a: &[f64],
        b: &[f64],
        out_a: &mut [f64],
        out_b: &mut [f64],
        ws: &mut Workspace,
    ) -> Result<()> {
        for s in [a, b, &*out_a, &*out_b] {
            self.check(s)?;
        }
        let buf = &mut ws.buf;
        buf.resize(self.fft.len(), Complex64::new(0.0, 0.0));
        for ((z, &x), &y) in buf.iter_mut().zip(a).zip(b) {
            *z = Complex64::new(x, y);
        }
        self.run(buf);
        for ((oa, ob), z) in out_a.iter_mut().zip(out_b.iter_mut()).zip(buf.iter()) {
            *oa = z.re;
            *ob = z.im;
        }
        Ok(())
    }

    fn run(&self, buf: &mut [Complex64]) {
        self.fft.forward(buf);
        for (z, &m) in buf.iter_mut().zip(&self.multiplier) {
            *z *= m;
        }
        self.fft.inverse(buf);
    }
}
