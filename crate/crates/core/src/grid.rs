//! Lattice geometry: the observation window, its toroidal extension and
//! square real-valued grids stored row-major.

use alloc::vec;
use alloc::vec::Vec;
use core::ops::{Index, IndexMut};
#[allow(unused_imports)] // inherent f64 methods shadow these when std is linked
use num_traits::Float;

use crate::error::{Error, Result};

/// Axis-aligned rectangle in the plane.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Window {
    pub x0: f64,
    pub y0: f64,
    pub width: f64,
    pub height: f64,
}

impl Window {
    pub const UNIT: Window = Window { x0: 0.0, y0: 0.0, width: 1.0, height: 1.0 };

    pub fn area(&self) -> f64 {
        self.width * self.height
    }

    pub fn contains(&self, x: f64, y: f64) -> bool {
        x >= self.x0 && x <= self.x0 + self.width && y >= self.y0 && y <= self.y0 + self.height
    }
}

impl Default for Window {
    fn default() -> Self {
        Window::UNIT
    }
}

/// Geometry of an `M × M` observation lattice embedded in an
/// `ext_factor·M`-sided torus.
///
/// Cell `(i, j)` of the extended lattice has index `i` along x and `j`
/// along y; the window occupies cells with `i < M` and `j < M`. Storage is
/// row-major with `i` as the row.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridSpec {
    m: usize,
    ext_factor: usize,
    window: Window,
}

impl GridSpec {
    /// Unit-square window with `m` cells per side.
    pub fn new(m: usize, ext_factor: usize) -> Result<Self> {
        Self::with_window(m, ext_factor, Window::UNIT)
    }

    pub fn with_window(m: usize, ext_factor: usize, window: Window) -> Result<Self> {
        if m < 4 || !m.is_power_of_two() {
            return Err(Error::Domain("cells per side must be a power of two, at least 4"));
        }
        if ext_factor != 2 && ext_factor != 4 {
            return Err(Error::Domain("extension factor must be 2 or 4"));
        }
        if !(window.width > 0.0 && window.height > 0.0) {
            return Err(Error::Domain("window must have positive width and height"));
        }
        Ok(GridSpec { m, ext_factor, window })
    }

    /// Cells per side of the observation window.
    pub fn m(&self) -> usize {
        self.m
    }

    pub fn ext_factor(&self) -> usize {
        self.ext_factor
    }

    /// Side of the extended lattice, `ext_factor · M`.
    pub fn side(&self) -> usize {
        self.ext_factor * self.m
    }

    /// Cells on the extended lattice.
    pub fn len(&self) -> usize {
        self.side() * self.side()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Cells inside the window, `M²`.
    pub fn window_len(&self) -> usize {
        self.m * self.m
    }

    pub fn window(&self) -> Window {
        self.window
    }

    pub fn cell_width(&self) -> f64 {
        self.window.width / self.m as f64
    }

    pub fn cell_height(&self) -> f64 {
        self.window.height / self.m as f64
    }

    pub fn cell_area(&self) -> f64 {
        self.cell_width() * self.cell_height()
    }

    pub fn in_window(&self, i: usize, j: usize) -> bool {
        i < self.m && j < self.m
    }

    /// Row-major index of cell `(i, j)` on the extended lattice.
    #[inline]
    pub fn index(&self, i: usize, j: usize) -> usize {
        i * self.side() + j
    }

    /// Centroid of window cell `(i, j)`.
    pub fn centroid(&self, i: usize, j: usize) -> (f64, f64) {
        (self.window.x0 + (i as f64 + 0.5) * self.cell_width(), self.window.y0 + (j as f64 + 0.5) * self.cell_height())
    }

    /// Boolean mask over the extended lattice, true inside the window.
    pub fn window_mask(&self) -> Vec<bool> {
        let n = self.side();
        (0..n * n).map(|k| self.in_window(k / n, k % n)).collect()
    }

    fn check_cell(&self, cell: (usize, usize)) -> Result<()> {
        let n = self.side();
        if cell.0 >= n || cell.1 >= n {
            return Err(Error::IndexOutOfRange { index: cell, side: n });
        }
        Ok(())
    }

    /// Shortest wrapped offset, in cells, between two cells along each axis.
    pub fn toral_offset(&self, a: (usize, usize), b: (usize, usize)) -> Result<(usize, usize)> {
        self.check_cell(a)?;
        self.check_cell(b)?;
        let n = self.side();
        let wrap = |p: usize, q: usize| {
            let d = p.abs_diff(q);
            d.min(n - d)
        };
        Ok((wrap(a.0, b.0), wrap(a.1, b.1)))
    }

    /// Toroidal distance between two cells in window units.
    pub fn toral_distance(&self, a: (usize, usize), b: (usize, usize)) -> Result<f64> {
        let (di, dj) = self.toral_offset(a, b)?;
        let dx = di as f64 * self.cell_width();
        let dy = dj as f64 * self.cell_height();
        Ok((dx * dx + dy * dy).sqrt())
    }

    /// Zero grid on the extended lattice.
    pub fn zeros(&self) -> Grid {
        Grid::zeros(self.side())
    }

    /// Copy the window cells of an extended grid into an `M × M` grid.
    pub fn restrict(&self, ext: &Grid) -> Result<Grid> {
        ext.check_side(self.side())?;
        let m = self.m;
        let mut out = Grid::zeros(m);
        for i in 0..m {
            out.row_mut(i).copy_from_slice(&ext.row(i)[..m]);
        }
        Ok(out)
    }

    /// Zero-extend an `M × M` window grid onto the extended lattice.
    pub fn extend(&self, win: &Grid) -> Result<Grid> {
        win.check_side(self.m)?;
        let mut out = self.zeros();
        for i in 0..self.m {
            out.row_mut(i)[..self.m].copy_from_slice(win.row(i));
        }
        Ok(out)
    }
}

/// Square grid of reals, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Grid {
    side: usize,
    data: Vec<f64>,
}

impl Grid {
    pub fn zeros(side: usize) -> Self {
        Grid { side, data: vec![0.0; side * side] }
    }

    pub fn filled(side: usize, value: f64) -> Self {
        Grid { side, data: vec![value; side * side] }
    }

    pub fn from_vec(side: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != side * side {
            return Err(Error::ShapeMismatch { expected: side * side, found: data.len() });
        }
        Ok(Grid { side, data })
    }

    pub fn from_fn(side: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut data = Vec::with_capacity(side * side);
        for i in 0..side {
            for j in 0..side {
                data.push(f(i, j));
            }
        }
        Grid { side, data }
    }

    pub fn side(&self) -> usize {
        self.side
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.data
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.side..(i + 1) * self.side]
    }

    pub fn row_mut(&mut self, i: usize) -> &mut [f64] {
        &mut self.data[i * self.side..(i + 1) * self.side]
    }

    pub fn iter(&self) -> core::slice::Iter<'_, f64> {
        self.data.iter()
    }

    pub fn check_side(&self, side: usize) -> Result<()> {
        if self.side != side {
            return Err(Error::ShapeMismatch { expected: side * side, found: self.data.len() });
        }
        Ok(())
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Grid {
        Grid { side: self.side, data: self.data.iter().map(|&x| f(x)).collect() }
    }

    pub fn scale(&self, s: f64) -> Grid {
        self.map(|x| x * s)
    }

    pub fn sum(&self) -> f64 {
        self.data.iter().sum()
    }

    pub fn dot(&self, other: &Grid) -> f64 {
        self.data.iter().zip(&other.data).map(|(a, b)| a * b).sum()
    }

    pub fn norm_sq(&self) -> f64 {
        self.dot(self)
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m, x| m.max(x.abs()))
    }

    pub fn min(&self) -> f64 {
        self.data.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn max(&self) -> f64 {
        self.data.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    /// `self + a·other`.
    pub fn axpy(&self, a: f64, other: &Grid) -> Grid {
        Grid { side: self.side, data: self.data.iter().zip(&other.data).map(|(x, y)| x + a * y).collect() }
    }

    /// Largest absolute entrywise difference relative to the larger max-norm.
    pub fn relative_error(&self, other: &Grid) -> f64 {
        let scale = self.max_abs().max(other.max_abs()).max(f64::MIN_POSITIVE);
        self.data.iter().zip(&other.data).fold(0.0, |m, (a, b)| m.max((a - b).abs())) / scale
    }
}

impl Index<(usize, usize)> for Grid {
    type Output = f64;

    #[inline]
    fn index(&self, (i, j): (usize, usize)) -> &f64 {
        &self.data[i * self.side + j]
    }
}

impl IndexMut<(usize, usize)> for Grid {
    #[inline]
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut f64 {
        &mut self.data[i * self.side + j]
    }
}
