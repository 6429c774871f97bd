//! Dense linear-algebra oracles shared by the integration tests.
#![allow(dead_code)]

use lgcp_core::{CirculantBase, Grid};
use nalgebra::{DMatrix, DVector, SymmetricEigen};

/// Assemble the full `n² × n²` block-circulant matrix row by row.
pub fn dense(base: &CirculantBase) -> DMatrix<f64> {
    let n = base.grid().side();
    let b = base.base();
    DMatrix::from_fn(n * n, n * n, |r, c| {
        let (i, j) = (r / n, r % n);
        let (k, l) = (c / n, c % n);
        b[((k + n - i) % n, (l + n - j) % n)]
    })
}

pub fn to_vec(g: &Grid) -> DVector<f64> {
    DVector::from_column_slice(g.as_slice())
}

pub fn to_grid(v: &DVector<f64>, side: usize) -> Grid {
    Grid::from_vec(side, v.iter().copied().collect()).unwrap()
}

/// `f(A)` for symmetric `A` via a dense eigendecomposition.
pub fn dense_fn(a: &DMatrix<f64>, f: impl Fn(f64) -> f64) -> DMatrix<f64> {
    let eig = SymmetricEigen::new(a.clone());
    let d = DMatrix::from_diagonal(&eig.eigenvalues.map(f));
    &eig.eigenvectors * d * eig.eigenvectors.transpose()
}

pub fn rel_err(a: &DVector<f64>, b: &DVector<f64>) -> f64 {
    let scale = a.amax().max(b.amax()).max(f64::MIN_POSITIVE);
    (a - b).amax() / scale
}

pub fn rel_err_mat(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    let scale = a.amax().max(b.amax()).max(f64::MIN_POSITIVE);
    (a - b).amax() / scale
}
