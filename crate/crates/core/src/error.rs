use core::fmt;

/// Errors raised by the lattice, spectral and inference routines.
#[derive(Debug, Clone, PartialEq)]
pub enum Error {
    /// An argument is outside the domain of the operation.
    Domain(&'static str),
    /// Two grids (or a grid and a vector) have incompatible sizes.
    ShapeMismatch { expected: usize, found: usize },
    /// A lattice index lies outside the extended grid.
    IndexOutOfRange { index: (usize, usize), side: usize },
    /// The base matrix is not toroidally symmetric: its DFT has an imaginary part.
    InvalidBase { relative_imaginary: f64 },
    /// A spectral operation needed strictly positive eigenvalues.
    NotPositiveDefinite { min_eigenvalue: f64 },
    /// The wrapped covariance is not positive definite on this torus; retry with
    /// a larger extension factor.
    NeedLargerExtension { min_eigenvalue: f64 },
    /// The GMRF precision induced by a parameter vector is not positive definite.
    Infeasible { min_eigenvalue: f64 },
    /// Not even the optimiser's starting point is feasible.
    NoFeasiblePoint,
    /// An iterative solver hit its iteration limit.
    NonConvergence { iterations: usize },
    /// Too few retained samples to summarise.
    InsufficientSamples { found: usize, required: usize },
}

impl fmt::Display for Error {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Error::Domain(msg) => write!(f, "domain error: {msg}"),
            Error::ShapeMismatch { expected, found } => {
                write!(f, "shape mismatch: expected {expected} elements, found {found}")
            }
            Error::IndexOutOfRange { index, side } => write!(
                f,
                "cell ({}, {}) is outside the {side}x{side} lattice",
                index.0, index.1
            ),
            Error::InvalidBase { relative_imaginary } => write!(
                f,
                "base matrix is not toroidally symmetric (relative imaginary part {relative_imaginary:e})"
            ),
            Error::NotPositiveDefinite { min_eigenvalue } => {
                write!(f, "matrix is not positive definite (min eigenvalue {min_eigenvalue:e})")
            }
            Error::NeedLargerExtension { min_eigenvalue } => write!(
                f,
                "wrapped covariance is not positive definite (min eigenvalue {min_eigenvalue:e}); use a larger extension factor"
            ),
            Error::Infeasible { min_eigenvalue } => write!(
                f,
                "GMRF parameters give an indefinite precision (min eigenvalue {min_eigenvalue:e})"
            ),
            Error::NoFeasiblePoint => write!(f, "no feasible starting point for the GMRF fit"),
            Error::NonConvergence { iterations } => {
                write!(f, "no convergence after {iterations} iterations")
            }
            Error::InsufficientSamples { found, required } => {
                write!(f, "need at least {required} samples, found {found}")
            }
        }
    }
}

impl core::error::Error for Error {}

pub type Result<T> = core::result::Result<T, Error>;
