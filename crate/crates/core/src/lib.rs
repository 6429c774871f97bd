//! Numerical core for gridded log-Gaussian Cox processes.
//!
//! Everything here is pure computation over `alloc` containers: circulant
//! covariance algebra by 2-D FFT, GMRF approximation of stationary fields,
//! the discretised Cox process likelihood, an adaptive MALA sampler, a
//! Gaussian approximation at the posterior mode, and predictive metrics.
//! Randomness is always injected by the caller.
#![no_std]

extern crate alloc;
#[cfg(test)]
extern crate std;

pub mod banded;
pub mod circulant;
pub mod covariance;
pub mod error;
pub mod fft;
pub mod gaussian_approx;
pub mod gmrf;
pub mod grid;
pub mod mala;
pub mod metrics;
pub mod model;
pub mod normal;
pub mod optim;

pub use circulant::{CirculantBase, SpectralFilter, Spectrum};
pub use error::{Error, Result};
pub use grid::{Grid, GridSpec, Window};
