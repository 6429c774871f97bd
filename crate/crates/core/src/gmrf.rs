//! Gaussian Markov random field approximations to stationary Gaussian fields
//! on the torus.
//!
//! A neighbourhood of order `k` is the `(2k+1) × (2k+1)` box around a cell.
//! Its precision base has one free parameter per displacement class
//! `(a, b)` with `0 ≤ b ≤ a ≤ k`; the class holds every displacement
//! `(±a, ±b)` and `(±b, ±a)`.
//!
//! The fit minimises `U(θ) = Σ w_ij (ς_ij − ς̂(θ)_ij)²` where `ς` is the target
//! covariance base, `ς̂(θ)` the covariance base implied by the precision, and
//! `w_ij = (1 + a/d_ij)/d_ij` with `d_ij` the toroidal distance to the origin
//! (`w = 1` at the origin).

use alloc::vec;
use alloc::vec::Vec;
use core::f64::consts::PI;
use num_complex::Complex64;
#[allow(unused_imports)] // inherent f64 methods shadow these when std is linked
use num_traits::Float;
use rand::Rng;
use rand_distr::StandardNormal;

use crate::circulant::{CirculantBase, SpectralFilter};
use crate::error::{Error, Result};
use crate::fft::Fft2;
use crate::grid::{Grid, GridSpec};
use crate::optim::{self, BfgsOptions, Minimum, NelderMeadOptions};

/// Spectra at or below this value make a precision infeasible.
pub const FEASIBILITY_FLOOR: f64 = 1e-10;

/// Displacement classes `(a, b)`, `0 ≤ b ≤ a ≤ nbhd`, in parameter order.
pub fn classes(nbhd: usize) -> Vec<(usize, usize)> {
    let mut out = Vec::new();
    for a in 0..=nbhd {
        for b in 0..=a {
            out.push((a, b));
        }
    }
    out
}

/// Number of free parameters for a neighbourhood order.
pub fn class_count(nbhd: usize) -> usize {
    (nbhd + 1) * (nbhd + 2) / 2
}

/// Lattice displacements (wrapped to `0..n`) belonging to class `(a, b)`.
fn class_displacements(class: (usize, usize), n: usize) -> Vec<(usize, usize)> {
    let (a, b) = class;
    let wrap = |v: usize, neg: bool| if neg { (n - v % n) % n } else { v % n };
    let mut out: Vec<(usize, usize)> = Vec::with_capacity(8);
    for (p, q) in [(a, b), (b, a)] {
        for sp in [false, true] {
            for sq in [false, true] {
                let d = (wrap(p, sp), wrap(q, sq));
                if !out.contains(&d) {
                    out.push(d);
                }
            }
        }
    }
    out
}

/// GMRF parameter vector for a neighbourhood order in `1..=3`.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct NeighbourhoodTheta {
    nbhd: usize,
    theta: Vec<f64>,
}

impl NeighbourhoodTheta {
    pub fn new(nbhd: usize, theta: Vec<f64>) -> Result<Self> {
        if !(1..=3).contains(&nbhd) {
            return Err(Error::Domain("neighbourhood order must be 1, 2 or 3"));
        }
        if theta.len() != class_count(nbhd) {
            return Err(Error::ShapeMismatch { expected: class_count(nbhd), found: theta.len() });
        }
        if theta.iter().any(|v| !v.is_finite()) {
            return Err(Error::Domain("theta must be finite"));
        }
        Ok(NeighbourhoodTheta { nbhd, theta })
    }

    /// Diagonal precision `(c, 0, …, 0)`.
    pub fn diagonal(nbhd: usize, c: f64) -> Result<Self> {
        let mut theta = vec![0.0; class_count(nbhd)];
        theta[0] = c;
        Self::new(nbhd, theta)
    }

    pub fn nbhd(&self) -> usize {
        self.nbhd
    }

    pub fn theta(&self) -> &[f64] {
        &self.theta
    }

    pub fn classes(&self) -> Vec<(usize, usize)> {
        classes(self.nbhd)
    }

    pub fn scaled(&self, s: f64) -> Self {
        NeighbourhoodTheta { nbhd: self.nbhd, theta: self.theta.iter().map(|v| v * s).collect() }
    }
}

/// Precision base of the GMRF: each parameter placed at every displacement of
/// its class.
pub fn precision_base(theta: &NeighbourhoodTheta, grid: &GridSpec) -> Result<CirculantBase> {
    let n = grid.side();
    if 2 * theta.nbhd >= n {
        return Err(Error::Domain("neighbourhood box does not fit on the torus"));
    }
    let mut base = grid.zeros();
    for (class, &value) in theta.classes().into_iter().zip(&theta.theta) {
        for d in class_displacements(class, n) {
            base[d] = value;
        }
    }
    CirculantBase::new(*grid, base)
}

/// Real DFT of each class indicator, `Φ_c(k,l) = Σ_{(p,q) ∈ c} cos(2π(kp + lq)/n)`.
fn class_spectra(nbhd: usize, n: usize) -> Vec<Grid> {
    let cos_table: Vec<f64> = (0..n).map(|t| (2.0 * PI * t as f64 / n as f64).cos()).collect();
    classes(nbhd)
        .into_iter()
        .map(|class| {
            let disp = class_displacements(class, n);
            Grid::from_fn(n, |k, l| disp.iter().map(|&(p, q)| cos_table[(k * p + l * q) % n]).sum())
        })
        .collect()
}

/// Covariance base implied by the precision, `ς̂(θ) = IDFT(1/DFT(ψ̃(θ)))`.
pub fn implied_cov_base(theta: &NeighbourhoodTheta, grid: &GridSpec) -> Result<CirculantBase> {
    let fft = Fft2::new(grid.side())?;
    let phi = class_spectra(theta.nbhd, grid.side());
    let lambda = combine(&phi, &theta.theta);
    let min = lambda.min();
    if !(min > FEASIBILITY_FLOOR) {
        return Err(Error::Infeasible { min_eigenvalue: min });
    }
    let base = invert_spectrum(&fft, &lambda);
    CirculantBase::new(*grid, base)
}

fn combine(phi: &[Grid], theta: &[f64]) -> Grid {
    let n = phi[0].side();
    let mut out = Grid::zeros(n);
    for (p, &t) in phi.iter().zip(theta) {
        if t != 0.0 {
            for (o, v) in out.as_mut_slice().iter_mut().zip(p.iter()) {
                *o += t * v;
            }
        }
    }
    out
}

fn invert_spectrum(fft: &Fft2, lambda: &Grid) -> Grid {
    let mut buf: Vec<Complex64> = lambda.iter().map(|&l| Complex64::new(1.0 / l, 0.0)).collect();
    fft.inverse(&mut buf);
    Grid::from_vec(lambda.side(), buf.into_iter().map(|z| z.re).collect()).expect("buffer matches the grid")
}

/// Quasi-Newton with simplex fallback, or simplex alone.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum Optimizer {
    #[default]
    QuasiNewton,
    Simplex,
}

/// Unit in which distances entering the weights are measured.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum WeightDistance {
    /// Window units, the same units as the covariance range.
    #[default]
    Physical,
    /// Lattice cells.
    Cells,
}

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(default))]
pub struct FitConfig {
    pub weight_a: f64,
    pub distance: WeightDistance,
    pub optimizer: Optimizer,
    pub max_iter: usize,
    pub grad_tol: f64,
    /// `U` at an infeasible θ is `penalty · (1 + |min λ|)`.
    pub penalty: f64,
    /// Evaluation budget of one simplex run.
    pub simplex_evals: usize,
}

impl Default for FitConfig {
    fn default() -> Self {
        FitConfig {
            weight_a: 1.0,
            distance: WeightDistance::Physical,
            optimizer: Optimizer::QuasiNewton,
            max_iter: 500,
            grad_tol: 1e-6,
            penalty: 1e12,
            simplex_evals: 4000,
        }
    }
}

impl FitConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.weight_a >= 0.0 && self.weight_a.is_finite()) {
            return Err(Error::Domain("weight constant must be non-negative"));
        }
        if !(self.grad_tol > 0.0) || !(self.penalty > 0.0) {
            return Err(Error::Domain("tolerances must be positive"));
        }
        Ok(())
    }
}

/// Weights `w_ij` on the extended lattice.
pub fn weights(grid: &GridSpec, cfg: &FitConfig) -> Grid {
    let n = grid.side();
    let (w, h) = match cfg.distance {
        WeightDistance::Physical => (grid.cell_width(), grid.cell_height()),
        WeightDistance::Cells => (1.0, 1.0),
    };
    Grid::from_fn(n, |i, j| {
        if i == 0 && j == 0 {
            return 1.0;
        }
        let dx = i.min(n - i) as f64 * w;
        let dy = j.min(n - j) as f64 * h;
        let d = (dx * dx + dy * dy).sqrt();
        (1.0 + cfg.weight_a / d) / d
    })
}

/// `U(θ)` and its gradient for a fixed target, with the class spectra and
/// FFT plan cached.
#[derive(Debug, Clone)]
pub struct GmrfObjective {
    grid: GridSpec,
    nbhd: usize,
    target: Grid,
    weights: Grid,
    phi: Vec<Grid>,
    fft: Fft2,
    penalty: f64,
}

impl GmrfObjective {
    pub fn new(target: &CirculantBase, nbhd: usize, cfg: &FitConfig) -> Result<Self> {
        cfg.validate()?;
        let w = weights(target.grid(), cfg);
        Self::with_weights(target, nbhd, w, cfg.penalty)
    }

    pub fn with_weights(target: &CirculantBase, nbhd: usize, weights: Grid, penalty: f64) -> Result<Self> {
        let grid = *target.grid();
        let n = grid.side();
        weights.check_side(n)?;
        if !(1..=3).contains(&nbhd) {
            return Err(Error::Domain("neighbourhood order must be 1, 2 or 3"));
        }
        if 2 * nbhd >= n {
            return Err(Error::Domain("neighbourhood box does not fit on the torus"));
        }
        Ok(GmrfObjective {
            grid,
            nbhd,
            target: target.base().clone(),
            weights,
            phi: class_spectra(nbhd, n),
            fft: Fft2::new(n)?,
            penalty,
        })
    }

    pub fn nbhd(&self) -> usize {
        self.nbhd
    }

    pub fn weights(&self) -> &Grid {
        &self.weights
    }

    /// Eigenvalues of the precision for a raw parameter vector.
    pub fn spectrum(&self, theta: &[f64]) -> Grid {
        combine(&self.phi, theta)
    }

    fn check(&self, theta: &[f64]) -> Result<()> {
        if theta.len() != self.phi.len() {
            return Err(Error::ShapeMismatch { expected: self.phi.len(), found: theta.len() });
        }
        Ok(())
    }

    /// `(U, ς̂, λ)`, or the smallest eigenvalue if infeasible.
    fn evaluate(&self, theta: &[f64]) -> core::result::Result<(f64, Grid, Grid), f64> {
        let lambda = self.spectrum(theta);
        let min = lambda.min();
        if !(min > FEASIBILITY_FLOOR) {
            return Err(min);
        }
        let implied = invert_spectrum(&self.fft, &lambda);
        let u = self
            .weights
            .iter()
            .zip(self.target.iter())
            .zip(implied.iter())
            .map(|((w, s), t)| w * (s - t) * (s - t))
            .sum();
        Ok((u, implied, lambda))
    }

    fn penalty_value(&self, min: f64) -> f64 {
        let min = if min.is_finite() { min.abs() } else { f64::MAX / (2.0 * self.penalty) };
        self.penalty + min * self.penalty
    }

    /// `U(θ)`; the penalty value at infeasible θ.
    pub fn value(&self, theta: &[f64]) -> Result<f64> {
        self.check(theta)?;
        Ok(match self.evaluate(theta) {
            Ok((u, _, _)) => u,
            Err(min) => self.penalty_value(min),
        })
    }

    /// `U(θ)` and `∇U(θ)` from one inverse and one forward transform.
    pub fn value_and_gradient(&self, theta: &[f64]) -> Result<(f64, Vec<f64>)> {
        self.check(theta)?;
        let (u, implied, lambda) = self.evaluate(theta).map_err(|min| Error::Infeasible { min_eigenvalue: min })?;
        // ∂U/∂θ_k = −2 Σ r ∂ς̂/∂θ_k with ∂ς̂/∂θ_k = IDFT(−Φ_k/λ²); by
        // Parseval this is (2/n²) Σ_f Φ_k λ⁻² Re DFT(r).
        let mut buf: Vec<Complex64> = self
            .weights
            .iter()
            .zip(self.target.iter())
            .zip(implied.iter())
            .map(|((w, s), t)| Complex64::new(w * (s - t), 0.0))
            .collect();
        self.fft.forward(&mut buf);
        let len = self.fft.len() as f64;
        let kernel: Vec<f64> = buf.iter().zip(lambda.iter()).map(|(z, l)| 2.0 * z.re / (l * l * len)).collect();
        let grad = self.phi.iter().map(|p| p.iter().zip(&kernel).map(|(a, b)| a * b).sum()).collect();
        Ok((u, grad))
    }

    pub fn gradient(&self, theta: &[f64]) -> Result<Vec<f64>> {
        self.value_and_gradient(theta).map(|(_, g)| g)
    }

    pub fn grid(&self) -> &GridSpec {
        &self.grid
    }
}

/// `U(θ)` for a target covariance base.
pub fn objective_u(theta: &NeighbourhoodTheta, target: &CirculantBase, cfg: &FitConfig) -> Result<f64> {
    GmrfObjective::new(target, theta.nbhd, cfg)?.value(&theta.theta)
}

/// `∇U(θ)`; fails with [`Error::Infeasible`] outside the SPD region.
pub fn gradient_u(theta: &NeighbourhoodTheta, target: &CirculantBase, cfg: &FitConfig) -> Result<Vec<f64>> {
    GmrfObjective::new(target, theta.nbhd, cfg)?.gradient(&theta.theta)
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct FitResult {
    pub theta_opt: NeighbourhoodTheta,
    pub u_final: f64,
    pub iterations: usize,
    pub evaluations: usize,
    pub converged: bool,
    pub min_eigenvalue: f64,
    /// Whether a simplex run improved on the quasi-Newton endpoint.
    pub used_simplex: bool,
}

/// Fit a GMRF of order `nbhd` to a target covariance base, starting from the
/// diagonal precision `(1/σ², 0, …)`.
pub fn fit(target: &CirculantBase, nbhd: usize, cfg: &FitConfig) -> Result<FitResult> {
    let obj = GmrfObjective::new(target, nbhd, cfg)?;
    fit_objective(&obj, target.at(0, 0), cfg)
}

pub fn fit_objective(obj: &GmrfObjective, variance: f64, cfg: &FitConfig) -> Result<FitResult> {
    let mut x0 = vec![0.0; class_count(obj.nbhd)];
    x0[0] = 1.0 / variance;
    if !(variance > 0.0) || obj.evaluate(&x0).is_err() {
        return Err(Error::NoFeasiblePoint);
    }

    let value = |x: &[f64]| obj.value(x).unwrap_or(f64::INFINITY);
    let fg = |x: &[f64]| obj.value_and_gradient(x).ok();
    let bfgs_opts = BfgsOptions { max_iter: cfg.max_iter, grad_tol: cfg.grad_tol };
    let nm_opts = NelderMeadOptions { max_evals: cfg.simplex_evals, ..NelderMeadOptions::default() };

    let mut iterations = 0;
    let mut evaluations = 0;
    let mut used_simplex = false;
    let mut tally = |m: &Minimum| {
        iterations += m.iterations;
        evaluations += m.evaluations;
    };

    let mut best = match cfg.optimizer {
        Optimizer::QuasiNewton => {
            let m = optim::bfgs(fg, &x0, bfgs_opts);
            tally(&m);
            m
        }
        Optimizer::Simplex => {
            let m = optim::nelder_mead(value, &x0, nm_opts);
            tally(&m);
            used_simplex = true;
            m
        }
    };

    if cfg.optimizer == Optimizer::QuasiNewton {
        // a short polish detects a stalled quasi-Newton run
        let polish_opts = NelderMeadOptions { max_evals: 40 * (x0.len() + 1), ..nm_opts };
        let polish = optim::nelder_mead(value, &best.x, polish_opts);
        tally(&polish);
        let improved = |new: f64, old: f64| new < old - 1e-9 * (1.0 + old.abs());
        if !best.converged || improved(polish.value, best.value) {
            let mut start = if polish.value < best.value { polish } else { best.clone() };
            for _ in 0..4 {
                let simplex = optim::nelder_mead(value, &start.x, nm_opts);
                tally(&simplex);
                let refined = optim::bfgs(fg, &simplex.x, bfgs_opts);
                tally(&refined);
                let round = if refined.value <= simplex.value { refined } else { simplex };
                let progressed = improved(round.value, start.value);
                if round.value < start.value {
                    start = round;
                }
                if !progressed {
                    break;
                }
            }
            if start.value < best.value {
                used_simplex = true;
                best = start;
            }
        }
    }

    let (u, grad) = obj.value_and_gradient(&best.x)?;
    let converged = best.converged || grad.iter().fold(0.0f64, |m, g| m.max(g.abs())) <= cfg.grad_tol * (1.0 + u.abs());
    let min_eigenvalue = obj.spectrum(&best.x).min();
    Ok(FitResult {
        theta_opt: NeighbourhoodTheta::new(obj.nbhd, best.x)?,
        u_final: u,
        iterations,
        evaluations,
        converged,
        min_eigenvalue,
        used_simplex,
    })
}

/// Monte-Carlo comparison of fields simulated from the target covariance and
/// from the fitted GMRF with the same white noise.
///
/// Returns the mean squared difference and mean difference over the window
/// cells of `n` realisations.
pub fn approximation_mse<R: Rng + ?Sized>(
    target: &CirculantBase,
    theta: &NeighbourhoodTheta,
    n: usize,
    rng: &mut R,
) -> Result<(f64, f64)> {
    if n == 0 {
        return Err(Error::Domain("need at least one realisation"));
    }
    let grid = *target.grid();
    let side = grid.side();
    let target_spec = target.spectrum()?;
    if !(target_spec.min_value() > 0.0) {
        return Err(Error::NotPositiveDefinite { min_eigenvalue: target_spec.min_value() });
    }
    let phi = class_spectra(theta.nbhd, side);
    let lambda = combine(&phi, &theta.theta);
    let min = lambda.min();
    if !(min > FEASIBILITY_FLOOR) {
        return Err(Error::Infeasible { min_eigenvalue: min });
    }
    // y − ỹ = (Σ^{1/2} − Σ̃^{1/2})Γ, one filter
    let mut diff = Grid::zeros(side);
    for ((d, &s), &q) in diff.as_mut_slice().iter_mut().zip(target_spec.values().iter()).zip(lambda.iter()) {
        *d = s.sqrt() - (1.0 / q).sqrt();
    }
    let filter = SpectralFilter::new(target_spec.fft(), diff);
    let mut ws = filter.workspace();

    let m = grid.m();
    let len = grid.len();
    let mut ga = vec![0.0; len];
    let mut gb = vec![0.0; len];
    let mut oa = vec![0.0; len];
    let mut ob = vec![0.0; len];
    let (mut sum, mut sum_sq) = (0.0, 0.0);
    let mut accumulate = |out: &[f64]| {
        for i in 0..m {
            for &v in &out[i * side..i * side + m] {
                sum += v;
                sum_sq += v * v;
            }
        }
    };
    let mut remaining = n;
    while remaining > 0 {
        for v in ga.iter_mut() {
            *v = rng.sample(StandardNormal);
        }
        if remaining >= 2 {
            for v in gb.iter_mut() {
                *v = rng.sample(StandardNormal);
            }
            filter.apply_pair_into(&ga, &gb, &mut oa, &mut ob, &mut ws)?;
            accumulate(&oa);
            accumulate(&ob);
            remaining -= 2;
        } else {
            filter.apply_into(&ga, &mut oa, &mut ws)?;
            accumulate(&oa);
            remaining -= 1;
        }
    }
    let count = (n * m * m) as f64;
    Ok((sum_sq / count, sum / count))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn class_counts() {
        assert_eq!(classes(1), vec![(0, 0), (1, 0), (1, 1)]);
        assert_eq!(class_count(2), 6);
        assert_eq!(class_count(3), 10);
        assert_eq!(classes(3).len(), 10);
    }

    #[test]
    fn displacement_sets() {
        assert_eq!(class_displacements((0, 0), 8), vec![(0, 0)]);
        assert_eq!(class_displacements((1, 0), 8).len(), 4);
        assert_eq!(class_displacements((1, 1), 8).len(), 4);
        assert_eq!(class_displacements((2, 1), 8).len(), 8);
    }

    #[test]
    fn identity_precision() {
        let grid = GridSpec::new(4, 2).unwrap();
        let theta = NeighbourhoodTheta::diagonal(1, 1.0).unwrap();
        assert_eq!(precision_base(&theta, &grid).unwrap(), CirculantBase::identity(grid));
    }

    #[test]
    fn first_order_placement() {
        let grid = GridSpec::new(4, 2).unwrap();
        let theta = NeighbourhoodTheta::new(1, vec![4.0, -1.0, -0.25]).unwrap();
        let b = precision_base(&theta, &grid).unwrap();
        assert_eq!(b.at(0, 0), 4.0);
        for d in [(1, 0), (0, 1), (7, 0), (0, 7)] {
            assert_eq!(b.at(d.0, d.1), -1.0);
        }
        for d in [(1, 1), (7, 7), (1, 7), (7, 1)] {
            assert_eq!(b.at(d.0, d.1), -0.25);
        }
        assert_eq!(b.at(2, 0), 0.0);
    }

    #[test]
    fn class_spectra_match_fft() {
        let grid = GridSpec::new(4, 2).unwrap();
        let theta = NeighbourhoodTheta::new(2, vec![3.0, -0.4, -0.1, 0.05, 0.02, 0.01]).unwrap();
        let via_fft = precision_base(&theta, &grid).unwrap().spectrum().unwrap();
        let closed = combine(&class_spectra(2, 8), theta.theta());
        assert!(via_fft.values().relative_error(&closed) < 1e-13);
    }

    #[test]
    fn diagonal_inverse() {
        let grid = GridSpec::new(8, 2).unwrap();
        let theta = NeighbourhoodTheta::diagonal(2, 4.0).unwrap();
        let c = implied_cov_base(&theta, &grid).unwrap();
        assert!((c.at(0, 0) - 0.25).abs() < 1e-15);
        let off: f64 = c.base().iter().skip(1).map(|v| v.abs()).sum();
        assert!(off < 1e-14);
    }

    #[test]
    fn infeasible_theta_is_penalised() {
        let grid = GridSpec::new(8, 2).unwrap();
        let theta = NeighbourhoodTheta::new(1, vec![1.0, -1.0, 0.0]).unwrap();
        assert!(matches!(implied_cov_base(&theta, &grid), Err(Error::Infeasible { .. })));
        let target = CirculantBase::identity(grid);
        let cfg = FitConfig::default();
        let u = objective_u(&theta, &target, &cfg).unwrap();
        assert!(u >= cfg.penalty);
        assert!(matches!(gradient_u(&theta, &target, &cfg), Err(Error::Infeasible { .. })));
    }

    #[test]
    fn weights_at_origin_and_neighbours() {
        let grid = GridSpec::new(4, 2).unwrap();
        let cfg = FitConfig { distance: WeightDistance::Cells, ..FitConfig::default() };
        let w = weights(&grid, &cfg);
        assert_eq!(w[(0, 0)], 1.0);
        assert_eq!(w[(1, 0)], 2.0);
        assert_eq!(w[(7, 0)], 2.0);
        let physical = weights(&grid, &FitConfig::default());
        // d = 1/4 in window units
        assert!((physical[(0, 1)] - 20.0).abs() < 1e-12);
    }
}
