//! The discretised log-Gaussian Cox process.
//!
//! Counts in window cell `s` are Poisson with mean `μ·C_A·λ(s)·exp(Y(s))`,
//! where `λ` integrates to one over the window, `C_A` is the cell area and
//! `Y = −σ²/2 + Σ^{1/2}Γ` lives on the extended torus. Off-window cells carry
//! no data and contribute nothing to the likelihood.

use alloc::vec;
use alloc::vec::Vec;
#[allow(unused_imports)] // inherent f64 methods shadow these when std is linked
use num_traits::Float;
use rand::Rng;
use rand_distr::{Distribution, Poisson};

use crate::circulant::{CirculantBase, Workspace};
use crate::covariance::{CovarianceModel, FieldState, GaussianField, WhiteNoiseState};
use crate::error::{Error, Result};
use crate::grid::{Grid, GridSpec, Window};

/// Exponents above this are clamped before `exp`.
pub const EXP_CLAMP: f64 = 700.0;

/// Normalised spatial intensity over the window cells.
#[derive(Debug, Clone, PartialEq)]
pub struct IntensitySurface {
    grid: GridSpec,
    lambda: Grid,
}

impl IntensitySurface {
    /// Rescale a non-negative `M × M` grid so that `Σ λ·C_A = 1`.
    pub fn new(grid: GridSpec, lambda: Grid) -> Result<Self> {
        lambda.check_side(grid.m())?;
        if lambda.iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
            return Err(Error::Domain("intensity must be finite and non-negative"));
        }
        let mass = lambda.sum() * grid.cell_area();
        if !(mass > 0.0) {
            return Err(Error::Domain("intensity has zero mass"));
        }
        Ok(IntensitySurface { grid, lambda: lambda.scale(1.0 / mass) })
    }

    pub fn uniform(grid: GridSpec) -> Self {
        Self::new(grid, Grid::filled(grid.m(), 1.0)).expect("constant surface is valid")
    }

    pub fn grid(&self) -> &GridSpec {
        &self.grid
    }

    /// `λ` on the `M × M` window cells.
    pub fn lambda(&self) -> &Grid {
        &self.lambda
    }

    /// Standard deviation over mean of the cell values.
    pub fn coefficient_of_variation(&self) -> f64 {
        let n = self.lambda.len() as f64;
        let mean = self.lambda.sum() / n;
        let var = self.lambda.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
        var.sqrt() / mean
    }
}

/// Fixed-bandwidth Gaussian kernel smooth of a point set, evaluated at cell
/// centroids and normalised to unit mass. No edge correction.
pub fn build_lambda(points: &[(f64, f64)], bandwidth: f64, grid: &GridSpec) -> Result<IntensitySurface> {
    if points.is_empty() {
        return Err(Error::Domain("need at least one point"));
    }
    if !(bandwidth > 0.0 && bandwidth.is_finite()) {
        return Err(Error::Domain("bandwidth must be positive"));
    }
    let window = grid.window();
    if points.iter().any(|&(x, y)| !window.contains(x, y)) {
        return Err(Error::Domain("points must lie inside the window"));
    }
    let denom = 2.0 * bandwidth * bandwidth;
    let lambda = Grid::from_fn(grid.m(), |i, j| {
        let (cx, cy) = grid.centroid(i, j);
        points
            .iter()
            .map(|&(x, y)| {
                let (dx, dy) = (cx - x, cy - y);
                (-(dx * dx + dy * dy) / denom).exp()
            })
            .sum()
    });
    IntensitySurface::new(*grid, lambda)
}

/// `n` points uniform on the window.
pub fn uniform_points<R: Rng + ?Sized>(n: usize, window: &Window, rng: &mut R) -> Vec<(f64, f64)> {
    (0..n)
        .map(|_| {
            let x = window.x0 + window.width * rng.random::<f64>();
            let y = window.y0 + window.height * rng.random::<f64>();
            (x, y)
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub surface: IntensitySurface,
    /// Expected number of events in the window.
    pub mu: f64,
    pub cov: CovarianceModel,
    pub seed: u64,
}

impl Scenario {
    pub fn validate(&self) -> Result<()> {
        if !(self.mu > 0.0 && self.mu.is_finite()) {
            return Err(Error::Domain("expected event count must be positive"));
        }
        self.cov.validate()
    }

    pub fn grid(&self) -> &GridSpec {
        self.surface.grid()
    }

    /// `μ·C_A·λ` zero-extended onto the lattice.
    pub fn rate_ext(&self) -> Grid {
        let g = self.grid();
        g.extend(&self.surface.lambda.scale(self.mu * g.cell_area())).expect("surface lives on its grid")
    }
}

/// Event counts per window cell.
#[derive(Debug, Clone, PartialEq)]
pub struct CellCounts {
    grid: GridSpec,
    counts: Vec<u64>,
}

impl CellCounts {
    /// Row-major `M × M` counts.
    pub fn new(grid: GridSpec, counts: Vec<u64>) -> Result<Self> {
        if counts.len() != grid.window_len() {
            return Err(Error::ShapeMismatch { expected: grid.window_len(), found: counts.len() });
        }
        Ok(CellCounts { grid, counts })
    }

    pub fn zeros(grid: GridSpec) -> Self {
        CellCounts { counts: vec![0; grid.window_len()], grid }
    }

    pub fn grid(&self) -> &GridSpec {
        &self.grid
    }

    pub fn counts(&self) -> &[u64] {
        &self.counts
    }

    pub fn get(&self, i: usize, j: usize) -> u64 {
        self.counts[i * self.grid.m() + j]
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }

    pub fn to_grid(&self) -> Grid {
        Grid::from_vec(self.grid.m(), self.counts.iter().map(|&c| c as f64).collect()).expect("counts cover the window")
    }

    /// Counts zero-extended onto the lattice.
    pub fn extended(&self) -> Grid {
        self.grid.extend(&self.to_grid()).expect("counts cover the window")
    }
}

/// Draw a latent field and cell counts, building the embedded field first.
pub fn simulate_scenario<R: Rng + ?Sized>(sc: &Scenario, rng: &mut R) -> Result<(FieldState, CellCounts)> {
    sc.validate()?;
    let field = GaussianField::new(sc.cov, sc.grid())?;
    simulate_with_field(sc, &field, rng)
}

/// Draw a latent field and cell counts from a prepared field.
pub fn simulate_with_field<R: Rng + ?Sized>(
    sc: &Scenario,
    field: &GaussianField,
    rng: &mut R,
) -> Result<(FieldState, CellCounts)> {
    sc.validate()?;
    let grid = *sc.grid();
    if field.grid() != &grid {
        return Err(Error::ShapeMismatch { expected: grid.len(), found: field.grid().len() });
    }
    let gamma = WhiteNoiseState::draw(grid, rng);
    let truth = field.sample(&gamma)?;
    let m = grid.m();
    let scale = sc.mu * grid.cell_area();
    let mut counts = vec![0u64; m * m];
    for i in 0..m {
        for j in 0..m {
            let y = truth.y_ext[(i, j)].min(EXP_CLAMP);
            let rate = scale * sc.surface.lambda[(i, j)] * y.exp();
            counts[i * m + j] = poisson(rate, rng);
        }
    }
    Ok((truth, CellCounts::new(grid, counts)?))
}

fn poisson<R: Rng + ?Sized>(rate: f64, rng: &mut R) -> u64 {
    if !(rate > 0.0) {
        return 0;
    }
    match Poisson::new(rate) {
        Ok(d) => {
            let x: f64 = d.sample(rng);
            x as u64
        }
        // beyond the sampler's range the count is effectively infinite
        Err(_) => u64::MAX,
    }
}

/// Log-likelihood contribution, residual `x − rate·e^y` and clamp flag of
/// one cell.
#[inline]
pub(crate) fn cell_terms(y: f64, count: f64, rate: f64) -> (f64, f64, bool) {
    if rate == 0.0 && count == 0.0 {
        return (0.0, 0.0, false);
    }
    let clamped = y > EXP_CLAMP;
    let intensity = rate * y.min(EXP_CLAMP).exp();
    (y * count - intensity, count - intensity, clamped)
}

/// Posterior of the whitened field given counts, with everything that does
/// not depend on `Γ` precomputed.
#[derive(Debug, Clone)]
pub struct LgcpTarget {
    field: GaussianField,
    counts_ext: Grid,
    rate_ext: Grid,
    mean: f64,
}

/// Result of one posterior evaluation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TargetEval {
    pub log_target: f64,
    /// Cells whose exponent hit [`EXP_CLAMP`].
    pub clamped: usize,
}

/// Scratch space for [`LgcpTarget::evaluate`].
#[derive(Debug, Clone)]
pub struct TargetWorkspace {
    fft: Workspace,
    resid: Vec<f64>,
}

impl LgcpTarget {
    pub fn new(field: GaussianField, data: &CellCounts, sc: &Scenario) -> Result<Self> {
        sc.validate()?;
        let grid = *field.grid();
        if data.grid() != &grid || sc.grid() != &grid {
            return Err(Error::ShapeMismatch { expected: grid.len(), found: data.grid().len() });
        }
        Ok(LgcpTarget { mean: sc.cov.mean(), counts_ext: data.extended(), rate_ext: sc.rate_ext(), field })
    }

    /// Build from an already embedded covariance base.
    pub fn from_base(base: CirculantBase, data: &CellCounts, sc: &Scenario) -> Result<Self> {
        Self::new(GaussianField::from_base(sc.cov, base)?, data, sc)
    }

    pub fn field(&self) -> &GaussianField {
        &self.field
    }

    pub fn grid(&self) -> &GridSpec {
        self.field.grid()
    }

    pub fn mean(&self) -> f64 {
        self.mean
    }

    pub fn counts_ext(&self) -> &Grid {
        &self.counts_ext
    }

    /// `μ·C_A·λ` on the lattice, zero off the window.
    pub fn rate_ext(&self) -> &Grid {
        &self.rate_ext
    }

    pub fn workspace(&self) -> TargetWorkspace {
        TargetWorkspace { fft: self.field.sqrt_filter().workspace(), resid: vec![0.0; self.grid().len()] }
    }

    /// Log posterior (up to a constant), its gradient and the field
    /// `Y = mean + Σ^{1/2}Γ`, all on the lattice.
    pub fn evaluate(
        &self,
        gamma: &[f64],
        grad: &mut [f64],
        y: &mut [f64],
        ws: &mut TargetWorkspace,
    ) -> Result<TargetEval> {
        let sqrt = self.field.sqrt_filter();
        sqrt.apply_into(gamma, y, &mut ws.fft)?;
        let mut clamped = 0;
        let mut lik = 0.0;
        let counts = self.counts_ext.as_slice();
        let rate = self.rate_ext.as_slice();
        for k in 0..y.len() {
            y[k] += self.mean;
            let (l, r, c) = cell_terms(y[k], counts[k], rate[k]);
            lik += l;
            ws.resid[k] = r;
            clamped += c as usize;
        }
        sqrt.apply_into(&ws.resid, grad, &mut ws.fft)?;
        let mut prior = 0.0;
        for (g, &x) in grad.iter_mut().zip(gamma) {
            prior += x * x;
            *g -= x;
        }
        Ok(TargetEval { log_target: lik - 0.5 * prior, clamped })
    }

    pub fn log_target(&self, gamma: &WhiteNoiseState) -> Result<f64> {
        self.check(gamma)?;
        let n = self.grid().len();
        let (mut g, mut y) = (vec![0.0; n], vec![0.0; n]);
        Ok(self.evaluate(gamma.gamma.as_slice(), &mut g, &mut y, &mut self.workspace())?.log_target)
    }

    pub fn grad_log_target(&self, gamma: &WhiteNoiseState) -> Result<Grid> {
        self.check(gamma)?;
        let n = self.grid().len();
        let (mut g, mut y) = (vec![0.0; n], vec![0.0; n]);
        self.evaluate(gamma.gamma.as_slice(), &mut g, &mut y, &mut self.workspace())?;
        Grid::from_vec(self.grid().side(), g)
    }

    fn check(&self, gamma: &WhiteNoiseState) -> Result<()> {
        if &gamma.grid != self.grid() {
            return Err(Error::ShapeMismatch { expected: self.grid().len(), found: gamma.grid.len() });
        }
        gamma.gamma.check_side(self.grid().side())
    }
}

/// `−½‖γ‖² + Σ_s [Y(s)X(s) − μ C_A λ(s) e^{Y(s)}]` over window cells.
pub fn log_target(gamma: &WhiteNoiseState, data: &CellCounts, sc: &Scenario, base: &CirculantBase) -> Result<f64> {
    LgcpTarget::from_base(base.clone(), data, sc)?.log_target(gamma)
}

/// `−γ + Σ^{1/2}(X − μ C_A λ e^Y)` with `X`, `λ` zero off the window.
pub fn grad_log_target(
    gamma: &WhiteNoiseState,
    data: &CellCounts,
    sc: &Scenario,
    base: &CirculantBase,
) -> Result<Grid> {
    LgcpTarget::from_base(base.clone(), data, sc)?.grad_log_target(gamma)
}
