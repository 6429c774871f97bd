//! Gaussian approximation to the latent posterior at its mode, under a GMRF
//! prior with fixed parameters.
//!
//! The latent field lives on the extended lattice with prior
//! `Y ~ N(m, (τQ̃)⁻¹)`, `m = −σ²/2`; counts only touch window cells. The mode
//! maximises `−½τ(Y−m)ᵀQ̃(Y−m) + Σ_window [Y·X − rate·e^Y]` by damped Newton
//! steps, solving with a banded Cholesky factor of the lattice reordered by
//! [`interleave`](crate::banded::interleave) along both axes. Marginal
//! standard deviations come from the diagonal of the inverse Hessian.

use alloc::vec;
use alloc::vec::Vec;
#[allow(unused_imports)] // inherent f64 methods shadow these when std is linked
use num_traits::Float;

use crate::banded::{interleave_positions, BandCholesky, SymBand};
use crate::error::{Error, Result};
use crate::gmrf::{precision_base, NeighbourhoodTheta};
use crate::grid::{Grid, GridSpec};
use crate::mala::QuantileSummary;
use crate::model::{cell_terms, CellCounts, Scenario, EXP_CLAMP};
use crate::normal::inverse_cdf;

/// Largest number of step halvings tried in one Newton iteration.
pub const MAX_HALVINGS: usize = 30;

/// Relative size of objective differences treated as ties in the line search.
pub const OBJECTIVE_NOISE: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(default))]
pub struct GaussianApproxConfig {
    /// Prior precision scale.
    pub tau: f64,
    /// Stop once the gradient's largest component is at most this.
    pub newton_tol: f64,
    pub max_newton: usize,
}

impl Default for GaussianApproxConfig {
    fn default() -> Self {
        GaussianApproxConfig { tau: 1.0, newton_tol: 1e-8, max_newton: 50 }
    }
}

impl GaussianApproxConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.tau > 0.0 && self.tau.is_finite()) {
            return Err(Error::Domain("tau must be positive"));
        }
        if !(self.newton_tol > 0.0) {
            return Err(Error::Domain("newton tolerance must be positive"));
        }
        Ok(())
    }
}

/// Log full conditional of the latent field and its derivatives.
#[derive(Debug, Clone)]
pub struct ModePosterior {
    grid: GridSpec,
    /// Nonzero precision entries as wrapped offsets, already scaled by `τ`.
    stencil: Vec<(usize, usize, f64)>,
    mean: f64,
    counts: Grid,
    rate: Grid,
    /// Interleaved position of each lattice row/column index.
    pos: Vec<usize>,
    bw: usize,
}

impl ModePosterior {
    pub fn new(
        data: &CellCounts,
        sc: &Scenario,
        theta: &NeighbourhoodTheta,
        cfg: &GaussianApproxConfig,
    ) -> Result<Self> {
        cfg.validate()?;
        sc.validate()?;
        let grid = *sc.grid();
        if data.grid() != &grid {
            return Err(Error::ShapeMismatch { expected: grid.window_len(), found: data.grid().window_len() });
        }
        let prec = precision_base(theta, &grid)?;
        let min = prec.spectrum()?.min_value();
        if !(min > 0.0) {
            return Err(Error::Infeasible { min_eigenvalue: min });
        }
        let n = grid.side();
        let mut stencil = Vec::new();
        for p in 0..n {
            for q in 0..n {
                let v = prec.at(p, q);
                if v != 0.0 {
                    stencil.push((p, q, cfg.tau * v));
                }
            }
        }
        let k = theta.nbhd();
        Ok(ModePosterior {
            grid,
            stencil,
            mean: sc.cov.mean(),
            counts: data.extended(),
            rate: sc.rate_ext(),
            pos: interleave_positions(n),
            bw: (2 * k * n + 2 * k).min(n * n - 1),
        })
    }

    pub fn grid(&self) -> &GridSpec {
        &self.grid
    }

    pub fn prior_mean(&self) -> f64 {
        self.mean
    }

    /// `τQ̃·v`.
    pub fn prior_matvec(&self, v: &Grid) -> Result<Grid> {
        let n = self.grid.side();
        v.check_side(n)?;
        let mut out = Grid::zeros(n);
        for &(p, q, w) in &self.stencil {
            for i in 0..n {
                let src = v.row((i + p) % n);
                let dst = out.row_mut(i);
                let (a, b) = src.split_at(q);
                // dst[j] += w·src[(j+q) mod n]
                for (d, s) in dst.iter_mut().zip(b.iter().chain(a)) {
                    *d += w * s;
                }
            }
        }
        Ok(out)
    }

    fn centred(&self, y: &Grid) -> Grid {
        y.map(|v| v - self.mean)
    }

    /// Log full conditional up to a constant.
    pub fn objective(&self, y: &Grid) -> Result<f64> {
        let c = self.centred(y);
        let prior = -0.5 * c.dot(&self.prior_matvec(&c)?);
        let lik: f64 =
            y.iter().zip(self.counts.iter().zip(self.rate.iter())).map(|(&y, (&x, &r))| cell_terms(y, x, r).0).sum();
        Ok(prior + lik)
    }

    pub fn gradient(&self, y: &Grid) -> Result<Grid> {
        let mut g = self.prior_matvec(&self.centred(y))?.scale(-1.0);
        for ((g, &y), (&x, &r)) in
            g.as_mut_slice().iter_mut().zip(y.iter()).zip(self.counts.iter().zip(self.rate.iter()))
        {
            *g += cell_terms(y, x, r).1;
        }
        Ok(g)
    }

    /// Banded position of lattice cell `(i, j)`.
    #[inline]
    pub fn position(&self, i: usize, j: usize) -> usize {
        self.pos[i] * self.grid.side() + self.pos[j]
    }

    /// Negative Hessian `τQ̃ + diag(rate·e^Y)` in banded order.
    pub fn precision_at(&self, y: &Grid) -> Result<SymBand> {
        let n = self.grid.side();
        y.check_side(n)?;
        let mut h = SymBand::zeros(n * n, self.bw);
        for i in 0..n {
            for j in 0..n {
                let s = self.position(i, j);
                for &(p, q, w) in &self.stencil {
                    let t = self.position((i + p) % n, (j + q) % n);
                    if t >= s {
                        h.add(s, t, w)?;
                    }
                }
                let r = self.rate[(i, j)];
                if r > 0.0 {
                    h.add(s, s, r * y[(i, j)].min(EXP_CLAMP).exp())?;
                }
            }
        }
        Ok(h)
    }

    fn to_banded(&self, g: &Grid) -> Vec<f64> {
        let n = self.grid.side();
        let mut out = vec![0.0; n * n];
        for i in 0..n {
            for j in 0..n {
                out[self.position(i, j)] = g[(i, j)];
            }
        }
        out
    }

    fn from_banded(&self, v: &[f64]) -> Grid {
        Grid::from_fn(self.grid.side(), |i, j| v[self.position(i, j)])
    }

    /// Solve `H(y)·x = b` on the lattice.
    pub fn solve_at(&self, y: &Grid, b: &Grid) -> Result<Grid> {
        let chol = self.precision_at(y)?.cholesky()?;
        let mut v = self.to_banded(b);
        chol.solve_in_place(&mut v)?;
        Ok(self.from_banded(&v))
    }

    /// Damped Newton ascent from the prior mean.
    pub fn find_mode(&self, cfg: &GaussianApproxConfig) -> Result<Mode> {
        cfg.validate()?;
        let mut y = Grid::filled(self.grid.side(), self.mean);
        let mut f = self.objective(&y)?;
        let mut iters = 0;
        loop {
            let g = self.gradient(&y)?;
            let gnorm = g.max_abs();
            if gnorm <= cfg.newton_tol {
                return Ok(Mode { y, objective: f, iterations: iters, converged: true, gradient_norm: gnorm });
            }
            if iters == cfg.max_newton {
                log::warn!("Newton stopped after {iters} iterations, gradient {gnorm:e}");
                return Ok(Mode { y, objective: f, iterations: iters, converged: false, gradient_norm: gnorm });
            }
            let step = self.solve_at(&y, &g)?;
            let mut t = 1.0;
            let mut accepted = None;
            // near the mode the gain falls below the rounding noise of the
            // objective sum; a tie then counts as progress if the gradient shrinks
            let noise = OBJECTIVE_NOISE * f.abs().max(1.0);
            for _ in 0..=MAX_HALVINGS {
                let cand = y.axpy(t, &step);
                let fc = self.objective(&cand)?;
                if fc >= f || (fc >= f - noise && self.gradient(&cand)?.max_abs() < gnorm) {
                    accepted = Some((cand, fc));
                    break;
                }
                t *= 0.5;
            }
            iters += 1;
            match accepted {
                Some((cand, fc)) => {
                    y = cand;
                    f = fc;
                }
                None => {
                    log::warn!("Newton line search stalled, gradient {gnorm:e}");
                    return Ok(Mode { y, objective: f, iterations: iters, converged: false, gradient_norm: gnorm });
                }
            }
        }
    }

    /// Cholesky factor of the negative Hessian at `y`.
    pub fn factor_at(&self, y: &Grid) -> Result<BandCholesky> {
        self.precision_at(y)?.cholesky()
    }

    /// Marginal standard deviations on the window from the inverse negative
    /// Hessian at `y`.
    pub fn marginal_sd(&self, y: &Grid) -> Result<Grid> {
        let diag = self.factor_at(y)?.inverse_diagonal();
        let m = self.grid.m();
        Ok(Grid::from_fn(m, |i, j| diag[self.position(i, j)].sqrt()))
    }
}

/// Outcome of the Newton iterations.
#[derive(Debug, Clone, PartialEq)]
pub struct Mode {
    /// Mode on the extended lattice.
    pub y: Grid,
    pub objective: f64,
    pub iterations: usize,
    pub converged: bool,
    pub gradient_norm: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModeResult {
    pub grid: GridSpec,
    /// `Y★` on the extended lattice.
    pub mode: Grid,
    /// `σ_s` on the window.
    pub marginal_sd: Grid,
    pub newton_iters: usize,
    pub converged: bool,
    pub gradient_norm: f64,
}

impl ModeResult {
    /// `Y★` on the window.
    pub fn window_mode(&self) -> Grid {
        self.grid.restrict(&self.mode).expect("mode lives on its lattice")
    }
}

/// Mode and marginal standard deviations of the Gaussian approximation.
pub fn find_mode(
    data: &CellCounts,
    sc: &Scenario,
    theta: &NeighbourhoodTheta,
    cfg: &GaussianApproxConfig,
) -> Result<ModeResult> {
    let post = ModePosterior::new(data, sc, theta, cfg)?;
    let mode = post.find_mode(cfg)?;
    let marginal_sd = post.marginal_sd(&mode.y)?;
    Ok(ModeResult {
        grid: *post.grid(),
        mode: mode.y,
        marginal_sd,
        newton_iters: mode.iterations,
        converged: mode.converged,
        gradient_norm: mode.gradient_norm,
    })
}

/// `c_k(s) = Y★(s) + σ_s·Φ⁻¹(q_k)`.
pub fn gaussian_quantiles(res: &ModeResult, ladder: &[f64]) -> Result<QuantileSummary> {
    if ladder.iter().any(|q| !(0.0..=1.0).contains(q)) {
        return Err(Error::Domain("quantile levels must lie in [0, 1]"));
    }
    let centre = res.window_mode();
    let len = centre.len();
    let mut c = vec![0.0; ladder.len() * len];
    for (k, &q) in ladder.iter().enumerate() {
        let z = inverse_cdf(q);
        for (cell, (&y, &s)) in centre.iter().zip(res.marginal_sd.iter()).enumerate() {
            c[k * len + cell] = if q == 0.5 { y } else { y + s * z };
        }
    }
    Ok(QuantileSummary { ladder: ladder.to_vec(), m: res.grid.m(), c })
}
