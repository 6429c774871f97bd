//! Metropolis-adjusted Langevin sampling of the whitened posterior with
//! Robbins–Monro adaptation of the step size.
//!
//! Proposal: `γ' = γ + (h²/2)∇log π(γ) + hZ`. After iteration `i` (from 0)
//! the step is updated as `h ← h + C/(i+1)^e · (α_i − α*)`, where `α_i` is
//! that iteration's acceptance probability, and floored at [`H_FLOOR`].
//!
//! [`run_chain`] runs the same chain in Fourier coordinates `γ̂ = DFT(γ)`:
//! the DFT of white noise is drawn directly as Hermitian Gaussian noise, norms
//! follow from Parseval, and each iteration needs one inverse transform (for
//! `Y`) and one forward transform (for the gradient) instead of four.

use alloc::vec;
use alloc::vec::Vec;
use num_complex::Complex64;
#[allow(unused_imports)] // inherent f64 methods shadow these when std is linked
use num_traits::Float;
use rand::Rng;
use rand_distr::StandardNormal;

use crate::covariance::WhiteNoiseState;
use crate::error::{Error, Result};
use crate::fft::Fft2;
use crate::grid::{Grid, GridSpec};
use crate::model::{cell_terms, LgcpTarget, TargetWorkspace};

/// Smallest step size the adaptation can reach.
pub const H_FLOOR: f64 = 1e-10;

/// Probability ladder for the quantile summaries.
pub const Q_LADDER: [f64; 13] = [0.01, 0.05, 0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9, 0.95, 0.99];

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(default))]
pub struct ChainConfig {
    pub n_iter: usize,
    pub burn_in: usize,
    pub thin: usize,
    pub h_init: f64,
    pub target_accept: f64,
    pub adapt_c: f64,
    pub adapt_exp: f64,
}

impl Default for ChainConfig {
    fn default() -> Self {
        ChainConfig {
            n_iter: 100_000,
            burn_in: 10_000,
            thin: 90,
            h_init: 1.0,
            target_accept: 0.574,
            adapt_c: 1.0,
            adapt_exp: 0.5,
        }
    }
}

impl ChainConfig {
    /// Number of retained samples.
    pub fn retained(&self) -> usize {
        self.n_iter.saturating_sub(self.burn_in) / self.thin.max(1)
    }

    pub fn validate(&self) -> Result<()> {
        if self.thin == 0 || self.burn_in >= self.n_iter {
            return Err(Error::Domain("need burn_in < n_iter and thin ≥ 1"));
        }
        if self.retained() < 2 {
            return Err(Error::InsufficientSamples { found: self.retained(), required: 2 });
        }
        if !(self.h_init > 0.0 && self.h_init.is_finite()) {
            return Err(Error::Domain("initial step size must be positive"));
        }
        if !(self.target_accept > 0.0 && self.target_accept < 1.0) {
            return Err(Error::Domain("target acceptance must lie in (0, 1)"));
        }
        if !(self.adapt_exp > 0.5 - 1e-12 && self.adapt_exp <= 1.0) {
            return Err(Error::Domain("adaptation exponent must lie in [0.5, 1]"));
        }
        if !(self.adapt_c.is_finite() && self.adapt_c >= 0.0) {
            return Err(Error::Domain("adaptation constant must be non-negative"));
        }
        Ok(())
    }
}

/// A point of the chain with its cached target evaluation.
#[derive(Debug, Clone)]
pub struct ChainState {
    pub gamma: Vec<f64>,
    pub grad: Vec<f64>,
    pub y: Vec<f64>,
    pub log_target: f64,
}

impl ChainState {
    /// Evaluate the target at `gamma`.
    pub fn new(target: &LgcpTarget, gamma: Vec<f64>, ws: &mut TargetWorkspace) -> Result<Self> {
        let n = gamma.len();
        let mut s = ChainState { gamma, grad: vec![0.0; n], y: vec![0.0; n], log_target: 0.0 };
        s.refresh(target, ws)?;
        Ok(s)
    }

    fn refresh(&mut self, target: &LgcpTarget, ws: &mut TargetWorkspace) -> Result<usize> {
        let ev = target.evaluate(&self.gamma, &mut self.grad, &mut self.y, ws)?;
        self.log_target = ev.log_target;
        Ok(ev.clamped)
    }
}

/// `γ + (h²/2)∇ + hZ` written into `out`.
pub fn propose<R: Rng + ?Sized>(gamma: &[f64], grad: &[f64], h: f64, rng: &mut R, out: &mut [f64]) {
    let drift = 0.5 * h * h;
    for ((o, &g), &d) in out.iter_mut().zip(gamma).zip(grad) {
        let z: f64 = rng.sample(StandardNormal);
        *o = g + drift * d + h * z;
    }
}

/// `log q(a → b)` up to a constant: `−‖b − a − (h²/2)∇(a)‖² / (2h²)`.
fn log_q(a: &ChainState, b: &ChainState, h: f64) -> f64 {
    let drift = 0.5 * h * h;
    let ss: f64 = b
        .gamma
        .iter()
        .zip(&a.gamma)
        .zip(&a.grad)
        .map(|((x, y), g)| {
            let r = x - y - drift * g;
            r * r
        })
        .sum();
    -ss / (2.0 * h * h)
}

/// Log Metropolis–Hastings ratio for moving from `cur` to `prop`.
pub fn log_hastings(cur: &ChainState, prop: &ChainState, h: f64) -> f64 {
    if cur.gamma == prop.gamma {
        return 0.0;
    }
    prop.log_target - cur.log_target + log_q(prop, cur, h) - log_q(cur, prop, h)
}

/// `min(1, exp(log ratio))`; a non-finite ratio rejects.
pub fn accept_prob(cur: &ChainState, prop: &ChainState, h: f64) -> f64 {
    let lr = log_hastings(cur, prop, h);
    if lr.is_nan() || !prop.log_target.is_finite() {
        return 0.0;
    }
    if lr >= 0.0 {
        1.0
    } else {
        lr.exp()
    }
}

/// Acceptance probability of `gamma → gamma_prop` evaluated from scratch.
pub fn accept_prob_for(
    target: &LgcpTarget,
    gamma: &WhiteNoiseState,
    gamma_prop: &WhiteNoiseState,
    h: f64,
) -> Result<f64> {
    let mut ws = target.workspace();
    let a = ChainState::new(target, gamma.gamma.as_slice().to_vec(), &mut ws)?;
    let b = ChainState::new(target, gamma_prop.gamma.as_slice().to_vec(), &mut ws)?;
    Ok(accept_prob(&a, &b, h))
}

/// One Robbins–Monro step, `η = C/iteration^e`.
pub fn adapt_h(h: f64, accept_prob: f64, iteration: usize, cfg: &ChainConfig) -> f64 {
    let eta = cfg.adapt_c / (iteration.max(1) as f64).powf(cfg.adapt_exp);
    (h + eta * (accept_prob - cfg.target_accept)).max(H_FLOOR)
}

/// Retained window-cell samples and chain diagnostics.
#[derive(Debug, Clone, PartialEq)]
pub struct ChainOutput {
    pub grid: GridSpec,
    /// `retained × M²` values of `Y`, sample-major.
    pub samples: Vec<f64>,
    pub retained: usize,
    /// Acceptance probability per iteration.
    pub accept_trace: Vec<f64>,
    /// Step size used at each iteration.
    pub h_trace: Vec<f64>,
    pub final_h: f64,
    pub accepted: usize,
    /// Proposals whose exponent hit the clamp.
    pub clamp_warnings: usize,
    pub nonfinite_rejections: usize,
}

impl ChainOutput {
    pub fn sample(&self, r: usize) -> &[f64] {
        let len = self.grid.window_len();
        &self.samples[r * len..(r + 1) * len]
    }

    /// Mean acceptance probability over the last `frac` of iterations.
    pub fn tail_acceptance(&self, frac: f64) -> f64 {
        let n = self.accept_trace.len();
        let k = ((n as f64 * frac).ceil() as usize).clamp(1, n.max(1));
        self.accept_trace[n - k..].iter().sum::<f64>() / k as f64
    }

    /// Per-cell posterior mean of `Y` on the window.
    pub fn mean(&self) -> Grid {
        let len = self.grid.window_len();
        let mut acc = vec![0.0; len];
        for r in 0..self.retained {
            for (a, v) in acc.iter_mut().zip(self.sample(r)) {
                *a += v;
            }
        }
        let n = self.retained as f64;
        Grid::from_vec(self.grid.m(), acc.into_iter().map(|a| a / n).collect()).expect("samples cover the window")
    }

    /// Per-cell lag-1 autocorrelation of the retained samples; a constant
    /// series counts as fully correlated.
    pub fn lag1_autocorrelation(&self) -> Grid {
        let m = self.grid.m();
        let n = self.retained;
        let mean = self.mean();
        Grid::from_fn(m, |i, j| {
            let c = i * m + j;
            let mu = mean[(i, j)];
            let mut var = 0.0;
            let mut cov = 0.0;
            for r in 0..n {
                let d = self.sample(r)[c] - mu;
                var += d * d;
                if r + 1 < n {
                    cov += d * (self.sample(r + 1)[c] - mu);
                }
            }
            if var > 0.0 {
                (cov / var).clamp(-1.0, 1.0)
            } else {
                1.0
            }
        })
    }
}

/// Chain point in Fourier coordinates.
#[derive(Debug, Clone)]
struct SpectralState {
    gamma_hat: Vec<Complex64>,
    grad_hat: Vec<Complex64>,
    y: Vec<f64>,
    log_target: f64,
}

struct SpectralEngine<'a> {
    target: &'a LgcpTarget,
    fft: &'a Fft2,
    root: &'a [f64],
    partner: Vec<usize>,
    buf: Vec<Complex64>,
    len: f64,
}

impl<'a> SpectralEngine<'a> {
    fn new(target: &'a LgcpTarget) -> Self {
        let filter = target.field().sqrt_filter();
        let fft = filter.fft();
        let n = fft.side();
        let partner = (0..n * n)
            .map(|k| {
                let (a, b) = (k / n, k % n);
                ((n - a) % n) * n + (n - b) % n
            })
            .collect();
        SpectralEngine {
            target,
            fft,
            root: filter.multiplier(),
            partner,
            buf: vec![Complex64::new(0.0, 0.0); n * n],
            len: (n * n) as f64,
        }
    }

    fn state(&mut self, gamma: &[f64]) -> (SpectralState, usize) {
        for (z, &g) in self.buf.iter_mut().zip(gamma) {
            *z = Complex64::new(g, 0.0);
        }
        self.fft.forward(&mut self.buf);
        let n = gamma.len();
        let mut s = SpectralState {
            gamma_hat: self.buf.clone(),
            grad_hat: vec![Complex64::new(0.0, 0.0); n],
            y: vec![0.0; n],
            log_target: 0.0,
        };
        let clamped = self.evaluate(&mut s);
        (s, clamped)
    }

    /// Fill `y`, `grad_hat` and `log_target` from `gamma_hat`.
    fn evaluate(&mut self, s: &mut SpectralState) -> usize {
        for ((z, g), &r) in self.buf.iter_mut().zip(&s.gamma_hat).zip(self.root) {
            *z = g * r;
        }
        self.fft.inverse(&mut self.buf);
        let mean = self.target.mean();
        let counts = self.target.counts_ext().as_slice();
        let rate = self.target.rate_ext().as_slice();
        let mut lik = 0.0;
        let mut clamped = 0;
        for (k, (z, y)) in self.buf.iter_mut().zip(s.y.iter_mut()).enumerate() {
            *y = z.re + mean;
            let (l, r, c) = cell_terms(*y, counts[k], rate[k]);
            lik += l;
            clamped += c as usize;
            *z = Complex64::new(r, 0.0);
        }
        self.fft.forward(&mut self.buf);
        let mut prior = 0.0;
        for (((g, z), &r), gh) in s.grad_hat.iter_mut().zip(&self.buf).zip(self.root).zip(&s.gamma_hat) {
            *g = z * r - gh;
            prior += gh.norm_sqr();
        }
        s.log_target = lik - 0.5 * prior / self.len;
        clamped
    }

    /// `γ̂' = γ̂ + (h²/2)ĝ + h·DFT(Z)`.
    fn propose<R: Rng + ?Sized>(&self, cur: &SpectralState, h: f64, rng: &mut R, out: &mut SpectralState) {
        let drift = 0.5 * h * h;
        let full = self.len.sqrt();
        let half = (0.5 * self.len).sqrt();
        for (k, &p) in self.partner.iter().enumerate() {
            if p < k {
                continue;
            }
            let noise = if p == k {
                Complex64::new(full * rng.sample::<f64, _>(StandardNormal), 0.0)
            } else {
                let a: f64 = rng.sample(StandardNormal);
                let b: f64 = rng.sample(StandardNormal);
                Complex64::new(half * a, half * b)
            };
            out.gamma_hat[k] = cur.gamma_hat[k] + cur.grad_hat[k] * drift + noise * h;
            if p != k {
                out.gamma_hat[p] = cur.gamma_hat[p] + cur.grad_hat[p] * drift + noise.conj() * h;
            }
        }
    }

    fn log_q(&self, a: &SpectralState, b: &SpectralState, h: f64) -> f64 {
        let drift = 0.5 * h * h;
        let ss: f64 = b
            .gamma_hat
            .iter()
            .zip(&a.gamma_hat)
            .zip(&a.grad_hat)
            .map(|((x, y), g)| (x - y - g * drift).norm_sqr())
            .sum();
        -ss / (2.0 * h * h * self.len)
    }

    fn accept_prob(&self, cur: &SpectralState, prop: &SpectralState, h: f64) -> f64 {
        if !prop.log_target.is_finite() {
            return 0.0;
        }
        let lr = prop.log_target - cur.log_target + self.log_q(prop, cur, h) - self.log_q(cur, prop, h);
        if lr.is_nan() {
            0.0
        } else if lr >= 0.0 {
            1.0
        } else {
            lr.exp()
        }
    }
}

/// Run an adaptive MALA chain from `Γ = 0`.
pub fn run_chain<R: Rng + ?Sized>(target: &LgcpTarget, cfg: &ChainConfig, rng: &mut R) -> Result<ChainOutput> {
    run_chain_from(target, cfg, WhiteNoiseState::zeros(*target.grid()), rng)
}

pub fn run_chain_from<R: Rng + ?Sized>(
    target: &LgcpTarget,
    cfg: &ChainConfig,
    start: WhiteNoiseState,
    rng: &mut R,
) -> Result<ChainOutput> {
    cfg.validate()?;
    let grid = *target.grid();
    if start.grid != grid {
        return Err(Error::ShapeMismatch { expected: grid.len(), found: start.grid.len() });
    }
    let m = grid.m();
    let side = grid.side();
    let mut engine = SpectralEngine::new(target);
    let (mut cur, _) = engine.state(start.gamma.as_slice());
    let mut prop = cur.clone();

    let retained = cfg.retained();
    let mut samples = Vec::with_capacity(retained * m * m);
    let mut accept_trace = Vec::with_capacity(cfg.n_iter);
    let mut h_trace = Vec::with_capacity(cfg.n_iter);
    let mut h = cfg.h_init;
    let (mut accepted, mut clamp_warnings, mut nonfinite) = (0, 0, 0);

    for i in 0..cfg.n_iter {
        engine.propose(&cur, h, rng, &mut prop);
        if engine.evaluate(&mut prop) > 0 {
            clamp_warnings += 1;
        }
        let alpha = engine.accept_prob(&cur, &prop, h);
        if !prop.log_target.is_finite() {
            nonfinite += 1;
            log::warn!("non-finite log target at iteration {i}; proposal rejected");
        }
        let u: f64 = rng.random();
        if u < alpha {
            core::mem::swap(&mut cur, &mut prop);
            accepted += 1;
        }
        accept_trace.push(alpha);
        h_trace.push(h);
        h = adapt_h(h, alpha, i + 1, cfg);

        let done = i + 1;
        if done > cfg.burn_in && (done - cfg.burn_in) % cfg.thin == 0 && samples.len() < retained * m * m {
            for r in 0..m {
                samples.extend_from_slice(&cur.y[r * side..r * side + m]);
            }
        }
    }
    if clamp_warnings > 0 {
        log::warn!("{clamp_warnings} proposals had exponents clamped at {}", crate::model::EXP_CLAMP);
    }
    Ok(ChainOutput {
        grid,
        samples,
        retained,
        accept_trace,
        h_trace,
        final_h: h,
        accepted,
        clamp_warnings,
        nonfinite_rejections: nonfinite,
    })
}

/// Per-cell thresholds `c_k(s)` for a probability ladder.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct QuantileSummary {
    pub ladder: Vec<f64>,
    pub m: usize,
    /// `ladder.len() × M²`, ladder-major.
    pub c: Vec<f64>,
}

impl QuantileSummary {
    pub fn get(&self, k: usize, i: usize, j: usize) -> f64 {
        self.c[(k * self.m + i) * self.m + j]
    }

    /// Threshold grid for ladder entry `k`.
    pub fn level(&self, k: usize) -> Grid {
        let len = self.m * self.m;
        Grid::from_vec(self.m, self.c[k * len..(k + 1) * len].to_vec()).expect("level covers the window")
    }
}

/// Empirical quantile of sorted data, linear between order statistics.
pub fn sorted_quantile(sorted: &[f64], q: f64) -> f64 {
    let n = sorted.len();
    let pos = q.clamp(0.0, 1.0) * (n - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = (lo + 1).min(n - 1);
    let frac = pos - lo as f64;
    if frac == 0.0 {
        sorted[lo]
    } else {
        sorted[lo] + frac * (sorted[hi] - sorted[lo])
    }
}

/// Per-cell empirical quantiles of the retained samples.
pub fn quantiles(out: &ChainOutput, ladder: &[f64]) -> Result<QuantileSummary> {
    if out.retained < 2 {
        return Err(Error::InsufficientSamples { found: out.retained, required: 2 });
    }
    if ladder.iter().any(|q| !(0.0..=1.0).contains(q)) {
        return Err(Error::Domain("quantile levels must lie in [0, 1]"));
    }
    let len = out.grid.window_len();
    let mut c = vec![0.0; ladder.len() * len];
    let mut column = vec![0.0; out.retained];
    for cell in 0..len {
        for (r, v) in column.iter_mut().enumerate() {
            *v = out.sample(r)[cell];
        }
        column.sort_by(f64::total_cmp);
        for (k, &q) in ladder.iter().enumerate() {
            c[k * len + cell] = sorted_quantile(&column, q);
        }
    }
    Ok(QuantileSummary { ladder: ladder.to_vec(), m: out.grid.m(), c })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn adapt_formula() {
        let cfg = ChainConfig::default();
        assert_eq!(adapt_h(0.3, 0.574, 7, &cfg), 0.3);
        assert!((adapt_h(1.0, 1.0, 1, &cfg) - 1.426).abs() < 1e-15);
        assert_eq!(adapt_h(0.1, 0.0, 1, &cfg), H_FLOOR);
    }

    #[test]
    fn retained_count() {
        let cfg = ChainConfig::default();
        assert_eq!(cfg.retained(), 1000);
        assert!(cfg.validate().is_ok());
        assert!(ChainConfig { burn_in: 100_000, ..cfg }.validate().is_err());
        assert!(ChainConfig { thin: 0, ..cfg }.validate().is_err());
    }

    #[test]
    fn sorted_quantile_interpolates() {
        let x = [1.0, 2.0, 3.0, 4.0, 5.0];
        assert_eq!(sorted_quantile(&x, 0.5), 3.0);
        assert_eq!(sorted_quantile(&x, 0.0), 1.0);
        assert_eq!(sorted_quantile(&x, 1.0), 5.0);
        assert!((sorted_quantile(&x, 0.1) - 1.4).abs() < 1e-15);
        assert_eq!(sorted_quantile(&[2.0; 4], 0.37), 2.0);
    }

    #[test]
    fn fourier_evaluation_matches_spatial() {
        use crate::covariance::{CovarianceModel, GaussianField};
        use crate::model::{build_lambda, simulate_with_field, Scenario};
        use rand::SeedableRng;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(4);
        let grid = GridSpec::new(8, 2).unwrap();
        let sc = Scenario {
            surface: build_lambda(&[(0.3, 0.4), (0.7, 0.2)], 0.2, &grid).unwrap(),
            mu: 300.0,
            cov: CovarianceModel::exponential(1.2, 0.15).unwrap(),
            seed: 4,
        };
        let field = GaussianField::new(sc.cov, &grid).unwrap();
        let (_, data) = simulate_with_field(&sc, &field, &mut rng).unwrap();
        let target = LgcpTarget::new(field, &data, &sc).unwrap();
        let gamma = WhiteNoiseState::draw(grid, &mut rng).gamma.into_vec();
        let mut ws = target.workspace();
        let spatial = ChainState::new(&target, gamma.clone(), &mut ws).unwrap();
        let mut engine = SpectralEngine::new(&target);
        let (fourier, _) = engine.state(&gamma);
        assert!((spatial.log_target - fourier.log_target).abs() < 1e-9 * spatial.log_target.abs());
        for (a, b) in spatial.y.iter().zip(&fourier.y) {
            assert!((a - b).abs() < 1e-12);
        }
        let mut grad = fourier.grad_hat.clone();
        engine.fft.inverse(&mut grad);
        for (a, b) in spatial.grad.iter().zip(&grad) {
            assert!((a - b.re).abs() < 1e-9 && b.im.abs() < 1e-9);
        }

        // Hastings ratios agree for the same pair of points
        let gamma2: Vec<f64> = gamma.iter().map(|g| 0.9 * g + 0.05).collect();
        let s2 = ChainState::new(&target, gamma2.clone(), &mut ws).unwrap();
        let (f2, _) = engine.state(&gamma2);
        let h = 0.3;
        let a = accept_prob(&spatial, &s2, h);
        let b = engine.accept_prob(&fourier, &f2, h);
        assert!((a - b).abs() < 1e-9, "{a} vs {b}");
    }

    #[test]
    fn hermitian_noise_is_the_dft_of_real_noise() {
        use crate::covariance::{CovarianceModel, GaussianField};
        use crate::model::{CellCounts, IntensitySurface, Scenario};
        use rand::SeedableRng;
        let grid = GridSpec::new(4, 2).unwrap();
        let sc = Scenario {
            surface: IntensitySurface::uniform(grid),
            mu: 1.0,
            cov: CovarianceModel::exponential(1.0, 0.1).unwrap(),
            seed: 0,
        };
        let field = GaussianField::new(sc.cov, &grid).unwrap();
        let target = LgcpTarget::new(field, &CellCounts::zeros(grid), &sc).unwrap();
        let engine = SpectralEngine::new(&target);
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(8);
        let zero = SpectralState {
            gamma_hat: vec![Complex64::new(0.0, 0.0); 64],
            grad_hat: vec![Complex64::new(0.0, 0.0); 64],
            y: vec![0.0; 64],
            log_target: 0.0,
        };
        let mut out = zero.clone();
        let reps = 20_000;
        let mut second = vec![0.0; 64];
        for _ in 0..reps {
            engine.propose(&zero, 1.0, &mut rng, &mut out);
            let mut z = out.gamma_hat.clone();
            engine.fft.inverse(&mut z);
            for (s, v) in second.iter_mut().zip(&z) {
                assert!(v.im.abs() < 1e-12);
                *s += v.re * v.re;
            }
        }
        // unit variance per cell, SE ≈ √(2/reps)
        for s in second {
            assert!((s / reps as f64 - 1.0).abs() < 5.0 * (2.0 / reps as f64).sqrt());
        }
    }

    #[test]
    fn zero_step_proposal_is_identity() {
        use rand::SeedableRng;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(1);
        let g = [0.3, -1.0, 2.0];
        let mut out = [0.0; 3];
        propose(&g, &[5.0, 5.0, 5.0], 0.0, &mut rng, &mut out);
        assert_eq!(out, g);
    }
}
