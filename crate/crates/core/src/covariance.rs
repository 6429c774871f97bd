//! Stationary isotropic covariance models, their embedding on the torus and
//! simulation of Gaussian fields by circulant embedding.

#[allow(unused_imports)] // inherent f64 methods shadow these when std is linked
use num_traits::Float;
use rand::Rng;
use rand_distr::StandardNormal;

use crate::circulant::{CirculantBase, SpectralFilter, Spectrum};
use crate::error::{Error, Result};
use crate::grid::{Grid, GridSpec, Window};

/// Smoothness of a Matérn correlation with a closed form.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub enum HalfInteger {
    /// ν = 1/2
    Half,
    /// ν = 3/2
    ThreeHalves,
    /// ν = 5/2
    FiveHalves,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum CovarianceKind {
    Exponential,
    Matern(HalfInteger),
}

/// `cov(d) = σ² r(d/φ)`.
///
/// Matérn correlations use `κ = 1/φ`, so `Matern(Half)` is the exponential.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct CovarianceModel {
    pub kind: CovarianceKind,
    pub sigma: f64,
    pub phi: f64,
}

impl CovarianceModel {
    pub fn exponential(sigma: f64, phi: f64) -> Result<Self> {
        Self::new(CovarianceKind::Exponential, sigma, phi)
    }

    pub fn new(kind: CovarianceKind, sigma: f64, phi: f64) -> Result<Self> {
        let model = CovarianceModel { kind, sigma, phi };
        model.validate()?;
        Ok(model)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.sigma > 0.0 && self.sigma.is_finite()) {
            return Err(Error::Domain("sigma must be positive"));
        }
        if !(self.phi > 0.0 && self.phi.is_finite()) {
            return Err(Error::Domain("phi must be positive"));
        }
        Ok(())
    }

    pub fn variance(&self) -> f64 {
        self.sigma * self.sigma
    }

    /// Field mean giving `E[exp Y] = 1`.
    pub fn mean(&self) -> f64 {
        -0.5 * self.variance()
    }

    pub fn correlation(&self, d: f64) -> f64 {
        let x = d / self.phi;
        match self.kind {
            CovarianceKind::Exponential | CovarianceKind::Matern(HalfInteger::Half) => (-x).exp(),
            CovarianceKind::Matern(HalfInteger::ThreeHalves) => (1.0 + x) * (-x).exp(),
            CovarianceKind::Matern(HalfInteger::FiveHalves) => (1.0 + x + x * x / 3.0) * (-x).exp(),
        }
    }

    pub fn cov(&self, d: f64) -> f64 {
        self.variance() * self.correlation(d)
    }
}

/// Covariance base on the torus, `base[i][j] = cov(toral distance to (i, j))`.
///
/// Fails with [`Error::NeedLargerExtension`] when the wrapped covariance is
/// not positive definite.
pub fn cov_base(model: &CovarianceModel, grid: &GridSpec) -> Result<CirculantBase> {
    let base = wrapped_base(model, grid);
    let min = base.spectrum()?.min_value();
    if !(min > 0.0) {
        return Err(Error::NeedLargerExtension { min_eigenvalue: min });
    }
    Ok(base)
}

fn wrapped_base(model: &CovarianceModel, grid: &GridSpec) -> CirculantBase {
    let n = grid.side();
    let (w, h) = (grid.cell_width(), grid.cell_height());
    let base = Grid::from_fn(n, |i, j| {
        let dx = i.min(n - i) as f64 * w;
        let dy = j.min(n - j) as f64 * h;
        model.cov((dx * dx + dy * dy).sqrt())
    });
    CirculantBase::new(*grid, base).expect("base built on the grid's own side")
}

/// Embed on a `2M` torus, retrying with `4M` if the wrapped covariance is
/// indefinite.
pub fn embed(model: &CovarianceModel, m: usize, window: Window) -> Result<CirculantBase> {
    match cov_base(model, &GridSpec::with_window(m, 2, window)?) {
        Err(Error::NeedLargerExtension { .. }) => cov_base(model, &GridSpec::with_window(m, 4, window)?),
        other => other,
    }
}

/// Log-intensity residual field on the extended lattice.
#[derive(Debug, Clone, PartialEq)]
pub struct FieldState {
    pub grid: GridSpec,
    pub y_ext: Grid,
    pub mean: f64,
}

impl FieldState {
    /// Field values over the window cells.
    pub fn window_values(&self) -> Grid {
        self.grid.restrict(&self.y_ext).expect("field lives on its grid")
    }
}

/// Whitened coordinates `Γ = Σ^{-1/2}(Y − mean)`.
#[derive(Debug, Clone, PartialEq)]
pub struct WhiteNoiseState {
    pub grid: GridSpec,
    pub gamma: Grid,
}

impl WhiteNoiseState {
    pub fn zeros(grid: GridSpec) -> Self {
        WhiteNoiseState { gamma: grid.zeros(), grid }
    }

    pub fn new(grid: GridSpec, gamma: Grid) -> Result<Self> {
        gamma.check_side(grid.side())?;
        Ok(WhiteNoiseState { grid, gamma })
    }

    /// I.i.d. standard Gaussian draw on every cell.
    pub fn draw<R: Rng + ?Sized>(grid: GridSpec, rng: &mut R) -> Self {
        let n = grid.side();
        let gamma = Grid::from_fn(n, |_, _| rng.sample(StandardNormal));
        WhiteNoiseState { grid, gamma }
    }
}

/// A covariance model embedded on a grid, with the spectral square root and
/// its inverse precomputed.
#[derive(Debug, Clone)]
pub struct GaussianField {
    model: CovarianceModel,
    base: CirculantBase,
    spectrum: Spectrum,
    sqrt: SpectralFilter,
    inv_sqrt: SpectralFilter,
}

impl GaussianField {
    pub fn new(model: CovarianceModel, grid: &GridSpec) -> Result<Self> {
        Self::from_base(model, cov_base(&model, grid)?)
    }

    /// Use an already embedded covariance base; the base must be positive
    /// definite.
    pub fn from_base(model: CovarianceModel, base: CirculantBase) -> Result<Self> {
        let spectrum = base.spectrum()?;
        let sqrt = spectrum.power_filter(0.5)?;
        let inv_sqrt = spectrum.power_filter(-0.5)?;
        Ok(GaussianField { model, base, spectrum, sqrt, inv_sqrt })
    }

    pub fn model(&self) -> &CovarianceModel {
        &self.model
    }

    pub fn base(&self) -> &CirculantBase {
        &self.base
    }

    pub fn spectrum(&self) -> &Spectrum {
        &self.spectrum
    }

    pub fn grid(&self) -> &GridSpec {
        self.base.grid()
    }

    pub fn sqrt_filter(&self) -> &SpectralFilter {
        &self.sqrt
    }

    pub fn mean(&self) -> f64 {
        self.model.mean()
    }

    /// `Y_ext = mean + Σ^{1/2} Γ`.
    pub fn sample(&self, gamma: &WhiteNoiseState) -> Result<FieldState> {
        check_grid(self.grid(), &gamma.grid)?;
        let mean = self.mean();
        let y_ext = self.sqrt.apply(&gamma.gamma)?.map(|x| x + mean);
        Ok(FieldState { grid: *self.grid(), y_ext, mean })
    }

    /// Inverse of [`GaussianField::sample`].
    pub fn whiten(&self, field: &FieldState) -> Result<WhiteNoiseState> {
        check_grid(self.grid(), &field.grid)?;
        let centred = field.y_ext.map(|y| y - field.mean);
        Ok(WhiteNoiseState { grid: field.grid, gamma: self.inv_sqrt.apply(&centred)? })
    }
}

fn check_grid(a: &GridSpec, b: &GridSpec) -> Result<()> {
    if a != b {
        return Err(Error::ShapeMismatch { expected: a.len(), found: b.len() });
    }
    Ok(())
}

/// `mean + Σ^{1/2} Γ` for an arbitrary SPD base.
pub fn sample_field(base: &CirculantBase, gamma: &WhiteNoiseState, mean: f64) -> Result<FieldState> {
    check_grid(base.grid(), &gamma.grid)?;
    let y_ext = base.sqrt_matvec(&gamma.gamma)?.map(|x| x + mean);
    Ok(FieldState { grid: *base.grid(), y_ext, mean })
}

/// `Σ^{-1/2}(Y − mean)` for an arbitrary SPD base.
pub fn whiten(base: &CirculantBase, field: &FieldState) -> Result<WhiteNoiseState> {
    check_grid(base.grid(), &field.grid)?;
    let centred = field.y_ext.map(|y| y - field.mean);
    Ok(WhiteNoiseState { grid: field.grid, gamma: base.inv_sqrt_matvec(&centred)? })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn base_values() {
        let g = GridSpec::new(4, 2).unwrap();
        let m = CovarianceModel::exponential(1.0, 0.1).unwrap();
        let b = cov_base(&m, &g).unwrap();
        assert!((b.at(0, 1) - (-2.5f64).exp()).abs() < 1e-15);
        assert_eq!(b.at(0, 1), b.at(0, 7));
        assert_eq!(b.asymmetry(), 0.0);

        let m2 = CovarianceModel::exponential(2.0, 0.1).unwrap();
        assert_eq!(cov_base(&m2, &g).unwrap().at(0, 0), 4.0);
    }

    #[test]
    fn vanishing_range_gives_identity() {
        let g = GridSpec::new(8, 2).unwrap();
        let m = CovarianceModel::exponential(1.0, 1e-9).unwrap();
        let b = cov_base(&m, &g).unwrap();
        assert_eq!(b.at(0, 0), 1.0);
        assert!(b.base().iter().skip(1).all(|&x| x == 0.0));
    }

    #[test]
    fn exponential_equals_matern_half() {
        let e = CovarianceModel::exponential(1.3, 0.07).unwrap();
        let m = CovarianceModel::new(CovarianceKind::Matern(HalfInteger::Half), 1.3, 0.07).unwrap();
        for k in 0..200 {
            let d = k as f64 * 0.01;
            assert!((e.cov(d) - m.cov(d)).abs() <= 1e-12);
        }
    }

    #[test]
    fn correlations_decrease_to_zero() {
        for kind in [
            CovarianceKind::Exponential,
            CovarianceKind::Matern(HalfInteger::ThreeHalves),
            CovarianceKind::Matern(HalfInteger::FiveHalves),
        ] {
            let m = CovarianceModel::new(kind, 0.8, 0.2).unwrap();
            assert!((m.cov(0.0) - 0.64).abs() < 1e-15);
            let mut prev = m.cov(0.0);
            for k in 1..400 {
                let c = m.cov(k as f64 * 0.01);
                assert!(c <= prev);
                prev = c;
            }
            assert!(m.cov(50.0) < 1e-20);
        }
    }

    #[test]
    fn long_range_needs_larger_torus() {
        // a smooth, long-range field is indefinite on the 2M torus
        let m = CovarianceModel::new(CovarianceKind::Matern(HalfInteger::FiveHalves), 1.0, 0.5).unwrap();
        let g = GridSpec::new(16, 2).unwrap();
        assert!(matches!(cov_base(&m, &g), Err(Error::NeedLargerExtension { .. })));
    }

    #[test]
    fn zero_noise_gives_mean_field() {
        let g = GridSpec::new(4, 2).unwrap();
        let f = GaussianField::new(CovarianceModel::exponential(0.7, 0.1).unwrap(), &g).unwrap();
        let y = f.sample(&WhiteNoiseState::zeros(g)).unwrap();
        assert!(y.y_ext.iter().all(|&v| (v + 0.245).abs() < 1e-15));
        let back = f.whiten(&y).unwrap();
        assert!(back.gamma.max_abs() < 1e-15);
    }

    #[test]
    fn identity_base_passes_noise_through() {
        let g = GridSpec::new(4, 2).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let w = WhiteNoiseState::draw(g, &mut rng);
        let y = sample_field(&CirculantBase::identity(g), &w, 0.0).unwrap();
        assert!(y.y_ext.relative_error(&w.gamma) < 1e-14);
    }

    #[test]
    fn sample_whiten_round_trip() {
        let g = GridSpec::new(8, 2).unwrap();
        let f = GaussianField::new(CovarianceModel::exponential(1.0, 0.1).unwrap(), &g).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let w = WhiteNoiseState::draw(g, &mut rng);
        let back = f.whiten(&f.sample(&w).unwrap()).unwrap();
        assert!(back.gamma.relative_error(&w.gamma) < 1e-8);
        let back2 = whiten(f.base(), &sample_field(f.base(), &w, f.mean()).unwrap()).unwrap();
        assert!(back2.gamma.relative_error(&w.gamma) < 1e-8);
    }
}
