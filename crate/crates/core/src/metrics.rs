//! Field and predictive accuracy scores.
//!
//! `Z_k(s) = 1[Y(s) ≤ c_k(s)]` records whether the true field falls below the
//! estimated `q_k` quantile; a calibrated method has `E[Z_k(s)] = q_k`.
//! `MSE₂ = (1/K) Σ_k (1/M_in) Σ_s (q_k − Z_k(s))²`.

use alloc::vec::Vec;

use crate::covariance::FieldState;
use crate::error::{Error, Result};
use crate::grid::Grid;
use crate::mala::QuantileSummary;

/// Mean squared error over window cells between the true field and an
/// `M × M` estimate.
pub fn field_mse(truth: &FieldState, estimate: &Grid) -> Result<f64> {
    let win = truth.window_values();
    estimate.check_side(win.side())?;
    Ok(win.iter().zip(estimate.iter()).map(|(a, b)| (a - b) * (a - b)).sum::<f64>() / win.len() as f64)
}

/// Indicator table `Z_k(s)`, ladder-major.
#[derive(Debug, Clone, PartialEq)]
pub struct IndicatorTable {
    pub ladder: Vec<f64>,
    pub cells: usize,
    pub z: Vec<bool>,
}

/// Per-level pieces of `MSE₂`.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct CalibrationPoint {
    pub q: f64,
    /// `ĥq_k`, the share of cells with `Z_k = 1`.
    pub coverage: f64,
    /// `(1/M_in) Σ_s (Z_k(s) − ĥq_k)²`.
    pub variance: f64,
}

impl CalibrationPoint {
    pub fn bias(&self) -> f64 {
        self.coverage - self.q
    }
}

impl IndicatorTable {
    pub fn new(ladder: Vec<f64>, cells: usize, z: Vec<bool>) -> Result<Self> {
        if z.len() != ladder.len() * cells {
            return Err(Error::ShapeMismatch { expected: ladder.len() * cells, found: z.len() });
        }
        if ladder.is_empty() || cells == 0 {
            return Err(Error::Domain("indicator table must be non-empty"));
        }
        Ok(IndicatorTable { ladder, cells, z })
    }

    /// Compare window truth against quantile thresholds.
    pub fn from_quantiles(truth: &Grid, qs: &QuantileSummary) -> Result<Self> {
        truth.check_side(qs.m)?;
        let cells = truth.len();
        let z = (0..qs.ladder.len())
            .flat_map(|k| {
                let level = &qs.c[k * cells..(k + 1) * cells];
                truth.iter().zip(level).map(|(y, c)| y <= c)
            })
            .collect();
        IndicatorTable::new(qs.ladder.clone(), cells, z)
    }

    fn row(&self, k: usize) -> &[bool] {
        &self.z[k * self.cells..(k + 1) * self.cells]
    }

    /// `MSE₂` summed directly from the indicators.
    pub fn mse2(&self) -> f64 {
        let total: f64 = self
            .ladder
            .iter()
            .enumerate()
            .map(|(k, &q)| self.row(k).iter().map(|&z| (q - z as u8 as f64).powi(2)).sum::<f64>() / self.cells as f64)
            .sum();
        total / self.ladder.len() as f64
    }

    pub fn calibration(&self) -> Vec<CalibrationPoint> {
        self.ladder
            .iter()
            .enumerate()
            .map(|(k, &q)| {
                let row = self.row(k);
                let n = self.cells as f64;
                let coverage = row.iter().filter(|&&z| z).count() as f64 / n;
                let variance = row.iter().map(|&z| (z as u8 as f64 - coverage).powi(2)).sum::<f64>() / n;
                CalibrationPoint { q, coverage, variance }
            })
            .collect()
    }

    /// `(1/K) Σ_k (ĥq_k − q_k)`.
    pub fn bias(&self) -> f64 {
        self.calibration().iter().map(CalibrationPoint::bias).sum::<f64>() / self.ladder.len() as f64
    }
}

/// Predictive scores of one method on one scenario.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct PredictiveScore {
    pub mse2: f64,
    pub bias: f64,
    pub calibration: Vec<CalibrationPoint>,
}

pub fn predictive_mse2(truth: &FieldState, qs: &QuantileSummary) -> Result<PredictiveScore> {
    let table = IndicatorTable::from_quantiles(&truth.window_values(), qs)?;
    Ok(PredictiveScore { mse2: table.mse2(), bias: table.bias(), calibration: table.calibration() })
}
