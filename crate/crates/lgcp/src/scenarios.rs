//! The simulation-study scenario grid.
//!
//! Two intensity surfaces come from one uniform point pattern smoothed with a
//! narrow and a wide Gaussian kernel. Scenarios cross them with exponential
//! covariances over a `σ × φ` grid and are numbered with `σ` outermost, then
//! `φ`, then the surface, so odd numbers use the narrow-kernel surface.

use lgcp_core::covariance::CovarianceModel;
use lgcp_core::model::{build_lambda, uniform_points, IntensitySurface, Scenario};
use lgcp_core::GridSpec;
use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::Error;

/// Lattice, intensity and surface-construction settings shared by all
/// scenarios of a study.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScenarioDesign {
    pub m: usize,
    pub ext_factor: usize,
    /// Expected number of events in the window.
    pub mu: f64,
    pub n_points: usize,
    /// Kernel standard deviations of surfaces 1 and 2.
    pub bandwidths: [f64; 2],
    pub sigmas: Vec<f64>,
    pub phis: Vec<f64>,
}

impl Default for ScenarioDesign {
    fn default() -> Self {
        ScenarioDesign {
            m: 64,
            ext_factor: 2,
            mu: 2000.0,
            n_points: 200,
            bandwidths: [0.04, 0.1],
            sigmas: vec![0.5, 1.0, 2.0],
            phis: vec![0.02, 0.04, 0.06],
        }
    }
}

impl ScenarioDesign {
    pub fn grid(&self) -> Result<GridSpec, Error> {
        Ok(GridSpec::new(self.m, self.ext_factor)?)
    }

    /// Every combination, numbered from 1.
    pub fn descriptors(&self) -> Vec<ScenarioDescriptor> {
        let mut out = Vec::new();
        for &sigma in &self.sigmas {
            for &phi in &self.phis {
                for surface in [1, 2] {
                    out.push(ScenarioDescriptor { number: out.len() as u32 + 1, sigma, phi, surface });
                }
            }
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioDescriptor {
    pub number: u32,
    pub sigma: f64,
    pub phi: f64,
    /// 1 for the narrow-kernel surface, 2 for the wide one.
    pub surface: u8,
}

/// Scenario seed derived from the master seed and the scenario number alone,
/// so a subset of scenarios reproduces the same realisations as the full set.
pub fn scenario_seed(master_seed: u64, number: u32) -> u64 {
    let mut rng = ChaCha8Rng::seed_from_u64(master_seed);
    rng.set_stream(number as u64 + 1);
    rng.next_u64()
}

/// The two intensity surfaces of a study.
pub fn surfaces(design: &ScenarioDesign, master_seed: u64) -> Result<[IntensitySurface; 2], Error> {
    let grid = design.grid()?;
    let mut rng = ChaCha8Rng::seed_from_u64(master_seed);
    let pts = uniform_points(design.n_points, &grid.window(), &mut rng);
    Ok([build_lambda(&pts, design.bandwidths[0], &grid)?, build_lambda(&pts, design.bandwidths[1], &grid)?])
}

pub fn generate_scenarios(
    design: &ScenarioDesign,
    descriptors: &[ScenarioDescriptor],
    master_seed: u64,
) -> Result<Vec<(ScenarioDescriptor, Scenario)>, Error> {
    let surfaces = surfaces(design, master_seed)?;
    descriptors
        .iter()
        .map(|d| {
            let surface = match d.surface {
                1 | 2 => surfaces[d.surface as usize - 1].clone(),
                s => return Err(Error::Config(format!("scenario {}: surface must be 1 or 2, got {s}", d.number))),
            };
            let sc = Scenario {
                surface,
                mu: design.mu,
                cov: CovarianceModel::exponential(d.sigma, d.phi)?,
                seed: scenario_seed(master_seed, d.number),
            };
            sc.validate()?;
            Ok((*d, sc))
        })
        .collect()
}
