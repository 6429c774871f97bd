//! GMRF approximation accuracy sweep: fit each neighbourhood order to an
//! exponential covariance and compare simulated fields driven by shared noise.

use std::path::Path;
use std::time::Instant;

use lgcp_core::covariance::{cov_base, CovarianceModel};
use lgcp_core::gmrf::{approximation_mse, fit, FitConfig};
use lgcp_core::GridSpec;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::Error;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Table1Row {
    pub ext_side: usize,
    pub phi: f64,
    pub nbhd: usize,
    pub mse: f64,
    pub bias: f64,
    pub u_final: f64,
    pub converged: bool,
    pub theta: Vec<f64>,
    /// Fit time; not part of any comparison.
    pub fit_seconds: f64,
}

/// One cell of the sweep. Every call with the same arguments draws the same
/// noise.
pub fn table1_row(
    ext_side: usize,
    sigma: f64,
    phi: f64,
    nbhd: usize,
    draws: usize,
    seed: u64,
    cfg: &FitConfig,
) -> Result<Table1Row, Error> {
    if ext_side % 2 != 0 {
        return Err(Error::Config("extended grid side must be even".into()));
    }
    let grid = GridSpec::new(ext_side / 2, 2)?;
    let target = cov_base(&CovarianceModel::exponential(sigma, phi)?, &grid)?;
    let t = Instant::now();
    let fitted = fit(&target, nbhd, cfg)?;
    let fit_seconds = t.elapsed().as_secs_f64();
    let (mse, bias) = approximation_mse(&target, &fitted.theta_opt, draws, &mut ChaCha8Rng::seed_from_u64(seed))?;
    Ok(Table1Row {
        ext_side,
        phi,
        nbhd,
        mse,
        bias,
        u_final: fitted.u_final,
        converged: fitted.converged,
        theta: fitted.theta_opt.theta().to_vec(),
        fit_seconds,
    })
}

pub fn write_table1(path: &Path, rows: &[Table1Row]) -> Result<(), Error> {
    let err = |source| Error::Csv { path: path.to_path_buf(), source };
    let mut w = csv::Writer::from_path(path).map_err(err)?;
    w.write_record(["ext_side", "phi", "nbhd", "mse", "bias", "u_final", "converged", "fit_seconds", "theta"])
        .map_err(err)?;
    for r in rows {
        let theta: Vec<String> = r.theta.iter().map(f64::to_string).collect();
        w.write_record([
            r.ext_side.to_string(),
            r.phi.to_string(),
            r.nbhd.to_string(),
            r.mse.to_string(),
            r.bias.to_string(),
            r.u_final.to_string(),
            r.converged.to_string(),
            format!("{:.3}", r.fit_seconds),
            theta.join(" "),
        ])
        .map_err(err)?;
    }
    w.flush().map_err(|source| Error::Io { path: path.to_path_buf(), source })
}
