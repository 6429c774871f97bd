//! On-disk formats: cell grids and quantile cubes as CSV, chain traces,
//! PGM heatmaps and scenario JSON.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use lgcp_core::covariance::CovarianceModel;
use lgcp_core::mala::{ChainOutput, QuantileSummary};
use lgcp_core::model::{CellCounts, IntensitySurface, Scenario};
use lgcp_core::{Grid, GridSpec, Window};
use serde::{Deserialize, Serialize};

use crate::Error;

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> Error + '_ {
    move |source| Error::Io { path: path.to_path_buf(), source }
}

fn csv_err(path: &Path) -> impl FnOnce(csv::Error) -> Error + '_ {
    move |source| Error::Csv { path: path.to_path_buf(), source }
}

fn writer(path: &Path) -> Result<csv::Writer<File>, Error> {
    csv::Writer::from_path(path).map_err(csv_err(path))
}

/// `i,j,value` rows, row-major.
pub fn write_grid_csv(path: &Path, grid: &Grid) -> Result<(), Error> {
    let mut w = writer(path)?;
    w.write_record(["i", "j", "value"]).map_err(csv_err(path))?;
    let n = grid.side();
    for i in 0..n {
        for j in 0..n {
            w.serialize((i, j, grid[(i, j)])).map_err(csv_err(path))?;
        }
    }
    w.flush().map_err(io_err(path))
}

/// Read an `i,j,value` file; every cell of a square grid must appear once.
pub fn read_grid_csv(path: &Path) -> Result<Grid, Error> {
    let mut r = csv::Reader::from_path(path).map_err(csv_err(path))?;
    let mut rows = Vec::new();
    for rec in r.deserialize::<(usize, usize, f64)>() {
        rows.push(rec.map_err(csv_err(path))?);
    }
    let side = (rows.len() as f64).sqrt().round() as usize;
    if side * side != rows.len() {
        return Err(Error::Format {
            path: path.to_path_buf(),
            msg: format!("{} cells is not a square grid", rows.len()),
        });
    }
    let mut seen = vec![false; rows.len()];
    let mut grid = Grid::zeros(side);
    for (i, j, v) in rows {
        if i >= side || j >= side || seen[i * side + j] {
            return Err(Error::Format { path: path.to_path_buf(), msg: format!("bad or repeated cell ({i}, {j})") });
        }
        seen[i * side + j] = true;
        grid[(i, j)] = v;
    }
    Ok(grid)
}

pub fn write_counts_csv(path: &Path, counts: &CellCounts) -> Result<(), Error> {
    let mut w = writer(path)?;
    w.write_record(["i", "j", "value"]).map_err(csv_err(path))?;
    let m = counts.grid().m();
    for i in 0..m {
        for j in 0..m {
            w.serialize((i, j, counts.get(i, j))).map_err(csv_err(path))?;
        }
    }
    w.flush().map_err(io_err(path))
}

pub fn read_counts_csv(path: &Path, grid: GridSpec) -> Result<CellCounts, Error> {
    let g = read_grid_csv(path)?;
    if g.side() != grid.m() {
        return Err(Error::Format { path: path.to_path_buf(), msg: format!("expected {0}x{0} counts", grid.m()) });
    }
    let counts = g
        .iter()
        .map(|&v| if v >= 0.0 && v.fract() == 0.0 { Ok(v as u64) } else { Err(v) })
        .collect::<Result<Vec<_>, _>>()
        .map_err(|v| Error::Format {
            path: path.to_path_buf(),
            msg: format!("count {v} is not a non-negative integer"),
        })?;
    Ok(CellCounts::new(grid, counts)?)
}

/// `k,i,j,c` rows; `k` indexes the probability ladder.
pub fn write_quantile_csv(path: &Path, qs: &QuantileSummary) -> Result<(), Error> {
    let mut w = writer(path)?;
    w.write_record(["k", "i", "j", "c"]).map_err(csv_err(path))?;
    for k in 0..qs.ladder.len() {
        for i in 0..qs.m {
            for j in 0..qs.m {
                w.serialize((k, i, j, qs.get(k, i, j))).map_err(csv_err(path))?;
            }
        }
    }
    w.flush().map_err(io_err(path))
}

pub fn read_quantile_csv(path: &Path, ladder: &[f64], m: usize) -> Result<QuantileSummary, Error> {
    let mut r = csv::Reader::from_path(path).map_err(csv_err(path))?;
    let len = m * m;
    let mut c = vec![f64::NAN; ladder.len() * len];
    for rec in r.deserialize::<(usize, usize, usize, f64)>() {
        let (k, i, j, v) = rec.map_err(csv_err(path))?;
        if k >= ladder.len() || i >= m || j >= m {
            return Err(Error::Format { path: path.to_path_buf(), msg: format!("row ({k}, {i}, {j}) out of range") });
        }
        c[k * len + i * m + j] = v;
    }
    if c.iter().any(|v| v.is_nan()) {
        return Err(Error::Format { path: path.to_path_buf(), msg: "missing thresholds".into() });
    }
    Ok(QuantileSummary { ladder: ladder.to_vec(), m, c })
}

/// `iter,accept_prob,h` per iteration.
pub fn write_traces_csv(path: &Path, out: &ChainOutput) -> Result<(), Error> {
    let mut w = writer(path)?;
    w.write_record(["iter", "accept_prob", "h"]).map_err(csv_err(path))?;
    for (i, (a, h)) in out.accept_trace.iter().zip(&out.h_trace).enumerate() {
        w.serialize((i + 1, a, h)).map_err(csv_err(path))?;
    }
    w.flush().map_err(io_err(path))
}

/// ASCII greymap, linearly scaled from the grid minimum (0) to maximum (255).
pub fn write_pgm(path: &Path, grid: &Grid) -> Result<(), Error> {
    let file = File::create(path).map_err(io_err(path))?;
    let mut w = BufWriter::new(file);
    let (lo, hi) = (grid.min(), grid.max());
    let span = if hi > lo { hi - lo } else { 1.0 };
    let n = grid.side();
    let mut body = || -> std::io::Result<()> {
        writeln!(w, "P2\n{n} {n}\n255")?;
        for i in 0..n {
            let line: Vec<String> =
                grid.row(i).iter().map(|v| (((v - lo) / span) * 255.0).round().clamp(0.0, 255.0).to_string()).collect();
            writeln!(w, "{}", line.join(" "))?;
        }
        w.flush()
    };
    body().map_err(io_err(path))
}

/// JSON form of a [`Scenario`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioFile {
    pub m: usize,
    pub ext_factor: usize,
    #[serde(default)]
    pub window: Option<Window>,
    pub mu: f64,
    pub covariance: CovarianceModel,
    pub seed: u64,
    /// `M²` intensity values, row-major.
    pub lambda: Vec<f64>,
}

impl From<&Scenario> for ScenarioFile {
    fn from(sc: &Scenario) -> Self {
        let g = sc.grid();
        ScenarioFile {
            m: g.m(),
            ext_factor: g.ext_factor(),
            window: Some(g.window()),
            mu: sc.mu,
            covariance: sc.cov,
            seed: sc.seed,
            lambda: sc.surface.lambda().as_slice().to_vec(),
        }
    }
}

impl TryFrom<ScenarioFile> for Scenario {
    type Error = lgcp_core::Error;

    fn try_from(f: ScenarioFile) -> Result<Self, Self::Error> {
        let grid = match f.window {
            Some(w) => GridSpec::with_window(f.m, f.ext_factor, w)?,
            None => GridSpec::new(f.m, f.ext_factor)?,
        };
        let surface = IntensitySurface::new(grid, Grid::from_vec(f.m, f.lambda)?)?;
        let sc = Scenario { surface, mu: f.mu, cov: f.covariance, seed: f.seed };
        sc.validate()?;
        Ok(sc)
    }
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), Error> {
    let file = File::create(path).map_err(io_err(path))?;
    let mut w = BufWriter::new(file);
    serde_json::to_writer_pretty(&mut w, value).map_err(|source| Error::Json { path: path.to_path_buf(), source })?;
    writeln!(w).and_then(|_| w.flush()).map_err(io_err(path))
}

pub fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T, Error> {
    let file = File::open(path).map_err(io_err(path))?;
    serde_json::from_reader(std::io::BufReader::new(file))
        .map_err(|source| Error::Json { path: path.to_path_buf(), source })
}

pub fn write_scenario(path: &Path, sc: &Scenario) -> Result<(), Error> {
    write_json(path, &ScenarioFile::from(sc))
}

pub fn read_scenario(path: &Path) -> Result<Scenario, Error> {
    let f: ScenarioFile = read_json(path)?;
    Ok(Scenario::try_from(f)?)
}
