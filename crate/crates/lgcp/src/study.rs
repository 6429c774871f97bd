//! Simulation study: simulate each scenario, run the requested methods, score
//! them against the true field and write every artifact.
//!
//! `report.json` is a pure function of the configuration. Wall-clock times go
//! to `timings.json` so that reruns compare byte for byte.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::time::Instant;

use lgcp_core::covariance::{cov_base, FieldState, GaussianField};
use lgcp_core::gaussian_approx::{find_mode, gaussian_quantiles, GaussianApproxConfig};
use lgcp_core::gmrf::{fit, FitConfig};
use lgcp_core::mala::{quantiles, run_chain, ChainConfig, ChainOutput, QuantileSummary, Q_LADDER};
use lgcp_core::metrics::{field_mse, predictive_mse2, CalibrationPoint};
use lgcp_core::model::{simulate_scenario, CellCounts, LgcpTarget, Scenario};
use lgcp_core::Grid;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::io;
use crate::scenarios::{generate_scenarios, ScenarioDescriptor, ScenarioDesign};
use crate::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Method {
    #[serde(rename = "MALA")]
    Mala,
    #[serde(rename = "GAUSS_APPROX")]
    GaussApprox,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StudyConfig {
    pub master_seed: u64,
    pub design: ScenarioDesign,
    /// Empty means every combination of the design.
    pub scenarios: Vec<ScenarioDescriptor>,
    pub methods: Vec<Method>,
    /// GMRF neighbourhood orders for the Gaussian approximation.
    pub nbhd_orders: Vec<usize>,
    pub chain: ChainConfig,
    pub fit: FitConfig,
    pub gauss: GaussianApproxConfig,
    pub output_dir: PathBuf,
    /// Scenarios run concurrently; 0 uses every core.
    pub parallelism: usize,
    /// Write per-scenario fields, quantile cubes and traces.
    pub write_artifacts: bool,
}

impl Default for StudyConfig {
    fn default() -> Self {
        StudyConfig {
            master_seed: 0,
            design: ScenarioDesign::default(),
            scenarios: Vec::new(),
            methods: vec![Method::Mala, Method::GaussApprox],
            nbhd_orders: vec![1, 2],
            chain: ChainConfig::default(),
            fit: FitConfig::default(),
            gauss: GaussianApproxConfig::default(),
            output_dir: PathBuf::from("study_out"),
            parallelism: 0,
            write_artifacts: true,
        }
    }
}

impl StudyConfig {
    pub fn descriptors(&self) -> Vec<ScenarioDescriptor> {
        if self.scenarios.is_empty() {
            self.design.descriptors()
        } else {
            self.scenarios.clone()
        }
    }

    pub fn validate(&self) -> Result<(), Error> {
        let bad = |e: lgcp_core::Error| Error::Config(e.to_string());
        self.chain.validate().map_err(bad)?;
        self.fit.validate().map_err(bad)?;
        self.gauss.validate().map_err(bad)?;
        self.design.grid().map_err(|e| Error::Config(e.to_string()))?;
        if !(self.design.mu > 0.0) {
            return Err(Error::Config("design.mu must be positive".into()));
        }
        let d = self.descriptors();
        if d.is_empty() {
            return Err(Error::Config("no scenarios".into()));
        }
        let mut numbers: Vec<u32> = d.iter().map(|s| s.number).collect();
        numbers.sort_unstable();
        if numbers.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::Config("scenario numbers must be unique".into()));
        }
        if self.methods.contains(&Method::GaussApprox)
            && (self.nbhd_orders.is_empty() || self.nbhd_orders.iter().any(|&k| !(1..=3).contains(&k)))
        {
            return Err(Error::Config("nbhd_orders must be non-empty and within 1..=3".into()));
        }
        Ok(())
    }
}

/// Method-specific diagnostics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum MethodDetails {
    Mala {
        final_h: f64,
        /// Mean acceptance probability over the final 10% of iterations.
        tail_acceptance: f64,
        acceptance_rate: f64,
        mean_lag1_autocorrelation: f64,
        clamp_warnings: usize,
        nonfinite_rejections: usize,
    },
    GaussApprox {
        nbhd: usize,
        theta: Vec<f64>,
        u_final: f64,
        fit_converged: bool,
        used_simplex: bool,
        newton_iters: usize,
        newton_converged: bool,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodReport {
    pub method: String,
    pub field_mse: f64,
    pub mse2: f64,
    pub bias: f64,
    pub calibration: Vec<CalibrationPoint>,
    pub details: MethodDetails,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioReport {
    pub number: u32,
    pub sigma: f64,
    pub phi: f64,
    pub surface: u8,
    pub seed: u64,
    pub total_events: Option<u64>,
    pub methods: Vec<MethodReport>,
    pub error: Option<String>,
}

impl ScenarioReport {
    pub fn method(&self, label: &str) -> Option<&MethodReport> {
        self.methods.iter().find(|m| m.method == label)
    }
}

/// Coverage `ĥq_k` averaged over scenarios.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodCalibration {
    pub method: String,
    pub points: Vec<(f64, f64)>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub master_seed: u64,
    pub scenarios: Vec<ScenarioReport>,
    pub calibration: Vec<MethodCalibration>,
    pub failures: usize,
}

/// Seconds per method, keyed by scenario number.
pub type Timings = BTreeMap<u32, BTreeMap<String, f64>>;

pub const MALA_LABEL: &str = "MALA";

pub fn gauss_label(nbhd: usize) -> String {
    format!("GAUSS_APPROX_NBHD{nbhd}")
}

struct ScenarioRun {
    report: ScenarioReport,
    timings: BTreeMap<String, f64>,
}

/// Run the study and write its outputs under `cfg.output_dir`.
pub fn run_study(cfg: &StudyConfig) -> Result<(MetricsReport, Timings), Error> {
    cfg.validate()?;
    let out = &cfg.output_dir;
    std::fs::create_dir_all(out)
        .map_err(|e| Error::Config(format!("cannot create output directory {}: {e}", out.display())))?;
    let scenarios = generate_scenarios(&cfg.design, &cfg.descriptors(), cfg.master_seed)?;

    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.parallelism)
        .build()
        .map_err(|e| Error::Config(e.to_string()))?;
    let runs: Vec<ScenarioRun> = pool.install(|| {
        scenarios
            .par_iter()
            .map(|(d, sc)| {
                let started = Instant::now();
                let mut timings = BTreeMap::new();
                let report = match run_scenario(cfg, d, sc, &mut timings) {
                    Ok(r) => r,
                    Err(e) => {
                        log::error!("scenario {} failed: {e}", d.number);
                        ScenarioReport {
                            number: d.number,
                            sigma: d.sigma,
                            phi: d.phi,
                            surface: d.surface,
                            seed: sc.seed,
                            total_events: None,
                            methods: Vec::new(),
                            error: Some(e.to_string()),
                        }
                    }
                };
                timings.insert("total".into(), started.elapsed().as_secs_f64());
                log::info!("scenario {} done in {:.1} s", d.number, started.elapsed().as_secs_f64());
                ScenarioRun { report, timings }
            })
            .collect()
    });

    let mut reports: Vec<ScenarioReport> = Vec::with_capacity(runs.len());
    let mut timings = Timings::new();
    for run in runs {
        timings.insert(run.report.number, run.timings);
        reports.push(run.report);
    }
    reports.sort_by_key(|r| r.number);
    let failures = reports.iter().filter(|r| r.error.is_some()).count();
    let report = MetricsReport {
        master_seed: cfg.master_seed,
        calibration: mean_calibration(&reports),
        scenarios: reports,
        failures,
    };
    io::write_json(&out.join("report.json"), &report)?;
    io::write_json(&out.join("timings.json"), &timings)?;
    write_tables(out, &report)?;
    Ok((report, timings))
}

fn scenario_dir(cfg: &StudyConfig, number: u32) -> Result<Option<PathBuf>, Error> {
    if !cfg.write_artifacts {
        return Ok(None);
    }
    let dir = cfg.output_dir.join(format!("scenario_{number:02}"));
    std::fs::create_dir_all(&dir).map_err(|source| Error::Io { path: dir.clone(), source })?;
    Ok(Some(dir))
}

fn run_scenario(
    cfg: &StudyConfig,
    d: &ScenarioDescriptor,
    sc: &Scenario,
    timings: &mut BTreeMap<String, f64>,
) -> Result<ScenarioReport, Error> {
    let dir = scenario_dir(cfg, d.number)?;
    let mut rng = ChaCha8Rng::seed_from_u64(sc.seed);
    let field = GaussianField::new(sc.cov, sc.grid())?;
    let (truth, data) = lgcp_core::model::simulate_with_field(sc, &field, &mut rng)?;
    if let Some(dir) = &dir {
        io::write_scenario(&dir.join("scenario.json"), sc)?;
        write_field(dir, "truth", &truth.window_values())?;
        io::write_counts_csv(&dir.join("counts.csv"), &data)?;
        io::write_pgm(&dir.join("counts.pgm"), &data.to_grid())?;
    }

    let mut methods = Vec::new();
    let mut ordered = cfg.methods.clone();
    ordered.sort();
    ordered.dedup();
    for method in ordered {
        match method {
            Method::Mala => {
                let t = Instant::now();
                let mut chain_rng = ChaCha8Rng::seed_from_u64(sc.seed);
                chain_rng.set_stream(1);
                let target = LgcpTarget::new(field.clone(), &data, sc)?;
                let out = run_chain(&target, &cfg.chain, &mut chain_rng)?;
                let qs = quantiles(&out, &Q_LADDER)?;
                let mean = out.mean();
                timings.insert(MALA_LABEL.into(), t.elapsed().as_secs_f64());
                if let Some(dir) = &dir {
                    write_mala_artifacts(dir, &out, &qs, &mean)?;
                }
                methods.push(score(MALA_LABEL.into(), &truth, &mean, &qs, mala_details(&out))?);
            }
            Method::GaussApprox => {
                let target = cov_base(&sc.cov, sc.grid())?;
                for &k in &cfg.nbhd_orders {
                    let label = gauss_label(k);
                    let t = Instant::now();
                    let fitted = fit(&target, k, &cfg.fit)?;
                    let res = find_mode(&data, sc, &fitted.theta_opt, &cfg.gauss)?;
                    let qs = gaussian_quantiles(&res, &Q_LADDER)?;
                    timings.insert(label.clone(), t.elapsed().as_secs_f64());
                    let mode = res.window_mode();
                    if let Some(dir) = &dir {
                        let stem = label.to_lowercase();
                        write_field(dir, &format!("{stem}_mode"), &mode)?;
                        write_field(dir, &format!("{stem}_sd"), &res.marginal_sd)?;
                        io::write_quantile_csv(&dir.join(format!("{stem}_quantiles.csv")), &qs)?;
                    }
                    let details = MethodDetails::GaussApprox {
                        nbhd: k,
                        theta: fitted.theta_opt.theta().to_vec(),
                        u_final: fitted.u_final,
                        fit_converged: fitted.converged,
                        used_simplex: fitted.used_simplex,
                        newton_iters: res.newton_iters,
                        newton_converged: res.converged,
                    };
                    methods.push(score(label, &truth, &mode, &qs, details)?);
                }
            }
        }
    }
    Ok(ScenarioReport {
        number: d.number,
        sigma: d.sigma,
        phi: d.phi,
        surface: d.surface,
        seed: sc.seed,
        total_events: Some(data.total()),
        methods,
        error: None,
    })
}

fn score(
    method: String,
    truth: &FieldState,
    estimate: &Grid,
    qs: &QuantileSummary,
    details: MethodDetails,
) -> Result<MethodReport, Error> {
    let p = predictive_mse2(truth, qs)?;
    Ok(MethodReport {
        method,
        field_mse: field_mse(truth, estimate)?,
        mse2: p.mse2,
        bias: p.bias,
        calibration: p.calibration,
        details,
    })
}

fn mala_details(out: &ChainOutput) -> MethodDetails {
    let ac = out.lag1_autocorrelation();
    MethodDetails::Mala {
        final_h: out.final_h,
        tail_acceptance: out.tail_acceptance(0.1),
        acceptance_rate: out.accepted as f64 / out.accept_trace.len() as f64,
        mean_lag1_autocorrelation: ac.sum() / ac.len() as f64,
        clamp_warnings: out.clamp_warnings,
        nonfinite_rejections: out.nonfinite_rejections,
    }
}

fn write_field(dir: &Path, stem: &str, g: &Grid) -> Result<(), Error> {
    io::write_grid_csv(&dir.join(format!("{stem}.csv")), g)?;
    io::write_pgm(&dir.join(format!("{stem}.pgm")), g)
}

fn write_mala_artifacts(dir: &Path, out: &ChainOutput, qs: &QuantileSummary, mean: &Grid) -> Result<(), Error> {
    write_field(dir, "mala_mean", mean)?;
    io::write_quantile_csv(&dir.join("mala_quantiles.csv"), qs)?;
    io::write_traces_csv(&dir.join("mala_traces.csv"), out)?;
    write_field(dir, "mala_autocorrelation", &out.lag1_autocorrelation())
}

fn mean_calibration(reports: &[ScenarioReport]) -> Vec<MethodCalibration> {
    let mut sums: BTreeMap<String, Vec<(f64, f64, usize)>> = BTreeMap::new();
    for r in reports {
        for m in &r.methods {
            let entry =
                sums.entry(m.method.clone()).or_insert_with(|| m.calibration.iter().map(|p| (p.q, 0.0, 0)).collect());
            for (e, p) in entry.iter_mut().zip(&m.calibration) {
                e.1 += p.coverage;
                e.2 += 1;
            }
        }
    }
    sums.into_iter()
        .map(|(method, pts)| MethodCalibration {
            method,
            points: pts.into_iter().map(|(q, s, n)| (q, s / n as f64)).collect(),
        })
        .collect()
}

fn method_labels(report: &MetricsReport) -> Vec<String> {
    let mut labels: Vec<String> =
        report.scenarios.iter().flat_map(|s| s.methods.iter().map(|m| m.method.clone())).collect();
    labels.sort();
    labels.dedup();
    // MALA first, as the reference column
    labels.sort_by_key(|l| l != MALA_LABEL);
    labels
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map_or_else(String::new, |v| v.to_string())
}

/// `table2.csv` (field MSE and MALA's last step), `table3.csv` (MSE₂ and its
/// ratio to MALA) and one long-format calibration CSV per method.
pub fn write_tables(dir: &Path, report: &MetricsReport) -> Result<(), Error> {
    let labels = method_labels(report);
    let csv_err = |path: &Path| {
        let path = path.to_path_buf();
        move |source| Error::Csv { path, source }
    };

    let path = dir.join("table2.csv");
    let mut w = csv::Writer::from_path(&path).map_err(csv_err(&path))?;
    let mut header = vec!["scenario".to_string(), "sigma".into(), "phi".into(), "surface".into(), "mala_last_h".into()];
    header.extend(labels.iter().map(|l| format!("mse_{l}")));
    w.write_record(&header).map_err(csv_err(&path))?;
    for s in &report.scenarios {
        let last_h = s.method(MALA_LABEL).and_then(|m| match m.details {
            MethodDetails::Mala { final_h, .. } => Some(final_h),
            _ => None,
        });
        let mut row =
            vec![s.number.to_string(), s.sigma.to_string(), s.phi.to_string(), s.surface.to_string(), fmt_opt(last_h)];
        row.extend(labels.iter().map(|l| fmt_opt(s.method(l).map(|m| m.field_mse))));
        w.write_record(&row).map_err(csv_err(&path))?;
    }
    w.flush().map_err(|source| Error::Io { path: path.clone(), source })?;

    let path = dir.join("table3.csv");
    let mut w = csv::Writer::from_path(&path).map_err(csv_err(&path))?;
    let mut header = vec!["scenario".to_string()];
    header.extend(labels.iter().map(|l| format!("mse2_{l}")));
    header.extend(labels.iter().filter(|l| *l != MALA_LABEL).map(|l| format!("relative_{l}")));
    w.write_record(&header).map_err(csv_err(&path))?;
    for s in &report.scenarios {
        let mut row = vec![s.number.to_string()];
        row.extend(labels.iter().map(|l| fmt_opt(s.method(l).map(|m| m.mse2))));
        let base = s.method(MALA_LABEL).map(|m| m.mse2);
        row.extend(
            labels.iter().filter(|l| *l != MALA_LABEL).map(|l| fmt_opt(s.method(l).zip(base).map(|(m, b)| m.mse2 / b))),
        );
        w.write_record(&row).map_err(csv_err(&path))?;
    }
    w.flush().map_err(|source| Error::Io { path: path.clone(), source })?;

    for l in &labels {
        let path = dir.join(format!("calibration_{}.csv", l.to_lowercase()));
        let mut w = csv::Writer::from_path(&path).map_err(csv_err(&path))?;
        w.write_record(["scenario", "q", "coverage"]).map_err(csv_err(&path))?;
        for s in &report.scenarios {
            if let Some(m) = s.method(l) {
                for p in &m.calibration {
                    w.serialize((s.number, p.q, p.coverage)).map_err(csv_err(&path))?;
                }
            }
        }
        w.flush().map_err(|source| Error::Io { path: path.clone(), source })?;
    }
    Ok(())
}

/// Simulate one scenario's truth and counts exactly as the study does.
pub fn simulate(sc: &Scenario) -> Result<(FieldState, CellCounts), Error> {
    Ok(simulate_scenario(sc, &mut ChaCha8Rng::seed_from_u64(sc.seed))?)
}
