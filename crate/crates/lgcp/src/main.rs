use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand, ValueEnum};
use lgcp::io;
use lgcp::study::{run_study, StudyConfig};
use lgcp::table1::{table1_row, write_table1};
use lgcp_core::covariance::{cov_base, CovarianceModel, FieldState, GaussianField};
use lgcp_core::gaussian_approx::{find_mode, gaussian_quantiles, GaussianApproxConfig};
use lgcp_core::gmrf::{approximation_mse, fit, FitConfig, Optimizer, WeightDistance};
use lgcp_core::mala::{quantiles, run_chain, ChainConfig, QuantileSummary, Q_LADDER};
use lgcp_core::metrics::{field_mse, predictive_mse2};
use lgcp_core::model::{build_lambda, simulate_with_field, uniform_points, LgcpTarget, Scenario};
use lgcp_core::{Grid, GridSpec};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde_json::json;

#[derive(Parser)]
#[command(name = "lgcp", version, about = "Inference for gridded log-Gaussian Cox processes")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum Distance {
    Physical,
    Cells,
}

#[derive(Clone, Copy, ValueEnum)]
enum Opt {
    Bfgs,
    Simplex,
}

#[derive(Subcommand)]
enum Command {
    /// Fit GMRF parameters to an exponential covariance.
    FitGmrf {
        #[arg(long, default_value_t = 1.0)]
        sigma: f64,
        #[arg(long)]
        phi: f64,
        /// Side of the extended (DFT) grid.
        #[arg(long, default_value_t = 128)]
        ext_side: usize,
        #[arg(long, default_value_t = 1)]
        nbhd: usize,
        #[arg(long, value_enum, default_value = "physical")]
        distance: Distance,
        #[arg(long, value_enum, default_value = "bfgs")]
        optimizer: Opt,
        /// Also estimate the approximation MSE from this many shared-noise draws.
        #[arg(long, default_value_t = 0)]
        draws: usize,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        /// Write the result as JSON here as well as to stdout.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Simulate a latent field and cell counts.
    Simulate {
        #[arg(long)]
        sigma: f64,
        #[arg(long)]
        phi: f64,
        #[arg(long, default_value_t = 2000.0)]
        mu: f64,
        #[arg(long, default_value_t = 64)]
        m: usize,
        #[arg(long, default_value_t = 2)]
        ext_factor: usize,
        /// Kernel standard deviation of the intensity surface.
        #[arg(long, default_value_t = 0.04)]
        bandwidth: f64,
        #[arg(long, default_value_t = 200)]
        points: usize,
        #[arg(long)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run adaptive MALA on a simulated scenario directory.
    Mala {
        /// Directory holding scenario.json and counts.csv.
        #[arg(long)]
        scenario: PathBuf,
        #[arg(long, default_value_t = 100_000)]
        iters: usize,
        #[arg(long, default_value_t = 10_000)]
        burn_in: usize,
        #[arg(long, default_value_t = 90)]
        thin: usize,
        #[arg(long, default_value_t = 1.0)]
        h_init: f64,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        /// Output directory; defaults to the scenario directory.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Gaussian approximation at the posterior mode under a fitted GMRF prior.
    GaussApprox {
        #[arg(long)]
        scenario: PathBuf,
        #[arg(long, default_value_t = 2)]
        nbhd: usize,
        #[arg(long, default_value_t = 1e-8)]
        newton_tol: f64,
        #[arg(long, default_value_t = 50)]
        max_newton: usize,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run the simulation study described by a JSON config.
    Study {
        /// StudyConfig JSON; omitted fields take their defaults.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        seed: u64,
        /// Overrides the config's output directory.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Scenarios run concurrently (0 = all cores).
        #[arg(long)]
        jobs: Option<usize>,
    },
    /// GMRF approximation accuracy over extended grid sizes, φ and orders.
    Table1 {
        #[arg(long, value_delimiter = ',', default_value = "128,256")]
        ext_sides: Vec<usize>,
        #[arg(long, value_delimiter = ',', default_value = "0.025,0.05,0.1,0.15,0.2")]
        phis: Vec<f64>,
        #[arg(long, value_delimiter = ',', default_value = "1,2,3")]
        nbhds: Vec<usize>,
        #[arg(long, default_value_t = 1.0)]
        sigma: f64,
        #[arg(long, default_value_t = 100)]
        draws: usize,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        #[arg(long, default_value = "table1.csv")]
        out: PathBuf,
    },
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    match run(cli.command) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            if e.downcast_ref::<lgcp::Error>().is_some_and(|e| matches!(e, lgcp::Error::Config(_))) {
                ExitCode::from(2)
            } else {
                ExitCode::FAILURE
            }
        }
    }
}

fn load_scenario(dir: &Path) -> Result<(Scenario, lgcp_core::model::CellCounts, Option<FieldState>)> {
    let sc = io::read_scenario(&dir.join("scenario.json"))?;
    let data = io::read_counts_csv(&dir.join("counts.csv"), *sc.grid())?;
    let truth_path = dir.join("truth.csv");
    let truth = if truth_path.exists() {
        let win = io::read_grid_csv(&truth_path)?;
        let grid = *sc.grid();
        Some(FieldState { grid, y_ext: grid.extend(&win)?, mean: sc.cov.mean() })
    } else {
        None
    };
    Ok((sc, data, truth))
}

fn print_scores(truth: Option<&FieldState>, estimate: &Grid, qs: &QuantileSummary) -> Result<()> {
    if let Some(t) = truth {
        let p = predictive_mse2(t, qs)?;
        let summary = json!({ "field_mse": field_mse(t, estimate)?, "mse2": p.mse2, "bias": p.bias });
        println!("{}", serde_json::to_string_pretty(&summary)?);
    }
    Ok(())
}

fn run(cmd: Command) -> Result<ExitCode> {
    match cmd {
        Command::FitGmrf { sigma, phi, ext_side, nbhd, distance, optimizer, draws, seed, out } => {
            if ext_side % 2 != 0 {
                bail!(lgcp::Error::Config("--ext-side must be even".into()));
            }
            let grid = GridSpec::new(ext_side / 2, 2)?;
            let target = cov_base(&CovarianceModel::exponential(sigma, phi)?, &grid)?;
            let cfg = FitConfig {
                distance: match distance {
                    Distance::Physical => WeightDistance::Physical,
                    Distance::Cells => WeightDistance::Cells,
                },
                optimizer: match optimizer {
                    Opt::Bfgs => Optimizer::QuasiNewton,
                    Opt::Simplex => Optimizer::Simplex,
                },
                ..FitConfig::default()
            };
            let res = fit(&target, nbhd, &cfg)?;
            let mut value = serde_json::to_value(&res)?;
            if draws > 0 {
                let (mse, bias) =
                    approximation_mse(&target, &res.theta_opt, draws, &mut ChaCha8Rng::seed_from_u64(seed))?;
                value["approximation_mse"] = json!(mse);
                value["approximation_bias"] = json!(bias);
            }
            println!("{}", serde_json::to_string_pretty(&value)?);
            if let Some(path) = out {
                io::write_json(&path, &value)?;
            }
        }
        Command::Simulate { sigma, phi, mu, m, ext_factor, bandwidth, points, seed, out } => {
            let grid = GridSpec::new(m, ext_factor)?;
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let pts = uniform_points(points, &grid.window(), &mut rng);
            let sc = Scenario {
                surface: build_lambda(&pts, bandwidth, &grid)?,
                mu,
                cov: CovarianceModel::exponential(sigma, phi)?,
                seed,
            };
            let field = GaussianField::new(sc.cov, &grid)?;
            let (truth, data) = simulate_with_field(&sc, &field, &mut rng)?;
            std::fs::create_dir_all(&out).with_context(|| format!("creating {}", out.display()))?;
            io::write_scenario(&out.join("scenario.json"), &sc)?;
            let win = truth.window_values();
            io::write_grid_csv(&out.join("truth.csv"), &win)?;
            io::write_pgm(&out.join("truth.pgm"), &win)?;
            io::write_counts_csv(&out.join("counts.csv"), &data)?;
            io::write_pgm(&out.join("counts.pgm"), &data.to_grid())?;
            println!("{} events written to {}", data.total(), out.display());
        }
        Command::Mala { scenario, iters, burn_in, thin, h_init, seed, out } => {
            let (sc, data, truth) = load_scenario(&scenario)?;
            let cfg = ChainConfig { n_iter: iters, burn_in, thin, h_init, ..ChainConfig::default() };
            let field = GaussianField::new(sc.cov, sc.grid())?;
            let target = LgcpTarget::new(field, &data, &sc)?;
            let chain = run_chain(&target, &cfg, &mut ChaCha8Rng::seed_from_u64(seed))?;
            let qs = quantiles(&chain, &Q_LADDER)?;
            let mean = chain.mean();
            let out = out.unwrap_or(scenario);
            std::fs::create_dir_all(&out)?;
            io::write_grid_csv(&out.join("mala_mean.csv"), &mean)?;
            io::write_pgm(&out.join("mala_mean.pgm"), &mean)?;
            io::write_quantile_csv(&out.join("mala_quantiles.csv"), &qs)?;
            io::write_traces_csv(&out.join("mala_traces.csv"), &chain)?;
            let ac = chain.lag1_autocorrelation();
            io::write_grid_csv(&out.join("mala_autocorrelation.csv"), &ac)?;
            io::write_pgm(&out.join("mala_autocorrelation.pgm"), &ac)?;
            println!(
                "final h {:.5}, tail acceptance {:.3}, {} samples retained",
                chain.final_h,
                chain.tail_acceptance(0.1),
                chain.retained
            );
            print_scores(truth.as_ref(), &mean, &qs)?;
        }
        Command::GaussApprox { scenario, nbhd, newton_tol, max_newton, out } => {
            let (sc, data, truth) = load_scenario(&scenario)?;
            let fitted = fit(&cov_base(&sc.cov, sc.grid())?, nbhd, &FitConfig::default())?;
            let cfg = GaussianApproxConfig { newton_tol, max_newton, ..GaussianApproxConfig::default() };
            let res = find_mode(&data, &sc, &fitted.theta_opt, &cfg)?;
            let qs = gaussian_quantiles(&res, &Q_LADDER)?;
            let out = out.unwrap_or(scenario);
            std::fs::create_dir_all(&out)?;
            let stem = format!("gauss_approx_nbhd{nbhd}");
            let mode = res.window_mode();
            io::write_grid_csv(&out.join(format!("{stem}_mode.csv")), &mode)?;
            io::write_pgm(&out.join(format!("{stem}_mode.pgm")), &mode)?;
            io::write_grid_csv(&out.join(format!("{stem}_sd.csv")), &res.marginal_sd)?;
            io::write_quantile_csv(&out.join(format!("{stem}_quantiles.csv")), &qs)?;
            println!(
                "theta {:?}, {} Newton iterations, converged {}",
                fitted.theta_opt.theta(),
                res.newton_iters,
                res.converged
            );
            print_scores(truth.as_ref(), &mode, &qs)?;
        }
        Command::Study { config, seed, out, jobs } => {
            let mut cfg: StudyConfig = match config {
                Some(path) => io::read_json(&path).map_err(|e| lgcp::Error::Config(e.to_string()))?,
                None => StudyConfig::default(),
            };
            cfg.master_seed = seed;
            if let Some(out) = out {
                cfg.output_dir = out;
            }
            if let Some(j) = jobs {
                cfg.parallelism = j;
            }
            let (report, _) = run_study(&cfg)?;
            println!(
                "{} scenarios, {} failed; report in {}",
                report.scenarios.len(),
                report.failures,
                cfg.output_dir.join("report.json").display()
            );
            if report.failures > 0 {
                return Ok(ExitCode::from(3));
            }
        }
        Command::Table1 { ext_sides, phis, nbhds, sigma, draws, seed, out } => {
            let mut rows = Vec::new();
            for &ext in &ext_sides {
                for &phi in &phis {
                    for &k in &nbhds {
                        let row = table1_row(ext, sigma, phi, k, draws, seed, &FitConfig::default())?;
                        println!(
                            "ext {ext:4} phi {phi:<6} nbhd {k}: mse {:.4} bias {:.2e} ({:.1} s)",
                            row.mse, row.bias, row.fit_seconds
                        );
                        rows.push(row);
                    }
                }
            }
            write_table1(&out, &rows)?;
        }
    }
    Ok(ExitCode::SUCCESS)
}
