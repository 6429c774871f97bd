//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! non-zero if any criterion fails. Bands and tolerances are fixed here,
//! seeds are fixed in advance, and nothing is retried.

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::{Path, PathBuf};
use std::process::{Command, ExitCode};
use std::time::Instant;

use lgcp::study::{run_study, MethodDetails, StudyConfig, MALA_LABEL};
use lgcp::table1::table1_row;
use lgcp_core::covariance::{cov_base, CovarianceModel, FieldState, GaussianField, WhiteNoiseState};
use lgcp_core::fft::Fft2;
use lgcp_core::gaussian_approx::{find_mode, GaussianApproxConfig};
use lgcp_core::gmrf::{classes, fit, gradient_u, objective_u, precision_base, FitConfig, NeighbourhoodTheta};
use lgcp_core::mala::{run_chain, ChainConfig, QuantileSummary, Q_LADDER};
use lgcp_core::metrics::{predictive_mse2, IndicatorTable};
use lgcp_core::model::{
    build_lambda, simulate_scenario, uniform_points, CellCounts, IntensitySurface, LgcpTarget, Scenario,
};
use lgcp_core::normal::inverse_cdf;
use lgcp_core::{CirculantBase, Grid, GridSpec, SpectralFilter};
use nalgebra::{DMatrix, DVector, SymmetricEigen};
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Check = (bool, String);

// ---------------------------------------------------------------- dense helpers

fn dense(b: &Grid) -> DMatrix<f64> {
    let n = b.side();
    DMatrix::from_fn(n * n, n * n, |r, c| b[((c / n + n - r / n) % n, (c % n + n - r % n) % n)])
}

fn dense_fn(a: &DMatrix<f64>, f: impl Fn(f64) -> f64) -> DMatrix<f64> {
    let eig = SymmetricEigen::new(a.clone());
    &eig.eigenvectors * DMatrix::from_diagonal(&eig.eigenvalues.map(f)) * eig.eigenvectors.transpose()
}

fn vec_of(g: &Grid) -> DVector<f64> {
    DVector::from_column_slice(g.as_slice())
}

fn rel(got: &DVector<f64>, want: &DVector<f64>) -> f64 {
    (got - want).amax() / want.amax().max(got.amax()).max(f64::MIN_POSITIVE)
}

fn exp_base(m: usize, phi: f64) -> CirculantBase {
    cov_base(&CovarianceModel::exponential(1.0, phi).unwrap(), &GridSpec::new(m, 2).unwrap()).unwrap()
}

fn random_grid(side: usize, rng: &mut ChaCha8Rng) -> Grid {
    Grid::from_fn(side, |_, _| rng.random::<f64>() * 2.0 - 1.0)
}

// ---------------------------------------------------------------- criteria

fn spectral_oracle() -> Check {
    let t = Instant::now();
    let mut worst: f64 = 0.0;
    let mut rng = ChaCha8Rng::seed_from_u64(1);

    // 4×4 torus: below the smallest window lattice, so drive the transform
    // and filter layer that the circulant operations delegate to directly
    let n = 4;
    let b = Grid::from_fn(n, |i, j| {
        let (dx, dy) = (i.min(n - i) as f64 * 0.5, j.min(n - j) as f64 * 0.5);
        (-(dx * dx + dy * dy).sqrt() / 0.4).exp()
    });
    let fft = Fft2::new(n).unwrap();
    let mut buf: Vec<Complex64> = b.iter().map(|&x| Complex64::new(x, 0.0)).collect();
    fft.forward(&mut buf);
    let lam = Grid::from_vec(n, buf.iter().map(|z| z.re).collect()).unwrap();
    let a = dense(&b);
    let mut want: Vec<f64> = SymmetricEigen::new(a.clone()).eigenvalues.iter().copied().collect();
    let mut got = lam.as_slice().to_vec();
    want.sort_by(f64::total_cmp);
    got.sort_by(f64::total_cmp);
    worst = worst.max(rel(&DVector::from_vec(got), &DVector::from_vec(want)));
    let v = random_grid(n, &mut rng);
    let ops: [(&dyn Fn(f64) -> f64, DMatrix<f64>); 4] = [
        (&|x| x, a.clone()),
        (&|x: f64| x.sqrt(), dense_fn(&a, f64::sqrt)),
        (&|x| 1.0 / x, a.clone().try_inverse().unwrap()),
        (&|x: f64| 1.0 / x.sqrt(), dense_fn(&a, |x| 1.0 / x.sqrt())),
    ];
    for (f, mat) in &ops {
        let out = SpectralFilter::new(&fft, lam.map(f)).apply(&v).unwrap();
        worst = worst.max(rel(&vec_of(&out), &(mat * vec_of(&v))));
    }

    // 8×8 torus through the public circulant API
    for phi in [0.05, 0.1, 0.3] {
        let base = exp_base(4, phi);
        let a = dense(base.base());
        let mut got: Vec<f64> = base.spectrum().unwrap().values().as_slice().to_vec();
        let mut want: Vec<f64> = SymmetricEigen::new(a.clone()).eigenvalues.iter().copied().collect();
        got.sort_by(f64::total_cmp);
        want.sort_by(f64::total_cmp);
        worst = worst.max(rel(&DVector::from_vec(got), &DVector::from_vec(want)));
        let v = random_grid(8, &mut rng);
        let dv = vec_of(&v);
        worst = worst.max(rel(&vec_of(&base.matvec(&v).unwrap()), &(&a * &dv)));
        worst = worst.max(rel(&vec_of(&base.sqrt_matvec(&v).unwrap()), &(dense_fn(&a, f64::sqrt) * &dv)));
        worst = worst.max(rel(&vec_of(&base.inv_matvec(&v).unwrap()), &(a.clone().try_inverse().unwrap() * &dv)));
        worst = worst.max(rel(&vec_of(&base.inv_sqrt_matvec(&v).unwrap()), &(dense_fn(&a, |x| 1.0 / x.sqrt()) * &dv)));
    }
    let secs = t.elapsed().as_secs_f64();
    (worst <= 1e-9 && secs < 1.0, format!("max relative error {worst:.2e} (limit 1e-9), {secs:.2} s (limit 1 s)"))
}

fn diagonally_dominant(nbhd: usize, rng: &mut ChaCha8Rng) -> NeighbourhoodTheta {
    let cls = classes(nbhd);
    let mut theta: Vec<f64> = (0..cls.len()).map(|_| 0.6 * (rng.random::<f64>() - 0.5)).collect();
    let off: f64 =
        cls.iter().zip(&theta).skip(1).map(|(&(a, b), t)| t.abs() * if a == b || b == 0 { 4.0 } else { 8.0 }).sum();
    theta[0] = off + 0.5 + rng.random::<f64>();
    NeighbourhoodTheta::new(nbhd, theta).unwrap()
}

fn gradient_oracle() -> Check {
    let t = Instant::now();
    let h = 1e-6;
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let cfg = FitConfig::default();

    let mut worst_u: f64 = 0.0;
    for k in 0..60 {
        let m = if k % 2 == 0 { 4 } else { 8 };
        let nbhd = 1 + k % 3;
        let target = exp_base(m, 0.02 + 0.13 * rng.random::<f64>());
        let theta = diagonally_dominant(nbhd, &mut rng);
        let g = gradient_u(&theta, &target, &cfg).unwrap();
        let mut err: f64 = 0.0;
        for c in 0..g.len() {
            let shifted = |d: f64| {
                let mut v = theta.theta().to_vec();
                v[c] += d;
                objective_u(&NeighbourhoodTheta::new(nbhd, v).unwrap(), &target, &cfg).unwrap()
            };
            err = err.max((g[c] - (shifted(h) - shifted(-h)) / (2.0 * h)).abs());
        }
        worst_u = worst_u.max(err / g.iter().fold(0.0f64, |a, v| a.max(v.abs())));
    }

    let mut worst_l: f64 = 0.0;
    for k in 0..60u64 {
        let m = if k % 2 == 0 { 4 } else { 8 };
        let grid = GridSpec::new(m, 2).unwrap();
        let pts = uniform_points(20, &grid.window(), &mut rng);
        let sc = Scenario {
            surface: build_lambda(&pts, 0.1, &grid).unwrap(),
            mu: 50.0 + 400.0 * rng.random::<f64>(),
            cov: CovarianceModel::exponential(0.5 + rng.random::<f64>(), 0.05 + 0.2 * rng.random::<f64>()).unwrap(),
            seed: k,
        };
        let (_, data) = simulate_scenario(&sc, &mut rng).unwrap();
        let target = LgcpTarget::new(GaussianField::new(sc.cov, &grid).unwrap(), &data, &sc).unwrap();
        let mut gamma = WhiteNoiseState::draw(grid, &mut rng);
        gamma.gamma = gamma.gamma.scale(0.5);
        let g = target.grad_log_target(&gamma).unwrap();
        let mut err: f64 = 0.0;
        for c in 0..g.len() {
            let shifted = |d: f64| {
                let mut s = gamma.clone();
                s.gamma.as_mut_slice()[c] += d;
                target.log_target(&s).unwrap()
            };
            err = err.max((g.as_slice()[c] - (shifted(h) - shifted(-h)) / (2.0 * h)).abs());
        }
        worst_l = worst_l.max(err / g.max_abs());
    }
    let secs = t.elapsed().as_secs_f64();
    (
        worst_u <= 1e-5 && worst_l <= 1e-5 && secs < 30.0,
        format!(
            "60 instances each; gradient_U max rel err {worst_u:.2e}, grad_log_target {worst_l:.2e} (limit 1e-5), {secs:.1} s"
        ),
    )
}

fn table1_band() -> Check {
    let cfg = FitConfig::default();
    let mut lines = Vec::new();
    let mut ok = true;
    let mut slowest: f64 = 0.0;
    for phi in [0.025, 0.05, 0.1] {
        let r1 = table1_row(128, 1.0, phi, 1, 100, 1, &cfg).unwrap();
        let r2 = table1_row(128, 1.0, phi, 2, 100, 1, &cfg).unwrap();
        slowest = slowest.max(r1.fit_seconds).max(r2.fit_seconds);
        ok &= r2.mse < r1.mse;
        if phi == 0.025 {
            let in1 = (0.043..=0.172).contains(&r1.mse);
            let in2 = (0.007..=0.028).contains(&r2.mse);
            ok &= in1 && in2;
            lines.push(format!(
                "phi 0.025: nbhd1 {:.4} {} [0.043, 0.172], nbhd2 {:.5} {} [0.007, 0.028]",
                r1.mse,
                if in1 { "in" } else { "OUTSIDE" },
                r2.mse,
                if in2 { "in" } else { "OUTSIDE" }
            ));
        } else {
            lines.push(format!("phi {phi}: nbhd1 {:.4} > nbhd2 {:.5}", r1.mse, r2.mse));
        }
    }
    ok &= slowest <= 10.0;
    lines.push(format!("slowest fit {slowest:.1} s"));
    (ok, lines.join("; "))
}

fn fig2_band() -> Check {
    let t = Instant::now();
    let cfg = FitConfig::default();
    let r1 = table1_row(512, 1.0, 0.05, 1, 50, 1, &cfg).unwrap();
    let r2 = table1_row(512, 1.0, 0.05, 2, 50, 1, &cfg).unwrap();
    let secs = t.elapsed().as_secs_f64();
    let ok1 = r1.mse >= 0.38 / 2.0 && r1.mse <= 0.38 * 2.0;
    let ok2 = r2.mse >= 0.007 / 3.0 && r2.mse <= 0.007 * 3.0;
    (
        ok1 && ok2 && secs <= 600.0,
        format!(
            "ext 512, phi 0.05: nbhd1 {:.4} (band [0.19, 0.76]), nbhd2 {:.5} (band [0.00233, 0.021]), {secs:.0} s",
            r1.mse, r2.mse
        ),
    )
}

fn prior_stationarity() -> Check {
    let t = Instant::now();
    let sigma = 1.0;
    let grid = GridSpec::new(16, 2).unwrap();
    let sc = Scenario {
        surface: IntensitySurface::uniform(grid),
        mu: 1e-12,
        cov: CovarianceModel::exponential(sigma, 0.1).unwrap(),
        seed: 1,
    };
    let target = LgcpTarget::new(GaussianField::new(sc.cov, &grid).unwrap(), &CellCounts::zeros(grid), &sc).unwrap();
    let out = run_chain(&target, &ChainConfig::default(), &mut ChaCha8Rng::seed_from_u64(1)).unwrap();
    let n = out.retained as f64;
    let m0 = -0.5 * sigma * sigma;
    let se_mean = sigma / n.sqrt();
    let se_var = sigma * sigma * (2.0 / (n - 1.0)).sqrt();
    let mean = out.mean();
    let (mut bad_mean, mut bad_var) = (0, 0);
    let (mut worst_zm, mut worst_zv): (f64, f64) = (0.0, 0.0);
    for (c, &mu) in mean.iter().enumerate() {
        let var = (0..out.retained).map(|r| (out.sample(r)[c] - mu).powi(2)).sum::<f64>() / (n - 1.0);
        let zm = (mu - m0).abs() / se_mean;
        let zv = (var - sigma * sigma).abs() / se_var;
        bad_mean += (zm > 3.0) as usize;
        bad_var += (zv > 3.0) as usize;
        worst_zm = worst_zm.max(zm);
        worst_zv = worst_zv.max(zv);
    }
    let mut worst_cal: f64 = 0.0;
    for &q in &Q_LADDER {
        let thr = m0 + sigma * inverse_cdf(q);
        let hits = out.samples.iter().filter(|&&x| x <= thr).count();
        worst_cal = worst_cal.max((hits as f64 / out.samples.len() as f64 - q).abs());
    }
    let secs = t.elapsed().as_secs_f64();
    (
        bad_mean == 0 && bad_var == 0 && worst_cal <= 0.03 && secs < 120.0,
        format!(
            "{} samples x 256 cells: cells beyond 3 SE mean {bad_mean}, variance {bad_var} (max |z| {worst_zm:.2}, {worst_zv:.2}); \
             calibration max error {worst_cal:.4} (limit 0.03); tail acceptance {:.3}; {secs:.1} s",
            out.retained,
            out.tail_acceptance(0.1)
        ),
    )
}

/// Dense Newton on the log full conditional and the dense inverse Hessian.
fn dense_mode(data: &CellCounts, sc: &Scenario, theta: &NeighbourhoodTheta) -> (DVector<f64>, DVector<f64>) {
    let grid = sc.grid();
    let q = dense(precision_base(theta, grid).unwrap().base());
    let n2 = grid.len();
    let m0 = sc.cov.mean();
    let x = vec_of(&data.extended());
    let r = vec_of(&sc.rate_ext());
    let hessian = |y: &DVector<f64>| {
        let mut h = q.clone();
        for s in 0..n2 {
            h[(s, s)] += r[s] * y[s].exp();
        }
        h
    };
    let mut y = DVector::from_element(n2, m0);
    for _ in 0..200 {
        let g = -(&q * y.add_scalar(-m0)) + DVector::from_fn(n2, |s, _| x[s] - r[s] * y[s].exp());
        let step = hessian(&y).cholesky().unwrap().solve(&g);
        y += &step;
        if step.amax() < 1e-15 {
            break;
        }
    }
    let var = hessian(&y).try_inverse().unwrap().diagonal();
    (y, var)
}

fn gaussian_oracle() -> Check {
    let mut worst_mode: f64 = 0.0;
    let mut worst_var: f64 = 0.0;
    let mut secs = 0.0;
    let mut all_converged = true;
    for (seed, sigma, nbhd) in [(1u64, 1.0, 1), (2, 0.5, 2), (3, 2.0, 1), (4, 1.0, 2)] {
        let grid = GridSpec::new(4, 2).unwrap();
        let pts = uniform_points(30, &grid.window(), &mut ChaCha8Rng::seed_from_u64(seed));
        let sc = Scenario {
            surface: build_lambda(&pts, 0.15, &grid).unwrap(),
            mu: 200.0,
            cov: CovarianceModel::exponential(sigma, 0.2).unwrap(),
            seed,
        };
        let (_, data) = simulate_scenario(&sc, &mut ChaCha8Rng::seed_from_u64(seed + 10)).unwrap();
        let theta = fit(&cov_base(&sc.cov, &grid).unwrap(), nbhd, &FitConfig::default()).unwrap().theta_opt;
        let t = Instant::now();
        let res = find_mode(&data, &sc, &theta, &GaussianApproxConfig::default()).unwrap();
        secs += t.elapsed().as_secs_f64();
        all_converged &= res.converged;
        let (y, var) = dense_mode(&data, &sc, &theta);
        worst_mode = worst_mode.max(rel(&vec_of(&res.mode), &y));
        for i in 0..4 {
            for j in 0..4 {
                let want = var[i * 8 + j];
                worst_var = worst_var.max((res.marginal_sd[(i, j)].powi(2) - want).abs() / want);
            }
        }
    }
    (
        all_converged && worst_mode <= 1e-8 && worst_var <= 1e-8 && secs < 5.0,
        format!("4 instances on 8x8: mode rel err {worst_mode:.2e}, variance rel err {worst_var:.2e} (limit 1e-8), {secs:.3} s"),
    )
}

fn mse2_identity() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let mut worst_split: f64 = 0.0;
    for _ in 0..500 {
        let cells = rng.random_range(1..400);
        let density = rng.random::<f64>();
        let z = (0..Q_LADDER.len() * cells).map(|_| rng.random::<f64>() < density).collect();
        let table = IndicatorTable::new(Q_LADDER.to_vec(), cells, z).unwrap();
        let split =
            table.calibration().iter().map(|p| p.variance + p.bias() * p.bias()).sum::<f64>() / Q_LADDER.len() as f64;
        worst_split = worst_split.max((table.mse2() - split).abs());
    }

    // truth drawn from the Gaussians whose exact quantiles are supplied
    let grid = GridSpec::new(64, 2).unwrap();
    let mut worst_cal: f64 = 0.0;
    for seed in 1..=3u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let centre = Grid::from_fn(64, |i, j| (i as f64 * 0.1).sin() + 0.02 * j as f64);
        let scale = Grid::from_fn(64, |i, j| 0.2 + 0.01 * ((i + 3 * j) % 50) as f64);
        let truth =
            Grid::from_fn(64, |i, j| centre[(i, j)] + scale[(i, j)] * inverse_cdf(rng.random_range(f64::EPSILON..1.0)));
        let c = Q_LADDER
            .iter()
            .flat_map(|&q| centre.iter().zip(scale.iter()).map(move |(m, s)| m + s * inverse_cdf(q)))
            .collect();
        let qs = QuantileSummary { ladder: Q_LADDER.to_vec(), m: 64, c };
        let state = FieldState { grid, y_ext: grid.extend(&truth).unwrap(), mean: 0.0 };
        for p in predictive_mse2(&state, &qs).unwrap().calibration {
            worst_cal = worst_cal.max((p.coverage - p.q).abs());
        }
    }
    (
        worst_split <= 1e-12 && worst_cal <= 0.02,
        format!(
            "500 random tables: max |MSE2 - mean(var + bias^2)| {worst_split:.1e} (limit 1e-12); \
             exact-quantile coverage max error {worst_cal:.4} (limit 0.02)"
        ),
    )
}

// ---------------------------------------------------------------- study-based

struct Study {
    report: lgcp::study::MetricsReport,
    timings: lgcp::study::Timings,
    out: PathBuf,
}

fn full_study(out: &Path) -> Study {
    let cfg = StudyConfig { master_seed: 1, output_dir: out.to_path_buf(), ..StudyConfig::default() };
    let (report, timings) = run_study(&cfg).unwrap();
    Study { report, timings, out: out.to_path_buf() }
}

fn mala(study: &Study, number: u32) -> (f64, f64, f64) {
    let s = study.report.scenarios.iter().find(|s| s.number == number).unwrap();
    if let Some(e) = &s.error {
        panic!("scenario {number} failed: {e}");
    }
    let m = s.method(MALA_LABEL).unwrap();
    match m.details {
        MethodDetails::Mala { final_h, tail_acceptance, .. } => (m.field_mse, final_h, tail_acceptance),
        _ => unreachable!(),
    }
}

fn adaptation(study: &Study) -> Check {
    let mut outside = Vec::new();
    let (mut lo, mut hi): (f64, f64) = (1.0, 0.0);
    let (mut h_small_sigma, mut h_large_sigma) = (Vec::new(), Vec::new());
    for s in &study.report.scenarios {
        let (_, h, acc) = mala(study, s.number);
        lo = lo.min(acc);
        hi = hi.max(acc);
        if !(0.524..=0.624).contains(&acc) {
            outside.push(s.number);
        }
        if s.sigma == 0.5 {
            h_small_sigma.push(h);
        } else if s.sigma == 2.0 {
            h_large_sigma.push(h);
        }
    }
    let max_large = h_large_sigma.iter().fold(0.0f64, |a, &b| a.max(b));
    let min_small = h_small_sigma.iter().fold(f64::INFINITY, |a, &b| a.min(b));
    let ordered = !h_large_sigma.is_empty() && !h_small_sigma.is_empty() && max_large < min_small;
    (
        outside.is_empty() && ordered && study.report.scenarios.len() == 18,
        format!(
            "{} scenarios, tail acceptance in [{lo:.3}, {hi:.3}] (band [0.524, 0.624]), outside: {outside:?}; \
             max final h at sigma 2 {max_large:.4} < min at sigma 0.5 {min_small:.4}: {ordered}",
            study.report.scenarios.len()
        ),
    )
}

fn field_mse_band(study: &Study) -> Check {
    let mut ok = true;
    let mut parts = Vec::new();
    for (number, reference) in [(1u32, 0.211), (7, 0.698), (13, 2.314)] {
        let (mse, _, _) = mala(study, number);
        let secs = study.timings[&number][MALA_LABEL];
        let inside = (mse - reference).abs() <= 0.3 * reference && secs <= 1800.0;
        ok &= inside;
        parts.push(format!(
            "scenario {number}: {mse:.3} vs {reference} ({:+.0}%, {secs:.0} s){}",
            100.0 * (mse / reference - 1.0),
            if inside { "" } else { " OUTSIDE" }
        ));
    }
    parts.push(format!("artifacts in {}", study.out.display()));
    (ok, parts.join("; "))
}

fn determinism(scratch: &Path) -> Check {
    let cfg = scratch.join("determinism.json");
    std::fs::write(
        &cfg,
        r#"{"scenarios": [{"number": 1, "sigma": 0.5, "phi": 0.02, "surface": 1},
                          {"number": 14, "sigma": 2.0, "phi": 0.02, "surface": 2}],
            "chain": {"n_iter": 5000, "burn_in": 1000, "thin": 10},
            "write_artifacts": false}"#,
    )
    .unwrap();
    let run = |dir: &str| {
        let out = scratch.join(dir);
        let status = Command::new(env!("CARGO_BIN_EXE_lgcp"))
            .args(["study", "--seed", "2024", "--config"])
            .arg(&cfg)
            .arg("--out")
            .arg(&out)
            .env("RUST_LOG", "warn")
            .status()
            .unwrap();
        assert!(status.success(), "study exited with {status}");
        std::fs::read(out.join("report.json")).unwrap()
    };
    let (a, b) = (run("run_a"), run("run_b"));
    (
        a == b,
        format!(
            "two `lgcp study --seed 2024` runs (M = 64, 2 scenarios, all methods): {} bytes, identical: {}",
            a.len(),
            a == b
        ),
    )
}

// ---------------------------------------------------------------- driver

fn main() -> ExitCode {
    let scratch = PathBuf::from(env!("CARGO_TARGET_TMPDIR")).join("acceptance");
    let _ = std::fs::remove_dir_all(&scratch);
    std::fs::create_dir_all(&scratch).unwrap();

    // optional criterion numbers on the command line select a subset
    let selected: Vec<u32> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let wanted = |n: u32| selected.is_empty() || selected.contains(&n);

    let mut failed = 0;
    let mut record = |n: u32, name: &str, f: &mut dyn FnMut() -> Check| {
        if !wanted(n) {
            println!("criterion {n:2} SKIP {name}: not selected");
            return;
        }
        let (pass, detail) = match catch_unwind(AssertUnwindSafe(f)) {
            Ok(c) => c,
            Err(e) => {
                let msg =
                    e.downcast_ref::<String>().cloned().or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()));
                (false, format!("panicked: {}", msg.unwrap_or_default()))
            }
        };
        failed += !pass as usize;
        println!("criterion {n:2} {} {name}: {detail}", if pass { "PASS" } else { "FAIL" });
    };

    record(1, "spectral algebra vs dense", &mut spectral_oracle);
    record(2, "gradients vs central differences", &mut gradient_oracle);
    record(3, "GMRF approximation MSE band, ext 128", &mut table1_band);
    record(4, "GMRF approximation MSE band, ext 512", &mut fig2_band);
    record(5, "MALA prior stationarity, M = 16", &mut prior_stationarity);
    let study = if wanted(6) || wanted(8) {
        catch_unwind(|| full_study(&scratch.join("study"))).map_err(|e| {
            e.downcast_ref::<String>()
                .cloned()
                .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default()
        })
    } else {
        Err("not run".into())
    };
    let study = &study;
    let from_study = |f: fn(&Study) -> Check| {
        move || match study {
            Ok(s) => f(s),
            Err(e) => (false, format!("study run failed: {e}")),
        }
    };
    record(6, "MALA adaptation on all scenarios", &mut from_study(adaptation));
    record(7, "Gaussian approximation vs dense Newton", &mut gaussian_oracle);
    record(8, "MALA field MSE, scenarios 1/7/13", &mut from_study(field_mse_band));
    record(9, "MSE2 decomposition and calibration oracle", &mut mse2_identity);
    record(10, "study report determinism", &mut || determinism(&scratch));

    println!("{failed} of 10 criteria failed");
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
