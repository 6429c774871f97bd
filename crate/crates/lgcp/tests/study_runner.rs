//! Small studies end to end.

use lgcp::scenarios::{ScenarioDescriptor, ScenarioDesign};
use lgcp::study::{gauss_label, run_study, Method, MethodDetails, StudyConfig, MALA_LABEL};
use lgcp_core::mala::ChainConfig;

fn small(out: &std::path::Path) -> StudyConfig {
    StudyConfig {
        master_seed: 11,
        design: ScenarioDesign { m: 16, mu: 300.0, ..Default::default() },
        scenarios: vec![
            ScenarioDescriptor { number: 1, sigma: 0.5, phi: 0.1, surface: 1 },
            ScenarioDescriptor { number: 2, sigma: 1.0, phi: 0.1, surface: 2 },
        ],
        chain: ChainConfig { n_iter: 3_000, burn_in: 500, thin: 5, ..Default::default() },
        output_dir: out.to_path_buf(),
        parallelism: 1,
        ..Default::default()
    }
}

#[test]
fn reruns_give_identical_reports() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let (report, timings) = run_study(&small(a.path())).unwrap();
    run_study(&small(b.path())).unwrap();
    let ra = std::fs::read(a.path().join("report.json")).unwrap();
    let rb = std::fs::read(b.path().join("report.json")).unwrap();
    assert_eq!(ra, rb);
    assert_eq!(report.failures, 0);
    assert_eq!(timings.len(), 2);
    for s in &report.scenarios {
        assert_eq!(s.methods.len(), 3);
        let mala = s.method(MALA_LABEL).unwrap();
        assert!(matches!(mala.details, MethodDetails::Mala { .. }));
        for m in &s.methods {
            assert!(m.field_mse >= 0.0 && m.mse2 >= 0.0);
            assert!(m.calibration.iter().all(|p| (0.0..=1.0).contains(&p.coverage)));
        }
        assert!(s.method(&gauss_label(2)).is_some());
    }
    for f in [
        "table2.csv",
        "table3.csv",
        "timings.json",
        "calibration_mala.csv",
        "scenario_01/mala_quantiles.csv",
        "scenario_02/gauss_approx_nbhd1_quantiles.csv",
        "scenario_01/truth.pgm",
        "scenario_02/mala_traces.csv",
    ] {
        assert!(a.path().join(f).exists(), "{f} missing");
    }
}

#[test]
fn empty_method_list_reports_metadata_only() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = StudyConfig { methods: vec![], write_artifacts: false, ..small(dir.path()) };
    let (report, _) = run_study(&cfg).unwrap();
    assert_eq!(report.scenarios.len(), 2);
    assert!(report.scenarios.iter().all(|s| s.methods.is_empty() && s.total_events.is_some()));
}

#[test]
fn failing_scenario_is_recorded_not_fatal() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = small(dir.path());
    cfg.methods = vec![Method::GaussApprox];
    cfg.write_artifacts = false;
    // a range this long cannot be embedded on a torus twice the window
    cfg.scenarios[1].phi = 50.0;
    let (report, _) = run_study(&cfg).unwrap();
    assert_eq!(report.failures, 1);
    assert!(report.scenarios[1].error.is_some());
    assert!(report.scenarios[0].error.is_none());
}

#[test]
fn config_json_uses_defaults_for_missing_fields() {
    let cfg: StudyConfig = serde_json::from_str(r#"{"methods": ["MALA"], "nbhd_orders": [2]}"#).unwrap();
    assert_eq!(cfg.methods, vec![Method::Mala]);
    assert_eq!(cfg.descriptors().len(), 18);
    assert_eq!(cfg.chain, ChainConfig::default());
    assert!(serde_json::from_str::<StudyConfig>(r#"{"bogus": 1}"#).is_err());
    let bad = StudyConfig { nbhd_orders: vec![4], ..Default::default() };
    assert!(bad.validate().is_err());
}

#[test]
fn newton_reaches_tolerance_on_a_strong_signal() {
    // σ = 2 with a weakly dominant fitted precision: the last Newton gains
    // are below the rounding noise of the objective
    use lgcp::scenarios::generate_scenarios;
    use lgcp_core::covariance::cov_base;
    use lgcp_core::gaussian_approx::{find_mode, GaussianApproxConfig};
    use lgcp_core::gmrf::{fit, FitConfig};
    use lgcp_core::model::simulate_scenario;
    use rand::SeedableRng;

    let design = lgcp::scenarios::ScenarioDesign::default();
    let (_, sc) = generate_scenarios(&design, &[design.descriptors()[13]], 2024).unwrap().remove(0);
    let (_, data) = simulate_scenario(&sc, &mut rand_chacha::ChaCha8Rng::seed_from_u64(sc.seed)).unwrap();
    let theta = fit(&cov_base(&sc.cov, sc.grid()).unwrap(), 1, &FitConfig::default()).unwrap().theta_opt;
    let res = find_mode(&data, &sc, &theta, &GaussianApproxConfig::default()).unwrap();
    assert!(res.converged, "gradient {:e} after {} iterations", res.gradient_norm, res.newton_iters);
    assert!(res.newton_iters <= 15);
}
