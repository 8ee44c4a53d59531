mod common;

use vaxmap_core::coverage_models::ModelClass;
use vaxmap_core::inference::McmcConfig;
use vaxmap_core::validation::{loso_cv, metrics, prediction_errors, report_text, waic, write_report_csv};

use common::{brute_force_waic, clusters, lattice, spec, tiny_draws};

#[test]
fn waic_matches_brute_force() {
    for class in ModelClass::ALL {
        let (draws, data) = tiny_draws(class);
        let got = waic(&draws, &data).unwrap().waic;
        let want = brute_force_waic(&draws, &data);
        assert!((got - want).abs() < 1e-8, "{class}: {got} vs {want}");
    }
}

#[test]
fn metric_identities() {
    let data = clusters(4);
    let exact: Vec<f64> = data.iter().map(|c| c.fraction()).collect();
    let m = metrics(&prediction_errors(&exact, &data));
    assert_eq!((m.bias, m.mae, m.rmse), (0.0, 0.0, 0.0));

    let m = metrics(&[0.1, -0.3, 0.2]);
    assert_eq!(m.n, 3);
    assert_eq!(m.bias, (0.1 - 0.3 + 0.2) / 3.0);
    assert_eq!(m.mae, (0.1 + 0.3 + 0.2) / 3.0);
    assert_eq!(m.rmse, ((0.01 + 0.09 + 0.04) / 3.0f64).sqrt());
}

#[test]
fn loso_has_one_fold_per_state() {
    let data = clusters(30);
    let mcmc = McmcConfig {
        chains: 2,
        iterations: 200,
        burn_in: 100,
        thin: 1,
        seed: 3,
    };
    let report = loso_cv(&spec(ModelClass::BinomialNn), &data, &lattice(), &mcmc).unwrap();
    let states: Vec<&str> = report.folds.iter().map(|f| f.state.as_str()).collect();
    assert_eq!(states, ["S0", "S1", "S2"]);
    assert_eq!(report.pooled.n, 30);
    let p = report.pooled;
    assert!(p.rmse >= p.mae && p.mae >= p.bias.abs());
    let again = loso_cv(&spec(ModelClass::BinomialNn), &data, &lattice(), &mcmc).unwrap();
    assert_eq!(report, again);

    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("cv.csv");
    write_report_csv(&path, &report).unwrap();
    let text = std::fs::read_to_string(&path).unwrap();
    assert_eq!(text.lines().count(), 5);
    assert!(text.starts_with("fold,state,n,bias,mae,rmse,status\n"));
    assert!(report_text(&report).contains("3 folds, 30 clusters"));
}

#[test]
fn single_state_is_rejected() {
    let mut data = clusters(10);
    for c in &mut data {
        c.state_id = "S0".into();
    }
    assert!(loso_cv(&spec(ModelClass::BinomialNn), &data, &lattice(), &common::quick_mcmc(1)).is_err());
}
