//! Cross-module integration: simulate a benchmark model, fit it, and check
//! the estimator's behaviour end to end.

use sphar_core::experiment::{builtin_model, run_mse_experiment, ExperimentConfig, ModelName};
use sphar_core::lasso::{fit, SolverConfig};
use sphar_core::simulate::{sample_autocovariance, simulate_field, SeedSpec};

#[test]
fn t1_field_matches_its_yule_walker_structure() {
    let model = builtin_model::<f64>(ModelName::T1, 6, 2.5).unwrap();
    let n = 4000;
    let sample = simulate_field(&model, n, 1000, &SeedSpec::new(404), 0).unwrap();

    // Multipole 2 is AR(1) with coefficient -0.7: lag-1 autocorrelation -0.7.
    let block = sample.series(2);
    let var = sample_autocovariance(block, 0);
    let lag1 = sample_autocovariance(block, 1);
    let autocorr = lag1 / var;
    assert!(
        (autocorr + 0.7).abs() < 0.05,
        "lag-1 autocorrelation {autocorr} far from -0.7"
    );
    let expected_var = model.noise(2) / (1.0 - 0.49);
    assert!((var - expected_var).abs() / expected_var < 0.1);

    // Multipole 3 is AR(2) with only the second lag active: lag-2
    // autocorrelation 0.5 / (1 - 0.5) scaled by the Yule-Walker identity
    // C(2) = phi_2 C(0), and lag-1 uncorrelated with lag-0 beyond noise.
    let block = sample.series(3);
    let var = sample_autocovariance(block, 0);
    let lag2 = sample_autocovariance(block, 2);
    assert!(
        (lag2 / var - 0.5).abs() < 0.05,
        "lag-2 ratio {} off",
        lag2 / var
    );

    // Remaining multipoles are white: lag-1 autocorrelation near zero.
    for ell in [0usize, 1, 4, 5] {
        let block = sample.series(ell);
        let ratio = sample_autocovariance(block, 1) / sample_autocovariance(block, 0);
        assert!(ratio.abs() < 0.05, "multipole {ell} not white: {ratio}");
    }
}

#[test]
fn t1_support_recovery_at_benchmark_penalty() {
    let model = builtin_model::<f64>(ModelName::T1, 50, 2.5).unwrap();
    let sample = simulate_field(&model, 302, 1000, &SeedSpec::new(777), 0).unwrap();
    let fitted = fit(&sample, 2, 0.1, &SolverConfig::default()).unwrap();

    let active_lead = fitted.phi_hat[[2, 0]];
    let active_second = fitted.phi_hat[[3, 1]];
    assert!(
        (active_lead + 0.7).abs() < 0.15,
        "phi_hat(2,1) = {active_lead} far from -0.7"
    );
    assert!(
        (active_second - 0.5).abs() < 0.15,
        "phi_hat(3,2) = {active_second} far from 0.5"
    );

    // The two true coordinates dominate everything else.
    let mut others: Vec<f64> = Vec::new();
    for l in 0..50 {
        for j in 0..2 {
            if (l, j) != (2, 0) && (l, j) != (3, 1) {
                others.push(fitted.phi_hat[[l, j]].abs());
            }
        }
    }
    let spurious_max = others.iter().cloned().fold(0.0_f64, f64::max);
    assert!(
        spurious_max < active_second.abs(),
        "a spurious coordinate ({spurious_max}) rivals the true support"
    );

    // High multipoles are thresholded away entirely.
    let zeros = fitted.phi_hat.iter().filter(|&&c| c == 0.0).count();
    assert!(
        zeros as f64 >= 0.6 * fitted.phi_hat.len() as f64,
        "only {zeros}/{} exact zeros",
        fitted.phi_hat.len()
    );
}

#[test]
fn t2_penalty_path_has_an_interior_optimum() {
    let mut config = ExperimentConfig::builtin(ModelName::T2, 300, 50);
    config.replications = 30;
    config.master_seed = 31415;
    let table = run_mse_experiment::<f64>(&config).unwrap();
    let values = &table.columns[0].values;
    assert!(values.iter().all(|&v| v >= 0.0));

    let m0 = table.value("T2", 0.0).unwrap();
    let m3 = table.value("T2", 1e-3).unwrap();
    let m6 = table.value("T2", 1.0).unwrap();
    assert!(
        m3 < m0,
        "moderate penalty should beat the baseline: {m3} vs {m0}"
    );
    assert!(m6 > m3, "heavy penalty should blow up on T2: {m6} vs {m3}");

    let best = values
        .iter()
        .enumerate()
        .min_by(|a, b| a.1.partial_cmp(b.1).unwrap())
        .unwrap()
        .0;
    assert!(
        best > 0 && best < values.len() - 1,
        "optimal penalty index {best} not interior"
    );
}
