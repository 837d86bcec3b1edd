mod common;

use common::{logistic_newton, ols_normal, random_dataset, rows_of, slope_through_origin};
use sieve_ate::ate::{self, proposed_from_fits};
use sieve_ate::sieve::{fit, predict};
use sieve_ate::sim::{generate, Scenario, ScenarioSpec};
use sieve_ate::{Dataset, Family, FitOptions, KPolicy, Method};

fn fixed(k: usize) -> FitOptions {
    FitOptions::default().with_k(KPolicy::Fixed(k))
}

/// Propensities and the no-intercept index from the oracle logistic fit.
fn oracle_propensity(data: &Dataset) -> (Vec<f64>, Vec<f64>) {
    let rows = rows_of(data);
    let beta = logistic_newton(&rows, data.treatment());
    let index: Vec<f64> = rows
        .iter()
        .map(|r| r.iter().zip(&beta[1..]).map(|(a, b)| a * b).sum())
        .collect();
    let ps = index.iter().map(|v| 1.0 / (1.0 + (-(beta[0] + v)).exp())).collect();
    (ps, index)
}

#[test]
fn proposed_is_the_slope_through_the_origin() {
    for seed in 0..20u64 {
        let data = random_dataset(seed, 150, 3, 0.7);
        let k = 2 + (seed % 3) as usize;
        let opts = fixed(k);
        let tf = fit(&data, Family::Logistic, k, &opts).unwrap();
        let of = fit(&data, Family::Gaussian, k, &opts).unwrap();
        let est = proposed_from_fits(&data, &tf, &of).unwrap();
        let p = predict(&tf, data.covariates()).unwrap();
        let m = predict(&of, data.covariates()).unwrap();
        let e_d: Vec<f64> = data.treatment().iter().zip(&p).map(|(d, p)| d - p).collect();
        let e_y: Vec<f64> = data.outcome().iter().zip(&m).map(|(y, m)| y - m).collect();
        let oracle = slope_through_origin(&e_y, &e_d);
        assert!((est.alpha - oracle).abs() <= 1e-10, "seed {seed}: {} vs {oracle}", est.alpha);
    }
}

#[test]
fn competitors_match_normal_equations() {
    for seed in 100..110u64 {
        let data = random_dataset(seed, 300, 3, -0.4);
        let (ps, index) = oracle_propensity(&data);
        let d = data.treatment();
        let reg_rows: Vec<Vec<f64>> = (0..data.n()).map(|i| vec![1.0, d[i], ps[i]]).collect();
        let res_rows: Vec<Vec<f64>> = (0..data.n())
            .map(|i| vec![1.0, d[i] - ps[i], index[i], index[i].powi(2), index[i].powi(3)])
            .collect();
        let want_r = ols_normal(&reg_rows, data.outcome())[1];
        let want_l = ols_normal(&res_rows, data.outcome())[1];
        let got_r = ate::estimate_ps_regression(&data, &FitOptions::default()).unwrap().alpha;
        let got_l = ate::estimate_ps_residual(&data, &FitOptions::default()).unwrap().alpha;
        assert!((got_r - want_r).abs() <= 1e-8, "seed {seed}: {got_r} vs {want_r}");
        assert!((got_l - want_l).abs() <= 1e-8, "seed {seed}: {got_l} vs {want_l}");
    }
}

#[test]
fn outcome_shift_leaves_every_estimate_unchanged() {
    let data = random_dataset(7, 200, 3, 0.3);
    let shifted = data
        .with_outcome(data.outcome().iter().map(|y| y + 12.5).collect())
        .unwrap();
    for method in Method::ALL {
        let a = ate::estimate(method, &data, &fixed(4)).unwrap();
        let b = ate::estimate(method, &shifted, &fixed(4)).unwrap();
        assert!((a.alpha - b.alpha).abs() < 1e-6, "{method}: {} vs {}", a.alpha, b.alpha);
        assert!((a.std_error - b.std_error).abs() < 1e-6, "{method}");
    }
}

#[test]
fn relabelling_treatment_flips_the_sign() {
    let data = random_dataset(8, 200, 3, 0.3);
    let flipped = data
        .with_treatment(data.treatment().iter().map(|d| 1.0 - d).collect())
        .unwrap();
    for method in Method::ALL {
        let a = ate::estimate(method, &data, &fixed(3)).unwrap();
        let b = ate::estimate(method, &flipped, &fixed(3)).unwrap();
        assert!((a.alpha + b.alpha).abs() < 1e-5, "{method}: {} vs {}", a.alpha, b.alpha);
        assert!((a.std_error - b.std_error).abs() < 1e-5, "{method}");
    }
}

#[test]
fn stacking_shrinks_the_standard_error() {
    let data = generate(&ScenarioSpec::new(Scenario::I, 400, 0.5), 11).unwrap();
    let stacked = data.stack(&data).unwrap();
    let a = ate::estimate_proposed(&data, &fixed(3)).unwrap();
    let b = ate::estimate_proposed(&stacked, &fixed(3)).unwrap();
    assert!((a.alpha - b.alpha).abs() < 1e-6);
    let ratio = a.std_error / b.std_error;
    assert!((ratio / 2f64.sqrt() - 1.0).abs() < 0.05, "ratio {ratio}");
}

#[test]
fn randomized_treatment_is_unbiased_for_ps_regression() {
    // Treatment independent of X: every consistent estimator is centred on alpha.
    let mut r = common::rng(5);
    let n = 4000;
    let rows: Vec<Vec<f64>> = (0..n).map(|_| (0..3).map(|_| common::normal(&mut r)).collect()).collect();
    let d: Vec<f64> = (0..n).map(|i| (i % 2) as f64).collect();
    let y: Vec<f64> = rows
        .iter()
        .zip(&d)
        .map(|(x, di)| 1.5 * di + x[0] - 0.5 * x[2] + common::normal(&mut r))
        .collect();
    let data = Dataset::from_rows(y, d, &rows).unwrap();
    let est = ate::estimate_ps_regression(&data, &FitOptions::default()).unwrap();
    assert!((est.alpha - 1.5).abs() < 3.0 * est.std_error, "{} +- {}", est.alpha, est.std_error);
}

#[test]
fn large_sample_proposed_is_close_to_the_truth() {
    let data = generate(&ScenarioSpec::new(Scenario::I, 5000, 0.5), 3).unwrap();
    let est = ate::estimate_proposed(&data, &FitOptions::default()).unwrap();
    assert!((est.alpha - 0.5).abs() < 3.0 * est.std_error, "{} +- {}", est.alpha, est.std_error);
    assert!(est.ci_low < est.alpha && est.alpha < est.ci_high);
}

#[test]
fn population_linear_regression_on_scenario_one() {
    // Outcome is linear in (D, X); the full OLS fit recovers alpha and gamma.
    let data = generate(&ScenarioSpec::new(Scenario::I, 20_000, 0.5), 4).unwrap();
    let rows: Vec<Vec<f64>> = rows_of(&data)
        .into_iter()
        .zip(data.treatment())
        .map(|(x, &d)| vec![1.0, d, x[0], x[1], x[2]])
        .collect();
    let b = ols_normal(&rows, data.outcome());
    assert!((b[1] - 0.5).abs() < 0.05, "{b:?}");
    for (got, want) in b[2..].iter().zip(sieve_ate::sim::GAMMA) {
        assert!((got - want).abs() < 0.03, "{b:?}");
    }
}
