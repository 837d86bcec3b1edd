//! Independent oracles and fixtures shared by the integration tests.
#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use sieve_ate::Dataset;

/// Probabilists' Hermite polynomial `He_m` from its explicit coefficients.
pub fn he_closed(m: usize, w: f64) -> f64 {
    let w2 = w * w;
    match m {
        0 => 1.0,
        1 => w,
        2 => w2 - 1.0,
        3 => w * (w2 - 3.0),
        4 => w2 * w2 - 6.0 * w2 + 3.0,
        5 => w * (w2 * w2 - 10.0 * w2 + 15.0),
        6 => w2 * w2 * w2 - 15.0 * w2 * w2 + 45.0 * w2 - 15.0,
        _ => panic!("closed form only up to degree 6"),
    }
}

/// `He_m(w) / sqrt(sqrt(2 pi) m!)`.
pub fn hermite_closed(m: usize, w: f64) -> f64 {
    let fact: f64 = (1..=m).map(|i| i as f64).product();
    he_closed(m, w) / ((2.0 * std::f64::consts::PI).sqrt() * fact).sqrt()
}

/// Solves `a x = b` by Gaussian elimination with partial pivoting.
pub fn gauss_solve(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Vec<f64> {
    let n = b.len();
    for col in 0..n {
        let piv = (col..n)
            .max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs()))
            .unwrap();
        a.swap(col, piv);
        b.swap(col, piv);
        for row in col + 1..n {
            let f = a[row][col] / a[col][col];
            for k in col..n {
                a[row][k] -= f * a[col][k];
            }
            b[row] -= f * b[col];
        }
    }
    let mut x = vec![0.0; n];
    for row in (0..n).rev() {
        let s: f64 = (row + 1..n).map(|k| a[row][k] * x[k]).sum();
        x[row] = (b[row] - s) / a[row][row];
    }
    x
}

/// OLS coefficients from the normal equations `X'X b = X'y`.
pub fn ols_normal(rows: &[Vec<f64>], y: &[f64]) -> Vec<f64> {
    let q = rows[0].len();
    let mut xtx = vec![vec![0.0; q]; q];
    let mut xty = vec![0.0; q];
    for (r, &yi) in rows.iter().zip(y) {
        for a in 0..q {
            xty[a] += r[a] * yi;
            for b in 0..q {
                xtx[a][b] += r[a] * r[b];
            }
        }
    }
    gauss_solve(xtx, xty)
}

/// Logistic regression with intercept by plain Newton-Raphson.
pub fn logistic_newton(x: &[Vec<f64>], d: &[f64]) -> Vec<f64> {
    let q = x[0].len() + 1;
    let mut beta = vec![0.0; q];
    for _ in 0..60 {
        let mut g = vec![0.0; q];
        let mut h = vec![vec![0.0; q]; q];
        for (xi, &di) in x.iter().zip(d) {
            let mut row = vec![1.0];
            row.extend_from_slice(xi);
            let eta: f64 = row.iter().zip(&beta).map(|(a, b)| a * b).sum();
            let mu = 1.0 / (1.0 + (-eta).exp());
            for a in 0..q {
                g[a] += (di - mu) * row[a];
                for b in 0..q {
                    h[a][b] += mu * (1.0 - mu) * row[a] * row[b];
                }
            }
        }
        let step = gauss_solve(h, g);
        for (b, s) in beta.iter_mut().zip(&step) {
            *b += s;
        }
        if step.iter().map(|s| s.abs()).fold(0.0, f64::max) < 1e-14 {
            break;
        }
    }
    beta
}

/// No-intercept least-squares slope of `y` on `x`.
pub fn slope_through_origin(y: &[f64], x: &[f64]) -> f64 {
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| a * b).sum();
    let sxx: f64 = x.iter().map(|a| a * a).sum();
    sxy / sxx
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn normal(rng: &mut ChaCha8Rng) -> f64 {
    rng.sample(StandardNormal)
}

/// Random data with a logistic treatment in `x' beta` and outcome
/// `alpha D + sin(x' gamma) + noise`.
pub fn random_dataset(seed: u64, n: usize, p: usize, alpha: f64) -> Dataset {
    let mut r = rng(seed);
    let beta: Vec<f64> = (0..p).map(|_| 0.7 * normal(&mut r)).collect();
    let gamma: Vec<f64> = (0..p).map(|_| normal(&mut r)).collect();
    let mut rows = Vec::with_capacity(n);
    let mut d = Vec::with_capacity(n);
    let mut y = Vec::with_capacity(n);
    while rows.len() < n {
        let x: Vec<f64> = (0..p).map(|_| normal(&mut r)).collect();
        let xb: f64 = x.iter().zip(&beta).map(|(a, b)| a * b).sum();
        let xg: f64 = x.iter().zip(&gamma).map(|(a, b)| a * b).sum();
        let di = if r.random::<f64>() < 1.0 / (1.0 + (-xb).exp()) { 1.0 } else { 0.0 };
        y.push(alpha * di + xg.sin() + 0.5 * normal(&mut r));
        d.push(di);
        rows.push(x);
    }
    Dataset::from_rows(y, d, &rows).expect("fixture has both arms")
}

/// Covariate rows of a dataset.
pub fn rows_of(data: &Dataset) -> Vec<Vec<f64>> {
    let x = data.covariates();
    (0..x.nrows()).map(|i| x.row(i).iter().copied().collect()).collect()
}
