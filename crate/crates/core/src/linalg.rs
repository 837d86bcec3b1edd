//! Dense least-squares and logistic-regression helpers.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Relative singular-value cutoff used for rank decisions.
fn rank_tolerance(a: &DMatrix<f64>, largest: f64) -> f64 {
    f64::EPSILON * a.nrows().max(a.ncols()) as f64 * largest
}

/// Minimum-norm least-squares solution of `a x ~ b` through a thin SVD.
///
/// Returns [`Error::RankDeficient`] when `a` does not have full column rank.
pub fn lstsq(a: &DMatrix<f64>, b: &DVector<f64>, context: &str) -> Result<DVector<f64>> {
    if a.nrows() != b.len() {
        return Err(Error::DimensionMismatch {
            what: "least-squares right-hand side",
            expected: a.nrows(),
            got: b.len(),
        });
    }
    if a.nrows() < a.ncols() {
        return Err(Error::RankDeficient(format!(
            "{context}: {} rows cannot determine {} coefficients",
            a.nrows(),
            a.ncols()
        )));
    }
    let svd = a.clone().svd(true, true);
    let largest = svd.singular_values.max();
    let smallest = svd.singular_values.min();
    let tol = rank_tolerance(a, largest);
    if !(largest > 0.0) || smallest <= tol {
        return Err(Error::RankDeficient(format!(
            "{context}: singular values range from {largest:e} down to {smallest:e}"
        )));
    }
    svd.solve(b, tol)
        .map_err(|e| Error::RankDeficient(format!("{context}: {e}")))
}

/// Ratio of the largest to smallest singular value.
pub fn condition_number(a: &DMatrix<f64>) -> f64 {
    let sv = a.singular_values();
    let smallest = sv.min();
    if smallest <= 0.0 {
        f64::INFINITY
    } else {
        sv.max() / smallest
    }
}

/// Ordinary least squares with conventional (homoskedastic) standard errors.
#[derive(Debug, Clone)]
pub struct OlsFit {
    pub coefficients: Vec<f64>,
    pub std_errors: Vec<f64>,
    pub residual_variance: f64,
    pub residuals: Vec<f64>,
}

/// OLS of `y` on the columns of `design` (no implicit intercept) via
/// Householder QR. A column whose pivot collapses is reported by name.
pub fn ols(design: &DMatrix<f64>, y: &[f64], names: &[&str]) -> Result<OlsFit> {
    let (n, q) = design.shape();
    if y.len() != n {
        return Err(Error::DimensionMismatch {
            what: "OLS response",
            expected: n,
            got: y.len(),
        });
    }
    if names.len() != q {
        return Err(Error::DimensionMismatch {
            what: "OLS column names",
            expected: q,
            got: names.len(),
        });
    }
    if n <= q {
        return Err(Error::RankDeficient(format!(
            "{n} observations cannot support {q} regressors"
        )));
    }
    // Pivot checks are done against the column scale so that a column that is
    // a combination of earlier ones is named rather than a later bystander.
    let qr = design.clone().qr();
    let r = qr.r();
    for j in 0..q {
        let scale = design.column(j).norm();
        if scale == 0.0 || r[(j, j)].abs() <= 1e-10 * scale {
            return Err(Error::RankDeficient(format!(
                "column `{}` is a linear combination of the preceding columns",
                names[j]
            )));
        }
    }
    let yv = DVector::from_column_slice(y);
    let mut qty = yv.clone();
    qr.q_tr_mul(&mut qty);
    let rhs = qty.rows(0, q).into_owned();
    let coef = r
        .solve_upper_triangular(&rhs)
        .ok_or_else(|| Error::RankDeficient("triangular solve failed".into()))?;

    let fitted = design * &coef;
    let residuals: Vec<f64> = y.iter().zip(fitted.iter()).map(|(a, b)| a - b).collect();
    let rss: f64 = residuals.iter().map(|e| e * e).sum();
    let residual_variance = rss / (n - q) as f64;
    let r_inv = r
        .solve_upper_triangular(&DMatrix::identity(q, q))
        .ok_or_else(|| Error::RankDeficient("triangular inverse failed".into()))?;
    let cov_diag = (0..q).map(|j| r_inv.row(j).norm_squared());
    let std_errors = cov_diag.map(|v| (v * residual_variance).sqrt()).collect();
    Ok(OlsFit {
        coefficients: coef.iter().copied().collect(),
        std_errors,
        residual_variance,
        residuals,
    })
}

pub fn expit(eta: f64) -> f64 {
    if eta >= 0.0 {
        1.0 / (1.0 + (-eta).exp())
    } else {
        let e = eta.exp();
        e / (1.0 + e)
    }
}

/// `log(1 + exp(eta))` without overflow.
pub fn log1p_exp(eta: f64) -> f64 {
    if eta > 0.0 {
        eta + (-eta).exp().ln_1p()
    } else {
        eta.exp().ln_1p()
    }
}

/// Logistic regression with an intercept.
#[derive(Debug, Clone)]
pub struct LogisticFit {
    pub intercept: f64,
    pub slopes: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
}

impl LogisticFit {
    pub fn linear_predictor(&self, x: &DMatrix<f64>) -> Vec<f64> {
        x.row_iter()
            .map(|row| {
                self.intercept + row.iter().zip(&self.slopes).map(|(a, b)| a * b).sum::<f64>()
            })
            .collect()
    }

    /// `X beta` without the intercept.
    pub fn index(&self, x: &DMatrix<f64>) -> Vec<f64> {
        x.row_iter()
            .map(|row| row.iter().zip(&self.slopes).map(|(a, b)| a * b).sum::<f64>())
            .collect()
    }
}

/// Maximum-likelihood logistic regression of the 0/1 vector `d` on `[1, x]`
/// by Newton-Raphson with step halving. The linear predictor is clamped to
/// `[-clamp, clamp]`, which keeps coefficients finite under separation.
pub fn logistic_regression(x: &DMatrix<f64>, d: &[f64], clamp: f64) -> Result<LogisticFit> {
    let (n, p) = x.shape();
    if d.len() != n {
        return Err(Error::DimensionMismatch {
            what: "logistic response",
            expected: n,
            got: d.len(),
        });
    }
    let q = p + 1;
    let design = DMatrix::from_fn(n, q, |i, j| if j == 0 { 1.0 } else { x[(i, j - 1)] });
    let nll = |beta: &DVector<f64>| -> f64 {
        let eta = &design * beta;
        eta.iter()
            .zip(d)
            .map(|(&e, &di)| {
                let e = e.clamp(-clamp, clamp);
                log1p_exp(e) - di * e
            })
            .sum::<f64>()
            / n as f64
    };

    let mut beta = DVector::zeros(q);
    let mut loss = nll(&beta);
    let mut converged = false;
    let mut iterations = 0;
    for it in 0..100 {
        iterations = it + 1;
        let eta = &design * &beta;
        let mut grad = DVector::zeros(q);
        let mut hess = DMatrix::zeros(q, q);
        for i in 0..n {
            if eta[i].abs() >= clamp {
                continue;
            }
            let mu = expit(eta[i]);
            let w = mu * (1.0 - mu);
            let row = design.row(i);
            for a in 0..q {
                grad[a] += (mu - d[i]) * row[a];
                for b in 0..=a {
                    hess[(a, b)] += w * row[a] * row[b];
                }
            }
        }
        for a in 0..q {
            for b in 0..a {
                hess[(b, a)] = hess[(a, b)];
            }
        }
        let step = newton_direction(hess, &grad)?;
        let mut t = 1.0;
        let mut accepted = None;
        for _ in 0..30 {
            let cand = &beta - &step * t;
            let l = nll(&cand);
            if l <= loss {
                accepted = Some((cand, l));
                break;
            }
            t *= 0.5;
        }
        match accepted {
            Some((cand, l)) => {
                let decrease = loss - l;
                beta = cand;
                loss = l;
                if decrease <= 1e-12 * loss.abs().max(f64::EPSILON) {
                    converged = true;
                    break;
                }
            }
            None => {
                converged = true;
                break;
            }
        }
    }
    Ok(LogisticFit {
        intercept: beta[0],
        slopes: beta.iter().skip(1).copied().collect(),
        iterations,
        converged,
    })
}

/// Solves `hess * step = grad`, adding a growing ridge if `hess` is not
/// numerically positive definite.
pub(crate) fn newton_direction(hess: DMatrix<f64>, grad: &DVector<f64>) -> Result<DVector<f64>> {
    let q = hess.nrows();
    let scale = (0..q).map(|i| hess[(i, i)].abs()).fold(0.0, f64::max).max(1e-300);
    let mut ridge = 0.0;
    for _ in 0..12 {
        let mut h = hess.clone();
        for i in 0..q {
            h[(i, i)] += ridge;
        }
        if let Some(ch) = h.cholesky() {
            return Ok(ch.solve(grad));
        }
        ridge = if ridge == 0.0 { 1e-10 * scale } else { ridge * 100.0 };
    }
    Err(Error::RankDeficient("Newton system is singular even after regularization".into()))
}
