//! Treatment-effect estimators.
//!
//! [`estimate_proposed`] regresses outcome residuals `Y - g2(X' gamma)` on
//! treatment residuals `D - expit(g1(X' beta))`, both nuisance functions being
//! Hermite-sieve single-index fits. Its standard error is the plug-in
//! `sigma / sqrt(n psi)` with `psi` the mean squared treatment residual and
//! `sigma^2` the mean squared residual of the residual regression.
//!
//! Two propensity-score competitors use an ordinary logistic regression for
//! the propensity:
//! - [`estimate_ps_regression`]: OLS of `Y` on `(1, D, p_hat)`.
//! - [`estimate_ps_residual`]: OLS of `Y` on `(1, D - p_hat, v, v^2, v^3)`
//!   with `v = X' beta_hat` the fitted linear index.

use std::fmt;
use std::str::FromStr;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use libm::erfc;

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::linalg::{condition_number, expit, logistic_regression, ols, LogisticFit};
use crate::sieve::{self, Family, FitOptions, SieveFit};

/// Normal quantile for two-sided 95% intervals.
pub const Z_95: f64 = 1.96;

/// Treatment residual sums of squares below this are treated as no variation.
pub const MIN_TREATMENT_RESIDUAL_SS: f64 = 1e-10;

/// Condition number above which `(1, D, p_hat)` is considered collinear.
pub const MAX_CONDITION_NUMBER: f64 = 1e10;

/// Propensities closer than this to 0 or 1 trigger a positivity warning.
pub const POSITIVITY_MARGIN: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    /// Residual-on-residual regression with sieve single-index nuisances.
    Proposed,
    /// Covariate adjustment by the estimated propensity score.
    PsRegression,
    /// Propensity-score residual with a cubic in the estimated index.
    PsResidual,
}

impl Method {
    pub const ALL: [Method; 3] = [Method::Proposed, Method::PsRegression, Method::PsResidual];

    pub fn as_str(&self) -> &'static str {
        match self {
            Method::Proposed => "proposed",
            Method::PsRegression => "ps-regression",
            Method::PsResidual => "ps-residual",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().replace('_', "-").as_str() {
            "proposed" => Ok(Method::Proposed),
            "ps-regression" => Ok(Method::PsRegression),
            "ps-residual" => Ok(Method::PsResidual),
            other => Err(Error::Precondition(format!(
                "unknown method `{other}` (expected proposed, ps-regression or ps-residual)"
            ))),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct Diagnostics {
    pub k_outcome: Option<usize>,
    pub k_treatment: Option<usize>,
    pub outcome_converged: Option<bool>,
    pub treatment_converged: Option<bool>,
    /// Mean squared treatment residual.
    pub psi: Option<f64>,
    /// Mean squared residual of the residual-on-residual regression.
    pub sigma_sq: Option<f64>,
    pub warnings: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AteEstimate {
    pub method: Method,
    pub alpha: f64,
    pub std_error: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    pub p_value: f64,
    pub n: usize,
    pub diagnostics: Diagnostics,
}

/// Flat, serializable view of an [`AteEstimate`].
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EstimateRecord {
    pub method: Method,
    pub alpha: f64,
    pub std_error: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    pub p_value: f64,
    pub k_outcome: Option<usize>,
    pub k_treatment: Option<usize>,
    pub warnings: String,
}

impl AteEstimate {
    /// Builds an estimate with its 95% normal interval and two-sided p-value.
    pub fn new(method: Method, alpha: f64, std_error: f64, n: usize, diagnostics: Diagnostics) -> Self {
        Self {
            method,
            alpha,
            std_error,
            ci_low: alpha - Z_95 * std_error,
            ci_high: alpha + Z_95 * std_error,
            p_value: two_sided_p_value(alpha, std_error),
            n,
            diagnostics,
        }
    }

    pub fn covers(&self, value: f64) -> bool {
        self.ci_low <= value && value <= self.ci_high
    }

    pub fn record(&self) -> EstimateRecord {
        EstimateRecord {
            method: self.method,
            alpha: self.alpha,
            std_error: self.std_error,
            ci_low: self.ci_low,
            ci_high: self.ci_high,
            p_value: self.p_value,
            k_outcome: self.diagnostics.k_outcome,
            k_treatment: self.diagnostics.k_treatment,
            warnings: self.diagnostics.warnings.join("; "),
        }
    }
}

/// Two-sided standard-normal tail probability of `alpha / std_error`.
pub fn two_sided_p_value(alpha: f64, std_error: f64) -> f64 {
    if std_error == 0.0 {
        return if alpha == 0.0 { 1.0 } else { 0.0 };
    }
    let z = (alpha / std_error).abs();
    erfc(z / std::f64::consts::SQRT_2).clamp(0.0, 1.0)
}

/// `sigma^2 = n^-1 sum (e_y - alpha e_d)^2` and `psi = n^-1 sum e_d^2`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct VarianceComponents {
    pub sigma_sq: f64,
    pub psi: f64,
}

pub fn variance_components(e_d: &[f64], e_y: &[f64], alpha: f64) -> Result<VarianceComponents> {
    if e_d.is_empty() || e_y.is_empty() {
        return Err(Error::Precondition("residual vectors must be non-empty".into()));
    }
    if e_d.len() != e_y.len() {
        return Err(Error::DimensionMismatch {
            what: "residual vectors",
            expected: e_d.len(),
            got: e_y.len(),
        });
    }
    if e_d.len() < 2 {
        return Err(Error::Precondition("variance needs at least two residuals".into()));
    }
    let n = e_d.len() as f64;
    let sigma_sq = e_y
        .iter()
        .zip(e_d)
        .map(|(y, d)| (y - alpha * d).powi(2))
        .sum::<f64>()
        / n;
    let psi = e_d.iter().map(|d| d * d).sum::<f64>() / n;
    Ok(VarianceComponents { sigma_sq, psi })
}

/// No-intercept regression of outcome residuals on treatment residuals.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ResidualRegression {
    pub alpha: f64,
    pub std_error: f64,
    pub sigma_sq: f64,
    pub psi: f64,
}

pub fn residual_on_residual(e_y: &[f64], e_d: &[f64]) -> Result<ResidualRegression> {
    if e_y.len() != e_d.len() {
        return Err(Error::DimensionMismatch {
            what: "residual vectors",
            expected: e_d.len(),
            got: e_y.len(),
        });
    }
    let ss_d: f64 = e_d.iter().map(|d| d * d).sum();
    if !(ss_d >= MIN_TREATMENT_RESIDUAL_SS) {
        return Err(Error::DegenerateTreatmentResidual(ss_d));
    }
    let cross: f64 = e_y.iter().zip(e_d).map(|(y, d)| y * d).sum();
    let alpha = cross / ss_d;
    let VarianceComponents { sigma_sq, psi } = variance_components(e_d, e_y, alpha)?;
    let n = e_d.len() as f64;
    let std_error = (sigma_sq / (n * psi)).sqrt();
    Ok(ResidualRegression {
        alpha,
        std_error,
        sigma_sq,
        psi,
    })
}

fn positivity_warning(propensity: &[f64]) -> Option<String> {
    let extreme = propensity
        .iter()
        .filter(|&&p| !(POSITIVITY_MARGIN..=1.0 - POSITIVITY_MARGIN).contains(&p))
        .count();
    (extreme > 0).then(|| {
        format!("positivity: {extreme} estimated propensities within {POSITIVITY_MARGIN:e} of 0 or 1")
    })
}

/// Residual-on-residual estimate from already fitted nuisance models.
pub fn proposed_from_fits(data: &Dataset, treatment: &SieveFit, outcome: &SieveFit) -> Result<AteEstimate> {
    if treatment.family != Family::Logistic || outcome.family != Family::Gaussian {
        return Err(Error::Precondition(
            "expected a logistic treatment fit and a gaussian outcome fit".into(),
        ));
    }
    let propensity = sieve::predict(treatment, data.covariates())?;
    let regression = sieve::predict(outcome, data.covariates())?;
    let e_d: Vec<f64> = data.treatment().iter().zip(&propensity).map(|(d, p)| d - p).collect();
    let e_y: Vec<f64> = data.outcome().iter().zip(&regression).map(|(y, m)| y - m).collect();
    let rr = residual_on_residual(&e_y, &e_d)?;

    let mut warnings = Vec::new();
    warnings.extend(treatment.warnings.iter().map(|w| format!("treatment model: {w}")));
    warnings.extend(outcome.warnings.iter().map(|w| format!("outcome model: {w}")));
    warnings.extend(positivity_warning(&propensity));
    let diagnostics = Diagnostics {
        k_outcome: Some(outcome.order),
        k_treatment: Some(treatment.order),
        outcome_converged: Some(outcome.converged),
        treatment_converged: Some(treatment.converged),
        psi: Some(rr.psi),
        sigma_sq: Some(rr.sigma_sq),
        warnings,
    };
    Ok(AteEstimate::new(Method::Proposed, rr.alpha, rr.std_error, data.n(), diagnostics))
}

/// Sieve single-index nuisance fits followed by the residual-on-residual slope.
pub fn estimate_proposed(data: &Dataset, options: &FitOptions) -> Result<AteEstimate> {
    let treatment = sieve::fit_with_policy(data, Family::Logistic, options)?;
    let outcome = sieve::fit_with_policy(data, Family::Gaussian, options)?;
    proposed_from_fits(data, &treatment, &outcome)
}

struct Propensity {
    glm: LogisticFit,
    scores: Vec<f64>,
    warnings: Vec<String>,
}

fn logistic_propensity(data: &Dataset, options: &FitOptions) -> Result<Propensity> {
    let glm = logistic_regression(data.covariates(), data.treatment(), options.clamp)?;
    let scores: Vec<f64> = glm
        .linear_predictor(data.covariates())
        .into_iter()
        .map(|e| expit(e.clamp(-options.clamp, options.clamp)))
        .collect();
    let mut warnings = Vec::new();
    if !glm.converged {
        warnings.push(format!(
            "propensity logistic regression did not converge in {} iterations",
            glm.iterations
        ));
    }
    warnings.extend(positivity_warning(&scores));
    Ok(Propensity { glm, scores, warnings })
}

fn is_constant(values: &[f64]) -> bool {
    values.iter().all(|&v| v == values[0])
}

/// OLS coefficient of `D` in `Y ~ 1 + D + p_hat`.
pub fn estimate_ps_regression(data: &Dataset, options: &FitOptions) -> Result<AteEstimate> {
    let ps = logistic_propensity(data, options)?;
    let n = data.n();
    let d = data.treatment();
    let design = DMatrix::from_fn(n, 3, |i, j| match j {
        0 => 1.0,
        1 => d[i],
        _ => ps.scores[i],
    });
    let cond = condition_number(&design);
    if !(cond <= MAX_CONDITION_NUMBER) {
        return Err(Error::Collinear(format!(
            "treatment and estimated propensity are collinear (condition number {cond:.3e})"
        )));
    }
    let diagnostics = Diagnostics {
        warnings: ps.warnings,
        ..Diagnostics::default()
    };
    if is_constant(data.outcome()) {
        return Ok(AteEstimate::new(Method::PsRegression, 0.0, 0.0, n, diagnostics));
    }
    let fit = ols(&design, data.outcome(), &["intercept", "treatment", "propensity"])?;
    Ok(AteEstimate::new(
        Method::PsRegression,
        fit.coefficients[1],
        fit.std_errors[1],
        n,
        diagnostics,
    ))
}

/// OLS coefficient of `D - p_hat` in `Y ~ 1 + (D - p_hat) + v + v^2 + v^3`.
pub fn estimate_ps_residual(data: &Dataset, options: &FitOptions) -> Result<AteEstimate> {
    let ps = logistic_propensity(data, options)?;
    let n = data.n();
    let d = data.treatment();
    let index = ps.glm.index(data.covariates());
    let design = DMatrix::from_fn(n, 5, |i, j| match j {
        0 => 1.0,
        1 => d[i] - ps.scores[i],
        _ => index[i].powi(j as i32 - 1),
    });
    let names = ["intercept", "treatment residual", "index", "index^2", "index^3"];
    let diagnostics = Diagnostics {
        warnings: ps.warnings,
        ..Diagnostics::default()
    };
    if is_constant(data.outcome()) {
        // Still surface rank problems in the design.
        ols(&design, &vec![0.0; n], &names)?;
        return Ok(AteEstimate::new(Method::PsResidual, 0.0, 0.0, n, diagnostics));
    }
    let fit = ols(&design, data.outcome(), &names)?;
    Ok(AteEstimate::new(
        Method::PsResidual,
        fit.coefficients[1],
        fit.std_errors[1],
        n,
        diagnostics,
    ))
}

pub fn estimate(method: Method, data: &Dataset, options: &FitOptions) -> Result<AteEstimate> {
    match method {
        Method::Proposed => estimate_proposed(data, options),
        Method::PsRegression => estimate_ps_regression(data, options),
        Method::PsResidual => estimate_ps_residual(data, options),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn proportional_residuals() {
        let e_d = [0.3, -0.2, 0.7, -0.9, 0.1];
        let e_y: Vec<f64> = e_d.iter().map(|d| 0.5 * d).collect();
        let rr = residual_on_residual(&e_y, &e_d).unwrap();
        assert_abs_diff_eq!(rr.alpha, 0.5, epsilon = 1e-15);
        assert_abs_diff_eq!(rr.sigma_sq, 0.0, epsilon = 1e-30);
    }

    #[test]
    fn hand_computed_residual_regression() {
        let e_y = [1.0, -1.0, 2.0, 0.0];
        let e_d = [0.5, -0.5, 0.5, -0.5];
        let rr = residual_on_residual(&e_y, &e_d).unwrap();
        assert_abs_diff_eq!(rr.alpha, 2.0, epsilon = 1e-15);
        assert_abs_diff_eq!(rr.psi, 0.25, epsilon = 1e-15);
        assert_abs_diff_eq!(rr.sigma_sq, 0.5, epsilon = 1e-15);
        assert_abs_diff_eq!(rr.std_error, (0.5f64 / (4.0 * 0.25)).sqrt(), epsilon = 1e-15);
    }

    #[test]
    fn variance_component_examples() {
        let e_d = [0.5, 0.5, 0.5, 0.5];
        let v = variance_components(&e_d, &[1.0, 2.0, 3.0, 4.0], 0.0).unwrap();
        assert_abs_diff_eq!(v.psi, 0.25, epsilon = 1e-15);
        let v = variance_components(&[1.0, -2.0], &[3.0, -6.0], 3.0).unwrap();
        assert_eq!(v.sigma_sq, 0.0);
        let v = variance_components(&[0.5, -0.5, 0.5, -0.5], &[1.0, -1.0, 2.0, 0.0], 2.0).unwrap();
        assert_abs_diff_eq!(v.sigma_sq, 0.5, epsilon = 1e-15);
        assert_abs_diff_eq!(v.psi, 0.25, epsilon = 1e-15);
        assert!(matches!(variance_components(&[], &[], 1.0), Err(Error::Precondition(_))));
    }

    #[test]
    fn degenerate_treatment_residual() {
        let err = residual_on_residual(&[1.0, 2.0], &[1e-7, -1e-7]).unwrap_err();
        assert!(matches!(err, Error::DegenerateTreatmentResidual(_)));
    }

    #[test]
    fn interval_and_p_value_invariants() {
        let est = AteEstimate::new(Method::Proposed, 0.3, 0.1, 100, Diagnostics::default());
        assert_abs_diff_eq!(est.ci_low, 0.3 - 0.196, epsilon = 1e-12);
        assert_abs_diff_eq!(est.ci_high, 0.3 + 0.196, epsilon = 1e-12);
        // 2 * (1 - Phi(3)) = 0.0026997960632601866
        assert_abs_diff_eq!(est.p_value, 0.002_699_796_063_260_186_6, epsilon = 1e-12);
        assert_abs_diff_eq!(two_sided_p_value(0.0, 1.0), 1.0, epsilon = 1e-15);
        assert_abs_diff_eq!(two_sided_p_value(-1.96, 1.0), 0.049_995_790_296_440_9, epsilon = 1e-12);
    }

    #[test]
    fn method_names_round_trip() {
        for m in Method::ALL {
            assert_eq!(m.as_str().parse::<Method>().unwrap(), m);
        }
        assert_eq!("ps_residual".parse::<Method>().unwrap(), Method::PsResidual);
        assert!("aipw".parse::<Method>().is_err());
    }
}
