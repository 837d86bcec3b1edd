//! Sieve losses for the two single-index nuisance models and their analytic
//! gradients.

use nalgebra::{DMatrix, DVector};

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::hermite::SieveBasis;
use crate::linalg::{expit, log1p_exp};

use super::{Family, IndexParameter, SieveCoefficients};

/// Default clamp applied to the logistic linear predictor before exponentiation.
pub const DEFAULT_CLAMP: f64 = 30.0;

/// Gradient of a sieve loss with respect to the index and the sieve coefficients.
#[derive(Debug, Clone, PartialEq)]
pub struct LossGradient {
    pub index: Vec<f64>,
    pub coefficients: Vec<f64>,
}

/// Loss surface `L(theta, C)` of one nuisance model on fixed data.
///
/// `theta` is accepted unnormalized so that the surface can be probed off the
/// unit sphere (finite differences, line searches).
#[derive(Debug, Clone)]
pub struct Objective<'a> {
    x: &'a DMatrix<f64>,
    target: &'a [f64],
    family: Family,
    basis: SieveBasis,
    clamp: f64,
}

impl<'a> Objective<'a> {
    pub fn new(data: &'a Dataset, family: Family, order: usize, clamp: f64) -> Result<Self> {
        Self::from_parts(data.covariates(), family.target(data), family, order, clamp)
    }

    pub fn from_parts(
        x: &'a DMatrix<f64>,
        target: &'a [f64],
        family: Family,
        order: usize,
        clamp: f64,
    ) -> Result<Self> {
        if target.len() != x.nrows() {
            return Err(Error::DimensionMismatch {
                what: "loss target",
                expected: x.nrows(),
                got: target.len(),
            });
        }
        if x.nrows() == 0 {
            return Err(Error::Precondition("loss needs at least one observation".into()));
        }
        if !(clamp > 0.0) {
            return Err(Error::Precondition(format!("clamp bound must be positive, got {clamp}")));
        }
        Ok(Self {
            x,
            target,
            family,
            basis: SieveBasis::new(order)?,
            clamp,
        })
    }

    pub fn family(&self) -> Family {
        self.family
    }

    pub fn order(&self) -> usize {
        self.basis.order()
    }

    pub fn n(&self) -> usize {
        self.x.nrows()
    }

    pub fn p(&self) -> usize {
        self.x.ncols()
    }

    pub(crate) fn x(&self) -> &DMatrix<f64> {
        self.x
    }

    pub(crate) fn target(&self) -> &[f64] {
        self.target
    }

    pub(crate) fn clamp(&self) -> f64 {
        self.clamp
    }

    pub(crate) fn basis(&self) -> SieveBasis {
        self.basis
    }

    fn check_dims(&self, theta: &[f64], coef: &[f64]) -> Result<()> {
        if theta.len() != self.p() {
            return Err(Error::DimensionMismatch {
                what: "index length",
                expected: self.p(),
                got: theta.len(),
            });
        }
        if coef.len() != self.order() {
            return Err(Error::DimensionMismatch {
                what: "sieve coefficient length",
                expected: self.order(),
                got: coef.len(),
            });
        }
        Ok(())
    }

    pub(crate) fn index_values(&self, theta: &[f64]) -> Vec<f64> {
        self.x
            .row_iter()
            .map(|row| row.iter().zip(theta).map(|(a, b)| a * b).sum())
            .collect()
    }

    /// Loss of a vector of linear predictors `eta_i = H(u_i)' C`.
    pub(crate) fn loss_of_eta(&self, eta: &DVector<f64>) -> f64 {
        let n = self.n() as f64;
        match self.family {
            Family::Gaussian => {
                eta.iter()
                    .zip(self.target)
                    .map(|(e, y)| (y - e).powi(2))
                    .sum::<f64>()
                    / n
            }
            Family::Logistic => {
                eta.iter()
                    .zip(self.target)
                    .map(|(&e, &d)| {
                        let e = e.clamp(-self.clamp, self.clamp);
                        log1p_exp(e) - d * e
                    })
                    .sum::<f64>()
                    / n
            }
        }
    }

    /// `dL/d eta_i` for every observation. Clamped logistic predictors have
    /// zero derivative.
    pub(crate) fn eta_derivative(&self, eta: &DVector<f64>) -> Vec<f64> {
        let n = self.n() as f64;
        match self.family {
            Family::Gaussian => eta
                .iter()
                .zip(self.target)
                .map(|(e, y)| -2.0 * (y - e) / n)
                .collect(),
            Family::Logistic => eta
                .iter()
                .zip(self.target)
                .map(|(&e, &d)| {
                    if e.abs() < self.clamp {
                        -(d - expit(e)) / n
                    } else {
                        0.0
                    }
                })
                .collect(),
        }
    }

    /// Curvature weight `d^2 L / d eta_i^2` (times `n`).
    pub(crate) fn eta_curvature(&self, eta: &DVector<f64>) -> Vec<f64> {
        match self.family {
            Family::Gaussian => vec![2.0; eta.len()],
            Family::Logistic => eta
                .iter()
                .map(|&e| {
                    if e.abs() < self.clamp {
                        let mu = expit(e);
                        mu * (1.0 - mu)
                    } else {
                        0.0
                    }
                })
                .collect(),
        }
    }

    pub(crate) fn evaluate(&self, theta: &[f64], coef: &[f64]) -> Result<f64> {
        let design = self.basis.design_matrix(&self.index_values(theta))?;
        let eta = design * DVector::from_column_slice(coef);
        Ok(self.loss_of_eta(&eta))
    }

    /// `L(theta, C)` for an arbitrary (not necessarily unit) `theta`.
    pub fn loss(&self, theta: &[f64], coef: &[f64]) -> Result<f64> {
        self.check_dims(theta, coef)?;
        self.evaluate(theta, coef)
    }

    /// `(dL/d theta, dL/d C)` for an arbitrary `theta`.
    pub fn gradient(&self, theta: &[f64], coef: &[f64]) -> Result<LossGradient> {
        self.check_dims(theta, coef)?;
        let u = self.index_values(theta);
        let (h, dh) = self.basis.design_with_derivative(&u)?;
        let c = DVector::from_column_slice(coef);
        let eta = &h * &c;
        let slope = &dh * &c;
        let r = DVector::from_vec(self.eta_derivative(&eta));
        let grad_c = h.tr_mul(&r);
        let weights = r.component_mul(&slope);
        let grad_theta = self.x.tr_mul(&weights);
        Ok(LossGradient {
            index: grad_theta.iter().copied().collect(),
            coefficients: grad_c.iter().copied().collect(),
        })
    }
}

/// `-n^-1 sum [D_i eta_i - log(1 + exp(eta_i))]` with `eta_i = H(X_i' theta)' C`
/// clamped to `[-30, 30]`.
pub fn logistic_loss(
    data: &Dataset,
    index: &IndexParameter,
    coef: &SieveCoefficients,
) -> Result<f64> {
    Objective::new(data, Family::Logistic, coef.len(), DEFAULT_CLAMP)?
        .loss(index.as_slice(), coef.values())
}

/// `n^-1 sum [Y_i - H(X_i' theta)' C]^2`.
pub fn gaussian_loss(
    data: &Dataset,
    index: &IndexParameter,
    coef: &SieveCoefficients,
) -> Result<f64> {
    Objective::new(data, Family::Gaussian, coef.len(), DEFAULT_CLAMP)?
        .loss(index.as_slice(), coef.values())
}

pub fn loss_gradient(
    data: &Dataset,
    index: &IndexParameter,
    coef: &SieveCoefficients,
    family: Family,
) -> Result<LossGradient> {
    Objective::new(data, family, coef.len(), DEFAULT_CLAMP)?
        .gradient(index.as_slice(), coef.values())
}
