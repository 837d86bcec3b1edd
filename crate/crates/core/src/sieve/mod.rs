//! Single-index sieve models.
//!
//! A nuisance regression `E[T | X] = link(g(X' theta))` is approximated by
//! `g(w) ~ H(w)' C` with the first `k` orthonormal Hermite functions. The pair
//! `(theta, C)` minimizes the sieve loss subject to `||theta|| = 1`,
//! `theta_1 >= 0` and `||C|| <= M`.
//!
//! Fitting alternates an inner solve for `C` at fixed `theta` (least squares
//! for the Gaussian loss, damped Newton for the logistic loss) with a
//! curvature-scaled gradient step in `theta` that is projected back onto the
//! unit sphere. Every accepted move is checked against the loss, so the
//! recorded trace never increases.

mod fit;
mod objective;
mod select;

use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::{Error, Result};

pub use fit::{fit, fit_with_policy, predict};
pub use objective::{
    gaussian_loss, logistic_loss, loss_gradient, LossGradient, Objective, DEFAULT_CLAMP,
};
pub use select::{select_k, CvScore, KSelection};

/// Which nuisance regression a sieve model describes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Family {
    /// Treatment model `P(D = 1 | X) = expit(g(X' beta))`.
    Logistic,
    /// Outcome model `E[Y | X] = g(X' gamma)`.
    Gaussian,
}

impl Family {
    /// The column of `data` this family regresses on `X`.
    pub fn target<'a>(&self, data: &'a Dataset) -> &'a [f64] {
        match self {
            Family::Logistic => data.treatment(),
            Family::Gaussian => data.outcome(),
        }
    }
}

/// Unit-norm index direction with a non-negative first coordinate.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct IndexParameter {
    coefficients: Vec<f64>,
}

impl IndexParameter {
    /// Normalizes `raw` to unit length and flips its sign if the first
    /// coordinate is negative.
    pub fn new(raw: &[f64]) -> Result<Self> {
        Ok(Self::normalized(raw)?.0)
    }

    /// Like [`IndexParameter::new`], also reporting whether the sign was flipped.
    pub(crate) fn normalized(raw: &[f64]) -> Result<(Self, bool)> {
        if raw.is_empty() {
            return Err(Error::Domain("index direction must have at least one coordinate".into()));
        }
        if raw.iter().any(|v| !v.is_finite()) {
            return Err(Error::Domain("index direction has non-finite entries".into()));
        }
        let norm = raw.iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm == 0.0 {
            return Err(Error::Domain("index direction has zero length".into()));
        }
        let flip = raw[0] < 0.0;
        let sign = if flip { -1.0 } else { 1.0 };
        let coefficients = raw.iter().map(|v| sign * v / norm).collect();
        Ok((Self { coefficients }, flip))
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.coefficients
    }

    pub fn len(&self) -> usize {
        self.coefficients.len()
    }

    pub fn is_empty(&self) -> bool {
        self.coefficients.is_empty()
    }

    pub fn norm(&self) -> f64 {
        self.coefficients.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    /// Angle in radians between this direction and `other` (normalized first).
    pub fn angle_to(&self, other: &[f64]) -> f64 {
        let on = other.iter().map(|v| v * v).sum::<f64>().sqrt();
        let dot: f64 = self.coefficients.iter().zip(other).map(|(a, b)| a * b).sum();
        (dot / on).clamp(-1.0, 1.0).acos()
    }
}

/// Sieve coefficients `C_k = (c_0, ..., c_{k-1})` with norm bound `M`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SieveCoefficients {
    values: Vec<f64>,
    bound: f64,
}

impl SieveCoefficients {
    pub fn new(values: Vec<f64>, bound: f64) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::Precondition("sieve needs at least one coefficient".into()));
        }
        if !(bound > 0.0) {
            return Err(Error::Precondition(format!("coefficient bound must be positive, got {bound}")));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::Domain("sieve coefficients must be finite".into()));
        }
        let c = Self { values, bound };
        if c.norm() > bound {
            return Err(Error::Precondition(format!(
                "coefficient norm {} exceeds bound {bound}",
                c.norm()
            )));
        }
        Ok(c)
    }

    pub fn zeros(k: usize, bound: f64) -> Self {
        Self {
            values: vec![0.0; k.max(1)],
            bound,
        }
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn bound(&self) -> f64 {
        self.bound
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn norm(&self) -> f64 {
        self.values.iter().map(|v| v * v).sum::<f64>().sqrt()
    }
}

/// How the truncation order `k` is chosen.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum KPolicy {
    Fixed(usize),
    /// Cross-validated choice over a grid.
    Grid(Vec<usize>),
}

impl Default for KPolicy {
    fn default() -> Self {
        KPolicy::Grid((2..=10).collect())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitOptions {
    /// Stop once the relative loss decrease of an iteration falls below this.
    pub tolerance: f64,
    pub max_iterations: usize,
    /// Bound on the absolute logistic linear predictor.
    pub clamp: f64,
    /// Norm bound `M` on the sieve coefficients.
    pub coefficient_bound: f64,
    pub k: KPolicy,
    pub folds: usize,
}

impl Default for FitOptions {
    fn default() -> Self {
        Self {
            tolerance: 1e-8,
            max_iterations: 500,
            clamp: DEFAULT_CLAMP,
            coefficient_bound: 1e3,
            k: KPolicy::default(),
            folds: 5,
        }
    }
}

impl FitOptions {
    pub fn with_k(mut self, k: KPolicy) -> Self {
        self.k = k;
        self
    }
}

/// A fitted single-index sieve model.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SieveFit {
    pub index: IndexParameter,
    pub coefficients: SieveCoefficients,
    pub family: Family,
    pub order: usize,
    pub final_loss: f64,
    pub iterations: usize,
    pub converged: bool,
    /// Loss after initialization and after every alternating iteration.
    pub loss_trace: Vec<f64>,
    pub warnings: Vec<String>,
    /// Clamp on the logistic linear predictor used at fit time.
    pub clamp: f64,
    /// Cross-validation record when `order` was chosen from a grid.
    pub selection: Option<KSelection>,
}
