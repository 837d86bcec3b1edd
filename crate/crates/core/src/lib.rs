//! Average treatment effect estimation for the partially linear model
//! `Y = alpha D + r(X) + e`.
//!
//! Both nuisance regressions, `E[D | X]` and `E[Y | X]`, are modeled as
//! single-index models whose unknown link is approximated by a truncated
//! orthonormal Hermite series. The effect is then the slope of the outcome
//! residuals regressed on the treatment residuals.
//!
//! Modules:
//! - [`hermite`]: the orthonormal Hermite basis and Gauss-Hermite quadrature.
//! - [`sieve`]: fitting single-index sieve models and choosing the truncation order.
//! - [`ate`]: the residual-on-residual estimator and two propensity-score competitors.
//! - [`sim`]: simulation designs and the Monte Carlo harness.

// Negated comparisons are used on purpose so that NaN fails validation.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod ate;
pub mod data;
pub mod error;
pub mod hermite;
pub mod linalg;
pub mod sieve;
pub mod sim;

pub use ate::{AteEstimate, Method};
pub use data::Dataset;
pub use error::{Error, Result};
pub use hermite::SieveBasis;
pub use sieve::{Family, FitOptions, KPolicy, SieveFit};
