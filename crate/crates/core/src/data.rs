use nalgebra::DMatrix;
use serde::Serialize;

use crate::error::{Error, Result};

/// Immutable observations `(Y, D, X)`.
///
/// Treatment is stored as `f64` taking values exactly `0.0` or `1.0` so that
/// residual arithmetic needs no conversions.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Dataset {
    outcome: Vec<f64>,
    treatment: Vec<f64>,
    #[serde(skip)]
    covariates: DMatrix<f64>,
    column_names: Vec<String>,
}

impl Dataset {
    pub fn new(
        outcome: Vec<f64>,
        treatment: Vec<f64>,
        covariates: DMatrix<f64>,
        column_names: Vec<String>,
    ) -> Result<Self> {
        let n = outcome.len();
        if n == 0 {
            return Err(Error::InvalidData("dataset has no observations".into()));
        }
        if treatment.len() != n {
            return Err(Error::DimensionMismatch {
                what: "treatment length",
                expected: n,
                got: treatment.len(),
            });
        }
        if covariates.nrows() != n {
            return Err(Error::DimensionMismatch {
                what: "covariate rows",
                expected: n,
                got: covariates.nrows(),
            });
        }
        if covariates.ncols() == 0 {
            return Err(Error::InvalidData("at least one covariate is required".into()));
        }
        if column_names.len() != covariates.ncols() {
            return Err(Error::DimensionMismatch {
                what: "covariate names",
                expected: covariates.ncols(),
                got: column_names.len(),
            });
        }
        if let Some(i) = outcome.iter().position(|v| !v.is_finite()) {
            return Err(Error::InvalidData(format!("non-finite outcome at row {i}")));
        }
        if let Some(i) = treatment.iter().position(|&d| d != 0.0 && d != 1.0) {
            return Err(Error::InvalidData(format!(
                "treatment at row {i} is {}, expected 0 or 1",
                treatment[i]
            )));
        }
        for (j, col) in covariates.column_iter().enumerate() {
            if let Some(i) = col.iter().position(|v| !v.is_finite()) {
                return Err(Error::InvalidData(format!(
                    "non-finite value in covariate `{}` at row {i}",
                    column_names[j]
                )));
            }
        }
        let treated = treatment.iter().filter(|&&d| d == 1.0).count();
        if treated == 0 {
            return Err(Error::NoTreatmentVariation("no treated observations".into()));
        }
        if treated == n {
            return Err(Error::NoTreatmentVariation("every observation is treated".into()));
        }
        Ok(Self {
            outcome,
            treatment,
            covariates,
            column_names,
        })
    }

    /// Skips validation; for held-out folds whose treatment may be one-armed.
    pub(crate) fn raw(
        outcome: Vec<f64>,
        treatment: Vec<f64>,
        covariates: DMatrix<f64>,
        column_names: Vec<String>,
    ) -> Self {
        Self {
            outcome,
            treatment,
            covariates,
            column_names,
        }
    }

    /// Builds a dataset with covariates named `x1..xp`.
    pub fn from_rows(outcome: Vec<f64>, treatment: Vec<f64>, rows: &[Vec<f64>]) -> Result<Self> {
        let p = rows.first().map_or(0, Vec::len);
        if let Some(bad) = rows.iter().find(|r| r.len() != p) {
            return Err(Error::DimensionMismatch {
                what: "covariate row length",
                expected: p,
                got: bad.len(),
            });
        }
        let covariates = DMatrix::from_fn(rows.len(), p, |i, j| rows[i][j]);
        let names = (1..=p).map(|j| format!("x{j}")).collect();
        Self::new(outcome, treatment, covariates, names)
    }

    pub fn n(&self) -> usize {
        self.outcome.len()
    }

    pub fn p(&self) -> usize {
        self.covariates.ncols()
    }

    pub fn outcome(&self) -> &[f64] {
        &self.outcome
    }

    pub fn treatment(&self) -> &[f64] {
        &self.treatment
    }

    pub fn covariates(&self) -> &DMatrix<f64> {
        &self.covariates
    }

    pub fn column_names(&self) -> &[String] {
        &self.column_names
    }

    /// Rows selected by index, in the given order.
    pub fn subset(&self, rows: &[usize]) -> Result<Self> {
        let covariates = self.covariates.select_rows(rows.iter());
        Self::new(
            rows.iter().map(|&i| self.outcome[i]).collect(),
            rows.iter().map(|&i| self.treatment[i]).collect(),
            covariates,
            self.column_names.clone(),
        )
    }

    /// Appends the rows of `other` below the rows of `self`.
    pub fn stack(&self, other: &Dataset) -> Result<Self> {
        if other.p() != self.p() {
            return Err(Error::DimensionMismatch {
                what: "stacked covariate columns",
                expected: self.p(),
                got: other.p(),
            });
        }
        let (n1, n2, p) = (self.n(), other.n(), self.p());
        let covariates = DMatrix::from_fn(n1 + n2, p, |i, j| {
            if i < n1 {
                self.covariates[(i, j)]
            } else {
                other.covariates[(i - n1, j)]
            }
        });
        let mut outcome = self.outcome.clone();
        outcome.extend_from_slice(&other.outcome);
        let mut treatment = self.treatment.clone();
        treatment.extend_from_slice(&other.treatment);
        Self::new(outcome, treatment, covariates, self.column_names.clone())
    }

    /// Same observations with a different outcome vector.
    pub fn with_outcome(&self, outcome: Vec<f64>) -> Result<Self> {
        Self::new(
            outcome,
            self.treatment.clone(),
            self.covariates.clone(),
            self.column_names.clone(),
        )
    }

    /// Same observations with a different treatment vector.
    pub fn with_treatment(&self, treatment: Vec<f64>) -> Result<Self> {
        Self::new(
            self.outcome.clone(),
            treatment,
            self.covariates.clone(),
            self.column_names.clone(),
        )
    }

    /// Centers every covariate and scales it to unit sample standard deviation.
    pub fn standardized(&self) -> Result<Self> {
        let mut covariates = self.covariates.clone();
        for (j, mut col) in covariates.column_iter_mut().enumerate() {
            let n = col.len() as f64;
            let mean = col.sum() / n;
            let var = col.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0).max(1.0);
            if var <= 0.0 {
                return Err(Error::ConstantCovariate(self.column_names[j].clone()));
            }
            let sd = var.sqrt();
            col.apply(|v| *v = (*v - mean) / sd);
        }
        Self::new(
            self.outcome.clone(),
            self.treatment.clone(),
            covariates,
            self.column_names.clone(),
        )
    }

    /// Name of the first covariate column with zero spread, if any.
    pub fn constant_covariate(&self) -> Option<&str> {
        self.covariates
            .column_iter()
            .position(|col| {
                let first = col[0];
                col.iter().all(|&v| v == first)
            })
            .map(|j| self.column_names[j].as_str())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> Dataset {
        Dataset::from_rows(
            vec![1.0, 2.0, 3.0],
            vec![0.0, 1.0, 1.0],
            &[vec![0.1, 1.0], vec![0.2, 3.0], vec![0.4, 2.0]],
        )
        .unwrap()
    }

    #[test]
    fn rejects_constant_treatment() {
        let err = Dataset::from_rows(vec![1.0, 2.0], vec![1.0, 1.0], &[vec![0.0], vec![1.0]])
            .unwrap_err();
        assert!(matches!(err, Error::NoTreatmentVariation(_)));
        let err = Dataset::from_rows(vec![1.0, 2.0], vec![0.0, 0.0], &[vec![0.0], vec![1.0]])
            .unwrap_err();
        assert!(matches!(err, Error::NoTreatmentVariation(_)));
    }

    #[test]
    fn rejects_non_binary_and_non_finite() {
        let err = Dataset::from_rows(vec![1.0, 2.0], vec![0.0, 0.5], &[vec![0.0], vec![1.0]])
            .unwrap_err();
        assert!(matches!(err, Error::InvalidData(_)));
        let err = Dataset::from_rows(vec![1.0, 2.0], vec![0.0, 1.0], &[vec![f64::NAN], vec![1.0]])
            .unwrap_err();
        assert!(matches!(err, Error::InvalidData(_)));
    }

    #[test]
    fn stack_and_subset() {
        let d = small();
        let s = d.stack(&d).unwrap();
        assert_eq!(s.n(), 6);
        assert_eq!(s.covariates()[(4, 1)], 3.0);
        let sub = s.subset(&[5, 0]).unwrap();
        assert_eq!(sub.outcome(), &[3.0, 1.0]);
        assert_eq!(sub.covariates()[(0, 0)], 0.4);
    }

    #[test]
    fn standardize_and_constant_detection() {
        let d = small().standardized().unwrap();
        for col in d.covariates().column_iter() {
            assert!(col.sum().abs() < 1e-12);
        }
        let c = Dataset::from_rows(
            vec![1.0, 2.0],
            vec![0.0, 1.0],
            &[vec![1.0, 5.0], vec![2.0, 5.0]],
        )
        .unwrap();
        assert_eq!(c.constant_covariate(), Some("x2"));
        assert!(matches!(c.standardized(), Err(Error::ConstantCovariate(_))));
    }
}
