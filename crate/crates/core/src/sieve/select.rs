//! Cross-validated choice of the truncation order.

use rayon::prelude::*;
use serde::Serialize;

use crate::data::Dataset;
use crate::error::{Error, Result};

use super::objective::Objective;
use super::{fit, Family, FitOptions};

/// Held-out loss for one candidate order; `None` when a fold fit failed.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CvScore {
    pub k: usize,
    pub loss: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct KSelection {
    pub k: usize,
    pub scores: Vec<CvScore>,
    pub warnings: Vec<String>,
}

/// Picks the order in `k_grid` with the smallest fold-averaged held-out loss
/// (squared error for the Gaussian family, negative log-likelihood for the
/// logistic family). Ties go to the smaller order.
///
/// Observation `i` belongs to fold `i mod folds`. Fold fits run in parallel
/// and are reduced in fold order.
pub fn select_k(
    data: &Dataset,
    family: Family,
    k_grid: &[usize],
    folds: usize,
    options: &FitOptions,
) -> Result<KSelection> {
    if k_grid.is_empty() {
        return Err(Error::Precondition("k grid is empty".into()));
    }
    if k_grid.contains(&0) {
        return Err(Error::Precondition("every k in the grid must be at least 1".into()));
    }
    if folds < 2 {
        return Err(Error::Precondition(format!("need at least 2 folds, got {folds}")));
    }
    if folds > data.n() {
        return Err(Error::Precondition(format!(
            "{folds} folds exceed the {} observations",
            data.n()
        )));
    }
    let mut grid = k_grid.to_vec();
    grid.sort_unstable();
    grid.dedup();
    if grid.len() == 1 {
        return Ok(KSelection {
            k: grid[0],
            scores: vec![CvScore { k: grid[0], loss: None }],
            warnings: Vec::new(),
        });
    }

    let splits: Vec<(Dataset, Dataset)> = (0..folds)
        .map(|f| {
            let (train, test): (Vec<usize>, Vec<usize>) = (0..data.n()).partition(|i| i % folds != f);
            (subset_unchecked(data, &train), subset_unchecked(data, &test))
        })
        .collect();

    let jobs: Vec<(usize, usize)> = grid
        .iter()
        .flat_map(|&k| (0..folds).map(move |f| (k, f)))
        .collect();
    let outcomes: Vec<Result<f64>> = jobs
        .par_iter()
        .map(|&(k, f)| {
            let (train, test) = &splits[f];
            let model = fit(train, family, k, options)?;
            let objective = Objective::from_parts(
                test.covariates(),
                family.target(test),
                family,
                k,
                options.clamp,
            )?;
            objective.loss(model.index.as_slice(), model.coefficients.values())
        })
        .collect();

    let mut scores = Vec::with_capacity(grid.len());
    let mut warnings = Vec::new();
    for (gi, &k) in grid.iter().enumerate() {
        let fold_results = &outcomes[gi * folds..(gi + 1) * folds];
        let mut total = 0.0;
        let mut failure = None;
        for (f, r) in fold_results.iter().enumerate() {
            match r {
                Ok(v) if v.is_finite() => total += v,
                Ok(v) => failure = Some(format!("fold {f} held-out loss is {v}")),
                Err(e) => failure = Some(format!("fold {f}: {e}")),
            }
        }
        match failure {
            Some(msg) => {
                warnings.push(format!("k = {k} skipped during cross-validation ({msg})"));
                scores.push(CvScore { k, loss: None });
            }
            None => scores.push(CvScore {
                k,
                loss: Some(total / folds as f64),
            }),
        }
    }

    let mut best: Option<(usize, f64)> = None;
    for s in &scores {
        if let Some(l) = s.loss {
            if best.is_none_or(|(_, b)| l < b) {
                best = Some((s.k, l));
            }
        }
    }
    match best {
        Some((k, _)) => Ok(KSelection { k, scores, warnings }),
        None => Err(Error::SelectionFailed(warnings.join("; "))),
    }
}

/// Fold subsets skip validation; a fold may hold a single treatment arm.
fn subset_unchecked(data: &Dataset, rows: &[usize]) -> Dataset {
    Dataset::raw(
        rows.iter().map(|&i| data.outcome()[i]).collect(),
        rows.iter().map(|&i| data.treatment()[i]).collect(),
        data.covariates().select_rows(rows.iter()),
        data.column_names().to_vec(),
    )
}
