use nalgebra::{DMatrix, DVector};

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::hermite::SieveBasis;
use crate::linalg::{expit, logistic_regression, lstsq, newton_direction};

use super::objective::Objective;
use super::select::select_k;
use super::{Family, FitOptions, IndexParameter, KPolicy, SieveCoefficients, SieveFit};

const MAX_HALVINGS: usize = 30;

/// Fits the `family` sieve model of order `k` to `data`.
pub fn fit(data: &Dataset, family: Family, k: usize, options: &FitOptions) -> Result<SieveFit> {
    if k == 0 {
        return Err(Error::Precondition("truncation order k must be at least 1".into()));
    }
    if data.n() < data.p() + k {
        return Err(Error::Precondition(format!(
            "{} observations are too few for {} covariates and k = {k}",
            data.n(),
            data.p()
        )));
    }
    if let Some(col) = data.constant_covariate() {
        return Err(Error::ConstantCovariate(col.to_string()));
    }
    if !(options.tolerance > 0.0) || options.max_iterations == 0 {
        return Err(Error::Precondition(
            "tolerance must be positive and max_iterations at least 1".into(),
        ));
    }
    let objective = Objective::new(data, family, k, options.clamp)?;
    Fitter::new(&objective, options).run()
}

/// Resolves the order from `options.k` (cross-validating when it is a grid)
/// and fits on the full data.
pub fn fit_with_policy(data: &Dataset, family: Family, options: &FitOptions) -> Result<SieveFit> {
    match &options.k {
        KPolicy::Fixed(k) => fit(data, family, *k, options),
        KPolicy::Grid(grid) => {
            let selection = select_k(data, family, grid, options.folds, options)?;
            let mut model = fit(data, family, selection.k, options)?;
            model.warnings.extend(selection.warnings.iter().cloned());
            model.selection = Some(selection);
            Ok(model)
        }
    }
}

/// Fitted regression function at the rows of `x`: `g(X' gamma)` for the
/// Gaussian family, `expit(g(X' beta))` for the logistic family.
pub fn predict(model: &SieveFit, x: &DMatrix<f64>) -> Result<Vec<f64>> {
    let theta = model.index.as_slice();
    if x.ncols() != theta.len() {
        return Err(Error::DimensionMismatch {
            what: "prediction covariate columns",
            expected: theta.len(),
            got: x.ncols(),
        });
    }
    let u: Vec<f64> = x
        .row_iter()
        .map(|row| row.iter().zip(theta).map(|(a, b)| a * b).sum())
        .collect();
    let h = SieveBasis::new(model.order)?.design_matrix(&u)?;
    let eta = h * DVector::from_column_slice(model.coefficients.values());
    Ok(match model.family {
        Family::Gaussian => eta.iter().copied().collect(),
        Family::Logistic => {
            let clamp = model.clamp;
            eta.iter().map(|&e| expit(e.clamp(-clamp, clamp))).collect()
        }
    })
}

struct Fitter<'o, 'a> {
    objective: &'o Objective<'a>,
    options: &'o FitOptions,
    warnings: Vec<String>,
    bound_hit: bool,
}

impl<'o, 'a> Fitter<'o, 'a> {
    fn new(objective: &'o Objective<'a>, options: &'o FitOptions) -> Self {
        Self {
            objective,
            options,
            warnings: Vec::new(),
            bound_hit: false,
        }
    }

    fn run(mut self) -> Result<SieveFit> {
        let obj = self.objective;
        let mut theta = self.initial_index()?;
        let design = obj.basis().design_matrix(&obj.index_values(&theta))?;
        check_design_rank(&design, obj.order())?;
        let mut coef = self.solve_coefficients(&design, None)?;
        let mut loss = obj.evaluate(&theta, &coef)?;
        let mut trace = vec![loss];
        let mut converged = false;
        let mut iterations = 0;

        for it in 1..=self.options.max_iterations {
            iterations = it;
            let stepped = self.index_step(&mut theta, &mut coef, loss)?;
            let moved = stepped.is_some();
            let stepped_loss = stepped.unwrap_or(loss);
            let design = obj.basis().design_matrix(&obj.index_values(&theta))?;
            let solved = self.solve_coefficients(&design, Some(&coef))?;
            let solved_loss = obj.evaluate(&theta, &solved)?;
            // Round-off in the inner solve may land a hair above the
            // current point; keep the current coefficients then.
            let new_loss = if solved_loss <= stepped_loss || self.bound_hit {
                coef = solved;
                solved_loss
            } else {
                stepped_loss
            };
            trace.push(new_loss);
            let decrease = (loss - new_loss) / loss.abs().max(f64::EPSILON);
            loss = new_loss;
            if !moved || decrease < self.options.tolerance {
                converged = true;
                break;
            }
        }
        if !converged {
            self.warnings.push(format!(
                "{:?} sieve fit (k = {}) did not converge within {} iterations",
                obj.family(),
                obj.order(),
                self.options.max_iterations
            ));
        }
        if !loss.is_finite() {
            return Err(Error::Domain("sieve fit produced a non-finite loss".into()));
        }
        let (index, flipped) = IndexParameter::normalized(&theta)?;
        if flipped {
            flip_odd(&mut coef);
        }
        Ok(SieveFit {
            index,
            coefficients: SieveCoefficients {
                values: coef,
                bound: self.options.coefficient_bound,
            },
            family: obj.family(),
            order: obj.order(),
            final_loss: loss,
            iterations,
            converged,
            loss_trace: trace,
            warnings: self.warnings,
            clamp: self.options.clamp,
            selection: None,
        })
    }

    /// Normalized slope vector of a plain GLM of the target on `[1, X]`.
    fn initial_index(&self) -> Result<Vec<f64>> {
        let obj = self.objective;
        let x = obj.x();
        let slopes = match obj.family() {
            Family::Logistic => match logistic_regression(x, obj.target(), obj.clamp()) {
                Ok(f) if f.slopes.iter().all(|v| v.is_finite()) => f.slopes,
                _ => least_squares_slopes(x, obj.target())?,
            },
            Family::Gaussian => least_squares_slopes(x, obj.target())?,
        };
        match IndexParameter::new(&slopes) {
            Ok(idx) => Ok(idx.as_slice().to_vec()),
            Err(_) => {
                let mut e1 = vec![0.0; x.ncols()];
                e1[0] = 1.0;
                Ok(e1)
            }
        }
    }

    /// Minimizes the loss over `C` with the index held fixed.
    fn solve_coefficients(&mut self, design: &DMatrix<f64>, warm: Option<&[f64]>) -> Result<Vec<f64>> {
        let obj = self.objective;
        let mut coef = match obj.family() {
            Family::Gaussian => {
                let y = DVector::from_column_slice(obj.target());
                lstsq(design, &y, "sieve basis design")?.iter().copied().collect()
            }
            Family::Logistic => self.newton_coefficients(design, warm)?,
        };
        let norm = coef.iter().map(|v| v * v).sum::<f64>().sqrt();
        let bound = self.options.coefficient_bound;
        if norm > bound {
            coef.iter_mut().for_each(|c| *c *= bound / norm);
            if !self.bound_hit {
                self.warnings.push(format!(
                    "sieve coefficient norm {norm:.6e} reached the bound {bound:e}; rescaled"
                ));
            }
            self.bound_hit = true;
        }
        Ok(coef)
    }

    fn newton_coefficients(&self, design: &DMatrix<f64>, warm: Option<&[f64]>) -> Result<Vec<f64>> {
        let obj = self.objective;
        let k = design.ncols();
        let mut c = match warm {
            Some(w) => DVector::from_column_slice(w),
            None => DVector::zeros(k),
        };
        let mut eta = design * &c;
        let mut loss = obj.loss_of_eta(&eta);
        for _ in 0..100 {
            let r = DVector::from_vec(obj.eta_derivative(&eta));
            let grad = design.tr_mul(&r);
            let w = obj.eta_curvature(&eta);
            let n = obj.n() as f64;
            let mut weighted = design.clone();
            for (i, mut row) in weighted.row_iter_mut().enumerate() {
                row *= w[i] / n;
            }
            let hess = design.tr_mul(&weighted);
            let step = newton_direction(hess, &grad)?;
            let mut t = 1.0;
            let mut accepted = false;
            for _ in 0..MAX_HALVINGS {
                let cand = &c - &step * t;
                let cand_eta = design * &cand;
                let cand_loss = obj.loss_of_eta(&cand_eta);
                if cand_loss < loss {
                    let decrease = loss - cand_loss;
                    c = cand;
                    eta = cand_eta;
                    loss = cand_loss;
                    accepted = decrease > 1e-14 * loss.abs().max(f64::EPSILON);
                    break;
                }
                t *= 0.5;
            }
            if !accepted {
                break;
            }
        }
        Ok(c.iter().copied().collect())
    }

    /// One projected index step with backtracking. Returns the new loss if
    /// the index moved.
    fn index_step(&self, theta: &mut Vec<f64>, coef: &mut Vec<f64>, loss: f64) -> Result<Option<f64>> {
        let obj = self.objective;
        let x = obj.x();
        let p = x.ncols();
        let u = obj.index_values(theta);
        let (h, dh) = obj.basis().design_with_derivative(&u)?;
        let c = DVector::from_column_slice(coef);
        let eta = &h * &c;
        let slope = &dh * &c;
        let r = obj.eta_derivative(&eta);
        let w = obj.eta_curvature(&eta);
        let n = obj.n() as f64;

        let mut grad = DVector::zeros(p);
        let mut curvature = DMatrix::zeros(p, p);
        for i in 0..obj.n() {
            let row = x.row(i);
            let s = slope[i];
            let g = r[i] * s;
            let ws = w[i] * s * s / n;
            for a in 0..p {
                grad[a] += g * row[a];
                for b in 0..=a {
                    curvature[(a, b)] += ws * row[a] * row[b];
                }
            }
        }
        for a in 0..p {
            for b in 0..a {
                curvature[(b, a)] = curvature[(a, b)];
            }
        }
        let theta_v = DVector::from_column_slice(theta);
        // Tangent-plane component of the gradient; the radial part only
        // rescales theta and is removed by the projection.
        let tangent_grad = &grad - &theta_v * theta_v.dot(&grad);
        if tangent_grad.norm() <= 1e-15 * (1.0 + loss.abs()) {
            return Ok(None);
        }
        let mut direction = match newton_direction(curvature, &tangent_grad) {
            Ok(d) => -d,
            Err(_) => -tangent_grad.clone(),
        };
        direction -= &theta_v * theta_v.dot(&direction);
        if direction.dot(&tangent_grad) >= 0.0 {
            direction = -tangent_grad;
        }
        // Steps longer than a quarter turn are never useful on the sphere.
        let len = direction.norm();
        if len > 1.0 {
            direction /= len;
        }

        let mut t = 1.0;
        for _ in 0..MAX_HALVINGS {
            let cand: Vec<f64> = theta_v.iter().zip(direction.iter()).map(|(a, d)| a + t * d).collect();
            let (idx, flipped) = IndexParameter::normalized(&cand)?;
            let mut cand_coef = coef.clone();
            if flipped {
                flip_odd(&mut cand_coef);
            }
            let cand_loss = obj.evaluate(idx.as_slice(), &cand_coef)?;
            if cand_loss < loss {
                *theta = idx.as_slice().to_vec();
                *coef = cand_coef;
                return Ok(Some(cand_loss));
            }
            t *= 0.5;
        }
        Ok(None)
    }
}

/// `h_m(-w) = (-1)^m h_m(w)`: negating odd coefficients compensates a sign flip of the index.
fn flip_odd(coef: &mut [f64]) {
    coef.iter_mut().skip(1).step_by(2).for_each(|c| *c = -*c);
}

fn least_squares_slopes(x: &DMatrix<f64>, target: &[f64]) -> Result<Vec<f64>> {
    let design = DMatrix::from_fn(x.nrows(), x.ncols() + 1, |i, j| if j == 0 { 1.0 } else { x[(i, j - 1)] });
    let coef = lstsq(&design, &DVector::from_column_slice(target), "initial linear fit")?;
    Ok(coef.iter().skip(1).copied().collect())
}

fn check_design_rank(design: &DMatrix<f64>, k: usize) -> Result<()> {
    let sv = design.singular_values();
    let largest = sv.max();
    let smallest = sv.min();
    let tol = f64::EPSILON * design.nrows().max(design.ncols()) as f64 * largest;
    if design.nrows() < k || smallest <= tol {
        return Err(Error::RankDeficient(format!(
            "Hermite basis of order {k} is rank deficient at the index values \
             (singular values from {largest:e} down to {smallest:e}); \
             the index takes too few distinct values for this k"
        )));
    }
    Ok(())
}
