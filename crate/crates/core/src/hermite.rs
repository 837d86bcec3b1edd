//! Orthonormal Hermite basis under the weight `exp(-w^2/2)`.
//!
//! The basis functions are `h_m(w) = He_m(w) / sqrt(sqrt(2 pi) m!)`, where
//! `He_m` are the probabilists' Hermite polynomials. They are evaluated with
//! the normalized three-term recurrence
//!
//! ```text
//! h_0 = (2 pi)^(-1/4)
//! h_1 = w h_0
//! h_{m+1} = (w h_m - sqrt(m) h_{m-1}) / sqrt(m + 1)
//! ```
//!
//! which never forms `m!` and stays well scaled for large orders.

use nalgebra::DMatrix;

use crate::error::{Error, Result};

/// `(2 pi)^(-1/4)`, the value of `h_0`.
pub const H0: f64 = 0.631_618_777_746_065_1;

/// First `order` orthonormal Hermite functions `h_0..h_{order-1}`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SieveBasis {
    order: usize,
}

impl SieveBasis {
    pub fn new(order: usize) -> Result<Self> {
        if order == 0 {
            return Err(Error::Precondition("basis order must be at least 1".into()));
        }
        Ok(Self { order })
    }

    pub fn order(&self) -> usize {
        self.order
    }

    /// `(h_0(w), ..., h_{k-1}(w))`.
    pub fn eval(&self, w: f64) -> Result<Vec<f64>> {
        check_finite(w)?;
        let mut out = vec![0.0; self.order];
        fill_values(w, &mut out);
        Ok(out)
    }

    /// `(h_0'(w), ..., h_{k-1}'(w))` via `h_m' = sqrt(m) h_{m-1}`.
    pub fn eval_derivative(&self, w: f64) -> Result<Vec<f64>> {
        check_finite(w)?;
        let mut values = vec![0.0; self.order];
        let mut out = vec![0.0; self.order];
        fill_values(w, &mut values);
        fill_derivatives(&values, &mut out);
        Ok(out)
    }

    /// Basis design matrix with one row per point: entry `(i, m)` is `h_m(points[i])`.
    pub fn design_matrix(&self, points: &[f64]) -> Result<DMatrix<f64>> {
        if let Some(&w) = points.iter().find(|w| !w.is_finite()) {
            return Err(Error::Domain(format!("basis evaluated at non-finite point {w}")));
        }
        let mut row = vec![0.0; self.order];
        let mut design = DMatrix::zeros(points.len(), self.order);
        for (i, &w) in points.iter().enumerate() {
            fill_values(w, &mut row);
            for (m, v) in row.iter().enumerate() {
                design[(i, m)] = *v;
            }
        }
        Ok(design)
    }

    /// Value and derivative design matrices for the same points.
    pub fn design_with_derivative(&self, points: &[f64]) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
        if let Some(&w) = points.iter().find(|w| !w.is_finite()) {
            return Err(Error::Domain(format!("basis evaluated at non-finite point {w}")));
        }
        let mut row = vec![0.0; self.order];
        let mut drow = vec![0.0; self.order];
        let mut values = DMatrix::zeros(points.len(), self.order);
        let mut derivs = DMatrix::zeros(points.len(), self.order);
        for (i, &w) in points.iter().enumerate() {
            fill_values(w, &mut row);
            fill_derivatives(&row, &mut drow);
            for m in 0..self.order {
                values[(i, m)] = row[m];
                derivs[(i, m)] = drow[m];
            }
        }
        Ok((values, derivs))
    }

    /// Largest deviation of the quadrature Gram matrix `int h_m h_n exp(-w^2/2) dw`
    /// from the identity, using `nodes`-point Gauss-Hermite quadrature.
    pub fn orthonormality_defect(&self, nodes: usize) -> Result<f64> {
        if nodes < 2 * self.order {
            return Err(Error::Precondition(format!(
                "{nodes} quadrature nodes cannot verify order {}; need at least {}",
                self.order,
                2 * self.order
            )));
        }
        let rule = GaussHermite::new(nodes)?;
        let k = self.order;
        let mut gram = vec![0.0; k * k];
        let mut row = vec![0.0; k];
        for (&w, &t) in rule.scaled_weights().iter().zip(rule.scaled_nodes().iter()) {
            fill_values(t, &mut row);
            for m in 0..k {
                for n in 0..k {
                    gram[m * k + n] += w * row[m] * row[n];
                }
            }
        }
        let mut defect: f64 = 0.0;
        for m in 0..k {
            for n in 0..k {
                let target = if m == n { 1.0 } else { 0.0 };
                defect = defect.max((gram[m * k + n] - target).abs());
            }
        }
        Ok(defect)
    }
}

fn check_finite(w: f64) -> Result<()> {
    if w.is_finite() {
        Ok(())
    } else {
        Err(Error::Domain(format!("basis evaluated at non-finite point {w}")))
    }
}

/// Fills `out` with `h_0(w)..h_{len-1}(w)`. Caller guarantees `w` is finite.
pub(crate) fn fill_values(w: f64, out: &mut [f64]) {
    let k = out.len();
    if k == 0 {
        return;
    }
    out[0] = H0;
    if k == 1 {
        return;
    }
    out[1] = w * H0;
    for m in 1..k - 1 {
        let mf = m as f64;
        out[m + 1] = (w * out[m] - mf.sqrt() * out[m - 1]) / (mf + 1.0).sqrt();
    }
}

pub(crate) fn fill_derivatives(values: &[f64], out: &mut [f64]) {
    if out.is_empty() {
        return;
    }
    out[0] = 0.0;
    for m in 1..out.len() {
        out[m] = (m as f64).sqrt() * values[m - 1];
    }
}

/// Gauss-Hermite rule for the physicists' weight `exp(-t^2)`.
#[derive(Debug, Clone)]
pub struct GaussHermite {
    nodes: Vec<f64>,
    weights: Vec<f64>,
}

impl GaussHermite {
    /// Computes an `n`-point rule by Newton iteration on the orthonormal
    /// Hermite recurrence (roots located from the largest downward).
    pub fn new(n: usize) -> Result<Self> {
        if n == 0 {
            return Err(Error::Precondition("quadrature needs at least one node".into()));
        }
        const PI_M4: f64 = 0.751_125_544_464_942_5; // pi^(-1/4)
        let nf = n as f64;
        let mut nodes = vec![0.0; n];
        let mut weights = vec![0.0; n];
        let half = n.div_ceil(2);
        let mut z: f64 = 0.0;
        for i in 0..half {
            z = match i {
                0 => (2.0 * nf + 1.0).sqrt() - 1.855_75 * (2.0 * nf + 1.0).powf(-0.166_67),
                1 => z - 1.14 * nf.powf(0.426) / z,
                2 => 1.86 * z - 0.86 * nodes[0],
                3 => 1.91 * z - 0.91 * nodes[1],
                _ => 2.0 * z - nodes[i - 2],
            };
            let mut pp = 0.0;
            for _ in 0..100 {
                let mut p1 = PI_M4;
                let mut p2 = 0.0;
                for j in 0..n {
                    let p3 = p2;
                    p2 = p1;
                    let jf = j as f64;
                    p1 = z * (2.0 / (jf + 1.0)).sqrt() * p2 - (jf / (jf + 1.0)).sqrt() * p3;
                }
                pp = (2.0 * nf).sqrt() * p2;
                let z1 = z;
                z = z1 - p1 / pp;
                if (z - z1).abs() <= 1e-15 * z.abs().max(1.0) {
                    break;
                }
            }
            nodes[i] = z;
            nodes[n - 1 - i] = -z;
            weights[i] = 2.0 / (pp * pp);
            weights[n - 1 - i] = weights[i];
        }
        Ok(Self { nodes, weights })
    }

    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// Nodes for the weight `exp(-w^2/2)`: `w = sqrt(2) t`.
    pub fn scaled_nodes(&self) -> Vec<f64> {
        self.nodes.iter().map(|t| std::f64::consts::SQRT_2 * t).collect()
    }

    /// Weights for the weight `exp(-w^2/2)`: each multiplied by `sqrt(2)`.
    pub fn scaled_weights(&self) -> Vec<f64> {
        self.weights.iter().map(|w| std::f64::consts::SQRT_2 * w).collect()
    }

    /// `int f(w) exp(-w^2/2) dw`.
    pub fn integrate_half_weight<F: Fn(f64) -> f64>(&self, f: F) -> f64 {
        self.nodes
            .iter()
            .zip(&self.weights)
            .map(|(&t, &w)| std::f64::consts::SQRT_2 * w * f(std::f64::consts::SQRT_2 * t))
            .sum()
    }
}
