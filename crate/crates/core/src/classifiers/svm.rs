//! Soft-margin linear SVM:
//! `minimize (1/n)·Σᵢ max(0, 1 − yᵢ(xᵢ⊺b − β)) + λ‖b‖²`.
//!
//! Solved through the dual `½α⊺Qα − 1⊺α`, `0 ≤ α ≤ 1/(2λn)`, `y⊺α = 0`,
//! with `Q = diag(y)·X⊺X·diag(y)`, by sequential minimal optimization using
//! second-order working-set selection. The primal solution is
//! `b = Σᵢ αᵢyᵢxᵢ` and `β` is the dual's threshold.

use nalgebra::{DMatrix, DVector};

use super::{check_inputs, InterceptConvention, LinearModel, SolverDiagnostics};
use crate::error::{Error, Result};
use crate::tensor::{Label, Matrix};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SvmConfig {
    /// Ridge penalty `λ`.
    pub lambda: f64,
    /// Stopping tolerance on the maximal KKT violation.
    pub tolerance: f64,
    pub max_iterations: usize,
}

impl SvmConfig {
    pub fn new(lambda: f64) -> Self {
        SvmConfig {
            lambda,
            ..Default::default()
        }
    }

    fn validate(&self) -> Result<()> {
        if !(self.lambda > 0.0 && self.lambda.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "SVM lambda must be positive, got {}",
                self.lambda
            )));
        }
        if !(self.tolerance > 0.0) || self.max_iterations == 0 {
            return Err(Error::InvalidArgument(
                "SVM tolerance and max_iterations must be positive".into(),
            ));
        }
        Ok(())
    }
}

impl Default for SvmConfig {
    fn default() -> Self {
        SvmConfig {
            lambda: 0.01,
            tolerance: 1e-9,
            max_iterations: 1_000_000,
        }
    }
}

/// Primal hinge-loss objective at `(b, β)`.
pub fn svm_objective(
    x: &Matrix,
    labels: &[Label],
    coefficients: &[f64],
    intercept: f64,
    lambda: f64,
) -> Result<f64> {
    if coefficients.len() != x.nrows() || labels.len() != x.ncols() {
        return Err(Error::Dimension(format!(
            "{}×{} data with {} coefficients and {} labels",
            x.nrows(),
            x.ncols(),
            coefficients.len(),
            labels.len()
        )));
    }
    let b = DVector::from_column_slice(coefficients);
    let n = labels.len() as f64;
    let hinge: f64 = x
        .column_iter()
        .zip(labels)
        .map(|(col, &y)| (1.0 - f64::from(y) * (col.dot(&b) - intercept)).max(0.0))
        .sum();
    Ok(hinge / n + lambda * b.norm_squared())
}

pub fn svm_fit(x: &Matrix, labels: &[Label], config: &SvmConfig) -> Result<LinearModel> {
    check_inputs(x, labels)?;
    config.validate()?;
    let n = labels.len();
    let y: Vec<f64> = labels.iter().map(|&v| f64::from(v)).collect();
    let gram = x.tr_mul(x);
    let q = DMatrix::from_fn(n, n, |i, j| y[i] * y[j] * gram[(i, j)]);
    let bound = 1.0 / (2.0 * config.lambda * n as f64);

    let smo = Smo::new(&q, &y, bound, config).run();

    let mut weights = DVector::zeros(n);
    for i in 0..n {
        weights[i] = smo.alpha[i] * y[i];
    }
    let b = x * &weights;
    let coefficients = b.as_slice().to_vec();
    let objective_value = svm_objective(x, labels, &coefficients, smo.rho, config.lambda)?;
    Ok(LinearModel {
        coefficients,
        intercept: smo.rho,
        convention: InterceptConvention::Minus,
        objective_value,
        diagnostics: SolverDiagnostics {
            iterations: smo.iterations,
            residual: smo.violation,
            converged: smo.converged,
        },
    })
}

struct SmoResult {
    alpha: Vec<f64>,
    rho: f64,
    iterations: usize,
    violation: f64,
    converged: bool,
}

struct Smo<'a> {
    q: &'a DMatrix<f64>,
    y: &'a [f64],
    bound: f64,
    config: &'a SvmConfig,
}

const TAU: f64 = 1e-12;

impl<'a> Smo<'a> {
    fn new(q: &'a DMatrix<f64>, y: &'a [f64], bound: f64, config: &'a SvmConfig) -> Self {
        Smo { q, y, bound, config }
    }

    fn in_up(&self, alpha: f64, y: f64) -> bool {
        (y > 0.0 && alpha < self.bound) || (y < 0.0 && alpha > 0.0)
    }

    fn in_low(&self, alpha: f64, y: f64) -> bool {
        (y > 0.0 && alpha > 0.0) || (y < 0.0 && alpha < self.bound)
    }

    fn run(&self) -> SmoResult {
        let n = self.y.len();
        let q = self.q;
        let y = self.y;
        let c = self.bound;
        let mut alpha = vec![0.0; n];
        let mut grad = vec![-1.0; n];
        let mut iterations = 0;
        let mut violation;
        let mut converged = false;

        loop {
            // Working set: i maximizes −y∇ over I_up, j by second-order gain.
            let mut gmax = f64::NEG_INFINITY;
            let mut i_sel = None;
            for t in 0..n {
                if self.in_up(alpha[t], y[t]) && -y[t] * grad[t] >= gmax {
                    gmax = -y[t] * grad[t];
                    i_sel = Some(t);
                }
            }
            let mut gmin = f64::INFINITY;
            let mut j_sel = None;
            let mut best_gain = f64::INFINITY;
            if let Some(i) = i_sel {
                for t in 0..n {
                    if !self.in_low(alpha[t], y[t]) {
                        continue;
                    }
                    let val = -y[t] * grad[t];
                    gmin = gmin.min(val);
                    let diff = gmax - val;
                    if diff > 0.0 {
                        let mut curv = q[(i, i)] + q[(t, t)] - 2.0 * y[i] * y[t] * q[(i, t)];
                        if curv <= 0.0 {
                            curv = TAU;
                        }
                        let gain = -(diff * diff) / curv;
                        if gain <= best_gain {
                            best_gain = gain;
                            j_sel = Some(t);
                        }
                    }
                }
            }
            violation = gmax - gmin;
            if violation < self.config.tolerance || j_sel.is_none() {
                converged = true;
                break;
            }
            if iterations >= self.config.max_iterations {
                break;
            }
            iterations += 1;
            let i = i_sel.unwrap();
            let j = j_sel.unwrap();

            let (old_i, old_j) = (alpha[i], alpha[j]);
            if y[i] != y[j] {
                let mut curv = q[(i, i)] + q[(j, j)] + 2.0 * q[(i, j)];
                if curv <= 0.0 {
                    curv = TAU;
                }
                let delta = (-grad[i] - grad[j]) / curv;
                let diff = alpha[i] - alpha[j];
                alpha[i] += delta;
                alpha[j] += delta;
                if diff > 0.0 {
                    if alpha[j] < 0.0 {
                        alpha[j] = 0.0;
                        alpha[i] = diff;
                    }
                } else if alpha[i] < 0.0 {
                    alpha[i] = 0.0;
                    alpha[j] = -diff;
                }
                if diff > 0.0 {
                    if alpha[i] > c {
                        alpha[i] = c;
                        alpha[j] = c - diff;
                    }
                } else if alpha[j] > c {
                    alpha[j] = c;
                    alpha[i] = c + diff;
                }
            } else {
                let mut curv = q[(i, i)] + q[(j, j)] - 2.0 * q[(i, j)];
                if curv <= 0.0 {
                    curv = TAU;
                }
                let delta = (grad[i] - grad[j]) / curv;
                let sum = alpha[i] + alpha[j];
                alpha[i] -= delta;
                alpha[j] += delta;
                if sum > c {
                    if alpha[i] > c {
                        alpha[i] = c;
                        alpha[j] = sum - c;
                    }
                } else if alpha[j] < 0.0 {
                    alpha[j] = 0.0;
                    alpha[i] = sum;
                }
                if sum > c {
                    if alpha[j] > c {
                        alpha[j] = c;
                        alpha[i] = sum - c;
                    }
                } else if alpha[i] < 0.0 {
                    alpha[i] = 0.0;
                    alpha[j] = sum;
                }
            }
            let (di, dj) = (alpha[i] - old_i, alpha[j] - old_j);
            for t in 0..n {
                grad[t] += q[(t, i)] * di + q[(t, j)] * dj;
            }
        }

        SmoResult {
            rho: self.threshold(&alpha, &grad),
            alpha,
            iterations,
            violation,
            converged,
        }
    }

    fn threshold(&self, alpha: &[f64], grad: &[f64]) -> f64 {
        let mut upper = f64::INFINITY;
        let mut lower = f64::NEG_INFINITY;
        let mut free_sum = 0.0;
        let mut free = 0usize;
        for t in 0..alpha.len() {
            let yg = self.y[t] * grad[t];
            if alpha[t] >= self.bound {
                if self.y[t] < 0.0 {
                    upper = upper.min(yg);
                } else {
                    lower = lower.max(yg);
                }
            } else if alpha[t] <= 0.0 {
                if self.y[t] > 0.0 {
                    upper = upper.min(yg);
                } else {
                    lower = lower.max(yg);
                }
            } else {
                free += 1;
                free_sum += yg;
            }
        }
        if free > 0 {
            free_sum / free as f64
        } else {
            0.5 * (upper + lower)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn one_dimensional_margin() {
        let x = Matrix::from_row_slice(1, 2, &[-2.0, 2.0]);
        let fit = svm_fit(&x, &[-1, 1], &SvmConfig::new(1e-3)).unwrap();
        assert_relative_eq!(fit.coefficients[0], 0.5, epsilon = 1e-6);
        assert!(fit.intercept.abs() < 1e-6);
        assert_relative_eq!(fit.objective_value, 1e-3 * 0.25, epsilon = 1e-9);
    }

    #[test]
    fn duplicated_samples_same_optimum() {
        let x = Matrix::from_row_slice(2, 5, &[0.1, 1.2, -0.4, 2.0, 0.3, 1.0, -0.5, 0.2, 0.7, -1.1]);
        let y = [1, -1, 1, -1, -1];
        let cfg = SvmConfig::new(0.05);
        let a = svm_fit(&x, &y, &cfg).unwrap();
        let xx = Matrix::from_fn(2, 10, |r, c| x[(r, c % 5)]);
        let yy: Vec<Label> = (0..10).map(|i| y[i % 5]).collect();
        let b = svm_fit(&xx, &yy, &cfg).unwrap();
        assert_relative_eq!(a.objective_value, b.objective_value, max_relative = 1e-8);
        for (p, q) in a.coefficients.iter().zip(&b.coefficients) {
            assert_relative_eq!(*p, *q, epsilon = 1e-6);
        }
    }

    #[test]
    fn rejects_non_positive_lambda() {
        let x = Matrix::from_row_slice(1, 2, &[-2.0, 2.0]);
        assert!(svm_fit(&x, &[-1, 1], &SvmConfig::new(0.0)).is_err());
        assert!(matches!(
            svm_fit(&x, &[1, 1], &SvmConfig::new(0.1)),
            Err(Error::SingleClass(_))
        ));
    }
}
