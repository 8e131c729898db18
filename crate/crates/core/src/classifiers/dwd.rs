//! Distance weighted discrimination.
//!
//! Solves
//!
//! ```text
//! minimize   Σᵢ 1/rᵢ + C·Σᵢ ξᵢ
//! subject to rᵢ = yᵢ(xᵢ⊺b + β) + ξᵢ > 0,  ξ ≥ 0,  ‖b‖ ≤ 1
//! ```
//!
//! with a primal log-barrier method on `ξ ≥ 0` and `‖b‖ ≤ 1`. The `1/r`
//! terms keep `r` positive on their own. Newton systems are reduced to the
//! `(b, β)` block by eliminating the diagonal slack block. At barrier weight
//! `μ` a centered point is within `(n + 1)·μ` of the optimum.
//!
//! For fixed `(b, β)` the optimal slack is `ξᵢ = max(0, C^{-1/2} − uᵢ)` with
//! `uᵢ = yᵢ(xᵢ⊺b + β)`, which turns the program into `Σᵢ φ(uᵢ)` with the
//! convex loss `φ(u) = 1/u` for `u ≥ C^{-1/2}` and `2√C − C·u` below.

use nalgebra::{DMatrix, DVector};

use super::{check_inputs, InterceptConvention, LinearModel, Reduced, SolverDiagnostics};
use crate::error::{Error, Result};
use crate::tensor::{Label, Matrix};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DwdConfig {
    /// Slack penalty `C`.
    pub penalty: f64,
    /// Relative optimality tolerance.
    pub tolerance: f64,
    /// Cap on Newton steps across all barrier stages.
    pub max_iterations: usize,
}

impl DwdConfig {
    pub fn new(penalty: f64) -> Self {
        DwdConfig {
            penalty,
            ..Default::default()
        }
    }

    pub fn with_tolerance(mut self, tolerance: f64) -> Self {
        self.tolerance = tolerance;
        self
    }

    fn validate(&self) -> Result<()> {
        if !(self.penalty > 0.0 && self.penalty.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "DWD penalty must be positive, got {}",
                self.penalty
            )));
        }
        if !(self.tolerance > 0.0) {
            return Err(Error::InvalidArgument(format!(
                "DWD tolerance must be positive, got {}",
                self.tolerance
            )));
        }
        if self.max_iterations == 0 {
            return Err(Error::InvalidArgument("max_iterations must be positive".into()));
        }
        Ok(())
    }
}

impl Default for DwdConfig {
    fn default() -> Self {
        DwdConfig {
            penalty: 100.0,
            tolerance: 1e-6,
            max_iterations: 200,
        }
    }
}

/// Per-sample DWD loss after minimizing out the slack.
#[inline]
pub fn dwd_loss(margin: f64, penalty: f64) -> f64 {
    let root = penalty.sqrt();
    if margin * root >= 1.0 {
        1.0 / margin
    } else {
        2.0 * root - penalty * margin
    }
}

/// DWD objective at `(b, β)` with the optimal slack for each sample.
pub fn dwd_objective(
    x: &Matrix,
    labels: &[Label],
    coefficients: &[f64],
    intercept: f64,
    penalty: f64,
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
    Ok(x.column_iter()
        .zip(labels)
        .map(|(col, &y)| dwd_loss(f64::from(y) * (col.dot(&b) + intercept), penalty))
        .sum())
}

pub fn dwd_fit(x: &Matrix, labels: &[Label], config: &DwdConfig) -> Result<LinearModel> {
    check_inputs(x, labels)?;
    config.validate()?;
    let reduced = Reduced::new(x);
    let sol = BarrierSolver::new(&reduced.coords, labels, config).solve();
    let coefficients = reduced.lift(&sol.b);
    Ok(LinearModel {
        coefficients,
        intercept: sol.beta,
        convention: InterceptConvention::Plus,
        objective_value: sol.objective,
        diagnostics: sol.diagnostics,
    })
}

struct Solution {
    b: Vec<f64>,
    beta: f64,
    objective: f64,
    diagnostics: SolverDiagnostics,
}

struct BarrierSolver<'a> {
    /// `n × (k+1)`, row `i` is `yᵢ·(zᵢ⊺, 1)`.
    a: DMatrix<f64>,
    k: usize,
    n: usize,
    config: &'a DwdConfig,
}

struct Point {
    theta: DVector<f64>,
    xi: DVector<f64>,
}

impl<'a> BarrierSolver<'a> {
    fn new(z: &Matrix, labels: &[Label], config: &'a DwdConfig) -> Self {
        let (k, n) = z.shape();
        let mut a = DMatrix::zeros(n, k + 1);
        for i in 0..n {
            let y = f64::from(labels[i]);
            for r in 0..k {
                a[(i, r)] = y * z[(r, i)];
            }
            a[(i, k)] = y;
        }
        BarrierSolver { a, k, n, config }
    }

    fn norm_sq_b(&self, theta: &DVector<f64>) -> f64 {
        theta.rows(0, self.k).norm_squared()
    }

    /// Barrier objective, `None` outside the domain.
    fn barrier_value(&self, pt: &Point, mu: f64) -> Option<f64> {
        let s = self.norm_sq_b(&pt.theta);
        if s >= 1.0 || pt.xi.iter().any(|&v| v <= 0.0) {
            return None;
        }
        let u = &self.a * &pt.theta;
        let c = self.config.penalty;
        let mut total = -mu * (1.0 - s).ln();
        for i in 0..self.n {
            let r = u[i] + pt.xi[i];
            if r <= 0.0 {
                return None;
            }
            total += 1.0 / r + c * pt.xi[i] - mu * pt.xi[i].ln();
        }
        Some(total)
    }

    fn primal_value(&self, pt: &Point) -> f64 {
        let u = &self.a * &pt.theta;
        let c = self.config.penalty;
        (0..self.n).map(|i| 1.0 / (u[i] + pt.xi[i]) + c * pt.xi[i]).sum()
    }

    /// Newton direction and decrement `λ² = −∇F⊺Δ`.
    fn newton_step(&self, pt: &Point, mu: f64) -> (DVector<f64>, DVector<f64>, f64) {
        let (k, n) = (self.k, self.n);
        let c = self.config.penalty;
        let u = &self.a * &pt.theta;
        let s = self.norm_sq_b(&pt.theta);
        let slack_ball = 1.0 - s;

        let mut grad_theta = DVector::zeros(k + 1);
        let mut grad_xi = DVector::zeros(n);
        let mut weight = DVector::zeros(n);
        let mut ratio = DVector::zeros(n);
        let mut curv = DVector::zeros(n);
        let mut hess_r = DVector::zeros(n);
        for i in 0..n {
            let r = u[i] + pt.xi[i];
            let inv_r2 = 1.0 / (r * r);
            let d = 2.0 * inv_r2 / r;
            let mm = mu / (pt.xi[i] * pt.xi[i]);
            grad_xi[i] = -inv_r2 + c - mu / pt.xi[i];
            grad_theta.axpy(-inv_r2, &self.a.row(i).transpose(), 1.0);
            weight[i] = d * mm / (d + mm);
            ratio[i] = d / (d + mm);
            curv[i] = d + mm;
            hess_r[i] = d;
        }
        for r in 0..k {
            grad_theta[r] += 2.0 * mu * pt.theta[r] / slack_ball;
        }

        // Schur complement on the (b, β) block.
        let mut scaled = self.a.clone();
        for i in 0..n {
            scaled.row_mut(i).scale_mut(weight[i]);
        }
        let mut system = self.a.tr_mul(&scaled);
        let diag = 2.0 * mu / slack_ball;
        let outer = 4.0 * mu / (slack_ball * slack_ball);
        for r in 0..k {
            system[(r, r)] += diag;
            for q in 0..k {
                system[(r, q)] += outer * pt.theta[r] * pt.theta[q];
            }
        }
        let weighted_grad_xi = grad_xi.component_mul(&ratio);
        let rhs = -&grad_theta + self.a.tr_mul(&weighted_grad_xi);

        let d_theta = solve_spd(system, &rhs);
        let a_dtheta = &self.a * &d_theta;
        let mut d_xi = DVector::zeros(n);
        for i in 0..n {
            d_xi[i] = -(grad_xi[i] + hess_r[i] * a_dtheta[i]) / curv[i];
        }
        let decrement = -(grad_theta.dot(&d_theta) + grad_xi.dot(&d_xi));
        (d_theta, d_xi, decrement)
    }

    fn solve(&self) -> Solution {
        let c = self.config.penalty;
        let nu = (self.n + 1) as f64;
        let start_slack = 1.0 / c.sqrt();
        let mut pt = Point {
            theta: DVector::zeros(self.k + 1),
            xi: DVector::from_element(self.n, start_slack),
        };
        let mut mu = self.primal_value(&pt) / nu;
        let mut iterations = 0;
        let mut converged = false;
        let shrink = 10.0;

        'outer: loop {
            // Center for the current μ.
            loop {
                if iterations >= self.config.max_iterations {
                    break 'outer;
                }
                let (d_theta, d_xi, decrement) = self.newton_step(&pt, mu);
                if !(decrement.is_finite()) {
                    break 'outer;
                }
                if decrement <= 1e-3 * nu * mu {
                    break;
                }
                iterations += 1;
                let current = self
                    .barrier_value(&pt, mu)
                    .expect("iterate stays inside the domain");
                let mut step = 1.0;
                let mut accepted = false;
                while step > 1e-14 {
                    let trial = Point {
                        theta: &pt.theta + step * &d_theta,
                        xi: &pt.xi + step * &d_xi,
                    };
                    if let Some(val) = self.barrier_value(&trial, mu) {
                        if val <= current - 0.01 * step * decrement {
                            pt = trial;
                            accepted = true;
                            break;
                        }
                    }
                    step *= 0.5;
                }
                if !accepted {
                    // No further progress representable at this μ.
                    break;
                }
            }
            let gap = nu * mu;
            let objective = self.primal_value(&pt);
            if gap <= self.config.tolerance * objective.max(f64::MIN_POSITIVE) {
                converged = true;
                break;
            }
            mu /= shrink;
        }

        let b: Vec<f64> = pt.theta.rows(0, self.k).iter().copied().collect();
        let beta = pt.theta[self.k];
        // Optimal slack for the final (b, β).
        let u = &self.a * &pt.theta;
        let objective: f64 = u.iter().map(|&m| dwd_loss(m, c)).sum();
        Solution {
            b,
            beta,
            objective,
            diagnostics: SolverDiagnostics {
                iterations,
                residual: nu * mu / objective,
                converged,
            },
        }
    }
}

/// Solves `S x = rhs` for symmetric positive definite `S`, falling back to
/// LU when Cholesky fails numerically.
fn solve_spd(system: DMatrix<f64>, rhs: &DVector<f64>) -> DVector<f64> {
    if let Some(chol) = system.clone().cholesky() {
        return chol.solve(rhs);
    }
    system
        .lu()
        .solve(rhs)
        .unwrap_or_else(|| DVector::zeros(rhs.len()))
}
