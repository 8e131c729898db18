//! Binary linear classifiers on vectorized covariates.
//!
//! Both solvers take a `d × n` matrix whose columns are samples and labels
//! in `{-1, +1}`. When `d > n` the problem is first reduced to the
//! `n`-dimensional span of the samples with a thin QR factorization; both
//! objectives depend on the coefficients only through inner products with
//! the samples and through `‖b‖`, so the optimum lies in that span.

mod dwd;
mod svm;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::{require_both_classes, Label, Matrix};

pub use dwd::{dwd_fit, dwd_loss, dwd_objective, DwdConfig};
pub use svm::{svm_fit, svm_objective, SvmConfig};

/// How the intercept enters the score. DWD margins are `y(x⊺b + β)`,
/// hinge-loss margins are `y(x⊺b − β)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum InterceptConvention {
    Plus,
    Minus,
}

impl InterceptConvention {
    #[inline]
    pub fn apply(self, inner: f64, intercept: f64) -> f64 {
        match self {
            InterceptConvention::Plus => inner + intercept,
            InterceptConvention::Minus => inner - intercept,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SolverDiagnostics {
    pub iterations: usize,
    /// Relative optimality residual at exit (duality-gap bound for DWD,
    /// maximal KKT violation for SVM).
    pub residual: f64,
    pub converged: bool,
}

/// Coefficients and intercept of a fitted linear classifier.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearModel {
    pub coefficients: Vec<f64>,
    pub intercept: f64,
    pub convention: InterceptConvention,
    pub objective_value: f64,
    pub diagnostics: SolverDiagnostics,
}

impl LinearModel {
    pub fn dim(&self) -> usize {
        self.coefficients.len()
    }

    pub fn score(&self, x: &[f64]) -> Result<f64> {
        if x.len() != self.coefficients.len() {
            return Err(Error::Dimension(format!(
                "input has length {}, model expects {}",
                x.len(),
                self.coefficients.len()
            )));
        }
        Ok(self.score_unchecked(x))
    }

    pub(crate) fn score_unchecked(&self, x: &[f64]) -> f64 {
        let inner: f64 = self.coefficients.iter().zip(x).map(|(b, v)| b * v).sum();
        self.convention.apply(inner, self.intercept)
    }

    pub fn predict(&self, x: &[f64]) -> Result<Label> {
        self.score(x).map(sign_label)
    }

    pub fn norm(&self) -> f64 {
        self.coefficients.iter().map(|v| v * v).sum::<f64>().sqrt()
    }
}

/// Sign of a score with ties going to `+1`.
#[inline]
pub fn sign_label(score: f64) -> Label {
    if score >= 0.0 {
        1
    } else {
        -1
    }
}

/// `100·d²/D²`, the penalty used for a DWD fit on data whose median
/// between-class distance is `d`, relative to the reference distance `D`.
pub fn dwd_penalty_from_distance(distance: f64, reference: f64) -> Result<f64> {
    if !(distance > 0.0 && distance.is_finite()) || !(reference > 0.0 && reference.is_finite()) {
        return Err(Error::InvalidArgument(format!(
            "distances must be positive and finite, got d={distance}, D={reference}"
        )));
    }
    Ok(100.0 * distance * distance / (reference * reference))
}

/// Median of the Euclidean distances over all between-class pairs of
/// columns. Even counts average the two central order statistics.
pub fn median_pairwise_distance(x: &Matrix, labels: &[Label]) -> Result<f64> {
    check_inputs(x, labels)?;
    let pos: Vec<usize> = (0..labels.len()).filter(|&i| labels[i] == 1).collect();
    let neg: Vec<usize> = (0..labels.len()).filter(|&i| labels[i] == -1).collect();
    let mut dists = Vec::with_capacity(pos.len() * neg.len());
    for &i in &pos {
        let xi = x.column(i);
        for &j in &neg {
            dists.push((xi - x.column(j)).norm());
        }
    }
    Ok(median(&mut dists))
}

pub(crate) fn median(values: &mut [f64]) -> f64 {
    values.sort_by(|a, b| a.total_cmp(b));
    let len = values.len();
    if len % 2 == 1 {
        values[len / 2]
    } else {
        0.5 * (values[len / 2 - 1] + values[len / 2])
    }
}

pub(crate) fn check_inputs(x: &Matrix, labels: &[Label]) -> Result<()> {
    if x.ncols() != labels.len() {
        return Err(Error::Dimension(format!(
            "{} samples but {} labels",
            x.ncols(),
            labels.len()
        )));
    }
    if x.nrows() == 0 {
        return Err(Error::Dimension("covariate dimension is zero".into()));
    }
    if x.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("covariate matrix".into()));
    }
    require_both_classes(labels)?;
    Ok(())
}

/// Samples expressed in an orthonormal basis of their span.
pub(crate) struct Reduced {
    /// `d × k` basis, `None` when the original coordinates are kept.
    basis: Option<Matrix>,
    /// `k × n` coordinates.
    pub coords: Matrix,
}

impl Reduced {
    pub fn new(x: &Matrix) -> Reduced {
        let (d, n) = x.shape();
        if d <= n {
            return Reduced {
                basis: None,
                coords: x.clone(),
            };
        }
        let qr = x.clone().qr();
        Reduced {
            basis: Some(qr.q()),
            coords: qr.r(),
        }
    }

    pub fn lift(&self, b: &[f64]) -> Vec<f64> {
        match &self.basis {
            None => b.to_vec(),
            Some(q) => (q * nalgebra::DVector::from_column_slice(b))
                .as_slice()
                .to_vec(),
        }
    }
}
