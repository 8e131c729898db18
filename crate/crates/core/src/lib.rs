//! Low-rank multi-way linear classification.
//!
//! Samples are `p × m` arrays (for example metabolites × brain regions or
//! genes × time points). A linear classifier on such data has a `p × m`
//! coefficient matrix `B`; this crate fits `B` either unrestricted (the
//! "full" model on vectorized samples) or constrained to rank `r`,
//! `B = Σ_z w_z v_z⊺`, by alternating convex search: with the dim₂ factors
//! fixed the problem is an ordinary linear classification in the dim₁
//! weights, and vice versa. Distance weighted discrimination and the
//! soft-margin SVM are available as inner solvers.
//!
//! Modules:
//! - [`tensor`]: three-way arrays, mode products, vectorization, thin SVD.
//! - [`classifiers`]: DWD and SVM on vectorized covariates.
//! - [`multiway`]: full, rank-1 and rank-r multi-way fits.
//! - [`simulation`]: Gaussian generative scenarios, Bayes rule, replicate studies.
//! - [`evaluation`]: cross-validation, t-statistics, bootstrap intervals, rank selection.
//! - [`io`]: long-format CSV ingestion and JSON model files.
//! - [`cli`]: the `mwclass` command-line front end.

pub mod classifiers;
pub mod cli;
pub mod error;
pub mod evaluation;
pub mod io;
pub mod multiway;
pub mod rng;
pub mod simulation;
pub mod tensor;

pub use classifiers::{
    dwd_fit, dwd_penalty_from_distance, median_pairwise_distance, svm_fit, DwdConfig,
    LinearModel, SvmConfig,
};
pub use error::{Error, Result};
pub use multiway::{fit, FitOptions, MultiwayModel, PenaltyRule, Rank, Solver};
pub use tensor::{kron, thin_svd, unvectorize, vectorize, Label, LabeledDataset, Matrix, Tensor3};
