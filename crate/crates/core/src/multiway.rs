//! Full, rank-1 and rank-r multi-way classification.
//!
//! The rank-constrained fits use alternating convex search: with the dim₂
//! factors fixed, every sample `Xᵢ` is reduced to the covariates
//! `vec(Xᵢ·V)` and an ordinary linear classifier gives the dim₁ weights;
//! the roles are then swapped. For DWD each half-step uses the penalty
//! `100·d²/D²`, where `d` is the median between-class distance of the
//! reduced covariates and `D` that of the vectorized data.
//!
//! Reported factors are normalized: `V` has orthonormal columns (thin SVD of
//! `B` with its sign convention) and the singular values are absorbed into
//! `W`, so `B = W·V⊺`.

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::classifiers::{
    dwd_fit, dwd_penalty_from_distance, median_pairwise_distance, sign_label, svm_fit, DwdConfig,
    InterceptConvention, LinearModel, SvmConfig,
};
use crate::error::{Error, Result};
use crate::rng;
use crate::tensor::{
    kron, thin_svd, unvectorize, vectorize, Label, LabeledDataset, Matrix, Standardizer, Tensor3,
};

/// Inner linear classifier.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Solver {
    Dwd,
    Svm,
}

impl Solver {
    pub fn convention(self) -> InterceptConvention {
        match self {
            Solver::Dwd => InterceptConvention::Plus,
            Solver::Svm => InterceptConvention::Minus,
        }
    }

    fn default_restarts(self) -> usize {
        match self {
            Solver::Dwd => 1,
            Solver::Svm => 5,
        }
    }
}

impl std::fmt::Display for Solver {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Solver::Dwd => "dwd",
            Solver::Svm => "svm",
        })
    }
}

impl std::str::FromStr for Solver {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "dwd" => Ok(Solver::Dwd),
            "svm" => Ok(Solver::Svm),
            other => Err(Error::InvalidArgument(format!(
                "unknown solver '{other}' (expected dwd or svm)"
            ))),
        }
    }
}

/// Coefficient-matrix rank: unrestricted or a fixed `r ≥ 1`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Rank {
    Full,
    Fixed(usize),
}

impl Rank {
    /// Orders ranks with `Full` above every fixed rank.
    pub fn sort_key(self) -> usize {
        match self {
            Rank::Full => usize::MAX,
            Rank::Fixed(r) => r,
        }
    }
}

impl std::fmt::Display for Rank {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Rank::Full => f.write_str("full"),
            Rank::Fixed(r) => write!(f, "{r}"),
        }
    }
}

impl std::str::FromStr for Rank {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let t = s.trim().to_ascii_lowercase();
        if t == "full" {
            return Ok(Rank::Full);
        }
        let t = t.strip_prefix("rank").unwrap_or(&t);
        match t.parse::<usize>() {
            Ok(r) if r >= 1 => Ok(Rank::Fixed(r)),
            _ => Err(Error::InvalidArgument(format!(
                "invalid rank '{s}' (expected a positive integer or 'full')"
            ))),
        }
    }
}

impl Serialize for Rank {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        match self {
            Rank::Full => s.serialize_str("full"),
            Rank::Fixed(r) => s.serialize_u64(*r as u64),
        }
    }
}

impl<'de> Deserialize<'de> for Rank {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Repr {
            Num(usize),
            Text(String),
        }
        match Repr::deserialize(d)? {
            Repr::Num(0) => Err(serde::de::Error::custom("rank must be positive")),
            Repr::Num(r) => Ok(Rank::Fixed(r)),
            Repr::Text(t) => t.parse().map_err(serde::de::Error::custom),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitOptions {
    pub solver: Solver,
    pub rank: Rank,
    /// Stop when successive unit-normalized `vec(B)` differ by less than this.
    pub epsilon: f64,
    pub max_acs_iterations: usize,
    /// ACS runs from independent random starts; `None` uses 1 for DWD and 5
    /// for SVM.
    pub restarts: Option<usize>,
    pub seed: u64,
    /// Ridge penalty of the SVM inner solver.
    pub svm_lambda: f64,
    /// Relative tolerance of the inner DWD solver.
    pub inner_tolerance: f64,
    pub inner_max_iterations: usize,
    /// Z-score every `(j, k)` cell using the training samples.
    pub standardize: bool,
    /// How the DWD penalty is chosen for each inner fit.
    #[serde(default)]
    pub penalty: PenaltyRule,
}

/// DWD penalty of the inner fits.
///
/// The distance rules start from the tuning constant `100·d²/D²` of each
/// inner fit (`100` for the full model), where `d` is the median
/// between-class distance of that fit's covariates and `D` that of the
/// vectorized data.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum PenaltyRule {
    /// The constant is divided by `d²`, as in the usual `100/d²` default
    /// for DWD, so every inner fit uses `C = 100/D²`.
    #[default]
    MedianDistance,
    /// The constant is used as `C` directly.
    Unscaled,
    /// The same `C` for every inner fit.
    Fixed(f64),
}

impl PenaltyRule {
    /// Penalty for covariates at median distance `d` given the reference
    /// `D`; the flag reports the fallback taken when a distance is zero.
    pub fn penalty(self, d: f64, reference: f64) -> (f64, bool) {
        match self {
            PenaltyRule::Fixed(c) => (c, false),
            PenaltyRule::Unscaled => match dwd_penalty_from_distance(d, reference) {
                Ok(c) => (c, false),
                Err(_) => (100.0, true),
            },
            PenaltyRule::MedianDistance => match dwd_penalty_from_distance(d, reference) {
                Ok(c) => (c / (d * d), false),
                Err(_) if reference > 0.0 => (100.0 / (reference * reference), true),
                Err(_) => (100.0, true),
            },
        }
    }
}

impl Default for FitOptions {
    fn default() -> Self {
        FitOptions {
            solver: Solver::Dwd,
            rank: Rank::Fixed(1),
            epsilon: 1e-5,
            max_acs_iterations: 100,
            restarts: None,
            seed: 0,
            svm_lambda: 0.01,
            inner_tolerance: 1e-10,
            inner_max_iterations: 200,
            standardize: false,
            penalty: PenaltyRule::MedianDistance,
        }
    }
}

impl FitOptions {
    pub fn new(solver: Solver, rank: Rank) -> Self {
        FitOptions {
            solver,
            rank,
            ..Default::default()
        }
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn effective_restarts(&self) -> usize {
        self.restarts.unwrap_or_else(|| self.solver.default_restarts())
    }

    pub fn validate(&self, p: usize, m: usize) -> Result<()> {
        if !(self.epsilon > 0.0) {
            return Err(Error::InvalidArgument(format!(
                "epsilon must be positive, got {}",
                self.epsilon
            )));
        }
        if self.max_acs_iterations == 0 {
            return Err(Error::InvalidArgument("max_acs_iterations must be positive".into()));
        }
        if self.restarts == Some(0) {
            return Err(Error::InvalidArgument("restarts must be positive".into()));
        }
        if let PenaltyRule::Fixed(c) = self.penalty {
            if !(c > 0.0 && c.is_finite()) {
                return Err(Error::InvalidArgument(format!(
                    "DWD penalty must be positive, got {c}"
                )));
            }
        }
        if let Rank::Fixed(r) = self.rank {
            let max = p.min(m);
            if r == 0 || r > max {
                return Err(Error::RankOutOfRange { rank: r, max });
            }
        }
        Ok(())
    }

    fn dwd_config(&self, penalty: f64) -> DwdConfig {
        DwdConfig {
            penalty,
            tolerance: self.inner_tolerance,
            max_iterations: self.inner_max_iterations,
        }
    }

    fn svm_config(&self) -> SvmConfig {
        SvmConfig {
            lambda: self.svm_lambda,
            ..SvmConfig::default()
        }
    }
}

/// Which factor block a half-step updated.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Block {
    Dim1,
    Dim2,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HalfStep {
    pub iteration: usize,
    pub block: Block,
    /// Objective value reported by the inner solver.
    pub objective: f64,
    /// DWD penalty used for this half-step.
    pub penalty: Option<f64>,
    pub inner_converged: bool,
}

/// Record of one ACS run (or the single inner fit of a full model).
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct FitTrace {
    pub half_steps: Vec<HalfStep>,
    /// `‖vec(B̂ₜ₊₁) − vec(B̂ₜ)‖` of unit-normalized iterates.
    pub delta_b: Vec<f64>,
    pub converged: bool,
    pub iterations: usize,
    /// Median between-class distance of the vectorized data.
    pub reference_distance: Option<f64>,
    /// Half-steps whose reduced data had zero median distance (penalty fell
    /// back to 100).
    pub penalty_fallbacks: usize,
    /// Final inner objective of every restart, in seed order.
    pub restart_objectives: Vec<f64>,
    pub selected_restart: usize,
    /// Unnormalized factors as returned by the last two half-steps.
    #[serde(skip)]
    pub raw_w: Option<Matrix>,
    #[serde(skip)]
    pub raw_v: Option<Matrix>,
}

/// A fitted multi-way classifier with coefficient matrix `B` (`p × m`).
#[derive(Debug, Clone, PartialEq)]
pub struct MultiwayModel {
    pub solver: Solver,
    pub rank: Rank,
    /// `p × r` dim₁ weights (absent for the full model).
    pub w: Option<Matrix>,
    /// `m × r` dim₂ weights with unit-norm columns (absent for the full model).
    pub v: Option<Matrix>,
    pub b: Matrix,
    pub intercept: f64,
    /// Final inner objective value.
    pub objective: f64,
    pub standardizer: Option<Standardizer>,
    pub trace: FitTrace,
}

impl MultiwayModel {
    pub fn p(&self) -> usize {
        self.b.nrows()
    }

    pub fn m(&self) -> usize {
        self.b.ncols()
    }

    pub fn converged(&self) -> bool {
        self.trace.converged
    }

    pub fn coefficients(&self) -> Vec<f64> {
        vectorize(&self.b)
    }

    /// Score of a sample given as `vec(Xᵢ)` in original (unstandardized) units.
    pub fn score_vectorized(&self, sample: &[f64]) -> Result<f64> {
        if sample.len() != self.p() * self.m() {
            return Err(Error::Dimension(format!(
                "sample has {} entries, model expects {}×{}",
                sample.len(),
                self.p(),
                self.m()
            )));
        }
        let inner: f64 = match &self.standardizer {
            Some(st) => {
                let z = st.apply_sample(sample);
                self.b.as_slice().iter().zip(&z).map(|(b, x)| b * x).sum()
            }
            None => self.b.as_slice().iter().zip(sample).map(|(b, x)| b * x).sum(),
        };
        Ok(self.solver.convention().apply(inner, self.intercept))
    }

    pub fn scores(&self, x: &Tensor3) -> Result<Vec<f64>> {
        (0..x.n()).map(|i| self.score_vectorized(x.sample(i))).collect()
    }
}

/// Score and label of one `p × m` sample; ties go to `+1`.
pub fn predict_multiway(model: &MultiwayModel, x: &Matrix) -> Result<(f64, Label)> {
    if x.shape() != model.b.shape() {
        return Err(Error::Dimension(format!(
            "sample has shape {:?}, model expects {:?}",
            x.shape(),
            model.b.shape()
        )));
    }
    let s = model.score_vectorized(x.as_slice())?;
    Ok((s, sign_label(s)))
}

/// Fits the model selected by `opts.rank`.
pub fn fit(data: &LabeledDataset, opts: &FitOptions) -> Result<MultiwayModel> {
    match opts.rank {
        Rank::Full => fit_full(data, opts),
        Rank::Fixed(1) => fit_rank1(data, opts),
        Rank::Fixed(_) => fit_rankr(data, opts),
    }
}

struct Prepared {
    tensor: Tensor3,
    standardizer: Option<Standardizer>,
}

fn prepare(data: &LabeledDataset, opts: &FitOptions) -> Result<Prepared> {
    let (pos, neg) = data.class_counts();
    if pos == 0 || neg == 0 {
        return Err(Error::SingleClass(format!("{pos} positive, {neg} negative")));
    }
    opts.validate(data.tensor.p(), data.tensor.m())?;
    if opts.standardize {
        let st = Standardizer::fit(&data.tensor);
        Ok(Prepared {
            tensor: st.apply(&data.tensor)?,
            standardizer: Some(st),
        })
    } else {
        Ok(Prepared {
            tensor: data.tensor.clone(),
            standardizer: None,
        })
    }
}

/// One linear fit on `d × n` covariates, choosing the DWD penalty from the
/// covariates' median between-class distance relative to `reference`.
struct InnerFit {
    model: LinearModel,
    penalty: Option<f64>,
    fallback: bool,
}

fn inner_fit(
    x: &Matrix,
    labels: &[Label],
    opts: &FitOptions,
    reference: Option<f64>,
) -> Result<InnerFit> {
    match opts.solver {
        Solver::Dwd => {
            let d = match opts.penalty {
                PenaltyRule::Fixed(_) => 0.0,
                _ => median_pairwise_distance(x, labels)?,
            };
            let (penalty, fallback) = opts.penalty.penalty(d, reference.unwrap_or(0.0));
            let model = dwd_fit(x, labels, &opts.dwd_config(penalty))?;
            Ok(InnerFit {
                model,
                penalty: Some(penalty),
                fallback,
            })
        }
        Solver::Svm => Ok(InnerFit {
            model: svm_fit(x, labels, &opts.svm_config())?,
            penalty: None,
            fallback: false,
        }),
    }
}

/// Vectorizes every sample and runs one inner fit on `pm` covariates. The
/// DWD penalty follows the same rule with the vectorized data as its own
/// reference.
pub fn fit_full(data: &LabeledDataset, opts: &FitOptions) -> Result<MultiwayModel> {
    let prep = prepare(data, opts)?;
    let (p, m) = (prep.tensor.p(), prep.tensor.m());
    let x = prep.tensor.vectorized();
    let reference = match opts.solver {
        Solver::Dwd => Some(median_pairwise_distance(&x, &data.labels)?),
        Solver::Svm => None,
    };
    let fitted = match opts.solver {
        Solver::Dwd => {
            let d = reference.unwrap_or(0.0);
            let (penalty, fallback) = opts.penalty.penalty(d, d);
            InnerFit {
                model: dwd_fit(&x, &data.labels, &opts.dwd_config(penalty))?,
                penalty: Some(penalty),
                fallback,
            }
        }
        Solver::Svm => inner_fit(&x, &data.labels, opts, None)?,
    };
    let b = unvectorize(&fitted.model.coefficients, p, m)?;
    let trace = FitTrace {
        half_steps: vec![HalfStep {
            iteration: 0,
            block: Block::Dim1,
            objective: fitted.model.objective_value,
            penalty: fitted.penalty,
            inner_converged: fitted.model.diagnostics.converged,
        }],
        delta_b: Vec::new(),
        converged: fitted.model.diagnostics.converged,
        iterations: 1,
        reference_distance: reference,
        penalty_fallbacks: usize::from(fitted.fallback),
        restart_objectives: vec![fitted.model.objective_value],
        selected_restart: 0,
        raw_w: None,
        raw_v: None,
    };
    Ok(MultiwayModel {
        solver: opts.solver,
        rank: Rank::Full,
        w: None,
        v: None,
        b,
        intercept: fitted.model.intercept,
        objective: fitted.model.objective_value,
        standardizer: prep.standardizer,
        trace,
    })
}

/// Rank-1 alternating convex search.
pub fn fit_rank1(data: &LabeledDataset, opts: &FitOptions) -> Result<MultiwayModel> {
    if let Rank::Fixed(r) = opts.rank {
        if r != 1 {
            return Err(Error::InvalidArgument(format!(
                "fit_rank1 called with rank {r}"
            )));
        }
    }
    let opts = FitOptions {
        rank: Rank::Fixed(1),
        ..opts.clone()
    };
    let prep = prepare(data, &opts)?;
    run_restarts(&prep, &opts, |seed| {
        acs_rank1(&prep.tensor, &data.labels, &opts, seed)
    })
}

/// Rank-r alternating convex search with SVD re-identification between
/// half-steps.
pub fn fit_rankr(data: &LabeledDataset, opts: &FitOptions) -> Result<MultiwayModel> {
    let r = match opts.rank {
        Rank::Fixed(r) => r,
        Rank::Full => {
            return Err(Error::InvalidArgument("fit_rankr needs a fixed rank".into()));
        }
    };
    let prep = prepare(data, opts)?;
    run_restarts(&prep, opts, |seed| {
        acs_rankr(&prep.tensor, &data.labels, opts, r, seed)
    })
}

/// Raw outcome of one ACS run: `B = W·V⊺` from the final half-step.
struct AcsRun {
    w: Matrix,
    v: Matrix,
    intercept: f64,
    objective: f64,
    trace: FitTrace,
}

fn run_restarts<F>(
    prep: &Prepared,
    opts: &FitOptions,
    run: F,
) -> Result<MultiwayModel>
where
    F: Fn(u64) -> Result<AcsRun> + Sync,
{
    let restarts = opts.effective_restarts();
    let runs: Vec<Result<AcsRun>> = (0..restarts)
        .into_par_iter()
        .map(|k| run(rng::derive_seed(opts.seed, &[0xAC5, k as u64])))
        .collect();
    let mut objectives = Vec::with_capacity(restarts);
    let mut best: Option<(usize, AcsRun)> = None;
    let mut first_err = None;
    for (k, run) in runs.into_iter().enumerate() {
        match run {
            Ok(run) => {
                objectives.push(run.objective);
                // Prefer converged runs, then the smallest objective, then seed order.
                let better = match &best {
                    None => true,
                    Some((_, b)) => {
                        (run.trace.converged && !b.trace.converged)
                            || (run.trace.converged == b.trace.converged
                                && run.objective < b.objective)
                    }
                };
                if better {
                    best = Some((k, run));
                }
            }
            Err(e) => {
                objectives.push(f64::NAN);
                first_err.get_or_insert(e);
            }
        }
    }
    let (selected, run) = match best {
        Some(b) => b,
        None => return Err(first_err.expect("at least one restart")),
    };
    let rank = run.w.ncols();
    let b = &run.w * run.v.transpose();
    let (w, v) = normalize_factors(&b, rank)?;
    let mut trace = run.trace;
    trace.restart_objectives = objectives;
    trace.selected_restart = selected;
    trace.raw_w = Some(run.w);
    trace.raw_v = Some(run.v);
    Ok(MultiwayModel {
        solver: opts.solver,
        rank: Rank::Fixed(rank),
        w: Some(w),
        v: Some(v),
        b,
        intercept: run.intercept,
        objective: run.objective,
        standardizer: prep.standardizer.clone(),
        trace,
    })
}

/// `(W, V)` with `B = W·V⊺`, `V` orthonormal under the SVD sign convention.
pub fn normalize_factors(b: &Matrix, rank: usize) -> Result<(Matrix, Matrix)> {
    let svd = thin_svd(b, rank)?;
    let mut w = svd.u;
    for (mut col, s) in w.column_iter_mut().zip(&svd.singular_values) {
        col *= *s;
    }
    Ok((w, svd.v))
}

fn uniform_unit(rng: &mut impl Rng, len: usize) -> Vec<f64> {
    let mut v: Vec<f64> = (0..len).map(|_| rng.random::<f64>()).collect();
    normalize_in_place(&mut v);
    v
}

fn normalize_in_place(v: &mut [f64]) {
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if norm > 0.0 {
        v.iter_mut().for_each(|x| *x /= norm);
    }
}

fn unit(v: &[f64]) -> Vec<f64> {
    let mut out = v.to_vec();
    normalize_in_place(&mut out);
    out
}

fn distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

fn reference_distance(x: &Tensor3, labels: &[Label], solver: Solver) -> Result<Option<f64>> {
    match solver {
        Solver::Dwd => Ok(Some(median_pairwise_distance(&x.vectorized(), labels)?)),
        Solver::Svm => Ok(None),
    }
}

fn column(v: &[f64]) -> Matrix {
    Matrix::from_column_slice(v.len(), 1, v)
}

fn acs_rank1(x: &Tensor3, labels: &[Label], opts: &FitOptions, seed: u64) -> Result<AcsRun> {
    let (p, m) = (x.p(), x.m());
    let mut rng = rng::stream(seed, &[]);
    let mut w = uniform_unit(&mut rng, p);
    let mut v = uniform_unit(&mut rng, m);
    let reference = reference_distance(x, labels, opts.solver)?;
    let svm = opts.solver == Solver::Svm;

    let mut trace = FitTrace {
        reference_distance: reference,
        ..Default::default()
    };
    let mut previous = unit(&kron(&v, &w));
    let mut intercept = 0.0;
    let mut objective = f64::NAN;

    for t in 0..opts.max_acs_iterations {
        if svm {
            normalize_in_place(&mut v);
        }
        let xw = x.project_dim2(&column(&v))?;
        let fw = inner_fit(&xw, labels, opts, reference)?;
        w = fw.model.coefficients.clone();
        record(&mut trace, t, Block::Dim1, &fw);

        if svm {
            normalize_in_place(&mut w);
        }
        let xv = x.project_dim1(&column(&w))?;
        let fv = inner_fit(&xv, labels, opts, reference)?;
        v = fv.model.coefficients.clone();
        intercept = fv.model.intercept;
        objective = fv.model.objective_value;
        record(&mut trace, t, Block::Dim2, &fv);

        let current = unit(&kron(&v, &w));
        let delta = distance(&current, &previous);
        trace.delta_b.push(delta);
        trace.iterations = t + 1;
        previous = current;
        if delta < opts.epsilon {
            trace.converged = true;
            break;
        }
    }
    Ok(AcsRun {
        w: column(&w),
        v: column(&v),
        intercept,
        objective,
        trace,
    })
}

fn acs_rankr(
    x: &Tensor3,
    labels: &[Label],
    opts: &FitOptions,
    r: usize,
    seed: u64,
) -> Result<AcsRun> {
    let (p, m) = (x.p(), x.m());
    let mut rng = rng::stream(seed, &[]);
    let w0 = Matrix::from_fn(p, r, |_, _| rng.random::<f64>());
    let v0 = Matrix::from_fn(m, r, |_, _| rng.random::<f64>());
    let mut b_v = &w0 * v0.transpose();
    let norm = b_v.norm();
    if norm > 0.0 {
        b_v /= norm;
    }
    let reference = reference_distance(x, labels, opts.solver)?;

    let mut trace = FitTrace {
        reference_distance: reference,
        ..Default::default()
    };
    let mut previous = unit(b_v.as_slice());
    let mut w_fixed = Matrix::zeros(p, r);
    let mut v_free = Matrix::zeros(m, r);
    let mut intercept = 0.0;
    let mut objective = f64::NAN;

    for t in 0..opts.max_acs_iterations {
        let v_fixed = thin_svd(&b_v, r)?.v;
        let xw = x.project_dim2(&v_fixed)?;
        let fw = inner_fit(&xw, labels, opts, reference)?;
        record(&mut trace, t, Block::Dim1, &fw);
        let w_free = unvectorize(&fw.model.coefficients, p, r)?;
        let b_w = &w_free * v_fixed.transpose();

        w_fixed = thin_svd(&b_w, r)?.u;
        let xv = x.project_dim1(&w_fixed)?;
        let fv = inner_fit(&xv, labels, opts, reference)?;
        record(&mut trace, t, Block::Dim2, &fv);
        v_free = unvectorize(&fv.model.coefficients, m, r)?;
        b_v = &w_fixed * v_free.transpose();
        intercept = fv.model.intercept;
        objective = fv.model.objective_value;

        let current = unit(b_v.as_slice());
        let delta = distance(&current, &previous);
        trace.delta_b.push(delta);
        trace.iterations = t + 1;
        previous = current;
        if delta < opts.epsilon {
            trace.converged = true;
            break;
        }
    }
    Ok(AcsRun {
        w: w_fixed,
        v: v_free,
        intercept,
        objective,
        trace,
    })
}

fn record(trace: &mut FitTrace, iteration: usize, block: Block, fit: &InnerFit) {
    if fit.fallback {
        trace.penalty_fallbacks += 1;
    }
    trace.half_steps.push(HalfStep {
        iteration,
        block,
        objective: fit.model.objective_value,
        penalty: fit.penalty,
        inner_converged: fit.model.diagnostics.converged,
    });
}
