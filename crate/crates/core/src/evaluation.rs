//! Cross-validation, two-sample t-statistics on discriminant scores,
//! stratified bootstrap intervals for factor weights and rank selection.

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::classifiers::sign_label;
use crate::error::{Error, Result};
use crate::multiway::{fit, FitOptions, MultiwayModel, Rank};
use crate::rng;
use crate::tensor::{Label, LabeledDataset, Matrix};

const TAG_FOLD: u64 = 0xF01D;
const TAG_PARTITION: u64 = 0xFA27;
const TAG_BOOT: u64 = 0xB007;

/// How samples are held out.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum CvScheme {
    #[default]
    LeaveOneOut,
    /// Stratified `k`-fold with a seeded partition.
    KFold(usize),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    /// Held-out score of every sample; `NaN` where the fold fit failed.
    pub per_sample_scores: Vec<f64>,
    pub labels: Vec<Label>,
    /// Sign errors over `n`; failed folds count as errors.
    pub misclassification_rate: f64,
    /// Welch t on the held-out scores, `None` when undefined.
    pub t_statistic: Option<f64>,
    pub per_fold_convergence: Vec<bool>,
    /// Indices of folds whose fit failed, with the error message.
    pub failed_folds: Vec<(usize, String)>,
    pub folds: Vec<Vec<usize>>,
}

/// Welch two-sample t of the `+1` scores against the `-1` scores.
pub fn t_statistic(scores: &[f64], labels: &[Label]) -> Result<f64> {
    if scores.len() != labels.len() {
        return Err(Error::Dimension(format!(
            "{} scores for {} labels",
            scores.len(),
            labels.len()
        )));
    }
    let mut pos = Vec::new();
    let mut neg = Vec::new();
    for (&s, &y) in scores.iter().zip(labels) {
        if !s.is_finite() {
            return Err(Error::NonFinite("score".into()));
        }
        match y {
            1 => pos.push(s),
            -1 => neg.push(s),
            other => return Err(Error::InvalidLabel(f64::from(other))),
        }
    }
    if pos.len() < 2 || neg.len() < 2 {
        return Err(Error::InvalidArgument(format!(
            "t statistic needs at least 2 scores per class, got {} and {}",
            pos.len(),
            neg.len()
        )));
    }
    let (mp, vp) = mean_var(&pos);
    let (mn, vn) = mean_var(&neg);
    let se2 = vp / pos.len() as f64 + vn / neg.len() as f64;
    if se2 == 0.0 {
        if mp == mn {
            return Ok(0.0);
        }
        return Err(Error::InvalidArgument(
            "t statistic undefined: both classes have zero variance and different means".into(),
        ));
    }
    Ok((mp - mn) / se2.sqrt())
}

fn mean_var(v: &[f64]) -> (f64, f64) {
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    let var = v.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1.0);
    (mean, var)
}

/// Held-out index sets for `scheme`. `k`-fold partitions are stratified by
/// class and shuffled with `seed`.
pub fn partition(labels: &[Label], scheme: CvScheme, seed: u64) -> Result<Vec<Vec<usize>>> {
    let n = labels.len();
    match scheme {
        CvScheme::LeaveOneOut => Ok((0..n).map(|i| vec![i]).collect()),
        CvScheme::KFold(k) => {
            if k < 2 || k > n {
                return Err(Error::InvalidArgument(format!(
                    "k-fold needs 2 ≤ k ≤ n = {n}, got {k}"
                )));
            }
            let mut rng = rng::stream(seed, &[TAG_PARTITION]);
            let mut folds = vec![Vec::new(); k];
            let mut slot = 0;
            for class in [-1, 1] {
                let mut members: Vec<usize> = (0..n).filter(|&i| labels[i] == class).collect();
                for i in (1..members.len()).rev() {
                    let j = rng.random_range(0..=i);
                    members.swap(i, j);
                }
                for idx in members {
                    folds[slot % k].push(idx);
                    slot += 1;
                }
            }
            for fold in &mut folds {
                fold.sort_unstable();
            }
            Ok(folds)
        }
    }
}

/// Fits on all samples outside each fold and scores the held-out ones.
pub fn cross_validate(
    data: &LabeledDataset,
    opts: &FitOptions,
    scheme: CvScheme,
) -> Result<EvalReport> {
    let n = data.n();
    if n < 3 {
        return Err(Error::InvalidArgument(format!(
            "cross-validation needs at least 3 samples, got {n}"
        )));
    }
    let folds = partition(&data.labels, scheme, opts.seed)?;
    for (f, held) in folds.iter().enumerate() {
        let (pos, neg) = held.iter().fold((0, 0), |(p, q), &i| {
            if data.labels[i] == 1 {
                (p + 1, q)
            } else {
                (p, q + 1)
            }
        });
        let (tp, tn) = data.class_counts();
        if pos == tp || neg == tn {
            return Err(Error::SingleClass(format!(
                "holding out fold {f} (samples {held:?}) leaves a class without training samples"
            )));
        }
    }

    let outcomes: Vec<(Result<Vec<f64>>, bool)> = folds
        .par_iter()
        .enumerate()
        .map(|(f, held)| {
            let train: Vec<usize> = (0..n).filter(|i| !held.contains(i)).collect();
            assert!(held.iter().all(|i| !train.contains(i)));
            let fold_opts = FitOptions {
                seed: rng::derive_seed(opts.seed, &[TAG_FOLD, f as u64]),
                ..opts.clone()
            };
            let result = fit(&data.subset(&train), &fold_opts).and_then(|model| {
                    let scores = held
                        .iter()
                        .map(|&i| model.score_vectorized(data.tensor.sample(i)))
                        .collect::<Result<Vec<f64>>>()?;
                    Ok((scores, model.converged()))
                });
            match result {
                Ok((scores, conv)) => (Ok(scores), conv),
                Err(e) => (Err(e), false),
            }
        })
        .collect();

    let mut scores = vec![f64::NAN; n];
    let mut per_fold_convergence = Vec::with_capacity(folds.len());
    let mut failed_folds = Vec::new();
    for (f, (result, conv)) in outcomes.into_iter().enumerate() {
        per_fold_convergence.push(conv);
        match result {
            Ok(s) => {
                for (&i, v) in folds[f].iter().zip(s) {
                    scores[i] = v;
                }
            }
            Err(e) => failed_folds.push((f, e.to_string())),
        }
    }
    let errors = scores
        .iter()
        .zip(&data.labels)
        .filter(|(s, &y)| !s.is_finite() || sign_label(**s) != y)
        .count();
    let (ok_scores, ok_labels): (Vec<f64>, Vec<Label>) = scores
        .iter()
        .zip(&data.labels)
        .filter(|(s, _)| s.is_finite())
        .map(|(s, y)| (*s, *y))
        .unzip();
    Ok(EvalReport {
        misclassification_rate: errors as f64 / n as f64,
        t_statistic: t_statistic(&ok_scores, &ok_labels).ok(),
        per_sample_scores: scores,
        labels: data.labels.clone(),
        per_fold_convergence,
        failed_folds,
        folds,
    })
}

/// Leave-one-out cross-validation.
pub fn loocv(data: &LabeledDataset, opts: &FitOptions) -> Result<EvalReport> {
    cross_validate(data, opts, CvScheme::LeaveOneOut)
}

/// Normalized weights of one fit: `W` and `V` for rank models, `B` for the
/// full model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeightSet {
    pub w: Option<Matrix>,
    pub v: Option<Matrix>,
    pub b: Matrix,
}

impl WeightSet {
    pub fn from_model(model: &MultiwayModel) -> WeightSet {
        WeightSet {
            w: model.w.clone(),
            v: model.v.clone(),
            b: model.b.clone(),
        }
    }

    /// Parameters the intervals are reported on: `vec(W)` then `vec(V)`, or
    /// `vec(B)` for the full model.
    pub fn parameters(&self) -> Vec<f64> {
        match (&self.w, &self.v) {
            (Some(w), Some(v)) => w.iter().chain(v.iter()).copied().collect(),
            _ => self.b.iter().copied().collect(),
        }
    }

    /// Flips `(w_z, v_z)` jointly wherever `⟨v_z, v_z^ref⟩ < 0`.
    fn align_to(&mut self, reference: &WeightSet) {
        if let (Some(w), Some(v), Some(rv)) = (&mut self.w, &mut self.v, &reference.v) {
            for z in 0..v.ncols().min(rv.ncols()) {
                if v.column(z).dot(&rv.column(z)) < 0.0 {
                    v.column_mut(z).neg_mut();
                    w.column_mut(z).neg_mut();
                }
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BootstrapReport {
    pub n_boot: usize,
    pub rank: Rank,
    pub point: WeightSet,
    /// Aligned parameters of every successful resample.
    pub replicates: Vec<Vec<f64>>,
    pub lower95: Vec<f64>,
    pub upper95: Vec<f64>,
    pub resample_seeds: Vec<u64>,
    pub failures: Vec<(usize, String)>,
}

impl BootstrapReport {
    /// Equal-tailed percentile interval at nominal `level` for every
    /// parameter.
    pub fn interval(&self, level: f64) -> Result<(Vec<f64>, Vec<f64>)> {
        if !(level > 0.0 && level < 1.0) {
            return Err(Error::InvalidArgument(format!("level must lie in (0, 1), got {level}")));
        }
        if self.replicates.is_empty() {
            return Err(Error::InvalidArgument("no successful bootstrap resamples".into()));
        }
        let alpha = (1.0 - level) / 2.0;
        let k = self.replicates[0].len();
        let mut lower = Vec::with_capacity(k);
        let mut upper = Vec::with_capacity(k);
        let mut column = Vec::with_capacity(self.replicates.len());
        for j in 0..k {
            column.clear();
            column.extend(self.replicates.iter().map(|r| r[j]));
            column.sort_by(|a, b| a.total_cmp(b));
            lower.push(quantile_sorted(&column, alpha));
            upper.push(quantile_sorted(&column, 1.0 - alpha));
        }
        Ok((lower, upper))
    }

    pub fn n_failed(&self) -> usize {
        self.failures.len()
    }
}

/// Linear-interpolation quantile of sorted data: position `(N − 1)·q`.
pub fn quantile_sorted(sorted: &[f64], q: f64) -> f64 {
    let n = sorted.len();
    if n == 1 {
        return sorted[0];
    }
    let h = (n - 1) as f64 * q.clamp(0.0, 1.0);
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(n - 1);
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

/// Within-class resample with replacement; class counts are preserved.
pub fn stratified_resample(labels: &[Label], seed: u64) -> Vec<usize> {
    let mut rng = rng::stream(seed, &[]);
    let mut out = Vec::with_capacity(labels.len());
    for class in [-1, 1] {
        let members: Vec<usize> = (0..labels.len()).filter(|&i| labels[i] == class).collect();
        for _ in 0..members.len() {
            out.push(members[rng.random_range(0..members.len())]);
        }
    }
    out
}

/// Stratified bootstrap of the normalized weights with percentile
/// intervals. Each resample's factors are sign-aligned to the point
/// estimate before quantiles are taken; failed resamples are excluded and
/// counted.
pub fn bootstrap_weights(
    data: &LabeledDataset,
    opts: &FitOptions,
    n_boot: usize,
) -> Result<BootstrapReport> {
    if n_boot < 2 {
        return Err(Error::InvalidArgument(format!("n_boot must be at least 2, got {n_boot}")));
    }
    let point = WeightSet::from_model(&fit(data, opts)?);
    let seeds: Vec<u64> = (0..n_boot)
        .map(|b| rng::derive_seed(opts.seed, &[TAG_BOOT, b as u64]))
        .collect();
    let results: Vec<Result<Vec<f64>>> = seeds
        .par_iter()
        .map(|&seed| {
            let idx = stratified_resample(&data.labels, seed);
            let resampled = data.subset(&idx);
            let model = fit(
                &resampled,
                &FitOptions {
                    seed,
                    ..opts.clone()
                },
            )?;
            let mut ws = WeightSet::from_model(&model);
            ws.align_to(&point);
            Ok(ws.parameters())
        })
        .collect();
    let mut replicates = Vec::with_capacity(n_boot);
    let mut failures = Vec::new();
    for (b, r) in results.into_iter().enumerate() {
        match r {
            Ok(p) => replicates.push(p),
            Err(e) => failures.push((b, e.to_string())),
        }
    }
    let mut report = BootstrapReport {
        n_boot,
        rank: opts.rank,
        point,
        replicates,
        lower95: Vec::new(),
        upper95: Vec::new(),
        resample_seeds: seeds,
        failures,
    };
    let (lo, hi) = report.interval(0.95)?;
    report.lower95 = lo;
    report.upper95 = hi;
    Ok(report)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankRow {
    pub rank: Rank,
    pub misclassification: f64,
    pub t_statistic: Option<f64>,
    pub converged_folds: usize,
    pub failed_folds: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankSelection {
    pub rows: Vec<RankRow>,
    pub selected: Rank,
    pub reports: Vec<EvalReport>,
}

/// Cross-validates every rank on the same fold partition and selects the
/// smallest misclassification, breaking ties by larger `|t|` and then by
/// smaller rank.
pub fn rank_selection(
    data: &LabeledDataset,
    ranks: &[Rank],
    opts: &FitOptions,
    scheme: CvScheme,
) -> Result<RankSelection> {
    if ranks.is_empty() {
        return Err(Error::InvalidArgument("no ranks to compare".into()));
    }
    for &rank in ranks {
        FitOptions {
            rank,
            ..opts.clone()
        }
        .validate(data.tensor.p(), data.tensor.m())?;
    }
    let mut rows = Vec::with_capacity(ranks.len());
    let mut reports = Vec::with_capacity(ranks.len());
    for &rank in ranks {
        let report = cross_validate(
            data,
            &FitOptions {
                rank,
                ..opts.clone()
            },
            scheme,
        )?;
        rows.push(RankRow {
            rank,
            misclassification: report.misclassification_rate,
            t_statistic: report.t_statistic,
            converged_folds: report.per_fold_convergence.iter().filter(|&&c| c).count(),
            failed_folds: report.failed_folds.len(),
        });
        reports.push(report);
    }
    let best = rows
        .iter()
        .min_by(|a, b| {
            a.misclassification
                .total_cmp(&b.misclassification)
                .then_with(|| {
                    let ta = a.t_statistic.map_or(0.0, f64::abs);
                    let tb = b.t_statistic.map_or(0.0, f64::abs);
                    tb.total_cmp(&ta)
                })
                .then_with(|| a.rank.sort_key().cmp(&b.rank.sort_key()))
        })
        .expect("non-empty");
    Ok(RankSelection {
        selected: best.rank,
        rows,
        reports,
    })
}
