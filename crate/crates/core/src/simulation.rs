//! Gaussian two-class scenarios with structured mean differences, the Bayes
//! oracle, signal calibration and replicated benchmark runs.
//!
//! Class `c ∈ {0, 1}` draws vectorized samples from `N(μ_c, σ_{ec}²·I)`.
//! Class 0 is labelled `-1` and class 1 `+1`, so a correctly oriented
//! classifier has coefficients positively correlated with `μ₁ − μ₀`.
//!
//! Random streams are keyed by `(seed, role, class)`: means, training draws
//! and test draws never share a generator, and fitting more models never
//! perturbs the data.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::classifiers::sign_label;
use crate::error::{Error, Result};
use crate::multiway::{fit, FitOptions, Rank, Solver};
use crate::rng;
use crate::tensor::{kron, Label, LabeledDataset, Tensor3};

const TAG_MEANS: u64 = 1;
const TAG_TRAIN: u64 = 2;
const TAG_TEST: u64 = 3;
const TAG_REPLICATE: u64 = 4;
const TAG_MODEL: u64 = 5;
const TAG_CALIBRATION: u64 = 6;

/// Mean structure and its signal standard deviations.
///
/// - `Full`: `μ₀ = 0`, `μ₁ ~ N(0, σ_s²I)`.
/// - `Rank1`: `μ₀ = 0`, `μ₁ = v⊗w`, `w ~ N(0, σ_w²I_p)`, `v ~ N(0, σ_v²I_m)`.
/// - `Rank2`: `μ₀ = v₀⊗w₀`, `μ₁ = v₁⊗w₁`, all factors independent.
/// - `RankR`: `μ₀ = 0`, `μ₁ = Σ_z v_z⊗w_z` with `r` independent pairs.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "structure", rename_all = "lowercase")]
pub enum Signal {
    Full {
        sigma_s: f64,
    },
    Rank1 {
        sigma_w: f64,
        sigma_v: f64,
    },
    Rank2 {
        sigma_w0: f64,
        sigma_v0: f64,
        sigma_w1: f64,
        sigma_v1: f64,
    },
    #[serde(rename = "rankr")]
    RankR {
        rank: usize,
        sigma_w: f64,
        sigma_v: f64,
    },
}

impl Signal {
    /// All signal SDs equal to one for the given true structure.
    pub fn unit(structure: Rank) -> Result<Signal> {
        Ok(match structure {
            Rank::Full => Signal::Full { sigma_s: 1.0 },
            Rank::Fixed(1) => Signal::Rank1 {
                sigma_w: 1.0,
                sigma_v: 1.0,
            },
            Rank::Fixed(2) => Signal::Rank2 {
                sigma_w0: 1.0,
                sigma_v0: 1.0,
                sigma_w1: 1.0,
                sigma_v1: 1.0,
            },
            Rank::Fixed(0) => {
                return Err(Error::InvalidArgument("true rank must be positive".into()))
            }
            Rank::Fixed(rank) => Signal::RankR {
                rank,
                sigma_w: 1.0,
                sigma_v: 1.0,
            },
        })
    }

    pub fn structure(&self) -> Rank {
        match self {
            Signal::Full { .. } => Rank::Full,
            Signal::Rank1 { .. } => Rank::Fixed(1),
            Signal::Rank2 { .. } => Rank::Fixed(2),
            Signal::RankR { rank, .. } => Rank::Fixed(*rank),
        }
    }

    /// Every signal SD multiplied by `factor`.
    pub fn scaled(&self, factor: f64) -> Signal {
        match *self {
            Signal::Full { sigma_s } => Signal::Full {
                sigma_s: sigma_s * factor,
            },
            Signal::Rank1 { sigma_w, sigma_v } => Signal::Rank1 {
                sigma_w: sigma_w * factor,
                sigma_v: sigma_v * factor,
            },
            Signal::Rank2 {
                sigma_w0,
                sigma_v0,
                sigma_w1,
                sigma_v1,
            } => Signal::Rank2 {
                sigma_w0: sigma_w0 * factor,
                sigma_v0: sigma_v0 * factor,
                sigma_w1: sigma_w1 * factor,
                sigma_v1: sigma_v1 * factor,
            },
            Signal::RankR {
                rank,
                sigma_w,
                sigma_v,
            } => Signal::RankR {
                rank,
                sigma_w: sigma_w * factor,
                sigma_v: sigma_v * factor,
            },
        }
    }

    fn sds(&self) -> Vec<f64> {
        match *self {
            Signal::Full { sigma_s } => vec![sigma_s],
            Signal::Rank1 { sigma_w, sigma_v } => vec![sigma_w, sigma_v],
            Signal::Rank2 {
                sigma_w0,
                sigma_v0,
                sigma_w1,
                sigma_v1,
            } => vec![sigma_w0, sigma_v0, sigma_w1, sigma_v1],
            Signal::RankR {
                sigma_w, sigma_v, ..
            } => vec![sigma_w, sigma_v],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub p: usize,
    pub m: usize,
    /// Total training size, split equally between the classes.
    pub n_train: usize,
    pub n_test_per_class: usize,
    pub sigma_e0: f64,
    pub sigma_e1: f64,
    pub signal: Signal,
    pub seed: u64,
}

impl Scenario {
    pub fn new(p: usize, m: usize, n_train: usize, signal: Signal) -> Scenario {
        Scenario {
            p,
            m,
            n_train,
            n_test_per_class: 50,
            sigma_e0: 1.0,
            sigma_e1: 1.0,
            signal,
            seed: 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.p == 0 || self.m == 0 {
            return Err(Error::InvalidArgument("p and m must be positive".into()));
        }
        if self.n_train < 2 || self.n_train % 2 != 0 {
            return Err(Error::InvalidArgument(format!(
                "n_train must be even and at least 2, got {}",
                self.n_train
            )));
        }
        if self.n_test_per_class == 0 {
            return Err(Error::InvalidArgument("n_test_per_class must be positive".into()));
        }
        let mut sds = vec![self.sigma_e0, self.sigma_e1];
        sds.extend(self.signal.sds());
        if sds.iter().any(|&s| !(s >= 0.0 && s.is_finite())) {
            return Err(Error::InvalidArgument(format!("invalid standard deviations {sds:?}")));
        }
        if !(self.sigma_e0 > 0.0 && self.sigma_e1 > 0.0) {
            return Err(Error::InvalidArgument("noise SDs must be positive".into()));
        }
        if let Signal::RankR { rank, .. } = self.signal {
            if rank == 0 || rank > self.p.min(self.m) {
                return Err(Error::RankOutOfRange {
                    rank,
                    max: self.p.min(self.m),
                });
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct GeneratedExperiment {
    pub train: LabeledDataset,
    pub test: LabeledDataset,
    pub mu0: Vec<f64>,
    pub mu1: Vec<f64>,
    /// `μ₁ − μ₀`.
    pub bayes_direction: Vec<f64>,
    pub sigma_e0: f64,
    pub sigma_e1: f64,
}

fn normal_vec(rng: &mut ChaCha8Rng, len: usize, sd: f64) -> Vec<f64> {
    (0..len)
        .map(|_| sd * rng.sample::<f64, _>(StandardNormal))
        .collect()
}

fn means(scenario: &Scenario) -> (Vec<f64>, Vec<f64>) {
    let (p, m) = (scenario.p, scenario.m);
    let mut rng = rng::stream(scenario.seed, &[TAG_MEANS]);
    match scenario.signal {
        Signal::Full { sigma_s } => (vec![0.0; p * m], normal_vec(&mut rng, p * m, sigma_s)),
        Signal::Rank1 { sigma_w, sigma_v } => {
            let w = normal_vec(&mut rng, p, sigma_w);
            let v = normal_vec(&mut rng, m, sigma_v);
            (vec![0.0; p * m], kron(&v, &w))
        }
        Signal::Rank2 {
            sigma_w0,
            sigma_v0,
            sigma_w1,
            sigma_v1,
        } => {
            let w0 = normal_vec(&mut rng, p, sigma_w0);
            let v0 = normal_vec(&mut rng, m, sigma_v0);
            let w1 = normal_vec(&mut rng, p, sigma_w1);
            let v1 = normal_vec(&mut rng, m, sigma_v1);
            (kron(&v0, &w0), kron(&v1, &w1))
        }
        Signal::RankR {
            rank,
            sigma_w,
            sigma_v,
        } => {
            let mut mu1 = vec![0.0; p * m];
            for _ in 0..rank {
                let w = normal_vec(&mut rng, p, sigma_w);
                let v = normal_vec(&mut rng, m, sigma_v);
                for (acc, x) in mu1.iter_mut().zip(kron(&v, &w)) {
                    *acc += x;
                }
            }
            (vec![0.0; p * m], mu1)
        }
    }
}

fn draw_class(
    scenario: &Scenario,
    tag: u64,
    class: u64,
    count: usize,
    mean: &[f64],
    sd: f64,
    values: &mut Vec<f64>,
) {
    let mut rng = rng::stream(scenario.seed, &[tag, class]);
    for _ in 0..count {
        values.extend(
            mean.iter()
                .map(|&mu| mu + sd * rng.sample::<f64, _>(StandardNormal)),
        );
    }
}

fn draw_dataset(
    scenario: &Scenario,
    tag: u64,
    per_class: usize,
    mu0: &[f64],
    mu1: &[f64],
) -> Result<LabeledDataset> {
    let mut values = Vec::with_capacity(2 * per_class * mu0.len());
    draw_class(scenario, tag, 0, per_class, mu0, scenario.sigma_e0, &mut values);
    draw_class(scenario, tag, 1, per_class, mu1, scenario.sigma_e1, &mut values);
    let labels: Vec<Label> = (0..2 * per_class)
        .map(|i| if i < per_class { -1 } else { 1 })
        .collect();
    LabeledDataset::new(
        Tensor3::new(2 * per_class, scenario.p, scenario.m, values)?,
        labels,
    )
}

/// Draws the class means, a training set and a test set.
pub fn generate(scenario: &Scenario) -> Result<GeneratedExperiment> {
    scenario.validate()?;
    let (mu0, mu1) = means(scenario);
    let train = draw_dataset(scenario, TAG_TRAIN, scenario.n_train / 2, &mu0, &mu1)?;
    let test = draw_dataset(scenario, TAG_TEST, scenario.n_test_per_class, &mu0, &mu1)?;
    let bayes_direction = mu1.iter().zip(&mu0).map(|(a, b)| a - b).collect();
    Ok(GeneratedExperiment {
        train,
        test,
        mu0,
        mu1,
        bayes_direction,
        sigma_e0: scenario.sigma_e0,
        sigma_e1: scenario.sigma_e1,
    })
}

impl GeneratedExperiment {
    fn check_linear_rule(&self) -> Result<()> {
        if self.sigma_e0 != self.sigma_e1 {
            return Err(Error::InvalidArgument(format!(
                "the Bayes rule is linear only for equal class noise (σ_e0 = {}, σ_e1 = {}); \
                 the quadratic rule is not supported",
                self.sigma_e0, self.sigma_e1
            )));
        }
        Ok(())
    }

    /// Bayes score `⟨μ₁ − μ₀, x − (μ₀ + μ₁)/2⟩`.
    pub fn bayes_score(&self, x: &[f64]) -> Result<f64> {
        self.check_linear_rule()?;
        if x.len() != self.mu0.len() {
            return Err(Error::Dimension(format!(
                "sample has {} entries, expected {}",
                x.len(),
                self.mu0.len()
            )));
        }
        Ok(self
            .bayes_direction
            .iter()
            .zip(x)
            .zip(self.mu0.iter().zip(&self.mu1))
            .map(|((d, xi), (a, b))| d * (xi - 0.5 * (a + b)))
            .sum())
    }

    /// Closed-form misclassification rate of the Bayes rule,
    /// `Φ(−‖μ₁ − μ₀‖ / (2σ_e))`.
    pub fn bayes_error(&self) -> Result<f64> {
        self.check_linear_rule()?;
        let dist = self.bayes_direction.iter().map(|d| d * d).sum::<f64>().sqrt();
        let std_normal = Normal::new(0.0, 1.0).expect("valid normal");
        Ok(std_normal.cdf(-dist / (2.0 * self.sigma_e0)))
    }
}

/// Bayes-oracle label for a vectorized sample; ties go to `+1`.
pub fn bayes_classify(exp: &GeneratedExperiment, x: &[f64]) -> Result<Label> {
    exp.bayes_score(x).map(sign_label)
}

/// Pearson correlation; `NaN` when either side is constant.
pub fn pearson(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len() as f64;
    let ma = a.iter().sum::<f64>() / n;
    let mb = b.iter().sum::<f64>() / n;
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        sab += (x - ma) * (y - mb);
        saa += (x - ma) * (x - ma);
        sbb += (y - mb) * (y - mb);
    }
    sab / (saa * sbb).sqrt()
}

/// A model to benchmark in [`run_experiment`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelSpec {
    pub label: String,
    pub options: FitOptions,
}

impl ModelSpec {
    pub fn new(label: impl Into<String>, options: FitOptions) -> Self {
        ModelSpec {
            label: label.into(),
            options,
        }
    }

    /// Parses `rank1`, `rank5`, `full`, optionally prefixed by `svm-` or
    /// `dwd-`.
    pub fn parse(text: &str) -> Result<ModelSpec> {
        let t = text.trim().to_ascii_lowercase();
        let (solver, rest) = if let Some(rest) = t.strip_prefix("svm-") {
            (Solver::Svm, rest)
        } else if let Some(rest) = t.strip_prefix("dwd-") {
            (Solver::Dwd, rest)
        } else {
            (Solver::Dwd, t.as_str())
        };
        let rank: Rank = rest.parse()?;
        Ok(ModelSpec::new(t.clone(), FitOptions::new(solver, rank)))
    }
}

pub const ORACLE_LABEL: &str = "bayes";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplicateRecord {
    pub replicate: usize,
    pub model: String,
    pub misclassification: f64,
    pub correlation: f64,
    pub converged: bool,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelSummary {
    pub model: String,
    pub mis: f64,
    pub se_mis: f64,
    pub cor: f64,
    pub se_cor: f64,
    pub n_ok: usize,
    pub n_failed: usize,
    pub n_converged: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentTable {
    pub n_replicates: usize,
    pub records: Vec<ReplicateRecord>,
    pub summaries: Vec<ModelSummary>,
}

impl ExperimentTable {
    pub fn summary(&self, model: &str) -> Option<&ModelSummary> {
        self.summaries.iter().find(|s| s.model == model)
    }
}

/// Mean and standard error (sample SD over `√n`).
pub fn mean_and_se(values: &[f64]) -> (f64, f64) {
    let n = values.len();
    if n == 0 {
        return (f64::NAN, f64::NAN);
    }
    let mean = values.iter().sum::<f64>() / n as f64;
    if n < 2 {
        return (mean, f64::NAN);
    }
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1) as f64;
    (mean, (var / n as f64).sqrt())
}

fn replicate_scenario(scenario: &Scenario, tag: u64, replicate: usize) -> Scenario {
    Scenario {
        seed: rng::derive_seed(scenario.seed, &[tag, replicate as u64]),
        ..scenario.clone()
    }
}

fn evaluate_model(
    exp: &GeneratedExperiment,
    spec: &ModelSpec,
    seed: u64,
) -> Result<(f64, f64, bool)> {
    let opts = FitOptions {
        seed,
        ..spec.options.clone()
    };
    let model = fit(&exp.train, &opts)?;
    let scores = model.scores(&exp.test.tensor)?;
    let errors = scores
        .iter()
        .zip(&exp.test.labels)
        .filter(|(s, &y)| sign_label(**s) != y)
        .count();
    let mis = errors as f64 / scores.len() as f64;
    let mut cor = pearson(model.b.as_slice(), &exp.bayes_direction);
    if opts.solver == Solver::Svm {
        cor = cor.abs();
    }
    Ok((mis, cor, model.converged()))
}

fn oracle_record(exp: &GeneratedExperiment, replicate: usize) -> ReplicateRecord {
    let result = (|| -> Result<f64> {
        let mut errors = 0;
        for i in 0..exp.test.n() {
            if bayes_classify(exp, exp.test.tensor.sample(i))? != exp.test.labels[i] {
                errors += 1;
            }
        }
        Ok(errors as f64 / exp.test.n() as f64)
    })();
    match result {
        Ok(mis) => ReplicateRecord {
            replicate,
            model: ORACLE_LABEL.into(),
            misclassification: mis,
            correlation: 1.0,
            converged: true,
            error: None,
        },
        Err(e) => failed_record(replicate, ORACLE_LABEL, e),
    }
}

fn failed_record(replicate: usize, model: &str, e: Error) -> ReplicateRecord {
    ReplicateRecord {
        replicate,
        model: model.into(),
        misclassification: f64::NAN,
        correlation: f64::NAN,
        converged: false,
        error: Some(e.to_string()),
    }
}

/// Runs every model on `n_replicates` independently generated datasets and
/// reports test misclassification and correlation with `μ₁ − μ₀`. The
/// Bayes oracle is always included as the first row. SVM correlations are
/// reported in absolute value.
pub fn run_experiment(
    scenario: &Scenario,
    models: &[ModelSpec],
    n_replicates: usize,
) -> Result<ExperimentTable> {
    if n_replicates < 2 {
        return Err(Error::InvalidArgument(format!(
            "need at least 2 replicates, got {n_replicates}"
        )));
    }
    scenario.validate()?;
    let per_replicate: Vec<Vec<ReplicateRecord>> = (0..n_replicates)
        .into_par_iter()
        .map(|rep| {
            let sc = replicate_scenario(scenario, TAG_REPLICATE, rep);
            let exp = match generate(&sc) {
                Ok(exp) => exp,
                Err(e) => {
                    let mut out = vec![failed_record(rep, ORACLE_LABEL, e)];
                    for spec in models {
                        out.push(failed_record(
                            rep,
                            &spec.label,
                            Error::InvalidArgument("data generation failed".into()),
                        ));
                    }
                    return out;
                }
            };
            let mut out = vec![oracle_record(&exp, rep)];
            for spec in models {
                let seed = rng::derive_seed(sc.seed, &[TAG_MODEL, rng::label_tag(&spec.label)]);
                out.push(match evaluate_model(&exp, spec, seed) {
                    Ok((mis, cor, converged)) => ReplicateRecord {
                        replicate: rep,
                        model: spec.label.clone(),
                        misclassification: mis,
                        correlation: cor,
                        converged,
                        error: None,
                    },
                    Err(e) => failed_record(rep, &spec.label, e),
                });
            }
            out
        })
        .collect();
    let records: Vec<ReplicateRecord> = per_replicate.into_iter().flatten().collect();
    let mut labels = vec![ORACLE_LABEL.to_string()];
    labels.extend(models.iter().map(|m| m.label.clone()));
    let summaries = labels
        .iter()
        .map(|label| summarize(label, &records))
        .collect();
    Ok(ExperimentTable {
        n_replicates,
        records,
        summaries,
    })
}

fn summarize(label: &str, records: &[ReplicateRecord]) -> ModelSummary {
    let ok: Vec<&ReplicateRecord> = records
        .iter()
        .filter(|r| r.model == label && r.error.is_none())
        .collect();
    let failed = records
        .iter()
        .filter(|r| r.model == label && r.error.is_some())
        .count();
    let mis: Vec<f64> = ok.iter().map(|r| r.misclassification).collect();
    let cor: Vec<f64> = ok
        .iter()
        .map(|r| r.correlation)
        .filter(|c| c.is_finite())
        .collect();
    let (mis_mean, mis_se) = mean_and_se(&mis);
    let (cor_mean, cor_se) = mean_and_se(&cor);
    ModelSummary {
        model: label.to_string(),
        mis: mis_mean,
        se_mis: mis_se,
        cor: cor_mean,
        se_cor: cor_se,
        n_ok: ok.len(),
        n_failed: failed,
        n_converged: ok.iter().filter(|r| r.converged).count(),
    }
}

/// Result of [`calibrate_signal`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Calibration {
    pub signal: Signal,
    pub multiplier: f64,
    pub achieved: f64,
    pub evaluations: usize,
}

/// Settings for [`calibrate_signal`] beyond the target itself.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationSettings {
    pub n_train: usize,
    pub n_test_per_class: usize,
    pub n_reps: usize,
    /// Accepted distance between achieved and target misclassification.
    pub tolerance: f64,
    pub seed: u64,
}

impl Default for CalibrationSettings {
    fn default() -> Self {
        CalibrationSettings {
            n_train: 40,
            n_test_per_class: 50,
            n_reps: 20,
            tolerance: 0.02,
            seed: 0,
        }
    }
}

/// Mean full-model DWD test misclassification at a given signal multiplier,
/// over the calibration replicates (common random numbers across
/// multipliers).
pub fn full_model_misclassification(
    p: usize,
    m: usize,
    base: &Signal,
    sigma_e: f64,
    multiplier: f64,
    settings: &CalibrationSettings,
) -> Result<f64> {
    let scenario = Scenario {
        p,
        m,
        n_train: settings.n_train,
        n_test_per_class: settings.n_test_per_class,
        sigma_e0: sigma_e,
        sigma_e1: sigma_e,
        signal: base.scaled(multiplier),
        seed: settings.seed,
    };
    let spec = ModelSpec::new("full", FitOptions::new(Solver::Dwd, Rank::Full));
    let rates: Vec<Result<f64>> = (0..settings.n_reps)
        .into_par_iter()
        .map(|rep| {
            let sc = replicate_scenario(&scenario, TAG_CALIBRATION, rep);
            let exp = generate(&sc)?;
            evaluate_model(&exp, &spec, sc.seed).map(|(mis, _, _)| mis)
        })
        .collect();
    let rates: Vec<f64> = rates.into_iter().collect::<Result<_>>()?;
    Ok(rates.iter().sum::<f64>() / rates.len() as f64)
}

/// Finds a multiplier on the unit signal SDs of `structure` such that the
/// full DWD model's mean test misclassification is within
/// `settings.tolerance` of `target`, by bisection on a bracket grown from
/// `[0, 1]`.
pub fn calibrate_signal(
    p: usize,
    m: usize,
    structure: Rank,
    sigma_e: f64,
    target: f64,
    settings: &CalibrationSettings,
) -> Result<Calibration> {
    if !(target > 0.0 && target <= 0.5) {
        return Err(Error::InvalidArgument(format!(
            "target misclassification must lie in (0, 0.5], got {target}"
        )));
    }
    if settings.n_reps == 0 {
        return Err(Error::InvalidArgument("n_reps must be positive".into()));
    }
    let base = Signal::unit(structure)?;
    if target >= 0.5 {
        return Ok(Calibration {
            signal: base.scaled(0.0),
            multiplier: 0.0,
            achieved: 0.5,
            evaluations: 0,
        });
    }
    let eval = |a: f64| full_model_misclassification(p, m, &base, sigma_e, a, settings);
    let mut evaluations = 0;
    let done = |mis: f64| (mis - target).abs() <= settings.tolerance;

    let mut lo = 0.0;
    let mut hi = 1.0;
    let mut hi_mis = eval(hi)?;
    evaluations += 1;
    while hi_mis > target {
        if done(hi_mis) {
            return Ok(Calibration {
                signal: base.scaled(hi),
                multiplier: hi,
                achieved: hi_mis,
                evaluations,
            });
        }
        lo = hi;
        hi *= 2.0;
        if hi > 1e6 {
            return Err(Error::Calibration(format!(
                "target {target} not reached: misclassification {hi_mis} at multiplier {lo}"
            )));
        }
        hi_mis = eval(hi)?;
        evaluations += 1;
    }
    for _ in 0..60 {
        if done(hi_mis) {
            return Ok(Calibration {
                signal: base.scaled(hi),
                multiplier: hi,
                achieved: hi_mis,
                evaluations,
            });
        }
        let mid = 0.5 * (lo + hi);
        let mid_mis = eval(mid)?;
        evaluations += 1;
        if done(mid_mis) {
            return Ok(Calibration {
                signal: base.scaled(mid),
                multiplier: mid,
                achieved: mid_mis,
                evaluations,
            });
        }
        if mid_mis > target {
            lo = mid;
        } else {
            hi = mid;
            hi_mis = mid_mis;
        }
    }
    Err(Error::Calibration(format!(
        "bisection did not reach {target} ± {} within bracket [{lo}, {hi}]",
        settings.tolerance
    )))
}

/// A scenario before signal calibration, as named on the command line or
/// read from a `key = value` file.
///
/// Named scenarios are `table1_<p>x<m>_<truth>[_n<N>]` with truth `full`,
/// `rank1` or `rank2`, and `fig1_<p>x<m>_rank<r>[_n<N>]`. Config keys are
/// `p`, `m`, `n_train`, `n_test_per_class`, `structure` (`full`, `rank1`,
/// `rank<r>`), `sigma_e` (or `sigma_e0` and `sigma_e1`), `signal_multiplier`,
/// `target_mis`, `calibration_reps` and `seed`. Without
/// `signal_multiplier` the unit signal SDs are calibrated so the full model
/// errs at rate `target_mis` with 40 training samples.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioSpec {
    pub name: String,
    pub p: usize,
    pub m: usize,
    pub n_train: usize,
    pub n_test_per_class: usize,
    pub structure: Rank,
    pub sigma_e0: f64,
    pub sigma_e1: f64,
    pub signal_multiplier: Option<f64>,
    pub target_mis: f64,
    pub calibration_reps: usize,
    pub seed: u64,
}

/// Training size used when calibrating signal strength.
pub const CALIBRATION_N_TRAIN: usize = 40;

impl ScenarioSpec {
    pub fn new(name: impl Into<String>, p: usize, m: usize, structure: Rank) -> Self {
        ScenarioSpec {
            name: name.into(),
            p,
            m,
            n_train: 40,
            n_test_per_class: 50,
            structure,
            sigma_e0: 1.0,
            sigma_e1: 1.0,
            signal_multiplier: None,
            target_mis: 0.2,
            calibration_reps: 20,
            seed: 0,
        }
    }

    pub fn named(name: &str) -> Result<ScenarioSpec> {
        let bad = || {
            Error::InvalidArgument(format!(
                "unknown scenario `{name}`; expected table1_<p>x<m>_<full|rank1|rank2>[_n<N>] \
                 or fig1_<p>x<m>_rank<r>[_n<N>]"
            ))
        };
        let rest = name
            .strip_prefix("table1_")
            .or_else(|| name.strip_prefix("fig1_"))
            .ok_or_else(bad)?;
        let mut parts = rest.split('_');
        let dims = parts.next().ok_or_else(bad)?;
        let (p, m) = dims.split_once('x').ok_or_else(bad)?;
        let p: usize = p.parse().map_err(|_| bad())?;
        let m: usize = m.parse().map_err(|_| bad())?;
        let structure: Rank = parts.next().ok_or_else(bad)?.parse().map_err(|_| bad())?;
        let mut spec = ScenarioSpec::new(name, p, m, structure);
        if let Some(n) = parts.next() {
            spec.n_train = n
                .strip_prefix('n')
                .and_then(|v| v.parse().ok())
                .ok_or_else(bad)?;
        }
        if parts.next().is_some() {
            return Err(bad());
        }
        Ok(spec)
    }

    pub fn parse_config(name: &str, text: &str) -> Result<ScenarioSpec> {
        let mut map = std::collections::BTreeMap::new();
        for (lineno, line) in text.lines().enumerate() {
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line.split_once('=').ok_or_else(|| {
                Error::Format(format!("scenario line {}: expected key = value", lineno + 1))
            })?;
            map.insert(k.trim().to_string(), (v.trim().to_string(), lineno + 1));
        }
        let get = |key: &str| map.get(key).map(|(v, l)| (v.as_str(), *l));
        fn num<T: std::str::FromStr>(key: &str, v: (&str, usize)) -> Result<T> {
            v.0.parse().map_err(|_| {
                Error::Format(format!("scenario line {}: invalid {key} `{}`", v.1, v.0))
            })
        }
        let p = num("p", get("p").ok_or_else(|| Error::Format("scenario needs p".into()))?)?;
        let m = num("m", get("m").ok_or_else(|| Error::Format("scenario needs m".into()))?)?;
        let structure: Rank = match get("structure") {
            Some(v) => num("structure", v)?,
            None => return Err(Error::Format("scenario needs structure".into())),
        };
        let mut spec = ScenarioSpec::new(name, p, m, structure);
        for (key, value) in &map {
            let v = (value.0.as_str(), value.1);
            match key.as_str() {
                "p" | "m" | "structure" => {}
                "n_train" => spec.n_train = num(key, v)?,
                "n_test_per_class" => spec.n_test_per_class = num(key, v)?,
                "sigma_e" => {
                    spec.sigma_e0 = num(key, v)?;
                    spec.sigma_e1 = spec.sigma_e0;
                }
                "sigma_e0" => spec.sigma_e0 = num(key, v)?,
                "sigma_e1" => spec.sigma_e1 = num(key, v)?,
                "signal_multiplier" => spec.signal_multiplier = Some(num(key, v)?),
                "target_mis" => spec.target_mis = num(key, v)?,
                "calibration_reps" => spec.calibration_reps = num(key, v)?,
                "seed" => spec.seed = num(key, v)?,
                other => {
                    return Err(Error::Format(format!(
                        "scenario line {}: unknown key `{other}`",
                        value.1
                    )))
                }
            }
        }
        Ok(spec)
    }

    /// Builds the scenario, calibrating the signal when no multiplier is set.
    pub fn resolve(&self) -> Result<(Scenario, Option<Calibration>)> {
        let base = Signal::unit(self.structure)?;
        let (multiplier, calibration) = match self.signal_multiplier {
            Some(a) => (a, None),
            None => {
                if self.sigma_e0 != self.sigma_e1 {
                    return Err(Error::InvalidArgument(
                        "signal calibration needs equal class noise; set signal_multiplier".into(),
                    ));
                }
                let settings = CalibrationSettings {
                    n_train: CALIBRATION_N_TRAIN,
                    n_test_per_class: self.n_test_per_class,
                    n_reps: self.calibration_reps,
                    seed: rng::derive_seed(self.seed, &[TAG_CALIBRATION]),
                    ..Default::default()
                };
                let cal = calibrate_signal(
                    self.p,
                    self.m,
                    self.structure,
                    self.sigma_e0,
                    self.target_mis,
                    &settings,
                )?;
                (cal.multiplier, Some(cal))
            }
        };
        let scenario = Scenario {
            p: self.p,
            m: self.m,
            n_train: self.n_train,
            n_test_per_class: self.n_test_per_class,
            sigma_e0: self.sigma_e0,
            sigma_e1: self.sigma_e1,
            signal: base.scaled(multiplier),
            seed: self.seed,
        };
        scenario.validate()?;
        Ok((scenario, calibration))
    }
}
