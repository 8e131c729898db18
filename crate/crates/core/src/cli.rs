//! Command-line front end.
//!
//! Every command logs its resolved configuration as one JSON line on
//! stderr. Failures print one line `error: <kind>: <message>` and exit with
//! a nonzero status.

use std::fs::File;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;
use serde_json::json;

use crate::error::{Error, Result};
use crate::evaluation::{bootstrap_weights, cross_validate, rank_selection, CvScheme};
use crate::io::{align_axes, format_real, ingest, load_tensor_csv, ModelFile};
use crate::multiway::{fit, FitOptions, PenaltyRule, Rank, Solver};
use crate::simulation::{run_experiment, ModelSpec, ScenarioSpec};
use crate::tensor::LabeledDataset;

pub const WORKERS_ENV: &str = "MWCLASS_WORKERS";

#[derive(Debug, Parser)]
#[command(name = "mwclass", version, about = "Low-rank multi-way DWD and SVM classification")]
pub struct Cli {
    /// Worker threads (default: available processors); MWCLASS_WORKERS overrides.
    #[arg(long, global = true)]
    pub workers: Option<usize>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Fit a model and write it as JSON.
    Fit(FitCmd),
    /// Score a tensor with a saved model.
    Predict(PredictCmd),
    /// Cross-validated misclassification and t-statistic.
    Cv(CvCmd),
    /// Compare ranks by cross-validation.
    RankSelect(RankSelectCmd),
    /// Stratified bootstrap intervals for the weights.
    Bootstrap(BootstrapCmd),
    /// Replicated simulation study.
    Simulate(SimulateCmd),
}

#[derive(Debug, Clone, Copy, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum SolverArg {
    Dwd,
    Svm,
}

impl From<SolverArg> for Solver {
    fn from(s: SolverArg) -> Solver {
        match s {
            SolverArg::Dwd => Solver::Dwd,
            SolverArg::Svm => Solver::Svm,
        }
    }
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct DataArgs {
    /// Long-format tensor CSV (sample_id, dim1, dim2, value).
    #[arg(long)]
    pub tensor: PathBuf,
    /// Label CSV (sample_id, label) with labels ±1 or 0/1.
    #[arg(long)]
    pub labels: PathBuf,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct ModelArgs {
    #[arg(long, value_enum, default_value_t = SolverArg::Dwd)]
    pub solver: SolverArg,
    /// Positive integer rank or `full`.
    #[arg(long, default_value = "1")]
    pub rank: Rank,
    /// Stop when successive normalized coefficient matrices differ by less.
    #[arg(long, default_value_t = 1e-5)]
    pub epsilon: f64,
    /// Maximum alternating iterations.
    #[arg(long, default_value_t = 100)]
    pub max_iter: usize,
    /// Random restarts (default 1 for DWD, 5 for SVM).
    #[arg(long)]
    pub restarts: Option<usize>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Z-score every cell using the training samples.
    #[arg(long)]
    pub standardize: bool,
    /// SVM ridge penalty.
    #[arg(long, default_value_t = 0.01)]
    pub svm_lambda: f64,
    /// Use this DWD penalty for every inner fit instead of the
    /// distance-scaled rule.
    #[arg(long, conflicts_with = "unscaled_penalty")]
    pub dwd_penalty: Option<f64>,
    /// Use `100·d²/D²` itself as the DWD penalty of each inner fit.
    #[arg(long)]
    pub unscaled_penalty: bool,
}

impl ModelArgs {
    pub fn options(&self) -> FitOptions {
        FitOptions {
            restarts: self.restarts,
            seed: self.seed,
            epsilon: self.epsilon,
            max_acs_iterations: self.max_iter,
            standardize: self.standardize,
            svm_lambda: self.svm_lambda,
            penalty: match (self.dwd_penalty, self.unscaled_penalty) {
                (Some(c), _) => PenaltyRule::Fixed(c),
                (None, true) => PenaltyRule::Unscaled,
                (None, false) => PenaltyRule::MedianDistance,
            },
            ..FitOptions::new(self.solver.into(), self.rank)
        }
    }
}

#[derive(Debug, Args, Serialize)]
pub struct FitCmd {
    #[command(flatten)]
    pub data: DataArgs,
    #[command(flatten)]
    pub model: ModelArgs,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args, Serialize)]
pub struct PredictCmd {
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long)]
    pub tensor: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args, Serialize)]
pub struct CvCmd {
    #[command(flatten)]
    pub data: DataArgs,
    #[command(flatten)]
    pub model: ModelArgs,
    /// `loo` or a fold count.
    #[arg(long, default_value = "loo")]
    pub folds: String,
    /// `report.json` or `report.json,scores.csv`.
    #[arg(long)]
    pub out: String,
}

#[derive(Debug, Args, Serialize)]
pub struct RankSelectCmd {
    #[command(flatten)]
    pub data: DataArgs,
    #[command(flatten)]
    pub model: ModelArgs,
    /// Comma-separated ranks, e.g. `1,2,3,full`.
    #[arg(long)]
    pub ranks: String,
    #[arg(long, default_value = "loo")]
    pub folds: String,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args, Serialize)]
pub struct BootstrapCmd {
    #[command(flatten)]
    pub data: DataArgs,
    #[command(flatten)]
    pub model: ModelArgs,
    #[arg(long, default_value_t = 5000)]
    pub n_boot: usize,
    /// Nominal coverage of the percentile intervals.
    #[arg(long, default_value_t = 0.95)]
    pub level: f64,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args, Serialize)]
pub struct SimulateCmd {
    /// Named scenario (e.g. `table1_15x4_rank1`) or a key = value file.
    #[arg(long)]
    pub scenario: String,
    #[arg(long, default_value_t = 100)]
    pub reps: usize,
    /// Comma-separated models: rank<r>, full, optionally prefixed `svm-`.
    #[arg(long, default_value = "rank1,rank2,full")]
    pub models: String,
    /// Overrides the scenario seed.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Overrides the training size.
    #[arg(long)]
    pub n_train: Option<usize>,
    /// Fixed signal multiplier (skips calibration).
    #[arg(long)]
    pub signal_multiplier: Option<f64>,
    /// Full-model misclassification targeted by calibration.
    #[arg(long)]
    pub target_mis: Option<f64>,
    #[arg(long)]
    pub calibration_reps: Option<usize>,
    #[arg(long)]
    pub out: PathBuf,
    /// Optional per-replicate CSV.
    #[arg(long)]
    pub replicates_out: Option<PathBuf>,
}

/// Entry point used by the binary.
pub fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                let _ = e.print();
                return ExitCode::SUCCESS;
            }
            eprintln!("error: usage: {}", one_line(&e.render().to_string()));
            return ExitCode::from(2);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {}: {}", e.kind(), one_line(&e.to_string()));
            ExitCode::FAILURE
        }
    }
}

fn one_line(text: &str) -> String {
    text.lines()
        .map(str::trim)
        .filter(|l| !l.is_empty() && !l.starts_with("Usage:") && !l.starts_with("For more"))
        .map(|l| l.strip_prefix("error: ").unwrap_or(l))
        .collect::<Vec<_>>()
        .join("; ")
}

/// Resolves the worker count: the environment variable wins over the flag,
/// which wins over the processor count.
pub fn resolve_workers(flag: Option<usize>, env: Option<&str>) -> Result<usize> {
    if let Some(text) = env {
        return match text.trim().parse::<usize>() {
            Ok(n) if n > 0 => Ok(n),
            _ => Err(Error::InvalidArgument(format!(
                "{WORKERS_ENV} must be a positive integer, got `{text}`"
            ))),
        };
    }
    match flag {
        Some(0) => Err(Error::InvalidArgument("--workers must be positive".into())),
        Some(n) => Ok(n),
        None => Ok(std::thread::available_parallelism().map_or(1, |n| n.get())),
    }
}

pub fn run(cli: Cli) -> Result<()> {
    let env = std::env::var(WORKERS_ENV).ok();
    let workers = resolve_workers(cli.workers, env.as_deref())?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| Error::InvalidArgument(format!("thread pool: {e}")))?;
    pool.install(|| match &cli.command {
        Command::Fit(c) => cmd_fit(c, workers),
        Command::Predict(c) => cmd_predict(c, workers),
        Command::Cv(c) => cmd_cv(c, workers),
        Command::RankSelect(c) => cmd_rank_select(c, workers),
        Command::Bootstrap(c) => cmd_bootstrap(c, workers),
        Command::Simulate(c) => cmd_simulate(c, workers),
    })
}

fn log_config(command: &str, args: &impl Serialize, extra: serde_json::Value, workers: usize) {
    let line = json!({
        "resolved_config": {
            "command": command,
            "version": env!("CARGO_PKG_VERSION"),
            "workers": workers,
            "args": args,
            "resolved": extra,
        }
    });
    eprintln!("{line}");
}

fn create(path: &Path) -> Result<File> {
    File::create(path).map_err(|e| {
        Error::Io(std::io::Error::new(e.kind(), format!("{}: {e}", path.display())))
    })
}

fn load_data(args: &DataArgs) -> Result<(LabeledDataset, Vec<String>)> {
    ingest(&args.tensor, &args.labels)
}

pub fn parse_scheme(text: &str) -> Result<CvScheme> {
    let t = text.trim().to_ascii_lowercase();
    if t == "loo" || t == "loocv" {
        return Ok(CvScheme::LeaveOneOut);
    }
    match t.parse::<usize>() {
        Ok(k) if k >= 2 => Ok(CvScheme::KFold(k)),
        _ => Err(Error::InvalidArgument(format!(
            "--folds must be `loo` or an integer ≥ 2, got `{text}`"
        ))),
    }
}

pub fn parse_ranks(text: &str) -> Result<Vec<Rank>> {
    let ranks = text
        .split(',')
        .filter(|s| !s.trim().is_empty())
        .map(|s| s.trim().parse::<Rank>())
        .collect::<Result<Vec<_>>>()?;
    if ranks.is_empty() {
        return Err(Error::InvalidArgument("--ranks is empty".into()));
    }
    Ok(ranks)
}

fn opt_real(v: Option<f64>) -> String {
    v.map(format_real).unwrap_or_default()
}

fn cmd_fit(c: &FitCmd, workers: usize) -> Result<()> {
    let opts = c.model.options();
    log_config("fit", c, json!({ "options": opts }), workers);
    let (data, _) = load_data(&c.data)?;
    let model = fit(&data, &opts)?;
    let file = ModelFile::from_model(
        &model,
        &opts,
        data.dim1_names.clone(),
        data.dim2_names.clone(),
    );
    file.save(&c.out)?;
    println!(
        "{}",
        json!({
            "converged": model.converged(),
            "iterations": model.trace.iterations,
            "objective": model.objective,
            "p": model.p(),
            "m": model.m(),
        })
    );
    Ok(())
}

fn cmd_predict(c: &PredictCmd, workers: usize) -> Result<()> {
    log_config("predict", c, json!({}), workers);
    let file = ModelFile::load(&c.model)?;
    let model = file.to_model()?;
    let data = load_tensor_csv(&c.tensor)?;
    let tensor = align_axes(&data, &file.dim1_names, &file.dim2_names)?;
    let scores = model.scores(&tensor)?;
    let mut w = csv::Writer::from_writer(create(&c.out)?);
    w.write_record(["sample_id", "score", "predicted_label"])?;
    for (id, s) in data.sample_ids.iter().zip(&scores) {
        let label = crate::classifiers::sign_label(*s);
        w.write_record([id.as_str(), &format_real(*s), &label.to_string()])?;
    }
    w.flush()?;
    Ok(())
}

fn split_outputs(out: &str) -> Result<(PathBuf, Option<PathBuf>)> {
    let parts: Vec<&str> = out.split(',').map(str::trim).filter(|s| !s.is_empty()).collect();
    match parts.as_slice() {
        [report] => Ok((PathBuf::from(report), None)),
        [report, scores] => Ok((PathBuf::from(report), Some(PathBuf::from(scores)))),
        _ => Err(Error::InvalidArgument(format!(
            "--out must be `report.json` or `report.json,scores.csv`, got `{out}`"
        ))),
    }
}

fn cmd_cv(c: &CvCmd, workers: usize) -> Result<()> {
    let opts = c.model.options();
    let scheme = parse_scheme(&c.folds)?;
    let (report_path, scores_path) = split_outputs(&c.out)?;
    log_config("cv", c, json!({ "options": opts, "scheme": scheme }), workers);
    let (data, ids) = load_data(&c.data)?;
    let report = cross_validate(&data, &opts, scheme)?;
    let summary = json!({
        "solver": opts.solver,
        "rank": opts.rank,
        "scheme": scheme,
        "n": data.n(),
        "misclassification_rate": report.misclassification_rate,
        "t_statistic": report.t_statistic,
        "converged_folds": report.per_fold_convergence.iter().filter(|&&b| b).count(),
        "failed_folds": report.failed_folds,
        "per_fold_convergence": report.per_fold_convergence,
        "seed": opts.seed,
    });
    std::fs::write(&report_path, serde_json::to_string_pretty(&summary)?)?;
    if let Some(path) = scores_path {
        let mut w = csv::Writer::from_writer(create(&path)?);
        w.write_record(["sample_id", "label", "score", "predicted_label"])?;
        for ((id, y), s) in ids.iter().zip(&data.labels).zip(&report.per_sample_scores) {
            let pred = if s.is_finite() {
                crate::classifiers::sign_label(*s).to_string()
            } else {
                String::new()
            };
            w.write_record([id.as_str(), &y.to_string(), &format_real(*s), &pred])?;
        }
        w.flush()?;
    }
    println!("{summary}");
    Ok(())
}

/// Dimensions of the public interferon-β time-course data.
const GENE_SHAPE: (usize, usize, usize) = (53, 76, 7);

fn cmd_rank_select(c: &RankSelectCmd, workers: usize) -> Result<()> {
    let opts = c.model.options();
    let ranks = parse_ranks(&c.ranks)?;
    let scheme = parse_scheme(&c.folds)?;
    log_config(
        "rank-select",
        c,
        json!({ "options": opts, "ranks": ranks, "scheme": scheme }),
        workers,
    );
    let (data, _) = load_data(&c.data)?;
    if data.tensor.shape() == GENE_SHAPE {
        eprintln!(
            "note: data shape matches the 53×76×7 interferon-β time course; published \
             leave-one-out rates for multi-way DWD are about 17% for rank 1 and 23% for \
             the full model (informational only)"
        );
    }
    let sel = rank_selection(&data, &ranks, &opts, scheme)?;
    let mut w = csv::Writer::from_writer(create(&c.out)?);
    w.write_record([
        "rank",
        "misclassification",
        "t_statistic",
        "converged_folds",
        "failed_folds",
        "selected",
    ])?;
    for row in &sel.rows {
        w.write_record([
            row.rank.to_string(),
            format_real(row.misclassification),
            opt_real(row.t_statistic),
            row.converged_folds.to_string(),
            row.failed_folds.to_string(),
            (row.rank == sel.selected).to_string(),
        ])?;
    }
    w.flush()?;
    println!("{}", json!({ "selected": sel.selected, "rows": sel.rows }));
    Ok(())
}

fn cmd_bootstrap(c: &BootstrapCmd, workers: usize) -> Result<()> {
    let opts = c.model.options();
    log_config("bootstrap", c, json!({ "options": opts }), workers);
    let (data, _) = load_data(&c.data)?;
    let report = bootstrap_weights(&data, &opts, c.n_boot)?;
    let (lower, upper) = report.interval(c.level)?;
    let (p, m) = (data.tensor.p(), data.tensor.m());
    let name1 = |j: usize| data.dim1_names.as_ref().map_or(format!("d1_{}", j + 1), |n| n[j].clone());
    let name2 = |k: usize| data.dim2_names.as_ref().map_or(format!("d2_{}", k + 1), |n| n[k].clone());

    let mut rows: Vec<(String, usize, String)> = Vec::new();
    match (&report.point.w, &report.point.v) {
        (Some(wm), Some(vm)) => {
            for z in 0..wm.ncols() {
                for j in 0..p {
                    rows.push(("w".into(), z + 1, name1(j)));
                }
            }
            for z in 0..vm.ncols() {
                for k in 0..m {
                    rows.push(("v".into(), z + 1, name2(k)));
                }
            }
        }
        _ => {
            for k in 0..m {
                for j in 0..p {
                    rows.push(("b".into(), 1, format!("{}:{}", name1(j), name2(k))));
                }
            }
        }
    }
    let estimates = report.point.parameters();
    let mut w = csv::Writer::from_writer(create(&c.out)?);
    w.write_record(["factor", "component", "name", "estimate", "lower", "upper"])?;
    for (i, (factor, comp, name)) in rows.iter().enumerate() {
        w.write_record([
            factor.as_str(),
            &comp.to_string(),
            name.as_str(),
            &format_real(estimates[i]),
            &format_real(lower[i]),
            &format_real(upper[i]),
        ])?;
    }
    w.flush()?;
    println!(
        "{}",
        json!({
            "n_boot": report.n_boot,
            "n_failed": report.n_failed(),
            "level": c.level,
        })
    );
    Ok(())
}

fn cmd_simulate(c: &SimulateCmd, workers: usize) -> Result<()> {
    let mut spec = if Path::new(&c.scenario).is_file() {
        let text = std::fs::read_to_string(&c.scenario)?;
        ScenarioSpec::parse_config(&c.scenario, &text)?
    } else {
        ScenarioSpec::named(&c.scenario)?
    };
    if let Some(seed) = c.seed {
        spec.seed = seed;
    }
    if let Some(n) = c.n_train {
        spec.n_train = n;
    }
    if let Some(a) = c.signal_multiplier {
        spec.signal_multiplier = Some(a);
    }
    if let Some(t) = c.target_mis {
        spec.target_mis = t;
    }
    if let Some(r) = c.calibration_reps {
        spec.calibration_reps = r;
    }
    let models = c
        .models
        .split(',')
        .filter(|s| !s.trim().is_empty())
        .map(ModelSpec::parse)
        .collect::<Result<Vec<_>>>()?;
    if models.is_empty() {
        return Err(Error::InvalidArgument("--models is empty".into()));
    }
    for model in &models {
        model.options.validate(spec.p, spec.m)?;
    }
    let (scenario, calibration) = spec.resolve()?;
    log_config(
        "simulate",
        c,
        json!({
            "scenario_spec": spec,
            "scenario": scenario,
            "calibration": calibration,
            "models": models,
        }),
        workers,
    );
    let table = run_experiment(&scenario, &models, c.reps)?;
    let mut w = csv::Writer::from_writer(create(&c.out)?);
    w.write_record([
        "model",
        "Mis",
        "SE(Mis)",
        "Cor",
        "SE(Cor)",
        "n_ok",
        "n_failed",
        "n_converged",
    ])?;
    for s in &table.summaries {
        w.write_record([
            s.model.clone(),
            format_real(s.mis),
            format_real(s.se_mis),
            format_real(s.cor),
            format_real(s.se_cor),
            s.n_ok.to_string(),
            s.n_failed.to_string(),
            s.n_converged.to_string(),
        ])?;
    }
    w.flush()?;
    if let Some(path) = &c.replicates_out {
        let mut w = csv::Writer::from_writer(create(path)?);
        w.write_record([
            "replicate",
            "model",
            "misclassification",
            "correlation",
            "converged",
            "error",
        ])?;
        for r in &table.records {
            w.write_record([
                r.replicate.to_string(),
                r.model.clone(),
                format_real(r.misclassification),
                format_real(r.correlation),
                r.converged.to_string(),
                r.error.clone().unwrap_or_default(),
            ])?;
        }
        w.flush()?;
    }
    let mut stdout = std::io::stdout().lock();
    writeln!(stdout, "{}", json!({ "n_replicates": table.n_replicates, "summaries": table.summaries }))?;
    Ok(())
}
