use mwclass::evaluation::{cross_validate, CvScheme, EvalReport};
use mwclass::io::ModelFile;
use mwclass::simulation::{run_experiment, ModelSpec, ScenarioSpec};
use mwclass::{FitOptions, Label, LabeledDataset, Matrix, MultiwayModel, Rank, Solver, Tensor3};
use pyo3::exceptions::PyValueError;
use pyo3::prelude::*;
use pyo3::types::PyDict;
use std::path::PathBuf;

fn err(e: mwclass::Error) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn tensor(samples: Vec<Vec<Vec<f64>>>) -> PyResult<Tensor3> {
    let slices = samples
        .iter()
        .map(|rows| matrix(rows))
        .collect::<PyResult<Vec<_>>>()?;
    Tensor3::from_slices(&slices).map_err(err)
}

fn matrix(rows: &[Vec<f64>]) -> PyResult<Matrix> {
    let p = rows.len();
    let m = rows.first().map_or(0, Vec::len);
    if rows.iter().any(|r| r.len() != m) {
        return Err(PyValueError::new_err("ragged sample matrix"));
    }
    Ok(Matrix::from_fn(p, m, |i, j| rows[i][j]))
}

fn rows(m: &Matrix) -> Vec<Vec<f64>> {
    m.row_iter().map(|r| r.iter().copied().collect()).collect()
}

fn dataset(samples: Vec<Vec<Vec<f64>>>, labels: Vec<Label>) -> PyResult<LabeledDataset> {
    LabeledDataset::new(tensor(samples)?, labels).map_err(err)
}

fn options(solver: &str, rank: Option<usize>, seed: u64, standardize: bool) -> PyResult<FitOptions> {
    let solver = match solver {
        "dwd" => Solver::Dwd,
        "svm" => Solver::Svm,
        other => return Err(PyValueError::new_err(format!("unknown solver `{other}`"))),
    };
    let rank = rank.map_or(Rank::Full, Rank::Fixed);
    let mut opts = FitOptions::new(solver, rank).with_seed(seed);
    opts.standardize = standardize;
    Ok(opts)
}

/// A fitted multi-way linear classifier.
#[pyclass(name = "Model")]
struct PyModel {
    model: MultiwayModel,
    options: FitOptions,
}

#[pymethods]
impl PyModel {
    /// Coefficient matrix `B` as a list of rows.
    #[getter]
    fn b(&self) -> Vec<Vec<f64>> {
        rows(&self.model.b)
    }

    #[getter]
    fn w(&self) -> Option<Vec<Vec<f64>>> {
        self.model.w.as_ref().map(rows)
    }

    #[getter]
    fn v(&self) -> Option<Vec<Vec<f64>>> {
        self.model.v.as_ref().map(rows)
    }

    #[getter]
    fn intercept(&self) -> f64 {
        self.model.intercept
    }

    #[getter]
    fn objective(&self) -> f64 {
        self.model.objective
    }

    #[getter]
    fn converged(&self) -> bool {
        self.model.converged()
    }

    /// Objective value after every half-step.
    #[getter]
    fn half_step_objectives(&self) -> Vec<f64> {
        self.model.trace.half_steps.iter().map(|h| h.objective).collect()
    }

    fn scores(&self, samples: Vec<Vec<Vec<f64>>>) -> PyResult<Vec<f64>> {
        self.model.scores(&tensor(samples)?).map_err(err)
    }

    fn predict(&self, samples: Vec<Vec<Vec<f64>>>) -> PyResult<Vec<Label>> {
        Ok(self
            .scores(samples)?
            .into_iter()
            .map(|s| if s >= 0.0 { 1 } else { -1 })
            .collect())
    }

    fn save(&self, path: PathBuf) -> PyResult<()> {
        ModelFile::from_model(&self.model, &self.options, None, None)
            .save(&path)
            .map_err(err)
    }

    #[staticmethod]
    fn load(path: PathBuf) -> PyResult<PyModel> {
        let file = ModelFile::load(&path).map_err(err)?;
        let model = file.to_model().map_err(err)?;
        Ok(PyModel { model, options: file.options })
    }

    fn __repr__(&self) -> String {
        format!(
            "Model(solver={:?}, rank={:?}, shape=({}, {}), converged={})",
            self.model.solver,
            self.model.rank,
            self.model.p(),
            self.model.m(),
            self.model.converged()
        )
    }
}

/// Fits a DWD or SVM classifier with rank-`rank` coefficients (`None` for
/// an unconstrained matrix). `samples[i]` is the `p × m` matrix of sample `i`.
#[pyfunction]
#[pyo3(signature = (samples, labels, solver="dwd", rank=Some(1), seed=0, standardize=false))]
fn fit(
    py: Python<'_>,
    samples: Vec<Vec<Vec<f64>>>,
    labels: Vec<Label>,
    solver: &str,
    rank: Option<usize>,
    seed: u64,
    standardize: bool,
) -> PyResult<PyModel> {
    let data = dataset(samples, labels)?;
    let opts = options(solver, rank, seed, standardize)?;
    let model = py.detach(|| mwclass::fit(&data, &opts)).map_err(err)?;
    Ok(PyModel { model, options: opts })
}

fn report_dict<'py>(py: Python<'py>, report: &EvalReport) -> PyResult<Bound<'py, PyDict>> {
    let d = PyDict::new(py);
    d.set_item("misclassification_rate", report.misclassification_rate)?;
    d.set_item("t_statistic", report.t_statistic)?;
    d.set_item("scores", report.per_sample_scores.clone())?;
    d.set_item("folds", report.folds.clone())?;
    Ok(d)
}

/// Leave-one-out (`folds=None`) or stratified k-fold cross-validation.
#[pyfunction]
#[pyo3(signature = (samples, labels, solver="dwd", rank=Some(1), folds=None, seed=0))]
fn cross_validation<'py>(
    py: Python<'py>,
    samples: Vec<Vec<Vec<f64>>>,
    labels: Vec<Label>,
    solver: &str,
    rank: Option<usize>,
    folds: Option<usize>,
    seed: u64,
) -> PyResult<Bound<'py, PyDict>> {
    let data = dataset(samples, labels)?;
    let opts = options(solver, rank, seed, false)?;
    let scheme = folds.map_or(CvScheme::LeaveOneOut, CvScheme::KFold);
    let report = py.detach(|| cross_validate(&data, &opts, scheme)).map_err(err)?;
    report_dict(py, &report)
}

/// Runs a named simulation scenario and returns one summary dict per model.
#[pyfunction]
#[pyo3(signature = (scenario, models, reps=100))]
fn simulate<'py>(
    py: Python<'py>,
    scenario: &str,
    models: Vec<String>,
    reps: usize,
) -> PyResult<Vec<Bound<'py, PyDict>>> {
    let specs = models
        .iter()
        .map(|m| ModelSpec::parse(m))
        .collect::<mwclass::Result<Vec<_>>>()
        .map_err(err)?;
    let spec = ScenarioSpec::named(scenario).map_err(err)?;
    let table = py
        .detach(|| {
            let (sc, _) = spec.resolve()?;
            run_experiment(&sc, &specs, reps)
        })
        .map_err(err)?;
    table
        .summaries
        .iter()
        .map(|s| {
            let d = PyDict::new(py);
            d.set_item("model", &s.model)?;
            d.set_item("mis", s.mis)?;
            d.set_item("se_mis", s.se_mis)?;
            d.set_item("cor", s.cor)?;
            d.set_item("se_cor", s.se_cor)?;
            d.set_item("n_converged", s.n_converged)?;
            Ok(d)
        })
        .collect()
}

#[pymodule]
fn mwclass_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyModel>()?;
    m.add_function(wrap_pyfunction!(fit, m)?)?;
    m.add_function(wrap_pyfunction!(cross_validation, m)?)?;
    m.add_function(wrap_pyfunction!(simulate, m)?)?;
    m.add("__version__", env!("CARGO_PKG_VERSION"))?;
    Ok(())
}
