//! File formats: long-format tensor CSV, label CSV and the JSON model file.
//!
//! A tensor CSV has a header naming the columns `sample_id`, `dim1`, `dim2`
//! and `value` (any order, extra columns ignored) and one row per cell.
//! Samples and axis levels are ordered by first appearance. A label CSV has
//! the columns `sample_id` and `label`, with labels in `{-1, +1}` or
//! `{0, 1}` (`0` maps to `-1`).
//!
//! Reals are written with 17 significant digits, which round-trips every
//! `f64` exactly.

use std::collections::HashMap;
use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::multiway::{FitOptions, FitTrace, MultiwayModel, Rank, Solver};
use crate::tensor::{Label, LabeledDataset, Matrix, Standardizer, Tensor3};

/// A tensor read from long-format CSV, with its level names.
#[derive(Debug, Clone, PartialEq)]
pub struct TensorCsv {
    pub tensor: Tensor3,
    pub sample_ids: Vec<String>,
    pub dim1_names: Vec<String>,
    pub dim2_names: Vec<String>,
}

/// Formats a real with 17 significant digits.
pub fn format_real(v: f64) -> String {
    format!("{v:.16e}")
}

struct Levels {
    names: Vec<String>,
    index: HashMap<String, usize>,
}

impl Levels {
    fn new() -> Self {
        Levels {
            names: Vec::new(),
            index: HashMap::new(),
        }
    }

    fn intern(&mut self, name: &str) -> usize {
        if let Some(&i) = self.index.get(name) {
            return i;
        }
        let i = self.names.len();
        self.names.push(name.to_string());
        self.index.insert(name.to_string(), i);
        i
    }
}

fn column_index(headers: &csv::StringRecord, name: &str, what: &str) -> Result<usize> {
    headers
        .iter()
        .position(|h| h.trim() == name)
        .ok_or_else(|| Error::Format(format!("{what} is missing the `{name}` column")))
}

/// Parses a long-format tensor CSV.
pub fn read_tensor_csv<R: Read>(reader: R) -> Result<TensorCsv> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let headers = rdr.headers()?.clone();
    let cs = column_index(&headers, "sample_id", "tensor file")?;
    let c1 = column_index(&headers, "dim1", "tensor file")?;
    let c2 = column_index(&headers, "dim2", "tensor file")?;
    let cv = column_index(&headers, "value", "tensor file")?;

    let mut samples = Levels::new();
    let mut dim1 = Levels::new();
    let mut dim2 = Levels::new();
    let mut cells: HashMap<(usize, usize, usize), (f64, u64)> = HashMap::new();
    for record in rdr.records() {
        let record = record?;
        let row = record.position().map_or(0, |p| p.line());
        let field = |c: usize| record.get(c).unwrap_or("");
        let raw = field(cv);
        let value: f64 = raw.parse().map_err(|_| {
            Error::Format(format!("row {row}: value `{raw}` is not a number"))
        })?;
        if !value.is_finite() {
            return Err(Error::NonFinite(format!("tensor file row {row}")));
        }
        let key = (
            samples.intern(field(cs)),
            dim1.intern(field(c1)),
            dim2.intern(field(c2)),
        );
        if let Some((_, first)) = cells.insert(key, (value, row)) {
            return Err(Error::Format(format!(
                "duplicate cell ({}, {}, {}) on rows {first} and {row}",
                field(cs),
                field(c1),
                field(c2)
            )));
        }
    }
    let (n, p, m) = (samples.names.len(), dim1.names.len(), dim2.names.len());
    if n == 0 {
        return Err(Error::Format("tensor file has no data rows".into()));
    }
    let mut values = vec![0.0; n * p * m];
    let mut gaps = Vec::new();
    let mut missing = 0usize;
    for i in 0..n {
        for k in 0..m {
            for j in 0..p {
                match cells.get(&(i, j, k)) {
                    Some(&(v, _)) => values[i * p * m + k * p + j] = v,
                    None => {
                        missing += 1;
                        if gaps.len() < 10 {
                            gaps.push(format!(
                                "({}, {}, {})",
                                samples.names[i], dim1.names[j], dim2.names[k]
                            ));
                        }
                    }
                }
            }
        }
    }
    if missing > 0 {
        return Err(Error::Format(format!(
            "incomplete grid: {missing} of {} cells missing, first: {}",
            n * p * m,
            gaps.join(", ")
        )));
    }
    Ok(TensorCsv {
        tensor: Tensor3::new(n, p, m, values)?,
        sample_ids: samples.names,
        dim1_names: dim1.names,
        dim2_names: dim2.names,
    })
}

pub fn load_tensor_csv(path: &Path) -> Result<TensorCsv> {
    read_tensor_csv(open(path)?)
}

fn open(path: &Path) -> Result<File> {
    File::open(path).map_err(|e| {
        Error::Io(std::io::Error::new(e.kind(), format!("{}: {e}", path.display())))
    })
}

/// Parses a label CSV into `sample_id → ±1`, preserving file order.
pub fn read_labels_csv<R: Read>(reader: R) -> Result<Vec<(String, Label)>> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let headers = rdr.headers()?.clone();
    let cs = column_index(&headers, "sample_id", "label file")?;
    let cl = column_index(&headers, "label", "label file")?;
    let mut raw = Vec::new();
    let mut seen = HashMap::new();
    for record in rdr.records() {
        let record = record?;
        let row = record.position().map_or(0, |p| p.line());
        let id = record.get(cs).unwrap_or("").to_string();
        let text = record.get(cl).unwrap_or("");
        let value: f64 = text.parse().map_err(|_| {
            Error::Format(format!("label file row {row}: label `{text}` is not a number"))
        })?;
        if ![-1.0, 0.0, 1.0].contains(&value) {
            return Err(Error::Format(format!(
                "label file row {row}: label {value} not in {{-1, +1}} or {{0, 1}}"
            )));
        }
        if let Some(first) = seen.insert(id.clone(), row) {
            return Err(Error::Format(format!(
                "label file lists sample `{id}` twice (rows {first} and {row})"
            )));
        }
        raw.push((id, value, row));
    }
    let has_zero = raw.iter().any(|r| r.1 == 0.0);
    let has_minus = raw.iter().any(|r| r.1 == -1.0);
    if has_zero && has_minus {
        return Err(Error::Format(
            "label file mixes the {-1, +1} and {0, 1} codings".into(),
        ));
    }
    Ok(raw
        .into_iter()
        .map(|(id, v, _)| (id, if v > 0.0 { 1 } else { -1 }))
        .collect())
}

/// Joins a tensor with its labels; the dataset follows the tensor's sample
/// order.
pub fn attach_labels(tensor: TensorCsv, labels: &[(String, Label)]) -> Result<LabeledDataset> {
    let index: HashMap<&str, usize> = tensor
        .sample_ids
        .iter()
        .enumerate()
        .map(|(i, s)| (s.as_str(), i))
        .collect();
    let mut by_sample: Vec<Option<Label>> = vec![None; tensor.sample_ids.len()];
    for (id, y) in labels {
        match index.get(id.as_str()) {
            Some(&i) => by_sample[i] = Some(*y),
            None => {
                return Err(Error::Format(format!(
                    "label file names sample `{id}` that is not in the tensor file"
                )))
            }
        }
    }
    let missing: Vec<&str> = by_sample
        .iter()
        .zip(&tensor.sample_ids)
        .filter(|(y, _)| y.is_none())
        .map(|(_, id)| id.as_str())
        .take(10)
        .collect();
    if !missing.is_empty() {
        return Err(Error::Format(format!(
            "samples without labels: {}",
            missing.join(", ")
        )));
    }
    let labels = by_sample.into_iter().map(|y| y.expect("checked")).collect();
    LabeledDataset::new(tensor.tensor, labels)?.with_names(tensor.dim1_names, tensor.dim2_names)
}

/// Reads a tensor file and a label file into a dataset.
pub fn ingest(tensor_path: &Path, labels_path: &Path) -> Result<(LabeledDataset, Vec<String>)> {
    let tensor = load_tensor_csv(tensor_path)?;
    let labels = read_labels_csv(open(labels_path)?)?;
    let ids = tensor.sample_ids.clone();
    Ok((attach_labels(tensor, &labels)?, ids))
}

/// Writes a tensor in canonical long format: samples in order, then `dim1`,
/// then `dim2` varying fastest.
pub fn write_tensor_csv<W: Write>(
    writer: W,
    tensor: &Tensor3,
    sample_ids: &[String],
    dim1_names: &[String],
    dim2_names: &[String],
) -> Result<()> {
    if sample_ids.len() != tensor.n()
        || dim1_names.len() != tensor.p()
        || dim2_names.len() != tensor.m()
    {
        return Err(Error::Dimension("names do not match the tensor shape".into()));
    }
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["sample_id", "dim1", "dim2", "value"])?;
    for (i, s) in sample_ids.iter().enumerate() {
        for (j, a) in dim1_names.iter().enumerate() {
            for (k, b) in dim2_names.iter().enumerate() {
                w.write_record([s, a, b, &format_real(tensor.get(i, j, k))])?;
            }
        }
    }
    w.flush()?;
    Ok(())
}

pub fn write_labels_csv<W: Write>(writer: W, sample_ids: &[String], labels: &[Label]) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["sample_id", "label"])?;
    for (s, y) in sample_ids.iter().zip(labels) {
        w.write_record([s.as_str(), &y.to_string()])?;
    }
    w.flush()?;
    Ok(())
}

/// Reorders a tensor's axes to match `dim1`/`dim2` name lists. Fails when
/// the level sets differ.
pub fn align_axes(data: &TensorCsv, dim1: &[String], dim2: &[String]) -> Result<Tensor3> {
    let perm = |have: &[String], want: &[String], axis: &str| -> Result<Vec<usize>> {
        let pos: HashMap<&str, usize> =
            have.iter().enumerate().map(|(i, s)| (s.as_str(), i)).collect();
        let missing: Vec<&str> = want
            .iter()
            .filter(|s| !pos.contains_key(s.as_str()))
            .map(String::as_str)
            .take(10)
            .collect();
        if !missing.is_empty() || have.len() != want.len() {
            return Err(Error::AxisMismatch(format!(
                "{axis} levels differ from the model ({} vs {} levels; missing: {})",
                have.len(),
                want.len(),
                if missing.is_empty() { "none".into() } else { missing.join(", ") }
            )));
        }
        Ok(want.iter().map(|s| pos[s.as_str()]).collect())
    };
    let pj = perm(&data.dim1_names, dim1, "dim1")?;
    let pk = perm(&data.dim2_names, dim2, "dim2")?;
    let t = &data.tensor;
    Tensor3::from_fn(t.n(), dim1.len(), dim2.len(), |i, j, k| t.get(i, pj[j], pk[k]))
}

pub const MODEL_SCHEMA_VERSION: u32 = 1;

/// Column-major matrix for JSON.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatrixData {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f64>,
}

impl MatrixData {
    pub fn from_matrix(m: &Matrix) -> Self {
        MatrixData {
            rows: m.nrows(),
            cols: m.ncols(),
            data: m.as_slice().to_vec(),
        }
    }

    pub fn to_matrix(&self) -> Result<Matrix> {
        if self.data.len() != self.rows * self.cols {
            return Err(Error::Format(format!(
                "matrix declares {}×{} but holds {} values",
                self.rows,
                self.cols,
                self.data.len()
            )));
        }
        Ok(Matrix::from_column_slice(self.rows, self.cols, &self.data))
    }
}

/// Summary of the fit trace kept in the model file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceSummary {
    pub converged: bool,
    pub iterations: usize,
    pub half_steps: usize,
    pub final_delta_b: Option<f64>,
    pub objective: f64,
    pub penalty_fallbacks: usize,
    pub restart_objectives: Vec<f64>,
    pub selected_restart: usize,
}

/// Serialized multi-way model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelFile {
    pub schema_version: u32,
    pub solver: Solver,
    pub rank: Rank,
    pub dim1_names: Vec<String>,
    pub dim2_names: Vec<String>,
    pub w: Option<MatrixData>,
    pub v: Option<MatrixData>,
    pub b: MatrixData,
    pub beta: f64,
    pub options: FitOptions,
    pub seed: u64,
    pub trace: TraceSummary,
    pub standardizer: Option<Standardizer>,
}

fn default_names(prefix: &str, len: usize) -> Vec<String> {
    (1..=len).map(|i| format!("{prefix}{i}")).collect()
}

impl ModelFile {
    /// Captures `model`; missing axis names become `d1_1…`, `d2_1…`.
    pub fn from_model(
        model: &MultiwayModel,
        options: &FitOptions,
        dim1_names: Option<Vec<String>>,
        dim2_names: Option<Vec<String>>,
    ) -> ModelFile {
        ModelFile {
            schema_version: MODEL_SCHEMA_VERSION,
            solver: model.solver,
            rank: model.rank,
            dim1_names: dim1_names.unwrap_or_else(|| default_names("d1_", model.p())),
            dim2_names: dim2_names.unwrap_or_else(|| default_names("d2_", model.m())),
            w: model.w.as_ref().map(MatrixData::from_matrix),
            v: model.v.as_ref().map(MatrixData::from_matrix),
            b: MatrixData::from_matrix(&model.b),
            beta: model.intercept,
            options: options.clone(),
            seed: options.seed,
            trace: TraceSummary {
                converged: model.trace.converged,
                iterations: model.trace.iterations,
                half_steps: model.trace.half_steps.len(),
                final_delta_b: model.trace.delta_b.last().copied(),
                objective: model.objective,
                penalty_fallbacks: model.trace.penalty_fallbacks,
                restart_objectives: model.trace.restart_objectives.clone(),
                selected_restart: model.trace.selected_restart,
            },
            standardizer: model.standardizer.clone(),
        }
    }

    pub fn to_model(&self) -> Result<MultiwayModel> {
        let b = self.b.to_matrix()?;
        if self.dim1_names.len() != b.nrows() || self.dim2_names.len() != b.ncols() {
            return Err(Error::Format(format!(
                "axis names ({}×{}) do not match B ({}×{})",
                self.dim1_names.len(),
                self.dim2_names.len(),
                b.nrows(),
                b.ncols()
            )));
        }
        if let Some(st) = &self.standardizer {
            if st.means.len() != b.len() || st.scales.len() != b.len() {
                return Err(Error::Format("standardizer does not match B".into()));
            }
        }
        Ok(MultiwayModel {
            solver: self.solver,
            rank: self.rank,
            w: self.w.as_ref().map(MatrixData::to_matrix).transpose()?,
            v: self.v.as_ref().map(MatrixData::to_matrix).transpose()?,
            b,
            intercept: self.beta,
            objective: self.trace.objective,
            standardizer: self.standardizer.clone(),
            trace: FitTrace {
                converged: self.trace.converged,
                iterations: self.trace.iterations,
                penalty_fallbacks: self.trace.penalty_fallbacks,
                restart_objectives: self.trace.restart_objectives.clone(),
                selected_restart: self.trace.selected_restart,
                delta_b: self.trace.final_delta_b.into_iter().collect(),
                ..Default::default()
            },
        })
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<ModelFile> {
        let value: serde_json::Value = serde_json::from_str(text)?;
        match value.get("schema_version").and_then(|v| v.as_u64()) {
            Some(v) if v == u64::from(MODEL_SCHEMA_VERSION) => {}
            Some(v) => {
                return Err(Error::Format(format!(
                    "unsupported model schema version {v} (expected {MODEL_SCHEMA_VERSION})"
                )))
            }
            None => return Err(Error::Format("model file has no schema_version".into())),
        }
        Ok(serde_json::from_value(value)?)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json()?)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<ModelFile> {
        let mut text = String::new();
        open(path)?.read_to_string(&mut text)?;
        ModelFile::from_json(&text)
    }
}
