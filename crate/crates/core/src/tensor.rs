//! Dense three-way arrays (samples × dim₁ × dim₂) and the linear-algebra
//! identities the multi-way fits are built on.
//!
//! Storage is sample-major; within a sample the `p × m` slice is stored
//! column-major (dim₁ fastest). The slice of sample `i` is therefore exactly
//! `vec(Xᵢ)`, and entry `(j, k)` of a sample lands at position `k·p + j` of
//! its vectorization.

use nalgebra::{DMatrix, DMatrixView, DVector};

use crate::error::{Error, Result};

/// Dense real matrix used for samples, factor blocks and coefficient arrays.
pub type Matrix = DMatrix<f64>;

/// An `n × p × m` array of finite reals.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor3 {
    n: usize,
    p: usize,
    m: usize,
    values: Vec<f64>,
}

impl Tensor3 {
    /// Wraps `values` laid out as `values[i·p·m + k·p + j] = x[i, j, k]`.
    pub fn new(n: usize, p: usize, m: usize, values: Vec<f64>) -> Result<Self> {
        if n == 0 || p == 0 || m == 0 {
            return Err(Error::Dimension(format!(
                "tensor dimensions must be positive, got {n}×{p}×{m}"
            )));
        }
        if values.len() != n * p * m {
            return Err(Error::Dimension(format!(
                "expected {} values for a {n}×{p}×{m} tensor, got {}",
                n * p * m,
                values.len()
            )));
        }
        if let Some(pos) = values.iter().position(|v| !v.is_finite()) {
            let (i, rest) = (pos / (p * m), pos % (p * m));
            return Err(Error::NonFinite(format!(
                "tensor entry ({i}, {}, {})",
                rest % p,
                rest / p
            )));
        }
        Ok(Tensor3 { n, p, m, values })
    }

    pub fn from_fn(
        n: usize,
        p: usize,
        m: usize,
        mut f: impl FnMut(usize, usize, usize) -> f64,
    ) -> Result<Self> {
        let mut values = Vec::with_capacity(n * p * m);
        for i in 0..n {
            for k in 0..m {
                for j in 0..p {
                    values.push(f(i, j, k));
                }
            }
        }
        Tensor3::new(n, p, m, values)
    }

    /// Stacks `p × m` sample matrices.
    pub fn from_slices(slices: &[Matrix]) -> Result<Self> {
        let first = slices
            .first()
            .ok_or_else(|| Error::Dimension("no samples".into()))?;
        let (p, m) = first.shape();
        let mut values = Vec::with_capacity(slices.len() * p * m);
        for (i, s) in slices.iter().enumerate() {
            if s.shape() != (p, m) {
                return Err(Error::Dimension(format!(
                    "sample {i} has shape {:?}, expected ({p}, {m})",
                    s.shape()
                )));
            }
            values.extend_from_slice(s.as_slice());
        }
        Tensor3::new(slices.len(), p, m, values)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn p(&self) -> usize {
        self.p
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn shape(&self) -> (usize, usize, usize) {
        (self.n, self.p, self.m)
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize, k: usize) -> f64 {
        self.values[i * self.p * self.m + k * self.p + j]
    }

    /// `vec(Xᵢ)`, the column-major vectorization of sample `i`.
    pub fn sample(&self, i: usize) -> &[f64] {
        let len = self.p * self.m;
        &self.values[i * len..(i + 1) * len]
    }

    pub fn sample_view(&self, i: usize) -> DMatrixView<'_, f64> {
        DMatrixView::from_slice(self.sample(i), self.p, self.m)
    }

    /// The `p × m` matrix `Xᵢ`.
    pub fn slice(&self, i: usize) -> Matrix {
        self.sample_view(i).into_owned()
    }

    /// `pm × n` matrix whose column `i` is `vec(Xᵢ)`.
    pub fn vectorized(&self) -> Matrix {
        DMatrix::from_column_slice(self.p * self.m, self.n, &self.values)
    }

    /// Samples at `indices`, in that order (repeats allowed).
    pub fn select(&self, indices: &[usize]) -> Tensor3 {
        let len = self.p * self.m;
        let mut values = Vec::with_capacity(indices.len() * len);
        for &i in indices {
            values.extend_from_slice(self.sample(i));
        }
        Tensor3 {
            n: indices.len(),
            p: self.p,
            m: self.m,
            values,
        }
    }

    /// Row `i` of the result is `Xᵢ·v`.
    pub fn mode2_product(&self, v: &[f64]) -> Result<Matrix> {
        if v.len() != self.m {
            return Err(Error::Dimension(format!(
                "mode-2 vector has length {}, expected {}",
                v.len(),
                self.m
            )));
        }
        let v = DVector::from_column_slice(v);
        let mut out = Matrix::zeros(self.n, self.p);
        for i in 0..self.n {
            let xv = self.sample_view(i) * &v;
            out.row_mut(i).copy_from(&xv.transpose());
        }
        Ok(out)
    }

    /// Row `i` of the result is `w⊺Xᵢ`.
    pub fn mode1_product(&self, w: &[f64]) -> Result<Matrix> {
        if w.len() != self.p {
            return Err(Error::Dimension(format!(
                "mode-1 vector has length {}, expected {}",
                w.len(),
                self.p
            )));
        }
        let w = DVector::from_column_slice(w);
        let mut out = Matrix::zeros(self.n, self.m);
        for i in 0..self.n {
            let wx = self.sample_view(i).tr_mul(&w);
            out.row_mut(i).copy_from(&wx.transpose());
        }
        Ok(out)
    }

    /// `rp × n` covariates whose column `i` is `vec(Xᵢ·V)`, i.e. the blocks
    /// `Xᵢv₁, …, Xᵢv_r` stacked in order.
    pub fn project_dim2(&self, v: &Matrix) -> Result<Matrix> {
        if v.nrows() != self.m {
            return Err(Error::Dimension(format!(
                "dim-2 factor has {} rows, expected {}",
                v.nrows(),
                self.m
            )));
        }
        let r = v.ncols();
        let mut out = Matrix::zeros(self.p * r, self.n);
        for i in 0..self.n {
            let xv = self.sample_view(i) * v;
            out.column_mut(i).copy_from_slice(xv.as_slice());
        }
        Ok(out)
    }

    /// `rm × n` covariates whose column `i` is `vec(Xᵢ⊺·U)`, i.e. the blocks
    /// `Xᵢ⊺u₁, …, Xᵢ⊺u_r` stacked in order.
    pub fn project_dim1(&self, u: &Matrix) -> Result<Matrix> {
        if u.nrows() != self.p {
            return Err(Error::Dimension(format!(
                "dim-1 factor has {} rows, expected {}",
                u.nrows(),
                self.p
            )));
        }
        let r = u.ncols();
        let mut out = Matrix::zeros(self.m * r, self.n);
        for i in 0..self.n {
            let xu = self.sample_view(i).tr_mul(u);
            out.column_mut(i).copy_from_slice(xu.as_slice());
        }
        Ok(out)
    }
}

/// Column-major vectorization: entry `(j, k)` lands at `k·p + j`.
pub fn vectorize(b: &Matrix) -> Vec<f64> {
    b.as_slice().to_vec()
}

/// Inverse of [`vectorize`].
pub fn unvectorize(values: &[f64], p: usize, m: usize) -> Result<Matrix> {
    if values.len() != p * m {
        return Err(Error::Dimension(format!(
            "cannot reshape {} values into {p}×{m}",
            values.len()
        )));
    }
    Ok(DMatrix::from_column_slice(p, m, values))
}

/// `v ⊗ w`, equal to `vectorize(w·v⊺)`.
pub fn kron(v: &[f64], w: &[f64]) -> Vec<f64> {
    let mut out = Vec::with_capacity(v.len() * w.len());
    for &vk in v {
        out.extend(w.iter().map(|&wj| vk * wj));
    }
    out
}

/// Rank-`r` truncated SVD `B ≈ U·diag(S)·V⊺`.
#[derive(Debug, Clone)]
pub struct ThinSvd {
    pub u: Matrix,
    pub singular_values: Vec<f64>,
    pub v: Matrix,
}

impl ThinSvd {
    pub fn reconstruct(&self) -> Matrix {
        let mut us = self.u.clone();
        for (mut col, s) in us.column_iter_mut().zip(&self.singular_values) {
            col *= *s;
        }
        us * self.v.transpose()
    }
}

/// Truncated SVD with singular values in nonincreasing order. Each column of
/// `V` is signed so that its largest-magnitude entry (first one on ties) is
/// positive; the matching `U` column is flipped with it.
pub fn thin_svd(b: &Matrix, r: usize) -> Result<ThinSvd> {
    let (p, m) = b.shape();
    let max = p.min(m);
    if r == 0 || r > max {
        return Err(Error::RankOutOfRange { rank: r, max });
    }
    let svd = faer::Mat::<f64>::from_fn(p, m, |i, j| b[(i, j)])
        .thin_svd()
        .map_err(|e| Error::NonFinite(format!("SVD did not converge: {e:?}")))?;
    let (u_full, s_full, v_full) = (svd.U(), svd.S(), svd.V());
    let mut order: Vec<usize> = (0..max).collect();
    order.sort_by(|&a, &c| {
        s_full[c]
            .partial_cmp(&s_full[a])
            .unwrap_or(std::cmp::Ordering::Equal)
    });
    let mut u = Matrix::zeros(p, r);
    let mut v = Matrix::zeros(m, r);
    let mut singular_values = Vec::with_capacity(r);
    for (z, &idx) in order.iter().take(r).enumerate() {
        let mut pivot = 0;
        for k in 1..m {
            if v_full[(k, idx)].abs() > v_full[(pivot, idx)].abs() {
                pivot = k;
            }
        }
        let sign = if v_full[(pivot, idx)] < 0.0 { -1.0 } else { 1.0 };
        for i in 0..p {
            u[(i, z)] = sign * u_full[(i, idx)];
        }
        for j in 0..m {
            v[(j, z)] = sign * v_full[(j, idx)];
        }
        singular_values.push(s_full[idx].max(0.0));
    }
    Ok(ThinSvd {
        u,
        singular_values,
        v,
    })
}

/// Class labels are stored as `-1` / `+1`.
pub type Label = i8;

pub(crate) fn validate_labels(labels: &[Label]) -> Result<(usize, usize)> {
    let mut pos = 0;
    let mut neg = 0;
    for &y in labels {
        match y {
            1 => pos += 1,
            -1 => neg += 1,
            other => return Err(Error::InvalidLabel(other as f64)),
        }
    }
    Ok((pos, neg))
}

pub(crate) fn require_both_classes(labels: &[Label]) -> Result<(usize, usize)> {
    let (pos, neg) = validate_labels(labels)?;
    if pos == 0 || neg == 0 {
        return Err(Error::SingleClass(format!("{pos} positive, {neg} negative")));
    }
    Ok((pos, neg))
}

/// A [`Tensor3`] with one `±1` label per sample and optional axis names.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledDataset {
    pub tensor: Tensor3,
    pub labels: Vec<Label>,
    pub dim1_names: Option<Vec<String>>,
    pub dim2_names: Option<Vec<String>>,
}

impl LabeledDataset {
    pub fn new(tensor: Tensor3, labels: Vec<Label>) -> Result<Self> {
        if labels.len() != tensor.n() {
            return Err(Error::Dimension(format!(
                "{} labels for {} samples",
                labels.len(),
                tensor.n()
            )));
        }
        validate_labels(&labels)?;
        Ok(LabeledDataset {
            tensor,
            labels,
            dim1_names: None,
            dim2_names: None,
        })
    }

    pub fn with_names(mut self, dim1: Vec<String>, dim2: Vec<String>) -> Result<Self> {
        if dim1.len() != self.tensor.p() || dim2.len() != self.tensor.m() {
            return Err(Error::Dimension(format!(
                "axis names {}×{} do not match tensor {}×{}",
                dim1.len(),
                dim2.len(),
                self.tensor.p(),
                self.tensor.m()
            )));
        }
        self.dim1_names = Some(dim1);
        self.dim2_names = Some(dim2);
        Ok(self)
    }

    pub fn n(&self) -> usize {
        self.tensor.n()
    }

    /// `(positives, negatives)`.
    pub fn class_counts(&self) -> (usize, usize) {
        let pos = self.labels.iter().filter(|&&y| y == 1).count();
        (pos, self.labels.len() - pos)
    }

    pub fn subset(&self, indices: &[usize]) -> LabeledDataset {
        LabeledDataset {
            tensor: self.tensor.select(indices),
            labels: indices.iter().map(|&i| self.labels[i]).collect(),
            dim1_names: self.dim1_names.clone(),
            dim2_names: self.dim2_names.clone(),
        }
    }
}

/// Per-cell z-scoring of a three-way array: each `(j, k)` entry is centered
/// and scaled by its mean and standard deviation over the fitting samples.
/// Cells with zero spread are only centered.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct Standardizer {
    pub means: Vec<f64>,
    pub scales: Vec<f64>,
}

impl Standardizer {
    pub fn fit(x: &Tensor3) -> Standardizer {
        let len = x.p * x.m;
        let n = x.n as f64;
        let mut means = vec![0.0; len];
        for i in 0..x.n {
            for (acc, v) in means.iter_mut().zip(x.sample(i)) {
                *acc += v / n;
            }
        }
        let mut scales = vec![0.0; len];
        for i in 0..x.n {
            for ((acc, v), mu) in scales.iter_mut().zip(x.sample(i)).zip(&means) {
                *acc += (v - mu) * (v - mu);
            }
        }
        let denom = (x.n.max(2) - 1) as f64;
        for s in &mut scales {
            *s = (*s / denom).sqrt();
            if !(*s > 0.0) {
                *s = 1.0;
            }
        }
        Standardizer { means, scales }
    }

    pub fn apply_sample(&self, sample: &[f64]) -> Vec<f64> {
        sample
            .iter()
            .zip(&self.means)
            .zip(&self.scales)
            .map(|((v, mu), s)| (v - mu) / s)
            .collect()
    }

    pub fn apply(&self, x: &Tensor3) -> Result<Tensor3> {
        if self.means.len() != x.p * x.m {
            return Err(Error::Dimension(format!(
                "standardizer covers {} cells, tensor has {}",
                self.means.len(),
                x.p * x.m
            )));
        }
        let mut values = Vec::with_capacity(x.values.len());
        for i in 0..x.n {
            values.extend(self.apply_sample(x.sample(i)));
        }
        Tensor3::new(x.n, x.p, x.m, values)
    }
}
