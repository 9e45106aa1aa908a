//! Dense row-major `f64` tensors.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gemm;
use crate::rng::Rng;

/// Reduction applied by [`Tensor::reduce`].
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Reduce {
    Sum,
    Mean,
}

/// A dense n-dimensional array of `f64` in row-major order.
///
/// Extents are strictly positive; a rank-0 tensor holds a single scalar.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Tensor {
    shape: Vec<usize>,
    data: Vec<f64>,
}

fn check_shape(shape: &[usize]) -> Result<usize> {
    if shape.iter().any(|&d| d == 0) {
        return Err(Error::invalid(format!("zero extent in shape {shape:?}")));
    }
    Ok(shape.iter().product())
}

impl Tensor {
    pub fn from_vec(shape: impl Into<Vec<usize>>, data: Vec<f64>) -> Result<Self> {
        let shape = shape.into();
        let len = check_shape(&shape)?;
        if len != data.len() {
            return Err(Error::invalid(format!(
                "shape {shape:?} needs {len} elements, got {}",
                data.len()
            )));
        }
        Ok(Tensor { shape, data })
    }

    /// Internal constructor; the caller guarantees the shape/data agreement.
    pub(crate) fn raw(shape: Vec<usize>, data: Vec<f64>) -> Self {
        debug_assert_eq!(shape.iter().product::<usize>(), data.len());
        Tensor { shape, data }
    }

    pub fn full(shape: &[usize], value: f64) -> Self {
        let len = check_shape(shape).expect("positive extents");
        Tensor::raw(shape.to_vec(), vec![value; len])
    }

    pub fn zeros(shape: &[usize]) -> Self {
        Tensor::full(shape, 0.0)
    }

    pub fn ones(shape: &[usize]) -> Self {
        Tensor::full(shape, 1.0)
    }

    pub fn scalar(value: f64) -> Self {
        Tensor::raw(Vec::new(), vec![value])
    }

    /// Rectangular identity: ones on the main diagonal.
    pub fn eye(rows: usize, cols: usize) -> Self {
        let mut t = Tensor::zeros(&[rows, cols]);
        for i in 0..rows.min(cols) {
            t.data[i * cols + i] = 1.0;
        }
        t
    }

    /// Builds a matrix from equal-length rows.
    pub fn from_rows<R: AsRef<[f64]>>(rows: &[R]) -> Result<Self> {
        let cols = rows.first().map(|r| r.as_ref().len()).unwrap_or(0);
        if rows.iter().any(|r| r.as_ref().len() != cols) {
            return Err(Error::invalid("ragged rows"));
        }
        let data = rows.iter().flat_map(|r| r.as_ref().iter().copied()).collect();
        Tensor::from_vec(vec![rows.len(), cols], data)
    }

    /// Elements drawn uniformly from `[lo, hi)`.
    pub fn rand_uniform(shape: &[usize], lo: f64, hi: f64, rng: &mut Rng) -> Result<Self> {
        if !(lo < hi) {
            return Err(Error::invalid(format!("rand_uniform needs lo < hi, got [{lo}, {hi})")));
        }
        let len = check_shape(shape)?;
        let data = (0..len).map(|_| rng.uniform_range(lo, hi)).collect();
        Ok(Tensor::raw(shape.to_vec(), data))
    }

    /// Normal with standard deviation `std`, clipped to two deviations by redrawing.
    pub fn truncated_normal(shape: &[usize], std: f64, rng: &mut Rng) -> Result<Self> {
        let len = check_shape(shape)?;
        let data = (0..len).map(|_| rng.truncated_normal(std)).collect();
        Ok(Tensor::raw(shape.to_vec(), data))
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn rank(&self) -> usize {
        self.shape.len()
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    /// Row-major strides; the last axis has stride 1.
    pub fn strides(&self) -> Vec<usize> {
        let mut strides = vec![1; self.shape.len()];
        for i in (0..self.shape.len().saturating_sub(1)).rev() {
            strides[i] = strides[i + 1] * self.shape[i + 1];
        }
        strides
    }

    fn offset(&self, index: &[usize]) -> usize {
        assert_eq!(index.len(), self.rank(), "index rank");
        index
            .iter()
            .zip(&self.shape)
            .zip(self.strides())
            .map(|((&i, &d), s)| {
                assert!(i < d, "index {index:?} out of bounds for {:?}", self.shape);
                i * s
            })
            .sum()
    }

    pub fn at(&self, index: &[usize]) -> f64 {
        self.data[self.offset(index)]
    }

    pub fn set(&mut self, index: &[usize], value: f64) {
        let o = self.offset(index);
        self.data[o] = value;
    }

    /// Value of a single-element tensor.
    pub fn item(&self) -> f64 {
        assert_eq!(self.data.len(), 1, "item() on a tensor with {} elements", self.data.len());
        self.data[0]
    }

    /// Number of rows (extent of axis 0).
    pub fn rows(&self) -> usize {
        self.shape.first().copied().unwrap_or(1)
    }

    /// Elements per row (product of the trailing extents).
    pub fn row_len(&self) -> usize {
        self.shape.iter().skip(1).product()
    }

    pub fn row(&self, i: usize) -> &[f64] {
        let w = self.row_len();
        &self.data[i * w..(i + 1) * w]
    }

    pub fn reshape(&self, shape: &[usize]) -> Result<Tensor> {
        self.clone().into_reshape(shape)
    }

    /// Reinterprets the buffer under a new shape; the buffer is never reordered.
    pub fn into_reshape(mut self, shape: &[usize]) -> Result<Tensor> {
        let len = check_shape(shape)?;
        if len != self.data.len() {
            return Err(Error::ShapeMismatch {
                op: "reshape",
                lhs: self.shape,
                rhs: shape.to_vec(),
            });
        }
        self.shape = shape.to_vec();
        Ok(self)
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Tensor {
        Tensor::raw(self.shape.clone(), self.data.iter().map(|&x| f(x)).collect())
    }

    pub fn map_inplace(&mut self, f: impl Fn(f64) -> f64) {
        self.data.iter_mut().for_each(|x| *x = f(*x));
    }

    pub fn fill(&mut self, value: f64) {
        self.data.fill(value);
    }

    fn zip_with(&self, other: &Tensor, op: &'static str, f: impl Fn(f64, f64) -> f64) -> Result<Tensor> {
        self.same_shape(other, op)?;
        let data = self.data.iter().zip(&other.data).map(|(&a, &b)| f(a, b)).collect();
        Ok(Tensor::raw(self.shape.clone(), data))
    }

    pub(crate) fn same_shape(&self, other: &Tensor, op: &'static str) -> Result<()> {
        if self.shape != other.shape {
            return Err(Error::ShapeMismatch {
                op,
                lhs: self.shape.clone(),
                rhs: other.shape.clone(),
            });
        }
        Ok(())
    }

    pub fn add(&self, other: &Tensor) -> Result<Tensor> {
        self.zip_with(other, "add", |a, b| a + b)
    }

    pub fn sub(&self, other: &Tensor) -> Result<Tensor> {
        self.zip_with(other, "sub", |a, b| a - b)
    }

    pub fn mul(&self, other: &Tensor) -> Result<Tensor> {
        self.zip_with(other, "mul", |a, b| a * b)
    }

    pub fn add_scalar(&self, s: f64) -> Tensor {
        self.map(|x| x + s)
    }

    pub fn scale(&self, s: f64) -> Tensor {
        self.map(|x| x * s)
    }

    /// In-place `self += other`.
    pub fn add_assign(&mut self, other: &Tensor) -> Result<()> {
        self.same_shape(other, "add_assign")?;
        self.data.iter_mut().zip(&other.data).for_each(|(a, &b)| *a += b);
        Ok(())
    }

    /// In-place `self <- self + s * g`.
    pub fn axpy(&mut self, s: f64, g: &Tensor) -> Result<()> {
        self.same_shape(g, "axpy")?;
        self.data.iter_mut().zip(&g.data).for_each(|(w, &x)| *w += s * x);
        Ok(())
    }

    /// Adds `bias` (length = row length) to every row.
    pub fn add_row_vector(&self, bias: &Tensor) -> Result<Tensor> {
        let mut out = self.clone();
        out.add_row_vector_inplace(bias)?;
        Ok(out)
    }

    pub fn add_row_vector_inplace(&mut self, bias: &Tensor) -> Result<()> {
        let w = self.row_len();
        if self.rank() < 2 || bias.len() != w {
            return Err(Error::ShapeMismatch {
                op: "add_row_vector",
                lhs: self.shape.clone(),
                rhs: bias.shape.clone(),
            });
        }
        for row in self.data.chunks_exact_mut(w) {
            row.iter_mut().zip(&bias.data).for_each(|(x, &b)| *x += b);
        }
        Ok(())
    }

    fn as_matrix(&self, op: &'static str) -> Result<(usize, usize)> {
        match self.shape[..] {
            [r, c] => Ok((r, c)),
            _ => Err(Error::invalid(format!("{op} expects a rank-2 tensor, got {:?}", self.shape))),
        }
    }

    pub fn matmul(&self, other: &Tensor) -> Result<Tensor> {
        let (m, k) = self.as_matrix("matmul")?;
        let (k2, n) = other.as_matrix("matmul")?;
        if k != k2 {
            return Err(Error::ShapeMismatch {
                op: "matmul",
                lhs: self.shape.clone(),
                rhs: other.shape.clone(),
            });
        }
        let mut out = vec![0.0; m * n];
        gemm::gemm(m, k, n, &self.data, &other.data, &mut out);
        Ok(Tensor::raw(vec![m, n], out))
    }

    pub fn transpose(&self) -> Result<Tensor> {
        let (r, c) = self.as_matrix("transpose")?;
        Ok(Tensor::raw(vec![c, r], gemm::transpose(r, c, &self.data)))
    }

    pub fn sum(&self) -> f64 {
        self.data.iter().sum()
    }

    /// Sum or mean along `dim`; the result has rank one less.
    pub fn reduce(&self, dim: usize, kind: Reduce) -> Result<Tensor> {
        if dim >= self.rank() {
            return Err(Error::AxisOutOfRange {
                op: "reduce",
                axis: dim,
                rank: self.rank(),
            });
        }
        let outer: usize = self.shape[..dim].iter().product();
        let extent = self.shape[dim];
        let inner: usize = self.shape[dim + 1..].iter().product();
        let mut out = vec![0.0; outer * inner];
        for o in 0..outer {
            for e in 0..extent {
                let src = &self.data[(o * extent + e) * inner..(o * extent + e + 1) * inner];
                out[o * inner..(o + 1) * inner]
                    .iter_mut()
                    .zip(src)
                    .for_each(|(acc, &x)| *acc += x);
            }
        }
        if kind == Reduce::Mean {
            out.iter_mut().for_each(|x| *x /= extent as f64);
        }
        let mut shape = self.shape.clone();
        shape.remove(dim);
        Ok(Tensor::raw(shape, out))
    }

    pub fn sum_axis(&self, dim: usize) -> Result<Tensor> {
        self.reduce(dim, Reduce::Sum)
    }

    pub fn mean_axis(&self, dim: usize) -> Result<Tensor> {
        self.reduce(dim, Reduce::Mean)
    }

    /// Index of the maximum along `dim` of a matrix; ties resolve to the lowest index.
    pub fn argmax(&self, dim: usize) -> Result<Vec<usize>> {
        let (r, c) = self.as_matrix("argmax")?;
        let pick = |values: &mut dyn Iterator<Item = f64>| {
            let mut best = 0;
            let mut best_v = f64::NEG_INFINITY;
            for (i, v) in values.enumerate() {
                if i == 0 || v > best_v {
                    best = i;
                    best_v = v;
                }
            }
            best
        };
        match dim {
            0 => Ok((0..c)
                .map(|j| pick(&mut (0..r).map(|i| self.data[i * c + j])))
                .collect()),
            1 => Ok(self
                .data
                .chunks_exact(c)
                .map(|row| pick(&mut row.iter().copied()))
                .collect()),
            _ => Err(Error::AxisOutOfRange {
                op: "argmax",
                axis: dim,
                rank: 2,
            }),
        }
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m, x| m.max(x.abs()))
    }

    /// Consecutive chunks of at most `size` along `dim`; the last may be shorter.
    pub fn split(&self, dim: usize, size: usize) -> Result<Vec<Tensor>> {
        if size < 1 {
            return Err(Error::invalid("split size must be at least 1"));
        }
        if dim >= self.rank() {
            return Err(Error::AxisOutOfRange {
                op: "split",
                axis: dim,
                rank: self.rank(),
            });
        }
        let extent = self.shape[dim];
        (0..extent)
            .step_by(size)
            .map(|start| self.narrow(dim, start, size.min(extent - start)))
            .collect()
    }

    /// The sub-tensor `start..start+len` along `dim`.
    pub fn narrow(&self, dim: usize, start: usize, len: usize) -> Result<Tensor> {
        if dim >= self.rank() {
            return Err(Error::AxisOutOfRange {
                op: "narrow",
                axis: dim,
                rank: self.rank(),
            });
        }
        let extent = self.shape[dim];
        if len == 0 || start + len > extent {
            return Err(Error::invalid(format!(
                "narrow {start}..{} outside extent {extent}",
                start + len
            )));
        }
        let outer: usize = self.shape[..dim].iter().product();
        let inner: usize = self.shape[dim + 1..].iter().product();
        let mut data = Vec::with_capacity(outer * len * inner);
        for o in 0..outer {
            let base = (o * extent + start) * inner;
            data.extend_from_slice(&self.data[base..base + len * inner]);
        }
        let mut shape = self.shape.clone();
        shape[dim] = len;
        Ok(Tensor::raw(shape, data))
    }

    /// Joins tensors along `dim`; all other extents must agree.
    pub fn concat(parts: &[Tensor], dim: usize) -> Result<Tensor> {
        let first = parts.first().ok_or_else(|| Error::invalid("concat of nothing"))?;
        if dim >= first.rank() {
            return Err(Error::AxisOutOfRange {
                op: "concat",
                axis: dim,
                rank: first.rank(),
            });
        }
        for p in parts {
            let same_rest = p.rank() == first.rank()
                && p.shape.iter().zip(&first.shape).enumerate().all(|(i, (a, b))| i == dim || a == b);
            if !same_rest {
                return Err(Error::ShapeMismatch {
                    op: "concat",
                    lhs: first.shape.clone(),
                    rhs: p.shape.clone(),
                });
            }
        }
        let outer: usize = first.shape[..dim].iter().product();
        let inner: usize = first.shape[dim + 1..].iter().product();
        let total: usize = parts.iter().map(|p| p.shape[dim]).sum();
        let mut data = Vec::with_capacity(outer * total * inner);
        for o in 0..outer {
            for p in parts {
                let chunk = p.shape[dim] * inner;
                data.extend_from_slice(&p.data[o * chunk..(o + 1) * chunk]);
            }
        }
        let mut shape = first.shape.clone();
        shape[dim] = total;
        Ok(Tensor::raw(shape, data))
    }

    /// Rows picked by index along axis 0, in the given order.
    pub fn select_rows(&self, indices: &[usize]) -> Result<Tensor> {
        if indices.is_empty() {
            return Err(Error::invalid("select_rows with no indices"));
        }
        let w = self.row_len();
        let n = self.rows();
        let mut data = Vec::with_capacity(indices.len() * w);
        for &i in indices {
            if i >= n {
                return Err(Error::invalid(format!("row {i} out of range for {n} rows")));
            }
            data.extend_from_slice(&self.data[i * w..(i + 1) * w]);
        }
        let mut shape = self.shape.clone();
        shape[0] = indices.len();
        Ok(Tensor::raw(shape, data))
    }
}
