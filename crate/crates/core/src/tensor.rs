//! Dense row-major 2D tensor used for activations and weights.
//!
//! Activations are stored as `tokens x in_channels` (`T x C_I`). Weight
//! matrices are stored transposed as `out_channels x in_channels`
//! (`C_O x C_I`), so the per-channel axis of a weight is its row axis and
//! a linear layer computes `x . w^T`.

use crate::error::{Error, Result};

/// Dense row-major matrix of finite `f64` values.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor2D {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Tensor2D {
    /// Builds a tensor from row-major data, validating shape and finiteness.
    pub fn new(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if rows == 0 || cols == 0 {
            return Err(Error::InvalidInput(format!(
                "tensor must be non-empty, got {rows}x{cols}"
            )));
        }
        if data.len() != rows * cols {
            return Err(Error::ShapeError(format!(
                "data length {} does not match {rows}x{cols}",
                data.len()
            )));
        }
        if !data.iter().all(|v| v.is_finite()) {
            return Err(Error::InvalidInput(
                "tensor contains non-finite values".into(),
            ));
        }
        Ok(Self { rows, cols, data })
    }

    /// All-zero tensor.
    pub fn zeros(rows: usize, cols: usize) -> Self {
        assert!(rows >= 1 && cols >= 1, "tensor must be non-empty");
        Self {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn row_mut(&mut self, r: usize) -> &mut [f64] {
        &mut self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.cols + c]
    }

    pub fn set(&mut self, r: usize, c: usize, v: f64) {
        self.data[r * self.cols + c] = v;
    }

    /// Extracts the given rows into a new tensor, preserving order.
    pub fn select_rows(&self, rows: &[usize]) -> Tensor2D {
        let mut data = Vec::with_capacity(rows.len() * self.cols);
        for &r in rows {
            data.extend_from_slice(self.row(r));
        }
        Tensor2D {
            rows: rows.len(),
            cols: self.cols,
            data,
        }
    }

    /// Writes `src` back into the given rows, the inverse of `select_rows`.
    pub fn scatter_rows(&mut self, rows: &[usize], src: &Tensor2D) {
        debug_assert_eq!(rows.len(), src.rows);
        debug_assert_eq!(self.cols, src.cols);
        for (i, &r) in rows.iter().enumerate() {
            self.row_mut(r).copy_from_slice(src.row(i));
        }
    }

    /// Plain `x . w^T` with `w` stored as `C_O x C_I`.
    pub fn matmul_wt(&self, w: &Tensor2D) -> Result<Tensor2D> {
        if self.cols != w.cols {
            return Err(Error::ShapeError(format!(
                "inner dimensions disagree: x is {}x{}, w is {}x{}",
                self.rows, self.cols, w.rows, w.cols
            )));
        }
        let mut out = Tensor2D::zeros(self.rows, w.rows);
        for t in 0..self.rows {
            let xr = self.row(t);
            let or = out.row_mut(t);
            for (o, slot) in or.iter_mut().enumerate() {
                let wr = w.row(o);
                let mut acc = 0.0;
                for i in 0..xr.len() {
                    acc += xr[i] * wr[i];
                }
                *slot = acc;
            }
        }
        Ok(out)
    }

    pub fn min(&self) -> f64 {
        self.data.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn max(&self) -> f64 {
        self.data.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    /// Frobenius norm.
    pub fn frob_norm(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum::<f64>().sqrt()
    }
}

/// Cosine similarity of the flattened tensors. Identical inputs score 1.0
/// by definition, without going through the norm arithmetic.
pub fn cosine_similarity(a: &Tensor2D, b: &Tensor2D) -> f64 {
    if a == b {
        return 1.0;
    }
    let dot: f64 = a.data().iter().zip(b.data()).map(|(x, y)| x * y).sum();
    let na = a.frob_norm();
    let nb = b.frob_norm();
    if na == 0.0 || nb == 0.0 {
        return 0.0;
    }
    (dot / (na * nb)).clamp(-1.0, 1.0)
}

/// Mean squared elementwise difference.
pub fn mse(a: &Tensor2D, b: &Tensor2D) -> f64 {
    a.data()
        .iter()
        .zip(b.data())
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        / a.data().len() as f64
}
