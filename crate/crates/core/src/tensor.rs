//! Dense row-major matrices with an optional gradient buffer.

use crate::error::{PclError, Result};
use crate::scalar::Scalar;

/// Norm floor used by cosine similarity to guard zero-norm rows.
pub const NORM_FLOOR: f64 = 1e-12;

/// Dense matrix of scalars, stored row-major.
///
/// A tensor may carry a gradient buffer of identical shape; gradients are
/// populated by [`crate::tape::Tape::backward`] for leaves created with
/// `requires_grad` set.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor<S: Scalar> {
    rows: usize,
    cols: usize,
    data: Vec<S>,
    requires_grad: bool,
    grad: Option<Vec<S>>,
}

impl<S: Scalar> Tensor<S> {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Tensor {
            rows,
            cols,
            data: vec![S::zero(); rows * cols],
            requires_grad: false,
            grad: None,
        }
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<S>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(PclError::dimension(
                "tensor",
                format!("data length {} != {rows}x{cols}", data.len()),
            ));
        }
        Ok(Tensor {
            rows,
            cols,
            data,
            requires_grad: false,
            grad: None,
        })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Self {
        let r = rows.len();
        let c = rows.first().map_or(0, Vec::len);
        let mut data = Vec::with_capacity(r * c);
        for row in rows {
            assert_eq!(row.len(), c, "ragged row in tensor literal");
            data.extend(row.iter().map(|&v| S::of(v)));
        }
        Tensor {
            rows: r,
            cols: c,
            data,
            requires_grad: false,
            grad: None,
        }
    }

    /// Marks this tensor as a trainable leaf.
    pub fn with_grad(mut self) -> Self {
        self.requires_grad = true;
        self
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn numel(&self) -> usize {
        self.data.len()
    }

    pub fn data(&self) -> &[S] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [S] {
        &mut self.data
    }

    pub fn row(&self, i: usize) -> &[S] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn at(&self, i: usize, j: usize) -> S {
        self.data[i * self.cols + j]
    }

    pub fn requires_grad(&self) -> bool {
        self.requires_grad
    }

    pub fn grad(&self) -> Option<&[S]> {
        self.grad.as_deref()
    }

    /// Adds `delta` into the gradient buffer, allocating it on first use.
    pub fn accumulate_grad(&mut self, delta: &[S]) {
        debug_assert_eq!(delta.len(), self.data.len());
        let grad = self
            .grad
            .get_or_insert_with(|| vec![S::zero(); self.data.len()]);
        for (g, d) in grad.iter_mut().zip(delta) {
            *g += *d;
        }
    }

    pub fn zero_grad(&mut self) {
        if let Some(g) = &mut self.grad {
            g.fill(S::zero());
        }
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    /// Row index of the largest entry, ties broken by the lowest column.
    pub fn argmax_row(&self, i: usize) -> usize {
        let row = self.row(i);
        let mut best = 0;
        for (j, &v) in row.iter().enumerate() {
            if v > row[best] {
                best = j;
            }
        }
        best
    }
}

/// Cosine similarity of two equal-length rows with a norm floor for
/// zero-norm inputs.
pub fn row_cosine<S: Scalar>(a: &[S], b: &[S]) -> S {
    debug_assert_eq!(a.len(), b.len());
    let floor = S::of(NORM_FLOOR);
    let mut dot = S::zero();
    let mut na = S::zero();
    let mut nb = S::zero();
    for (&x, &y) in a.iter().zip(b) {
        dot += x * y;
        na += x * x;
        nb += y * y;
    }
    dot / (na.sqrt().max(floor) * nb.sqrt().max(floor))
}
