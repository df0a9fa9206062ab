//! Compressed sparse row matrices.
//!
//! Holds the raw adjacency `A`, the GCN operator, and the column-normalized
//! RWR transition matrix. Values are constants with respect to training: no
//! gradient ever flows into a sparse matrix.

use crate::error::{PclError, Result};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

#[derive(Debug, Clone, PartialEq)]
pub struct CsrMatrix<S: Scalar> {
    rows: usize,
    cols: usize,
    row_ptr: Vec<usize>,
    col_idx: Vec<usize>,
    values: Vec<S>,
}

impl<S: Scalar> CsrMatrix<S> {
    /// Builds a CSR matrix, validating the index structure.
    pub fn new(
        rows: usize,
        cols: usize,
        row_ptr: Vec<usize>,
        col_idx: Vec<usize>,
        values: Vec<S>,
    ) -> Result<Self> {
        if row_ptr.len() != rows + 1 || row_ptr[0] != 0 {
            return Err(PclError::dimension("csr", "row pointer length or start"));
        }
        if row_ptr.windows(2).any(|w| w[0] > w[1]) {
            return Err(PclError::dimension("csr", "row pointers not monotone"));
        }
        if *row_ptr.last().unwrap() != col_idx.len() || col_idx.len() != values.len() {
            return Err(PclError::dimension("csr", "index/value length mismatch"));
        }
        if col_idx.iter().any(|&c| c >= cols) {
            return Err(PclError::dimension("csr", "column index out of range"));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(PclError::dimension("csr", "non-finite value"));
        }
        Ok(CsrMatrix {
            rows,
            cols,
            row_ptr,
            col_idx,
            values,
        })
    }

    /// Builds from (row, col, value) triplets; entries are sorted per row and
    /// duplicates are rejected.
    pub fn from_triplets(
        rows: usize,
        cols: usize,
        mut triplets: Vec<(usize, usize, S)>,
    ) -> Result<Self> {
        triplets.sort_by_key(|t| (t.0, t.1));
        if triplets.windows(2).any(|w| w[0].0 == w[1].0 && w[0].1 == w[1].1) {
            return Err(PclError::dimension("csr", "duplicate triplet"));
        }
        let mut row_ptr = vec![0usize; rows + 1];
        for &(r, _, _) in &triplets {
            if r >= rows {
                return Err(PclError::dimension("csr", "row index out of range"));
            }
            row_ptr[r + 1] += 1;
        }
        for i in 0..rows {
            row_ptr[i + 1] += row_ptr[i];
        }
        let col_idx = triplets.iter().map(|t| t.1).collect();
        let values = triplets.iter().map(|t| t.2).collect();
        Self::new(rows, cols, row_ptr, col_idx, values)
    }

    pub fn identity(n: usize) -> Self {
        CsrMatrix {
            rows: n,
            cols: n,
            row_ptr: (0..=n).collect(),
            col_idx: (0..n).collect(),
            values: vec![S::one(); n],
        }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    /// Column indices and values of row `i`.
    pub fn row(&self, i: usize) -> (&[usize], &[S]) {
        let (s, e) = (self.row_ptr[i], self.row_ptr[i + 1]);
        (&self.col_idx[s..e], &self.values[s..e])
    }

    /// y = self · x
    pub fn matvec(&self, x: &[S], y: &mut [S]) {
        debug_assert_eq!(x.len(), self.cols);
        debug_assert_eq!(y.len(), self.rows);
        for (i, out) in y.iter_mut().enumerate() {
            let (cols, vals) = self.row(i);
            let mut acc = S::zero();
            for (&j, &v) in cols.iter().zip(vals) {
                acc += v * x[j];
            }
            *out = acc;
        }
    }

    pub fn column_sums(&self) -> Vec<S> {
        let mut sums = vec![S::zero(); self.cols];
        for (&j, &v) in self.col_idx.iter().zip(&self.values) {
            sums[j] += v;
        }
        sums
    }

    pub fn densify(&self) -> Tensor<S> {
        let mut out = Tensor::zeros(self.rows, self.cols);
        for i in 0..self.rows {
            let (cols, vals) = self.row(i);
            for (&j, &v) in cols.iter().zip(vals) {
                out.data_mut()[i * self.cols + j] = v;
            }
        }
        out
    }

    pub fn is_symmetric(&self, tol: S) -> bool {
        if self.rows != self.cols {
            return false;
        }
        for i in 0..self.rows {
            let (cols, vals) = self.row(i);
            for (&j, &v) in cols.iter().zip(vals) {
                let (jc, jv) = self.row(j);
                let back = match jc.binary_search(&i) {
                    Ok(k) => jv[k],
                    Err(_) => S::zero(),
                };
                if (back - v).abs() > tol {
                    return false;
                }
            }
        }
        true
    }

    /// FNV-1a hash over the shape, index structure, and value bits; used to
    /// detect stale RWR cache files.
    pub fn structure_hash(&self) -> u64 {
        let mut h = 0xcbf2_9ce4_8422_2325u64;
        let mut mix = |x: u64| {
            for byte in x.to_le_bytes() {
                h ^= u64::from(byte);
                h = h.wrapping_mul(0x0000_0100_0000_01b3);
            }
        };
        mix(self.rows as u64);
        mix(self.cols as u64);
        for &p in &self.row_ptr {
            mix(p as u64);
        }
        for &c in &self.col_idx {
            mix(c as u64);
        }
        for &v in &self.values {
            mix(v.to_f64_lossy().to_bits());
        }
        h
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identity_matvec_is_input() {
        let m = CsrMatrix::<f64>::identity(3);
        let mut y = vec![0.0; 3];
        m.matvec(&[1.0, 2.0, 3.0], &mut y);
        assert_eq!(y, vec![1.0, 2.0, 3.0]);
    }

    #[test]
    fn from_triplets_sorts_and_validates() {
        let m =
            CsrMatrix::<f64>::from_triplets(2, 2, vec![(1, 0, 1.0), (0, 1, 1.0)]).unwrap();
        assert_eq!(m.row(0), (&[1usize][..], &[1.0][..]));
        assert_eq!(m.row(1), (&[0usize][..], &[1.0][..]));
        assert!(m.is_symmetric(0.0));
        assert!(CsrMatrix::<f64>::from_triplets(2, 2, vec![(0, 1, 1.0), (0, 1, 2.0)]).is_err());
        assert!(CsrMatrix::<f64>::from_triplets(2, 2, vec![(0, 5, 1.0)]).is_err());
    }

    #[test]
    fn structure_hash_changes_with_values() {
        let a = CsrMatrix::<f64>::from_triplets(2, 2, vec![(0, 1, 1.0)]).unwrap();
        let b = CsrMatrix::<f64>::from_triplets(2, 2, vec![(0, 1, 2.0)]).unwrap();
        assert_ne!(a.structure_hash(), b.structure_hash());
    }
}
