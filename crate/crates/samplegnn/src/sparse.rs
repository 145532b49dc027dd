//! CSR sparse matrices and the sparse-dense kernels.
//!
//! Storage is the usual three-array CSR: `rowptr` (len `n_rows + 1`), `col`
//! and `val` (len nnz), with column indices ascending inside each row.
//! Explicitly stored zeros are kept; they count as entries everywhere nnz
//! counts matter (mean reducer divisors, FLOP charges, column statistics).

use crate::dense::DenseMatrix;
use crate::{flops, par};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum SparseError {
    #[error("entry ({row}, {col}) outside a {n_rows}x{n_cols} matrix")]
    EntryOutOfBounds {
        row: usize,
        col: usize,
        n_rows: usize,
        n_cols: usize,
    },
    #[error("keep list must be strictly ascending, in range (offender: {col})")]
    BadKeepList { col: usize },
}

/// Sparse row-major matrix of `f64` in CSR form.
#[derive(Debug, Clone, PartialEq)]
pub struct CsrMatrix {
    pub n_rows: usize,
    pub n_cols: usize,
    pub rowptr: Vec<usize>,
    pub col: Vec<usize>,
    pub val: Vec<f64>,
}

impl CsrMatrix {
    /// All-zero matrix with no stored entries.
    pub fn empty(n_rows: usize, n_cols: usize) -> Self {
        CsrMatrix {
            n_rows,
            n_cols,
            rowptr: vec![0; n_rows + 1],
            col: Vec::new(),
            val: Vec::new(),
        }
    }

    /// Builds from COO triples. Duplicates are summed (in input order, so the
    /// result is deterministic); explicit zeros are kept as stored entries.
    pub fn from_coo(
        n_rows: usize,
        n_cols: usize,
        triples: &[(usize, usize, f64)],
    ) -> Result<Self, SparseError> {
        for &(r, c, _) in triples {
            if r >= n_rows || c >= n_cols {
                return Err(SparseError::EntryOutOfBounds {
                    row: r,
                    col: c,
                    n_rows,
                    n_cols,
                });
            }
        }
        let mut order: Vec<usize> = (0..triples.len()).collect();
        // Stable sort: duplicates stay in input order and sum deterministically.
        order.sort_by_key(|&i| (triples[i].0, triples[i].1));
        let mut rowptr = vec![0usize; n_rows + 1];
        let mut col = Vec::with_capacity(triples.len());
        let mut val = Vec::with_capacity(triples.len());
        let mut last: Option<(usize, usize)> = None;
        for &i in &order {
            let (r, c, v) = triples[i];
            if last == Some((r, c)) {
                *val.last_mut().unwrap() += v;
            } else {
                col.push(c);
                val.push(v);
                rowptr[r + 1] += 1;
                last = Some((r, c));
            }
        }
        for r in 0..n_rows {
            rowptr[r + 1] += rowptr[r];
        }
        Ok(CsrMatrix {
            n_rows,
            n_cols,
            rowptr,
            col,
            val,
        })
    }

    #[inline]
    pub fn nnz(&self) -> usize {
        self.col.len()
    }

    /// Column indices and values of row `i`.
    #[inline]
    pub fn row(&self, i: usize) -> (&[usize], &[f64]) {
        let lo = self.rowptr[i];
        let hi = self.rowptr[i + 1];
        (&self.col[lo..hi], &self.val[lo..hi])
    }

    /// Stored entries as `(row, col, val)` triples in CSR order.
    pub fn entries(&self) -> Vec<(usize, usize, f64)> {
        let mut out = Vec::with_capacity(self.nnz());
        for i in 0..self.n_rows {
            let (cols, vals) = self.row(i);
            for (&c, &v) in cols.iter().zip(vals) {
                out.push((i, c, v));
            }
        }
        out
    }

    /// Dense copy; test oracles and stable-rank probes use this.
    pub fn to_dense(&self) -> DenseMatrix {
        let mut out = DenseMatrix::zeros(self.n_rows, self.n_cols);
        for (r, c, v) in self.entries() {
            out.data[r * self.n_cols + c] += v;
        }
        out
    }

    /// Frobenius norm over stored values.
    pub fn frobenius_norm(&self) -> f64 {
        self.val.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    /// New matrix with row `i` multiplied by `factors[i]`.
    pub fn scale_rows(&self, factors: &[f64]) -> CsrMatrix {
        assert_eq!(factors.len(), self.n_rows, "factor length mismatch");
        let mut out = self.clone();
        for (i, &f) in factors.iter().enumerate() {
            for t in self.rowptr[i]..self.rowptr[i + 1] {
                out.val[t] = self.val[t] * f;
            }
        }
        out
    }
}

/// Transpose; stored entries only, column order within rows stays ascending.
pub fn csr_transpose(a: &CsrMatrix) -> CsrMatrix {
    let mut counts = vec![0usize; a.n_cols + 1];
    for &c in &a.col {
        counts[c + 1] += 1;
    }
    for i in 0..a.n_cols {
        counts[i + 1] += counts[i];
    }
    let rowptr = counts.clone();
    let mut col = vec![0usize; a.nnz()];
    let mut val = vec![0.0f64; a.nnz()];
    let mut cursor = counts;
    for r in 0..a.n_rows {
        let (cols, vals) = a.row(r);
        for (&c, &v) in cols.iter().zip(vals) {
            let slot = cursor[c];
            col[slot] = r;
            val[slot] = v;
            cursor[c] += 1;
        }
    }
    CsrMatrix {
        n_rows: a.n_cols,
        n_cols: a.n_rows,
        rowptr,
        col,
        val,
    }
}

#[inline]
fn spmm_row(a: &CsrMatrix, b: &DenseMatrix, i: usize, row: &mut [f64]) {
    let (cols, vals) = a.row(i);
    for (&c, &v) in cols.iter().zip(vals) {
        let b_row = b.row(c);
        for (o, &bv) in row.iter_mut().zip(b_row) {
            *o += v * bv;
        }
    }
}

/// Sparse-dense product `a * b`, row-parallel.
/// Charges `nnz(a) * b.n_cols` multiply-adds.
pub fn spmm(a: &CsrMatrix, b: &DenseMatrix) -> DenseMatrix {
    assert_eq!(a.n_cols, b.n_rows, "inner dimension mismatch");
    let work = flops::spmm_cost(a.nnz(), b.n_cols);
    let mut out = DenseMatrix::zeros(a.n_rows, b.n_cols);
    par::rows(&mut out.data, b.n_cols, work, |i, row| {
        spmm_row(a, b, i, row);
    });
    flops::add(work);
    out
}

/// Sequential variant of [`spmm`]; same result bit for bit.
pub fn spmm_seq(a: &CsrMatrix, b: &DenseMatrix) -> DenseMatrix {
    assert_eq!(a.n_cols, b.n_rows, "inner dimension mismatch");
    let mut out = DenseMatrix::zeros(a.n_rows, b.n_cols);
    par::rows_seq(&mut out.data, b.n_cols, |i, row| {
        spmm_row(a, b, i, row);
    });
    flops::add(flops::spmm_cost(a.nnz(), b.n_cols));
    out
}

/// Mean-reduced sparse-dense product: row `i` of `spmm(a, b)` divided by the
/// number of stored entries in row `i` of `a` (stored zeros count; rows with
/// no stored entries come out all zero).
///
/// Equals `diag(1/r_i) * spmm(a, b)` bit for bit, same cost charge as [`spmm`].
pub fn spmm_mean(a: &CsrMatrix, b: &DenseMatrix) -> DenseMatrix {
    assert_eq!(a.n_cols, b.n_rows, "inner dimension mismatch");
    let work = flops::spmm_cost(a.nnz(), b.n_cols);
    let mut out = DenseMatrix::zeros(a.n_rows, b.n_cols);
    par::rows(&mut out.data, b.n_cols, work, |i, row| {
        spmm_mean_row(a, b, i, row);
    });
    flops::add(work);
    out
}

/// Sequential variant of [`spmm_mean`]; same result bit for bit.
pub fn spmm_mean_seq(a: &CsrMatrix, b: &DenseMatrix) -> DenseMatrix {
    assert_eq!(a.n_cols, b.n_rows, "inner dimension mismatch");
    let mut out = DenseMatrix::zeros(a.n_rows, b.n_cols);
    par::rows_seq(&mut out.data, b.n_cols, |i, row| {
        spmm_mean_row(a, b, i, row);
    });
    flops::add(flops::spmm_cost(a.nnz(), b.n_cols));
    out
}

#[inline]
fn spmm_mean_row(a: &CsrMatrix, b: &DenseMatrix, i: usize, row: &mut [f64]) {
    spmm_row(a, b, i, row);
    let count = a.rowptr[i + 1] - a.rowptr[i];
    if count > 0 {
        let inv = 1.0 / count as f64;
        for o in row.iter_mut() {
            *o *= inv;
        }
    }
}

/// Euclidean norm of each column, over stored values.
pub fn csr_column_norms(a: &CsrMatrix) -> Vec<f64> {
    let mut sq = vec![0.0f64; a.n_cols];
    for (&c, &v) in a.col.iter().zip(&a.val) {
        sq[c] += v * v;
    }
    for s in &mut sq {
        *s = s.sqrt();
    }
    sq
}

/// Stored-entry count of each column.
pub fn csr_column_nnz(a: &CsrMatrix) -> Vec<usize> {
    let mut counts = vec![0usize; a.n_cols];
    for &c in &a.col {
        counts[c] += 1;
    }
    counts
}

/// Restriction of `a` to the columns in `keep` (strictly ascending, in range),
/// renumbered to `0..keep.len()`. The returned map is `keep` itself: new
/// column `j` is old column `keep[j]`, which is also the row to take from the
/// dense operand when pairing with a sliced product.
pub fn csr_select_columns(
    a: &CsrMatrix,
    keep: &[usize],
) -> Result<(CsrMatrix, Vec<usize>), SparseError> {
    let mut prev: Option<usize> = None;
    for &c in keep {
        if c >= a.n_cols || prev.is_some_and(|p| p >= c) {
            return Err(SparseError::BadKeepList { col: c });
        }
        prev = Some(c);
    }
    let mut new_index = vec![usize::MAX; a.n_cols];
    for (rank, &c) in keep.iter().enumerate() {
        new_index[c] = rank;
    }
    let mut rowptr = Vec::with_capacity(a.n_rows + 1);
    rowptr.push(0);
    let mut col = Vec::new();
    let mut val = Vec::new();
    for r in 0..a.n_rows {
        let (cols, vals) = a.row(r);
        for (&c, &v) in cols.iter().zip(vals) {
            let ni = new_index[c];
            if ni != usize::MAX {
                col.push(ni);
                val.push(v);
            }
        }
        rowptr.push(col.len());
    }
    Ok((
        CsrMatrix {
            n_rows: a.n_rows,
            n_cols: keep.len(),
            rowptr,
            col,
            val,
        },
        keep.to_vec(),
    ))
}
