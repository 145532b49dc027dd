//! Row-major dense matrices and the kernels the training engine needs.
//!
//! Shape mismatches in the hot kernels are programming errors and panic via
//! `assert!`; fallible numeric routines (loss, stable rank) return `Result`.
//! Every kernel charges the global multiply-add counter in [`crate::flops`].

use crate::{flops, par};
use rand::Rng;
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum DenseError {
    /// Loss over an empty node set is undefined.
    #[error("mask selects no rows")]
    EmptyMask,
    /// A label lies outside the class range of the logits.
    #[error("label {label} out of range for {n_classes} classes at row {row}")]
    LabelOutOfRange {
        row: usize,
        label: usize,
        n_classes: usize,
    },
    /// Stable rank of the zero matrix is undefined.
    #[error("stable rank of a zero matrix is undefined")]
    ZeroMatrix,
}

/// Dense row-major matrix of `f64`.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseMatrix {
    pub n_rows: usize,
    pub n_cols: usize,
    pub data: Vec<f64>,
}

impl DenseMatrix {
    pub fn zeros(n_rows: usize, n_cols: usize) -> Self {
        DenseMatrix {
            n_rows,
            n_cols,
            data: vec![0.0; n_rows * n_cols],
        }
    }

    /// Builds from an explicit row-major buffer.
    pub fn from_vec(n_rows: usize, n_cols: usize, data: Vec<f64>) -> Self {
        assert_eq!(data.len(), n_rows * n_cols, "buffer length mismatch");
        DenseMatrix {
            n_rows,
            n_cols,
            data,
        }
    }

    /// Builds from nested rows; rows must share one length.
    pub fn from_rows(rows: &[Vec<f64>]) -> Self {
        let n_rows = rows.len();
        let n_cols = rows.first().map_or(0, Vec::len);
        let mut data = Vec::with_capacity(n_rows * n_cols);
        for r in rows {
            assert_eq!(r.len(), n_cols, "ragged rows");
            data.extend_from_slice(r);
        }
        DenseMatrix {
            n_rows,
            n_cols,
            data,
        }
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.n_cols..(i + 1) * self.n_cols]
    }

    #[inline]
    pub fn row_mut(&mut self, i: usize) -> &mut [f64] {
        &mut self.data[i * self.n_cols..(i + 1) * self.n_cols]
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.n_cols + j]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        self.data[i * self.n_cols + j] = v;
    }

    pub fn transpose(&self) -> DenseMatrix {
        let mut out = DenseMatrix::zeros(self.n_cols, self.n_rows);
        for i in 0..self.n_rows {
            for j in 0..self.n_cols {
                out.data[j * self.n_rows + i] = self.data[i * self.n_cols + j];
            }
        }
        out
    }

    /// Copies the given rows, in the given order, into a new matrix.
    pub fn select_rows(&self, rows: &[usize]) -> DenseMatrix {
        let mut out = DenseMatrix::zeros(rows.len(), self.n_cols);
        for (t, &r) in rows.iter().enumerate() {
            assert!(r < self.n_rows, "row {r} out of range");
            out.row_mut(t).copy_from_slice(self.row(r));
        }
        out
    }

    /// Multiplies row `i` by `factors[i]` in place.
    pub fn scale_rows(&mut self, factors: &[f64]) {
        assert_eq!(factors.len(), self.n_rows, "factor length mismatch");
        for (i, row) in self.data.chunks_mut(self.n_cols.max(1)).enumerate() {
            let f = factors[i];
            for v in row {
                *v *= f;
            }
        }
    }

    pub fn add_assign(&mut self, other: &DenseMatrix) {
        assert_eq!((self.n_rows, self.n_cols), (other.n_rows, other.n_cols));
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += b;
        }
    }

    pub fn scale(&mut self, s: f64) {
        for v in &mut self.data {
            *v *= s;
        }
    }

    /// Index of the largest entry per row; ties go to the lowest index.
    pub fn argmax_rows(&self) -> Vec<usize> {
        (0..self.n_rows)
            .map(|i| {
                let row = self.row(i);
                let mut best = 0;
                for (j, &v) in row.iter().enumerate() {
                    if v > row[best] {
                        best = j;
                    }
                }
                best
            })
            .collect()
    }
}

/// `a * b`, row-parallel. Cost `n_rows * inner * n_cols` multiply-adds.
pub fn matmul(a: &DenseMatrix, b: &DenseMatrix) -> DenseMatrix {
    assert_eq!(a.n_cols, b.n_rows, "inner dimension mismatch");
    let work = flops::matmul_cost(a.n_rows, a.n_cols, b.n_cols);
    let mut out = DenseMatrix::zeros(a.n_rows, b.n_cols);
    par::rows(&mut out.data, b.n_cols, work, |i, row| {
        matmul_row(a, b, i, row);
    });
    flops::add(work);
    out
}

/// Sequential variant of [`matmul`]; same result bit for bit.
pub fn matmul_seq(a: &DenseMatrix, b: &DenseMatrix) -> DenseMatrix {
    assert_eq!(a.n_cols, b.n_rows, "inner dimension mismatch");
    let mut out = DenseMatrix::zeros(a.n_rows, b.n_cols);
    par::rows_seq(&mut out.data, b.n_cols, |i, row| {
        matmul_row(a, b, i, row);
    });
    flops::add(flops::matmul_cost(a.n_rows, a.n_cols, b.n_cols));
    out
}

#[inline]
fn matmul_row(a: &DenseMatrix, b: &DenseMatrix, i: usize, row: &mut [f64]) {
    let a_row = a.row(i);
    for (k, &av) in a_row.iter().enumerate() {
        if av == 0.0 {
            continue;
        }
        let b_row = b.row(k);
        for (o, &bv) in row.iter_mut().zip(b_row) {
            *o += av * bv;
        }
    }
}

/// `a^T * b` without materializing the transpose. Output is `a.n_cols x b.n_cols`.
pub fn matmul_tn(a: &DenseMatrix, b: &DenseMatrix) -> DenseMatrix {
    assert_eq!(a.n_rows, b.n_rows, "outer dimension mismatch");
    let work = flops::matmul_cost(a.n_cols, a.n_rows, b.n_cols);
    let mut out = DenseMatrix::zeros(a.n_cols, b.n_cols);
    par::rows(&mut out.data, b.n_cols, work, |i, row| {
        for k in 0..a.n_rows {
            let av = a.get(k, i);
            if av == 0.0 {
                continue;
            }
            let b_row = b.row(k);
            for (o, &bv) in row.iter_mut().zip(b_row) {
                *o += av * bv;
            }
        }
    });
    flops::add(work);
    out
}

/// `a * b^T` without materializing the transpose. Output is `a.n_rows x b.n_rows`.
pub fn matmul_nt(a: &DenseMatrix, b: &DenseMatrix) -> DenseMatrix {
    assert_eq!(a.n_cols, b.n_cols, "inner dimension mismatch");
    let work = flops::matmul_cost(a.n_rows, a.n_cols, b.n_rows);
    let mut out = DenseMatrix::zeros(a.n_rows, b.n_rows);
    par::rows(&mut out.data, b.n_rows, work, |i, row| {
        let a_row = a.row(i);
        for (j, o) in row.iter_mut().enumerate() {
            let b_row = b.row(j);
            let mut acc = 0.0;
            for (&av, &bv) in a_row.iter().zip(b_row) {
                acc += av * bv;
            }
            *o = acc;
        }
    });
    flops::add(work);
    out
}

/// Elementwise `max(x, 0)`.
pub fn relu(x: &DenseMatrix) -> DenseMatrix {
    let mut out = x.clone();
    for v in &mut out.data {
        if *v < 0.0 {
            *v = 0.0;
        }
    }
    out
}

/// Gates `upstream` by the sign of the pre-activation: entries flow where
/// `pre > 0`, are zeroed elsewhere (the derivative at exactly zero is zero).
pub fn relu_backward(pre: &DenseMatrix, upstream: &DenseMatrix) -> DenseMatrix {
    assert_eq!((pre.n_rows, pre.n_cols), (upstream.n_rows, upstream.n_cols));
    let mut out = upstream.clone();
    for (o, &p) in out.data.iter_mut().zip(&pre.data) {
        if p <= 0.0 {
            *o = 0.0;
        }
    }
    out
}

/// Euclidean norm of each row.
pub fn row_norms(x: &DenseMatrix) -> Vec<f64> {
    (0..x.n_rows)
        .map(|i| x.row(i).iter().map(|v| v * v).sum::<f64>().sqrt())
        .collect()
}

pub fn frobenius_norm(x: &DenseMatrix) -> f64 {
    x.data.iter().map(|v| v * v).sum::<f64>().sqrt()
}

/// Mean softmax cross-entropy over masked rows, with the gradient w.r.t. the
/// logits. Unmasked rows contribute nothing and get zero gradient rows.
///
/// The loss uses the log-sum-exp form after subtracting each row's max, so a
/// huge logit gap yields a large finite loss rather than an overflow.
pub fn softmax_cross_entropy(
    logits: &DenseMatrix,
    labels: &[usize],
    mask: &[bool],
) -> Result<(f64, DenseMatrix), DenseError> {
    assert_eq!(labels.len(), logits.n_rows, "label length mismatch");
    assert_eq!(mask.len(), logits.n_rows, "mask length mismatch");
    let count = mask.iter().filter(|&&m| m).count();
    if count == 0 {
        return Err(DenseError::EmptyMask);
    }
    let inv = 1.0 / count as f64;
    let mut grad = DenseMatrix::zeros(logits.n_rows, logits.n_cols);
    let mut loss = 0.0;
    for i in 0..logits.n_rows {
        if !mask[i] {
            continue;
        }
        let label = labels[i];
        if label >= logits.n_cols {
            return Err(DenseError::LabelOutOfRange {
                row: i,
                label,
                n_classes: logits.n_cols,
            });
        }
        let row = logits.row(i);
        let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let mut sum = 0.0;
        for &z in row {
            sum += (z - max).exp();
        }
        loss += sum.ln() - (row[label] - max);
        let grow = grad.row_mut(i);
        for (j, &z) in row.iter().enumerate() {
            let p = (z - max).exp() / sum;
            grow[j] = (p - if j == label { 1.0 } else { 0.0 }) * inv;
        }
    }
    Ok((loss * inv, grad))
}

/// Fraction of masked rows whose argmax equals the label.
pub fn masked_accuracy(logits: &DenseMatrix, labels: &[usize], mask: &[bool]) -> f64 {
    let preds = logits.argmax_rows();
    let mut hit = 0usize;
    let mut total = 0usize;
    for i in 0..labels.len() {
        if mask[i] {
            total += 1;
            if preds[i] == labels[i] {
                hit += 1;
            }
        }
    }
    if total == 0 {
        0.0
    } else {
        hit as f64 / total as f64
    }
}

/// Uniform init on `[-a, a]` with `a = sqrt(6 / (fan_in + fan_out))`,
/// `fan_in = n_rows`, `fan_out = n_cols`.
pub fn xavier_init<R: Rng>(n_rows: usize, n_cols: usize, rng: &mut R) -> DenseMatrix {
    let a = (6.0 / (n_rows + n_cols) as f64).sqrt();
    let mut out = DenseMatrix::zeros(n_rows, n_cols);
    for v in &mut out.data {
        *v = rng.random_range(-a..a);
    }
    out
}

/// Adam hyperparameters; defaults are the standard ones.
#[derive(Debug, Clone, Copy)]
pub struct AdamParams {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl AdamParams {
    pub fn with_lr(lr: f64) -> Self {
        AdamParams {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// First and second moment accumulators for one parameter matrix.
#[derive(Debug, Clone)]
pub struct AdamState {
    pub m: DenseMatrix,
    pub v: DenseMatrix,
}

impl AdamState {
    pub fn new(n_rows: usize, n_cols: usize) -> Self {
        AdamState {
            m: DenseMatrix::zeros(n_rows, n_cols),
            v: DenseMatrix::zeros(n_rows, n_cols),
        }
    }
}

/// One bias-corrected Adam update. `t` is the 1-based step count.
pub fn adam_step(
    param: &mut DenseMatrix,
    grad: &DenseMatrix,
    state: &mut AdamState,
    hp: &AdamParams,
    t: u64,
) {
    assert!(t >= 1, "Adam step count is 1-based");
    assert_eq!((param.n_rows, param.n_cols), (grad.n_rows, grad.n_cols));
    let bc1 = 1.0 - hp.beta1.powi(t as i32);
    let bc2 = 1.0 - hp.beta2.powi(t as i32);
    for idx in 0..param.data.len() {
        let g = grad.data[idx];
        let m = hp.beta1 * state.m.data[idx] + (1.0 - hp.beta1) * g;
        let v = hp.beta2 * state.v.data[idx] + (1.0 - hp.beta2) * g * g;
        state.m.data[idx] = m;
        state.v.data[idx] = v;
        let m_hat = m / bc1;
        let v_hat = v / bc2;
        param.data[idx] -= hp.lr * m_hat / (v_hat.sqrt() + hp.eps);
    }
}

/// Squared Frobenius norm over the squared spectral norm.
///
/// The spectral norm comes from power iteration on the Gram matrix of the
/// smaller side (relative tolerance 1e-6, at most 1000 iterations, fixed
/// pseudorandom start), so the result is deterministic. Always lands in
/// `[1, rank(x)]` up to iteration tolerance.
pub fn stable_rank(x: &DenseMatrix) -> Result<f64, DenseError> {
    let fro_sq: f64 = x.data.iter().map(|v| v * v).sum();
    if fro_sq == 0.0 {
        return Err(DenseError::ZeroMatrix);
    }
    let sigma_sq = top_singular_value_sq(x);
    Ok(fro_sq / sigma_sq)
}

fn top_singular_value_sq(x: &DenseMatrix) -> f64 {
    // Iterate on the smaller Gram operator: v -> X^T(Xv) or v -> X(X^T v).
    let tall = x.n_rows >= x.n_cols;
    let dim = if tall { x.n_cols } else { x.n_rows };
    let mut rng = crate::rng::stream(0x5EED, crate::rng::Purpose::Probe);
    'restart: for _ in 0..4 {
        let mut v: Vec<f64> = (0..dim).map(|_| rng.random_range(-1.0..1.0)).collect();
        normalize(&mut v);
        let mut lambda = 0.0f64;
        for _ in 0..1000 {
            let w = if tall {
                apply_tn(x, &apply(x, &v))
            } else {
                apply(x, &apply_tn(x, &v))
            };
            let next = dot(&v, &w);
            let norm = w.iter().map(|a| a * a).sum::<f64>().sqrt();
            if norm == 0.0 {
                // Start vector fell in the kernel; try a fresh one.
                continue 'restart;
            }
            v = w;
            for a in &mut v {
                *a /= norm;
            }
            if (next - lambda).abs() <= 1e-6 * next.abs().max(1e-300) {
                return next;
            }
            lambda = next;
        }
        return lambda;
    }
    // Every probe hit the kernel; the matrix is numerically zero.
    0.0
}

fn apply(x: &DenseMatrix, v: &[f64]) -> Vec<f64> {
    (0..x.n_rows).map(|i| dot(x.row(i), v)).collect()
}

fn apply_tn(x: &DenseMatrix, v: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; x.n_cols];
    for (i, &s) in v.iter().enumerate() {
        let row = x.row(i);
        if s == 0.0 {
            continue;
        }
        for (o, &r) in out.iter_mut().zip(row) {
            *o += s * r;
        }
    }
    out
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn normalize(v: &mut [f64]) {
    let n = v.iter().map(|a| a * a).sum::<f64>().sqrt();
    if n > 0.0 {
        for a in v {
            *a /= n;
        }
    }
}
