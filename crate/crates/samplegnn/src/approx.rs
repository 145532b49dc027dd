//! Approximate sparse-dense products built from column-row outer pairs.
//!
//! `A * B` equals the sum over `i` of (column `i` of `A`) times (row `i` of
//! `B`). Both estimators here keep only some pairs:
//!
//! - [`approx_spmm_topk`]: the k pairs with the largest norm product, summed
//!   as-is. Deterministic and biased; the bias is exactly the dropped tail.
//! - [`approx_spmm_sampled`]: k i.i.d. draws proportional to the norm
//!   products, each scaled by `1 / (k p_i)`. Unbiased for any k >= 1.
//!
//! [`error_bound_check`] ties the sampled estimator to its dimension-free
//! sample-size bound driven by the stable ranks of the factors.

use crate::dense::{self, DenseMatrix};
use crate::sparse::{self, CsrMatrix};
use rand::Rng;
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum ApproxError {
    #[error("k = {k} outside valid range [1, {n}]")]
    KOutOfRange { k: usize, n: usize },
    #[error("all pair products are zero; sampling distribution is undefined")]
    DegenerateStats,
    #[error("relative error undefined: zero norm product with nonzero residual")]
    ZeroDenominator,
    #[error("operand has zero Frobenius norm")]
    ZeroOperand,
}

/// Per-pair statistics for a product `A * B`.
#[derive(Debug, Clone)]
pub struct PairStats {
    /// `||A[:,i]|| * ||B[i,:]||` per pair.
    pub products: Vec<f64>,
    /// Sampling distribution: products normalized to sum one; uniform when
    /// every product is zero.
    pub probs: Vec<f64>,
    /// Stored entries in each column of `A`; the FLOP price of keeping a pair.
    pub nnz_per_col: Vec<usize>,
    /// `||A||_F * ||B||_F`, the scale-free denominator for error reporting.
    pub total_norm_product: f64,
}

impl PairStats {
    pub fn n_pairs(&self) -> usize {
        self.products.len()
    }
}

/// Computes the column-row pair statistics of `a * b`.
pub fn pair_stats(a: &CsrMatrix, b: &DenseMatrix) -> PairStats {
    assert_eq!(a.n_cols, b.n_rows, "inner dimension mismatch");
    let col_norms = sparse::csr_column_norms(a);
    let row_norms = dense::row_norms(b);
    let products: Vec<f64> = col_norms
        .iter()
        .zip(&row_norms)
        .map(|(c, r)| c * r)
        .collect();
    let sum: f64 = products.iter().sum();
    let probs = if sum > 0.0 {
        products.iter().map(|p| p / sum).collect()
    } else {
        vec![1.0 / products.len().max(1) as f64; products.len()]
    };
    PairStats {
        probs,
        nnz_per_col: sparse::csr_column_nnz(a),
        total_norm_product: a.frobenius_norm() * dense::frobenius_norm(b),
        products,
    }
}

/// The kept pairs of a top-k (or any other) selection, ascending.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TopKSelection {
    pub indices: Vec<usize>,
}

impl TopKSelection {
    pub fn k(&self) -> usize {
        self.indices.len()
    }
}

/// Indices of the `k` largest products; ties break toward the lower index,
/// output ascending.
pub fn topk_indices(stats: &PairStats, k: usize) -> Result<TopKSelection, ApproxError> {
    topk_by_products(&stats.products, k)
}

/// Same ranking applied to a bare product array.
pub fn topk_by_products(products: &[f64], k: usize) -> Result<TopKSelection, ApproxError> {
    let n = products.len();
    if k < 1 || k > n {
        return Err(ApproxError::KOutOfRange { k, n });
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_unstable_by(|&i, &j| products[j].total_cmp(&products[i]).then(i.cmp(&j)));
    let mut indices = order[..k].to_vec();
    indices.sort_unstable();
    Ok(TopKSelection { indices })
}

/// Sum of the selected column-row outer products, computed by slicing `a` to
/// the kept columns and `b` to the matching rows. No rescaling.
///
/// Cost charge is the selected columns' stored entries times `b.n_cols`.
pub fn approx_spmm_topk(a: &CsrMatrix, b: &DenseMatrix, sel: &TopKSelection) -> DenseMatrix {
    assert_eq!(a.n_cols, b.n_rows, "inner dimension mismatch");
    let (sliced, map) =
        sparse::csr_select_columns(a, &sel.indices).expect("selection must index columns of a");
    let b_sel = b.select_rows(&map);
    sparse::spmm(&sliced, &b_sel)
}

/// Unbiased sampled estimator: `k` i.i.d. pair draws with probability
/// proportional to the norm products, each contribution scaled by
/// `1 / (k p_i)`. Draws collapse to unique columns before the sliced product,
/// so the cost charge is the distinct selected columns' entries times
/// `b.n_cols`.
pub fn approx_spmm_sampled<R: Rng>(
    a: &CsrMatrix,
    b: &DenseMatrix,
    k: usize,
    rng: &mut R,
) -> Result<DenseMatrix, ApproxError> {
    assert_eq!(a.n_cols, b.n_rows, "inner dimension mismatch");
    if k < 1 {
        return Err(ApproxError::KOutOfRange { k, n: a.n_cols });
    }
    let stats = pair_stats(a, b);
    let total: f64 = stats.products.iter().sum();
    if total <= 0.0 {
        return Err(ApproxError::DegenerateStats);
    }
    // Inverse-CDF sampling over the unnormalized products: a zero-product pair
    // owns an empty interval and can never be drawn.
    let mut cumulative = Vec::with_capacity(stats.n_pairs());
    let mut acc = 0.0;
    for &p in &stats.products {
        acc += p;
        cumulative.push(acc);
    }
    let mut counts = vec![0u32; stats.n_pairs()];
    for _ in 0..k {
        let u = rng.random_range(0.0..total);
        let idx = cumulative.partition_point(|&c| c <= u);
        counts[idx.min(stats.n_pairs() - 1)] += 1;
    }
    let mut indices = Vec::new();
    let mut weights = Vec::new();
    for (i, &c) in counts.iter().enumerate() {
        if c > 0 {
            indices.push(i);
            weights.push(c as f64 / (k as f64 * stats.probs[i]));
        }
    }
    let (sliced, map) = sparse::csr_select_columns(a, &indices).expect("indices are in range");
    let mut b_sel = b.select_rows(&map);
    b_sel.scale_rows(&weights);
    Ok(sparse::spmm(&sliced, &b_sel))
}

/// `||spmm(a, b) - approx||_F / (||a||_F ||b||_F)`.
///
/// A zero denominator with a zero residual reports 0; with a nonzero residual
/// it is undefined and errors.
pub fn relative_error(
    a: &CsrMatrix,
    b: &DenseMatrix,
    approx: &DenseMatrix,
) -> Result<f64, ApproxError> {
    let exact = sparse::spmm(a, b);
    assert_eq!(
        (approx.n_rows, approx.n_cols),
        (exact.n_rows, exact.n_cols),
        "approximation shape mismatch"
    );
    let mut residual_sq = 0.0;
    for (x, y) in exact.data.iter().zip(&approx.data) {
        let d = x - y;
        residual_sq += d * d;
    }
    let residual = residual_sq.sqrt();
    let denom = a.frobenius_norm() * dense::frobenius_norm(b);
    if denom == 0.0 {
        if residual == 0.0 {
            Ok(0.0)
        } else {
            Err(ApproxError::ZeroDenominator)
        }
    } else {
        Ok(residual / denom)
    }
}

/// Outcome of [`error_bound_check`].
#[derive(Debug, Clone)]
pub struct ErrorBoundReport {
    /// Sample size demanded by the bound (before the floor at one).
    pub k_bound: usize,
    /// Sample size actually used for the trials.
    pub k_used: usize,
    pub trials: usize,
    /// Monte Carlo mean of the Frobenius error on the normalized operands.
    pub mean_error: f64,
    /// `2 * epsilon`; the bound promises the mean stays below this.
    pub threshold: f64,
    /// Deterministic top-k error at `min(k_used, n)` on the same operands;
    /// zero once the sample size covers every pair.
    pub topk_error: f64,
    pub passes: bool,
}

/// Empirically checks the stable-rank sample-size bound: with both operands
/// normalized to unit Frobenius norm and
/// `k = ceil(eps^-2 (srank(a) + srank(b)) ln(n_rows + n_cols_b))`,
/// the mean sampled-estimator error over `trials` runs should stay within
/// `2 * eps`.
pub fn error_bound_check(
    a: &CsrMatrix,
    b: &DenseMatrix,
    epsilon: f64,
    trials: usize,
    seed: u64,
) -> Result<ErrorBoundReport, ApproxError> {
    assert!(epsilon > 0.0, "epsilon must be positive");
    assert!(trials >= 200, "need at least 200 trials for a stable mean");
    let a_norm = a.frobenius_norm();
    let b_norm = dense::frobenius_norm(b);
    if a_norm == 0.0 || b_norm == 0.0 {
        return Err(ApproxError::ZeroOperand);
    }
    let mut an = a.clone();
    for v in &mut an.val {
        *v /= a_norm;
    }
    let mut bn = b.clone();
    bn.scale(1.0 / b_norm);

    let srank_a = dense::stable_rank(&an.to_dense()).map_err(|_| ApproxError::ZeroOperand)?;
    let srank_b = dense::stable_rank(&bn).map_err(|_| ApproxError::ZeroOperand)?;
    let dims = (a.n_rows + b.n_cols) as f64;
    let k_bound = (epsilon.powi(-2) * (srank_a + srank_b) * dims.ln()).ceil() as usize;
    let k_used = k_bound.max(1);

    let exact = sparse::spmm(&an, &bn);
    let mut error_sum = 0.0;
    for t in 0..trials {
        let mut rng = crate::rng::substream(seed, crate::rng::Purpose::Sampling, t as u64);
        let est = approx_spmm_sampled(&an, &bn, k_used, &mut rng)?;
        let mut sq = 0.0;
        for (x, y) in exact.data.iter().zip(&est.data) {
            let d = x - y;
            sq += d * d;
        }
        error_sum += sq.sqrt();
    }
    let mean_error = error_sum / trials as f64;

    let n = a.n_cols;
    let stats = pair_stats(&an, &bn);
    let sel = topk_indices(&stats, k_used.min(n))?;
    let topk_error = relative_error(&an, &bn, &approx_spmm_topk(&an, &bn, &sel))?;

    let threshold = 2.0 * epsilon;
    Ok(ErrorBoundReport {
        k_bound,
        k_used,
        trials,
        mean_error,
        threshold,
        topk_error,
        passes: mean_error <= threshold,
    })
}
