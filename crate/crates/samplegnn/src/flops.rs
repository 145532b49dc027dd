//! Process-wide multiply-add counter.
//!
//! Every kernel that performs `n` multiply-adds calls [`add`] with `n`. One
//! multiply-add counts as one FLOP unit here; additions outside a fused
//! multiply-add (e.g. bias-free reductions) are not charged. The counter is a
//! single relaxed atomic: cheap, thread-safe under rayon, and exact because
//! integer addition is order-independent.
//!
//! Tests that assert exact deltas must not run concurrently with other
//! kernel-heavy tests in the same process; keep such assertions inside one
//! serial test function.

use std::sync::atomic::{AtomicU64, Ordering};

static COUNTER: AtomicU64 = AtomicU64::new(0);

/// Charges `n` multiply-add units to the global counter.
#[inline]
pub fn add(n: u64) {
    COUNTER.fetch_add(n, Ordering::Relaxed);
}

/// Total multiply-add units charged since process start (or last [`reset`]).
pub fn total() -> u64 {
    COUNTER.load(Ordering::Relaxed)
}

/// Resets the counter to zero. Intended for benchmarks and serial tests.
pub fn reset() {
    COUNTER.store(0, Ordering::Relaxed);
}

/// Multiply-add cost of a dense `n_rows x inner` by `inner x n_cols` product.
#[inline]
pub fn matmul_cost(n_rows: usize, inner: usize, n_cols: usize) -> u64 {
    n_rows as u64 * inner as u64 * n_cols as u64
}

/// Multiply-add cost of a sparse-dense product with `nnz` stored entries
/// against a dense operand with `n_cols` columns.
#[inline]
pub fn spmm_cost(nnz: usize, n_cols: usize) -> u64 {
    nnz as u64 * n_cols as u64
}
