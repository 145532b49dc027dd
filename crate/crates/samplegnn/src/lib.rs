//! Sparse-dense matrix kernels with a budgeted sampling layer on top, plus a
//! small full-batch GNN training engine that uses them.
//!
//! The crate is organized around one idea: a sparse-dense product `A·B` is a sum
//! of column-row outer products, so it can be cut down to a subset of those
//! pairs, either by norm-proportional sampling (unbiased, scaled) or by keeping
//! the top-k pairs outright (biased, cheap, no scaling). A greedy allocator
//! splits a global FLOP budget across the layers of a network so that the pairs
//! kept are the ones carrying the most norm mass.
//!
//! Modules:
//! - [`sparse`]: CSR storage, exact SpMM / mean-SpMM, transpose, column slicing
//! - [`dense`]: row-major dense kernels, losses, Adam, stable rank
//! - [`approx`]: column-row pair statistics, top-k and sampled SpMM estimators
//! - [`alloc`]: FLOP-budgeted top-k allocation across layers, selection-overlap AUC
//! - [`engine`]: GCN / mean-aggregator SAGE models, policy-driven training loop
//! - [`data`]: dataset loading, synthetic block-model graphs, metrics CSV
//! - [`flops`]: process-wide multiply-add counter incremented by the kernels
//! - [`rng`]: seeded, stream-split ChaCha8 generators for reproducibility
//!
//! With the default `parallel` feature the row-parallel kernels run on rayon;
//! disabling it swaps in the sequential fallbacks without changing any result
//! bit (each output row is owned by exactly one worker and inner loops keep a
//! fixed summation order).

pub mod alloc;
pub mod approx;
pub mod data;
pub mod dense;
pub mod engine;
pub mod flops;
pub mod rng;
pub mod sparse;

/// Row-partitioned execution shared by the dense and sparse kernels.
pub(crate) mod par {
    /// Work (in multiply-adds) below which forking to rayon costs more than it saves.
    #[cfg(feature = "parallel")]
    const MIN_PAR_WORK: u64 = 1 << 15;

    /// Runs `job` once per row of `data` (chunks of `n_cols`), in parallel when
    /// the `parallel` feature is on and `work` is large enough to pay for it.
    /// Each row is written by exactly one worker, so output is identical to the
    /// sequential path bit for bit.
    #[cfg(feature = "parallel")]
    pub fn rows<F>(data: &mut [f64], n_cols: usize, work: u64, job: F)
    where
        F: Fn(usize, &mut [f64]) + Sync,
    {
        if data.is_empty() || n_cols == 0 {
            return;
        }
        if work < MIN_PAR_WORK {
            rows_seq(data, n_cols, job);
        } else {
            use rayon::prelude::*;
            data.par_chunks_mut(n_cols)
                .enumerate()
                .for_each(|(i, row)| job(i, row));
        }
    }

    #[cfg(not(feature = "parallel"))]
    pub fn rows<F>(data: &mut [f64], n_cols: usize, _work: u64, job: F)
    where
        F: Fn(usize, &mut [f64]) + Sync,
    {
        rows_seq(data, n_cols, job);
    }

    /// Sequential fallback; also the explicit path for `*_seq` kernel variants.
    pub fn rows_seq<F>(data: &mut [f64], n_cols: usize, job: F)
    where
        F: Fn(usize, &mut [f64]),
    {
        if data.is_empty() || n_cols == 0 {
            return;
        }
        for (i, row) in data.chunks_mut(n_cols).enumerate() {
            job(i, row);
        }
    }
}
