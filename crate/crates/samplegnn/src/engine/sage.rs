//! Mean-aggregation model: each layer combines a node's own features and the
//! mean of its stored neighbor entries through two separate weight matrices.

use crate::dense::{self, DenseMatrix};
use crate::sparse::{self, CsrMatrix};
use rand::Rng;

/// Per-layer weight pair: `w_self[l]` multiplies the node's own features,
/// `w_neigh[l]` the neighbor mean. Both map `dims[l]` to `dims[l+1]`.
#[derive(Debug, Clone)]
pub struct SageModel {
    pub w_self: Vec<DenseMatrix>,
    pub w_neigh: Vec<DenseMatrix>,
}

/// Forward-pass record kept for the backward pass.
#[derive(Debug, Clone)]
pub struct SageActivations {
    /// Input to each layer (`inputs[0]` is the feature matrix).
    pub inputs: Vec<DenseMatrix>,
    /// Neighbor mean of each layer's input.
    pub means: Vec<DenseMatrix>,
    /// Pre-activation output per layer; the last one is the logits.
    pub pre: Vec<DenseMatrix>,
}

/// Gradients in the same layout as the model weights.
#[derive(Debug, Clone)]
pub struct SageGradients {
    pub w_self: Vec<DenseMatrix>,
    pub w_neigh: Vec<DenseMatrix>,
}

impl SageActivations {
    pub fn logits(&self) -> &DenseMatrix {
        self.pre.last().expect("at least one layer")
    }
}

impl SageModel {
    /// Xavier-initialized weights; per layer the self matrix is drawn before
    /// the neighbor matrix, which pins the stream layout for a given seed.
    pub fn new<R: Rng>(dims: &[usize], rng: &mut R) -> Self {
        assert!(dims.len() >= 2, "need at least one layer");
        let mut w_self = Vec::with_capacity(dims.len() - 1);
        let mut w_neigh = Vec::with_capacity(dims.len() - 1);
        for w in dims.windows(2) {
            w_self.push(dense::xavier_init(w[0], w[1], rng));
            w_neigh.push(dense::xavier_init(w[0], w[1], rng));
        }
        SageModel { w_self, w_neigh }
    }

    pub fn n_layers(&self) -> usize {
        self.w_self.len()
    }

    /// Exact forward pass; `adj` is the raw (unnormalized) adjacency.
    pub fn forward(&self, adj: &CsrMatrix, x: &DenseMatrix) -> SageActivations {
        let n_layers = self.n_layers();
        let mut inputs = Vec::with_capacity(n_layers);
        let mut means = Vec::with_capacity(n_layers);
        let mut pre = Vec::with_capacity(n_layers);
        let mut h = x.clone();
        for l in 0..n_layers {
            let m = sparse::spmm_mean(adj, &h);
            let mut p = dense::matmul(&h, &self.w_self[l]);
            p.add_assign(&dense::matmul(&m, &self.w_neigh[l]));
            inputs.push(h);
            means.push(m);
            h = if l + 1 == n_layers {
                DenseMatrix::zeros(0, 0) // logits stay in `pre`, unactivated
            } else {
                dense::relu(&p)
            };
            pre.push(p);
        }
        SageActivations { inputs, means, pre }
    }

    /// Backward pass from the loss gradient at the logits.
    ///
    /// `bwd_spmm(l, g)` must apply the transposed mean operator for layer `l`.
    /// It is invoked only for `l >= 1`: layer 0 receives no input gradient,
    /// so the model has `n_layers - 1` backward aggregation sites.
    pub fn backward_with<F>(
        &self,
        acts: &SageActivations,
        out_grad: &DenseMatrix,
        mut bwd_spmm: F,
    ) -> SageGradients
    where
        F: FnMut(usize, &DenseMatrix) -> DenseMatrix,
    {
        let n_layers = self.n_layers();
        let zero = DenseMatrix::zeros(0, 0);
        let mut g_self: Vec<DenseMatrix> = Vec::with_capacity(n_layers);
        let mut g_neigh: Vec<DenseMatrix> = Vec::with_capacity(n_layers);
        g_self.resize(n_layers, zero.clone());
        g_neigh.resize(n_layers, zero);
        let mut g_h = out_grad.clone();
        for l in (0..n_layers).rev() {
            let g_pre = if l + 1 == n_layers {
                g_h.clone()
            } else {
                dense::relu_backward(&acts.pre[l], &g_h)
            };
            g_self[l] = dense::matmul_tn(&acts.inputs[l], &g_pre);
            g_neigh[l] = dense::matmul_tn(&acts.means[l], &g_pre);
            if l > 0 {
                let g_m = dense::matmul_nt(&g_pre, &self.w_neigh[l]);
                g_h = dense::matmul_nt(&g_pre, &self.w_self[l]);
                g_h.add_assign(&bwd_spmm(l, &g_m));
            }
        }
        SageGradients {
            w_self: g_self,
            w_neigh: g_neigh,
        }
    }
}
