//! Graph convolutional model: each layer multiplies features by a weight
//! matrix, aggregates over the normalized adjacency, and applies ReLU
//! everywhere except the output layer.

use crate::dense::{self, DenseMatrix};
use crate::sparse::{self, CsrMatrix};
use rand::Rng;

/// Stacked layer weights; layer `l` maps width `dims[l]` to `dims[l+1]`.
#[derive(Debug, Clone)]
pub struct GcnModel {
    pub weights: Vec<DenseMatrix>,
}

/// Everything the backward pass needs from one forward pass.
#[derive(Debug, Clone)]
pub struct GcnActivations {
    /// Input to each layer (`inputs[0]` is the feature matrix).
    pub inputs: Vec<DenseMatrix>,
    /// Pre-activation output of each layer; the last one is the logits.
    pub pre: Vec<DenseMatrix>,
}

impl GcnActivations {
    pub fn logits(&self) -> &DenseMatrix {
        self.pre.last().expect("at least one layer")
    }
}

impl GcnModel {
    /// Xavier-initialized weights for the given width chain.
    pub fn new<R: Rng>(dims: &[usize], rng: &mut R) -> Self {
        assert!(dims.len() >= 2, "need at least one layer");
        let weights = dims
            .windows(2)
            .map(|w| dense::xavier_init(w[0], w[1], rng))
            .collect();
        GcnModel { weights }
    }

    pub fn n_layers(&self) -> usize {
        self.weights.len()
    }

    /// Forward pass with a caller-supplied aggregation: `agg(l, j)` must
    /// produce the adjacency product for layer `l`'s dense input `j`.
    /// This is the hook through which approximate products are injected
    /// for diagnostics; training always aggregates exactly.
    pub fn forward_with<F>(&self, x: &DenseMatrix, mut agg: F) -> GcnActivations
    where
        F: FnMut(usize, &DenseMatrix) -> DenseMatrix,
    {
        let n_layers = self.n_layers();
        let mut inputs = Vec::with_capacity(n_layers);
        let mut pre = Vec::with_capacity(n_layers);
        let mut h = x.clone();
        for l in 0..n_layers {
            let j = dense::matmul(&h, &self.weights[l]);
            let p = agg(l, &j);
            inputs.push(h);
            h = if l + 1 == n_layers {
                DenseMatrix::zeros(0, 0) // logits stay in `pre`, unactivated
            } else {
                dense::relu(&p)
            };
            pre.push(p);
        }
        GcnActivations { inputs, pre }
    }

    /// Exact forward pass over `adj`.
    pub fn forward(&self, adj: &CsrMatrix, x: &DenseMatrix) -> GcnActivations {
        self.forward_with(x, |_, j| sparse::spmm(adj, j))
    }

    /// Backward pass from the loss gradient at the logits; returns one
    /// gradient per weight matrix.
    ///
    /// `bwd_spmm(l, g)` must produce the transposed-adjacency product for the
    /// pre-activation gradient `g` of layer `l`; the policy decides whether
    /// that product is exact or approximated. ReLU gates always come from the
    /// exact forward pre-activations.
    pub fn backward_with<F>(
        &self,
        acts: &GcnActivations,
        out_grad: &DenseMatrix,
        mut bwd_spmm: F,
    ) -> Vec<DenseMatrix>
    where
        F: FnMut(usize, &DenseMatrix) -> DenseMatrix,
    {
        let n_layers = self.n_layers();
        let mut grads: Vec<DenseMatrix> = Vec::with_capacity(n_layers);
        grads.resize(n_layers, DenseMatrix::zeros(0, 0));
        let mut g_h = out_grad.clone();
        for l in (0..n_layers).rev() {
            let g_pre = if l + 1 == n_layers {
                g_h.clone()
            } else {
                dense::relu_backward(&acts.pre[l], &g_h)
            };
            let g_j = bwd_spmm(l, &g_pre);
            grads[l] = dense::matmul_tn(&acts.inputs[l], &g_j);
            if l > 0 {
                g_h = dense::matmul_nt(&g_j, &self.weights[l]);
            }
        }
        grads
    }
}
