//! Training engine: models, backward-pass approximation policy, budget
//! refresh, operator caching, exact-phase switching, and the full-batch
//! training loop with FLOP and stability accounting.

pub mod gcn;
pub mod sage;

pub use gcn::{GcnActivations, GcnModel};
pub use sage::{SageActivations, SageGradients, SageModel};

use std::collections::VecDeque;
use std::time::Instant;

use thiserror::Error;

use crate::alloc::{self, AllocError, AllocationPlan, LayerProfile};
use crate::approx::{self, TopKSelection};
use crate::data::GraphDataset;
use crate::dense::{self, AdamParams, AdamState, DenseError, DenseMatrix};
use crate::rng::{self, Purpose};
use crate::sparse::{self, CsrMatrix};

/// Steps between a top-k selection and the one it is scored against.
pub const STABILITY_LAG: usize = 10;

#[derive(Debug, Error)]
pub enum EngineError {
    #[error("adjacency must be square, got {n_rows}x{n_cols}")]
    NonSquareAdjacency { n_rows: usize, n_cols: usize },
    #[error("invalid configuration: {0}")]
    BadConfig(String),
    #[error("loss became non-finite ({loss}) at epoch {epoch}")]
    NonFiniteLoss { epoch: usize, loss: f64 },
    #[error(transparent)]
    Loss(#[from] DenseError),
    #[error(transparent)]
    Alloc(#[from] AllocError),
}

/// Which architecture to train.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ModelKind {
    Gcn,
    Sage,
}

impl std::str::FromStr for ModelKind {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "gcn" => Ok(ModelKind::Gcn),
            "sage" => Ok(ModelKind::Sage),
            other => Err(format!("unknown model '{other}' (expected gcn or sage)")),
        }
    }
}

impl std::fmt::Display for ModelKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            ModelKind::Gcn => "gcn",
            ModelKind::Sage => "sage",
        })
    }
}

/// How backward sparse products are computed.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    /// Every backward product is exact.
    Exact,
    /// Greedy per-layer budget split, top-k columns by norm product.
    Rsc,
    /// Same budget, same top-k ranking, but an equal k for every layer.
    Uniform,
}

impl std::str::FromStr for Mode {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "exact" => Ok(Mode::Exact),
            "rsc" => Ok(Mode::Rsc),
            "uniform" => Ok(Mode::Uniform),
            other => Err(format!(
                "unknown mode '{other}' (expected exact, rsc, or uniform)"
            )),
        }
    }
}

impl std::fmt::Display for Mode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Mode::Exact => "exact",
            Mode::Rsc => "rsc",
            Mode::Uniform => "uniform",
        })
    }
}

/// Backward-pass approximation policy.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BackwardPolicy {
    pub mode: Mode,
    /// Budget as a fraction of the exact backward cost; 1.0 keeps everything.
    pub budget_c: f64,
    /// Allocator step quantum as a fraction of the pair count.
    pub alpha: f64,
    /// Steps between budget re-allocations.
    pub alloc_interval: usize,
    /// Steps a sliced operator stays valid.
    pub cache_interval: usize,
    /// Fraction of total steps that run approximated; the rest run exact.
    pub switch_fraction: f64,
}

impl Default for BackwardPolicy {
    fn default() -> Self {
        BackwardPolicy {
            mode: Mode::Exact,
            budget_c: 0.1,
            alpha: 0.02,
            alloc_interval: 10,
            cache_interval: 10,
            switch_fraction: 0.8,
        }
    }
}

impl BackwardPolicy {
    pub fn validate(&self) -> Result<(), EngineError> {
        if self.alloc_interval < 1 || self.cache_interval < 1 {
            return Err(EngineError::BadConfig(
                "alloc_interval and cache_interval must be at least 1".into(),
            ));
        }
        if !(self.switch_fraction > 0.0 && self.switch_fraction <= 1.0) {
            return Err(EngineError::BadConfig(format!(
                "switch_fraction must be in (0, 1], got {}",
                self.switch_fraction
            )));
        }
        if self.mode != Mode::Exact {
            if !(self.budget_c > 0.0 && self.budget_c <= 1.0) {
                return Err(EngineError::BadConfig(format!(
                    "budget_c must be in (0, 1], got {}",
                    self.budget_c
                )));
            }
            if !(self.alpha > 0.0 && self.alpha <= 1.0) {
                return Err(EngineError::BadConfig(format!(
                    "alpha must be in (0, 1], got {}",
                    self.alpha
                )));
            }
        }
        Ok(())
    }
}

/// Full training configuration (dataset supplied separately).
#[derive(Debug, Clone)]
pub struct TrainConfig {
    pub model: ModelKind,
    pub layers: usize,
    pub hidden: usize,
    pub epochs: usize,
    pub lr: f64,
    pub seed: u64,
    pub policy: BackwardPolicy,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            model: ModelKind::Gcn,
            layers: 2,
            hidden: 64,
            epochs: 100,
            lr: 0.01,
            seed: 0,
            policy: BackwardPolicy::default(),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), EngineError> {
        if self.layers < 1 {
            return Err(EngineError::BadConfig("layers must be at least 1".into()));
        }
        if self.hidden < 1 {
            return Err(EngineError::BadConfig("hidden must be at least 1".into()));
        }
        if self.epochs < 1 {
            return Err(EngineError::BadConfig("epochs must be at least 1".into()));
        }
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return Err(EngineError::BadConfig(format!(
                "lr must be positive and finite, got {}",
                self.lr
            )));
        }
        self.policy.validate()
    }

    /// Width chain `[features, hidden.., classes]`.
    pub fn layer_dims(&self, feat_dim: usize, n_classes: usize) -> Vec<usize> {
        let mut dims = Vec::with_capacity(self.layers + 1);
        dims.push(feat_dim);
        for _ in 1..self.layers {
            dims.push(self.hidden);
        }
        dims.push(n_classes);
        dims
    }
}

/// True while `step` falls in the approximated prefix of the run.
pub fn switch_active(step: usize, total_steps: usize, fraction: f64) -> bool {
    step < (fraction * total_steps as f64).floor() as usize
}

/// Symmetric degree normalization with implied self-loops, computed from the
/// sparsity pattern only (stored values are ignored). Every row gains a
/// diagonal entry, so no degree is zero.
pub fn normalize_adjacency(a: &CsrMatrix) -> Result<CsrMatrix, EngineError> {
    if a.n_rows != a.n_cols {
        return Err(EngineError::NonSquareAdjacency {
            n_rows: a.n_rows,
            n_cols: a.n_cols,
        });
    }
    let n = a.n_rows;
    let mut has_diag = vec![false; n];
    let mut deg = vec![0usize; n];
    for r in 0..n {
        let (cols, _) = a.row(r);
        deg[r] = cols.len();
        if cols.binary_search(&r).is_ok() {
            has_diag[r] = true;
        }
    }
    for r in 0..n {
        if !has_diag[r] {
            deg[r] += 1;
        }
    }
    let inv_sqrt: Vec<f64> = deg.iter().map(|&d| 1.0 / (d as f64).sqrt()).collect();
    let mut triples = Vec::with_capacity(a.nnz() + n);
    for r in 0..n {
        let (cols, _) = a.row(r);
        for &c in cols {
            triples.push((r, c, inv_sqrt[r] * inv_sqrt[c]));
        }
        if !has_diag[r] {
            triples.push((r, r, inv_sqrt[r] * inv_sqrt[r]));
        }
    }
    Ok(CsrMatrix::from_coo(n, n, &triples).expect("entries are in range by construction"))
}

/// The transposed mean-aggregation operator `(D^-1 A)^T`; rows of `a` with no
/// stored entries contribute nothing backward, matching the zero forward mean.
pub fn mean_backward_operator(a: &CsrMatrix) -> CsrMatrix {
    let inv: Vec<f64> = (0..a.n_rows)
        .map(|r| {
            let cnt = a.row(r).0.len();
            if cnt == 0 {
                0.0
            } else {
                1.0 / cnt as f64
            }
        })
        .collect();
    sparse::csr_transpose(&a.scale_rows(&inv))
}

/// Gradient-side statistics of one backward product's dense operand.
#[derive(Debug, Clone)]
struct Snapshot {
    row_norms: Vec<f64>,
    frob: f64,
}

impl Snapshot {
    /// Neutral bootstrap used before the first backward pass has run.
    fn ones(n: usize) -> Self {
        Snapshot {
            row_norms: vec![1.0; n],
            frob: (n as f64).sqrt(),
        }
    }

    fn of(g: &DenseMatrix) -> Self {
        let row_norms = dense::row_norms(g);
        let frob = row_norms.iter().map(|x| x * x).sum::<f64>().sqrt();
        Snapshot { row_norms, frob }
    }
}

/// A sliced backward operator kept across steps.
#[derive(Debug, Clone)]
pub struct CacheEntry {
    pub sliced: CsrMatrix,
    /// Kept original column indices, ascending; doubles as the dense row
    /// selection for the other factor.
    pub map: Vec<usize>,
    pub source_step: usize,
    /// Serial number of the slicing that built this entry.
    pub slice_id: u64,
}

/// Policy state for the backward pass of one model: per-operation budget
/// plan, sliced-operator cache, gradient snapshots, and selection-stability
/// bookkeeping. One instance drives every backward product of a run.
#[derive(Debug)]
pub struct Approximator {
    op: CsrMatrix,
    col_norms: Vec<f64>,
    col_nnz: Vec<usize>,
    op_frob: f64,
    layer_of_op: Vec<usize>,
    slot_by_layer: Vec<Option<usize>>,
    d_per_op: Vec<usize>,
    capture: bool,
    snapshots: Vec<Snapshot>,
    plan: Option<AllocationPlan>,
    // Per-slot FLOP ceiling the executed slice must respect; the plan's own
    // selection cost. Re-slices on drifted products may pick heavier columns
    // at the same k, so k alone does not bound the spend.
    cost_caps: Vec<u64>,
    caches: Vec<Option<CacheEntry>>,
    sel_history: Vec<VecDeque<TopKSelection>>,
    epoch_flops: Vec<u64>,
    slicings: u64,
}

/// One stability measurement: the top-k selection of `layer` taken
/// `STABILITY_LAG` steps before `step`, scored against the products at
/// `step`. `None` marks a degenerate k (0 or the full column count).
#[derive(Debug, Clone, PartialEq)]
pub struct AucSample {
    pub step: usize,
    pub layer: usize,
    pub auc: Option<f64>,
}

impl Approximator {
    /// `op` is the shared backward operator; `layer_of_op[s]` names the model
    /// layer of slot `s` (ascending), `d_per_op[s]` its dense operand width.
    /// `capture` records gradient snapshots during backward calls.
    pub fn new(op: CsrMatrix, layer_of_op: Vec<usize>, d_per_op: Vec<usize>, capture: bool) -> Self {
        assert_eq!(layer_of_op.len(), d_per_op.len());
        let n = op.n_cols;
        let n_ops = layer_of_op.len();
        let max_layer = layer_of_op.iter().copied().max().map_or(0, |m| m + 1);
        let mut slot_by_layer = vec![None; max_layer];
        for (s, &l) in layer_of_op.iter().enumerate() {
            assert!(slot_by_layer[l].is_none(), "duplicate layer {l}");
            slot_by_layer[l] = Some(s);
        }
        let col_norms = sparse::csr_column_norms(&op);
        let col_nnz = sparse::csr_column_nnz(&op);
        let op_frob = op.frobenius_norm();
        Approximator {
            op,
            col_norms,
            col_nnz,
            op_frob,
            layer_of_op,
            slot_by_layer,
            d_per_op,
            capture,
            snapshots: vec![Snapshot::ones(n); n_ops],
            plan: None,
            cost_caps: vec![0; n_ops],
            caches: vec![None; n_ops],
            sel_history: vec![VecDeque::new(); n_ops],
            epoch_flops: vec![0; n_ops],
            slicings: 0,
        }
    }

    pub fn n_ops(&self) -> usize {
        self.layer_of_op.len()
    }

    pub fn plan(&self) -> Option<&AllocationPlan> {
        self.plan.as_ref()
    }

    pub fn cache(&self, slot: usize) -> Option<&CacheEntry> {
        self.caches[slot].as_ref()
    }

    /// Total slicings performed so far.
    pub fn slicings(&self) -> u64 {
        self.slicings
    }

    /// Backward operator this instance wraps.
    pub fn operator(&self) -> &CsrMatrix {
        &self.op
    }

    /// Cost of running every backward product exactly, once.
    pub fn exact_equiv_flops(&self) -> u64 {
        let nnz = self.op.nnz() as u64;
        self.d_per_op.iter().map(|&d| nnz * d as u64).sum()
    }

    pub fn begin_epoch(&mut self) {
        self.epoch_flops.iter_mut().for_each(|f| *f = 0);
    }

    pub fn epoch_flops_total(&self) -> u64 {
        self.epoch_flops.iter().sum()
    }

    pub fn needs_refresh(&self, step: usize, policy: &BackwardPolicy) -> bool {
        self.plan.is_none() || step % policy.alloc_interval == 0
    }

    fn products_for(&self, slot: usize) -> Vec<f64> {
        self.col_norms
            .iter()
            .zip(&self.snapshots[slot].row_norms)
            .map(|(c, r)| c * r)
            .collect()
    }

    /// Rebuild the budget plan from the latest gradient snapshots.
    pub fn refresh(&mut self, policy: &BackwardPolicy) -> Result<(), AllocError> {
        let profiles: Vec<LayerProfile> = (0..self.n_ops())
            .map(|s| LayerProfile {
                layer_id: self.layer_of_op[s],
                products: self.products_for(s),
                nnz_per_col: self.col_nnz.clone(),
                d: self.d_per_op[s],
                frob_denominator: self.op_frob * self.snapshots[s].frob,
            })
            .collect();
        let plan = match policy.mode {
            Mode::Rsc => alloc::greedy_allocate(&profiles, policy.budget_c, policy.alpha)?,
            Mode::Uniform => alloc::uniform_allocate(&profiles, policy.budget_c, policy.alpha)?,
            Mode::Exact => unreachable!("no plan is ever built in exact mode"),
        };
        for s in 0..self.n_ops() {
            let d = self.d_per_op[s] as u64;
            self.cost_caps[s] = plan.selections[s]
                .indices
                .iter()
                .map(|&i| self.col_nnz[i] as u64)
                .sum::<u64>()
                * d;
            // A still-fresh slice from the old plan may overshoot the new
            // ceiling; dropping it forces a compliant re-slice.
            if let Some(e) = &self.caches[s] {
                if e.sliced.nnz() as u64 * d > self.cost_caps[s] {
                    self.caches[s] = None;
                }
            }
        }
        self.plan = Some(plan);
        Ok(())
    }

    /// Drops the cheapest-ranked selected columns until the slice cost fits
    /// this slot's ceiling; mirrors the keep rule, so ties shed the higher
    /// index first. Indices stay ascending.
    fn trim_to_cap(&self, mut kept: Vec<usize>, products: &[f64], slot: usize) -> Vec<usize> {
        let d = self.d_per_op[slot] as u64;
        let cap = self.cost_caps[slot];
        let mut cost: u64 = kept.iter().map(|&i| self.col_nnz[i] as u64).sum::<u64>() * d;
        if cost <= cap {
            return kept;
        }
        let mut order = kept.clone();
        order.sort_by(|&a, &b| products[a].total_cmp(&products[b]).then(b.cmp(&a)));
        let mut dropped = vec![false; self.op.n_cols];
        for idx in order {
            if cost <= cap {
                break;
            }
            dropped[idx] = true;
            cost -= self.col_nnz[idx] as u64 * d;
        }
        kept.retain(|&i| !dropped[i]);
        kept
    }

    /// One backward sparse product. With `active` set, runs the sliced
    /// operator from the cache, re-slicing from current products when the
    /// entry is older than the cache interval (never spending more than the
    /// plan allotted the layer); otherwise runs exact. Either way the cost
    /// lands in this epoch's tally.
    pub fn backward_spmm(
        &mut self,
        layer: usize,
        g: &DenseMatrix,
        step: usize,
        active: bool,
        policy: &BackwardPolicy,
    ) -> DenseMatrix {
        let slot = self.slot_by_layer[layer].expect("layer has a backward product");
        if self.capture {
            self.snapshots[slot] = Snapshot::of(g);
        }
        let width = g.n_cols as u64;
        if !active {
            self.epoch_flops[slot] += self.op.nnz() as u64 * width;
            return sparse::spmm(&self.op, g);
        }
        let k = self.plan.as_ref().expect("active implies a plan").k_per_layer[slot];
        let stale = match &self.caches[slot] {
            None => true,
            Some(e) => step - e.source_step >= policy.cache_interval,
        };
        if stale {
            let products = self.products_for(slot);
            let sel = approx::topk_by_products(&products, k).expect("plan k is in range");
            let kept = self.trim_to_cap(sel.indices, &products, slot);
            let (sliced, map) =
                sparse::csr_select_columns(&self.op, &kept).expect("selection is valid");
            self.slicings += 1;
            self.caches[slot] = Some(CacheEntry {
                sliced,
                map,
                source_step: step,
                slice_id: self.slicings,
            });
        }
        let entry = self.caches[slot].as_ref().expect("just ensured");
        let g_sel = g.select_rows(&entry.map);
        self.epoch_flops[slot] += entry.sliced.nnz() as u64 * width;
        sparse::spmm(&entry.sliced, &g_sel)
    }

    /// Score this step's products against the selections taken
    /// `STABILITY_LAG` steps ago and record this step's selections.
    /// Emits one sample per operation once enough history exists.
    pub fn sample_stability(&mut self, step: usize) -> Vec<AucSample> {
        let plan = match &self.plan {
            Some(p) => p,
            None => return Vec::new(),
        };
        let mut out = Vec::new();
        for s in 0..self.layer_of_op.len() {
            let layer = self.layer_of_op[s];
            let products = self
                .col_norms
                .iter()
                .zip(&self.snapshots[s].row_norms)
                .map(|(c, r)| c * r)
                .collect::<Vec<f64>>();
            let k = plan.k_per_layer[s];
            if k == 0 || k >= products.len() {
                // Selection covers nothing or everything: no ranking to score.
                self.sel_history[s].clear();
                out.push(AucSample {
                    step,
                    layer,
                    auc: None,
                });
                continue;
            }
            if self.sel_history[s].len() == STABILITY_LAG {
                let prev = self.sel_history[s].pop_front().expect("len checked");
                let auc = alloc::auc_match_score(&prev, &products).ok();
                out.push(AucSample { step, layer, auc });
            }
            let sel = approx::topk_by_products(&products, k).expect("k in range");
            self.sel_history[s].push_back(sel);
        }
        out
    }
}

/// Either model behind one interface: forward, backward with a pluggable
/// sparse product, and a flat parameter list in a fixed order.
enum ModelState {
    Gcn(GcnModel),
    Sage(SageModel),
}

enum Acts {
    Gcn(GcnActivations),
    Sage(SageActivations),
}

impl Acts {
    fn logits(&self) -> &DenseMatrix {
        match self {
            Acts::Gcn(a) => a.logits(),
            Acts::Sage(a) => a.logits(),
        }
    }
}

impl ModelState {
    fn new<R: rand::Rng>(kind: ModelKind, dims: &[usize], rng: &mut R) -> Self {
        match kind {
            ModelKind::Gcn => ModelState::Gcn(GcnModel::new(dims, rng)),
            ModelKind::Sage => ModelState::Sage(SageModel::new(dims, rng)),
        }
    }

    fn n_layers(&self) -> usize {
        match self {
            ModelState::Gcn(m) => m.n_layers(),
            ModelState::Sage(m) => m.n_layers(),
        }
    }

    /// Model layers owning a backward sparse product, ascending.
    fn op_layers(&self) -> Vec<usize> {
        match self {
            ModelState::Gcn(m) => (0..m.n_layers()).collect(),
            // Layer 0's inputs are constants; no gradient flows through its
            // aggregation.
            ModelState::Sage(m) => (1..m.n_layers()).collect(),
        }
    }

    /// Width of the dense operand of each backward product, aligned with
    /// `op_layers`.
    fn op_widths(&self, dims: &[usize]) -> Vec<usize> {
        match self {
            ModelState::Gcn(_) => (0..self.n_layers()).map(|l| dims[l + 1]).collect(),
            ModelState::Sage(_) => (1..self.n_layers()).map(|l| dims[l]).collect(),
        }
    }

    fn forward(&self, forward_op: &CsrMatrix, x: &DenseMatrix) -> Acts {
        match self {
            ModelState::Gcn(m) => Acts::Gcn(m.forward(forward_op, x)),
            ModelState::Sage(m) => Acts::Sage(m.forward(forward_op, x)),
        }
    }

    /// Flat gradients, matching `params_mut` order.
    fn backward(
        &self,
        acts: &Acts,
        out_grad: &DenseMatrix,
        bwd: &mut dyn FnMut(usize, &DenseMatrix) -> DenseMatrix,
    ) -> Vec<DenseMatrix> {
        match (self, acts) {
            (ModelState::Gcn(m), Acts::Gcn(a)) => m.backward_with(a, out_grad, |l, g| bwd(l, g)),
            (ModelState::Sage(m), Acts::Sage(a)) => {
                let g = m.backward_with(a, out_grad, |l, g| bwd(l, g));
                g.w_self
                    .into_iter()
                    .zip(g.w_neigh)
                    .flat_map(|(s, n)| [s, n])
                    .collect()
            }
            _ => unreachable!("activations from a different model"),
        }
    }

    /// Parameters in update order: per layer, self weight then neighbor
    /// weight for the mean-aggregation model.
    fn params_mut(&mut self) -> Vec<&mut DenseMatrix> {
        match self {
            ModelState::Gcn(m) => m.weights.iter_mut().collect(),
            ModelState::Sage(m) => m
                .w_self
                .iter_mut()
                .zip(m.w_neigh.iter_mut())
                .flat_map(|(s, n)| [s as &mut DenseMatrix, n])
                .collect(),
        }
    }
}

/// One row of the training history.
#[derive(Debug, Clone, PartialEq)]
pub struct EpochRecord {
    pub epoch: usize,
    pub loss: f64,
    pub train_acc: f64,
    pub val_acc: f64,
    pub test_acc: f64,
    /// Backward sparse-product cost actually paid this epoch.
    pub bwd_spmm_flops: u64,
    /// What the same products would have cost exactly.
    pub bwd_spmm_flops_exact_equiv: u64,
    pub alloc_ms: f64,
    pub elapsed_ms: f64,
    pub approx_active: bool,
    /// Mean selection-stability score this epoch; NaN when none was taken.
    pub mean_auc_stability: f64,
}

/// Full outcome of a training run.
#[derive(Debug, Clone)]
pub struct TrainReport {
    pub records: Vec<EpochRecord>,
    pub auc_series: Vec<AucSample>,
    pub best_val_epoch: usize,
    pub best_val_acc: f64,
    /// Test accuracy at the best-validation epoch.
    pub test_acc_at_best: f64,
    pub total_bwd_flops: u64,
    pub total_bwd_flops_exact_equiv: u64,
    /// Sums over the epochs that ran approximated.
    pub approx_bwd_flops: u64,
    pub approx_bwd_flops_exact_equiv: u64,
    pub wall_ms: f64,
    /// Operator slicings performed across the run.
    pub slicings: u64,
}

impl TrainReport {
    /// Paid-over-exact cost ratio during the approximated phase; NaN if that
    /// phase is empty.
    pub fn approx_flop_ratio(&self) -> f64 {
        self.approx_bwd_flops as f64 / self.approx_bwd_flops_exact_equiv as f64
    }

    /// Paid-over-exact cost ratio across the whole run.
    pub fn total_flop_ratio(&self) -> f64 {
        self.total_bwd_flops as f64 / self.total_bwd_flops_exact_equiv as f64
    }
}

fn elapsed_ms(t: Instant) -> f64 {
    t.elapsed().as_secs_f64() * 1e3
}

/// Full-batch training. Forward passes are always exact; backward sparse
/// products follow the policy. Deterministic for a fixed config and seed.
pub fn train(cfg: &TrainConfig, data: &GraphDataset) -> Result<TrainReport, EngineError> {
    cfg.validate()?;
    let wall = Instant::now();
    let dims = cfg.layer_dims(data.features.n_cols, data.n_classes);
    let mut init_rng = rng::stream(cfg.seed, Purpose::Init);
    let mut model = ModelState::new(cfg.model, &dims, &mut init_rng);

    let (forward_op, backward_op) = match cfg.model {
        ModelKind::Gcn => {
            let norm = normalize_adjacency(&data.adjacency)?;
            let back = sparse::csr_transpose(&norm);
            (norm, back)
        }
        ModelKind::Sage => (
            data.adjacency.clone(),
            mean_backward_operator(&data.adjacency),
        ),
    };
    let op_layers = model.op_layers();
    let op_widths = model.op_widths(&dims);
    let mut approximator = Approximator::new(
        backward_op,
        op_layers,
        op_widths,
        cfg.policy.mode != Mode::Exact,
    );
    let exact_equiv = approximator.exact_equiv_flops();

    let hp = AdamParams::with_lr(cfg.lr);
    let mut adam: Vec<AdamState> = model
        .params_mut()
        .iter()
        .map(|p| AdamState::new(p.n_rows, p.n_cols))
        .collect();

    let mut records = Vec::with_capacity(cfg.epochs);
    let mut auc_series = Vec::new();
    let policy = cfg.policy;
    for epoch in 0..cfg.epochs {
        let t_epoch = Instant::now();
        let acts = model.forward(&forward_op, &data.features);
        let logits = acts.logits();
        let (loss, out_grad) =
            dense::softmax_cross_entropy(logits, &data.labels, &data.train_mask)?;
        if !loss.is_finite() {
            return Err(EngineError::NonFiniteLoss { epoch, loss });
        }
        let train_acc = dense::masked_accuracy(logits, &data.labels, &data.train_mask);
        let val_acc = dense::masked_accuracy(logits, &data.labels, &data.val_mask);
        let test_acc = dense::masked_accuracy(logits, &data.labels, &data.test_mask);

        let approx_active = policy.mode != Mode::Exact
            && approximator.n_ops() > 0
            && switch_active(epoch, cfg.epochs, policy.switch_fraction);
        let mut alloc_ms = 0.0;
        if approx_active && approximator.needs_refresh(epoch, &policy) {
            let t = Instant::now();
            approximator.refresh(&policy)?;
            alloc_ms = elapsed_ms(t);
        }

        approximator.begin_epoch();
        let grads = model.backward(&acts, &out_grad, &mut |layer, g| {
            approximator.backward_spmm(layer, g, epoch, approx_active, &policy)
        });

        let mean_auc = if approx_active {
            let samples = approximator.sample_stability(epoch);
            let scored: Vec<f64> = samples.iter().filter_map(|s| s.auc).collect();
            auc_series.extend(samples);
            if scored.is_empty() {
                f64::NAN
            } else {
                scored.iter().sum::<f64>() / scored.len() as f64
            }
        } else {
            f64::NAN
        };

        let t_adam = epoch as u64 + 1;
        for ((param, grad), state) in model.params_mut().into_iter().zip(&grads).zip(&mut adam) {
            dense::adam_step(param, grad, state, &hp, t_adam);
        }

        records.push(EpochRecord {
            epoch,
            loss,
            train_acc,
            val_acc,
            test_acc,
            bwd_spmm_flops: approximator.epoch_flops_total(),
            bwd_spmm_flops_exact_equiv: exact_equiv,
            alloc_ms,
            elapsed_ms: elapsed_ms(t_epoch),
            approx_active,
            mean_auc_stability: mean_auc,
        });
    }

    let mut best = 0usize;
    for (i, r) in records.iter().enumerate() {
        if r.val_acc > records[best].val_acc {
            best = i;
        }
    }
    let approx_records = || records.iter().filter(|r| r.approx_active);
    Ok(TrainReport {
        best_val_epoch: records[best].epoch,
        best_val_acc: records[best].val_acc,
        test_acc_at_best: records[best].test_acc,
        total_bwd_flops: records.iter().map(|r| r.bwd_spmm_flops).sum(),
        total_bwd_flops_exact_equiv: records
            .iter()
            .map(|r| r.bwd_spmm_flops_exact_equiv)
            .sum(),
        approx_bwd_flops: approx_records().map(|r| r.bwd_spmm_flops).sum(),
        approx_bwd_flops_exact_equiv: approx_records()
            .map(|r| r.bwd_spmm_flops_exact_equiv)
            .sum(),
        wall_ms: elapsed_ms(wall),
        slicings: approximator.slicings(),
        records,
        auc_series,
    })
}
