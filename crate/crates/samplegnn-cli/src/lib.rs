//! Command implementations behind the `samplegnn` binary.
//!
//! Four subcommands: `train` runs the full-batch engine and emits a metrics
//! CSV plus a one-line summary, `bench-spmm` times exact against sliced
//! products on a random operator, `stability` trains with caching disabled and
//! emits the per-layer selection-overlap series, and `allocate` runs the
//! greedy budget split offline on a recorded profile CSV.
//!
//! Configuration precedence everywhere: command-line flags over JSON config
//! file over built-in defaults. Exit codes: 0 success, 2 usage or config
//! error, 3 runtime failure.

use std::fmt;
use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use rand::Rng;
use samplegnn::alloc::{self, AllocationPlan, LayerProfile};
use samplegnn::approx;
use samplegnn::data::{self, GraphDataset};
use samplegnn::dense::DenseMatrix;
use samplegnn::engine::{self, BackwardPolicy, Mode, ModelKind, TrainConfig, TrainReport};
use samplegnn::rng::{self, Purpose};
use samplegnn::sparse::{self, CsrMatrix};
use serde::Deserialize;

/// What went wrong, split by who has to fix it.
#[derive(Debug, thiserror::Error)]
pub enum CliError {
    /// Bad flags, config, or input files; maps to exit code 2.
    #[error("{0}")]
    Usage(String),
    /// Failure during an otherwise valid run; maps to exit code 3.
    #[error("{0}")]
    Runtime(String),
}

impl CliError {
    /// Process exit code for this error class.
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Runtime(_) => 3,
        }
    }
}

impl From<data::DataError> for CliError {
    fn from(e: data::DataError) -> Self {
        CliError::Usage(e.to_string())
    }
}

impl From<engine::EngineError> for CliError {
    fn from(e: engine::EngineError) -> Self {
        match e {
            engine::EngineError::BadConfig(_) | engine::EngineError::NonSquareAdjacency { .. } => {
                CliError::Usage(e.to_string())
            }
            other => CliError::Runtime(other.to_string()),
        }
    }
}

/// Top-level argument parser for the `samplegnn` binary.
#[derive(Debug, Parser)]
#[command(name = "samplegnn", version, about = "Budgeted backward-SpMM GNN training")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Train a model and emit per-epoch metrics CSV plus a summary line.
    Train(TrainArgs),
    /// Time exact against top-k sliced products on a random operator.
    BenchSpmm(BenchArgs),
    /// Emit the selection-overlap (AUC) series with caching disabled.
    Stability(TrainArgs),
    /// Run the greedy budget split offline on a recorded profile CSV.
    Allocate(AllocateArgs),
}

/// Dispatches a parsed command line; errors carry their exit code.
pub fn run(cli: &Cli) -> Result<(), CliError> {
    match &cli.command {
        Command::Train(args) => cmd_train(args).map(|_| ()),
        Command::BenchSpmm(args) => cmd_bench_spmm(args).map(|_| ()),
        Command::Stability(args) => cmd_stability(args).map(|_| ()),
        Command::Allocate(args) => cmd_allocate(args).map(|_| ()),
    }
}

/// Training flags; unset values fall back to the JSON config, then defaults.
#[derive(Debug, Clone, Default, Args)]
pub struct TrainArgs {
    /// Architecture: gcn or sage.
    #[arg(long)]
    pub model: Option<String>,
    /// Number of layers.
    #[arg(long)]
    pub layers: Option<usize>,
    /// Hidden width.
    #[arg(long)]
    pub hidden: Option<usize>,
    /// Training epochs.
    #[arg(long)]
    pub epochs: Option<usize>,
    /// Adam learning rate.
    #[arg(long)]
    pub lr: Option<f64>,
    /// Seed for every random stream in the run.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Backward policy: exact, rsc, or uniform.
    #[arg(long)]
    pub mode: Option<String>,
    /// Backward FLOP budget as a fraction of the exact cost.
    #[arg(long, visible_alias = "budget")]
    pub budget_c: Option<f64>,
    /// Allocation step quantum as a fraction of the node count.
    #[arg(long)]
    pub alpha: Option<f64>,
    /// Steps between allocation refreshes.
    #[arg(long)]
    pub alloc_interval: Option<usize>,
    /// Steps a sliced operator stays fresh.
    #[arg(long)]
    pub cache_interval: Option<usize>,
    /// Fraction of epochs run approximated before switching to exact.
    #[arg(long)]
    pub switch_fraction: Option<f64>,
    /// Edge list file; requires --features, --labels, and --masks.
    #[arg(long)]
    pub edge_list: Option<PathBuf>,
    /// Node feature CSV.
    #[arg(long)]
    pub features: Option<PathBuf>,
    /// Node label file.
    #[arg(long)]
    pub labels: Option<PathBuf>,
    /// Split file with one train/val/test/none token per node.
    #[arg(long)]
    pub masks: Option<PathBuf>,
    /// Generate a synthetic block-model graph with this many nodes.
    #[arg(long)]
    pub sbm_nodes: Option<usize>,
    /// Block count for the synthetic graph.
    #[arg(long)]
    pub sbm_classes: Option<usize>,
    /// Within-block edge probability.
    #[arg(long)]
    pub sbm_p_in: Option<f64>,
    /// Cross-block edge probability.
    #[arg(long)]
    pub sbm_p_out: Option<f64>,
    /// Feature dimension for the synthetic graph.
    #[arg(long)]
    pub sbm_feat_dim: Option<usize>,
    /// Feature noise level for the synthetic graph.
    #[arg(long)]
    pub sbm_noise: Option<f64>,
    /// JSON config file with the same keys as these flags, snake_case.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Write CSV here instead of stdout.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

/// Flat JSON config mirror of [`TrainArgs`]; unknown keys are rejected.
#[derive(Debug, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct FileConfig {
    model: Option<String>,
    layers: Option<usize>,
    hidden: Option<usize>,
    epochs: Option<usize>,
    lr: Option<f64>,
    seed: Option<u64>,
    mode: Option<String>,
    budget_c: Option<f64>,
    alpha: Option<f64>,
    alloc_interval: Option<usize>,
    cache_interval: Option<usize>,
    switch_fraction: Option<f64>,
    edge_list: Option<PathBuf>,
    features: Option<PathBuf>,
    labels: Option<PathBuf>,
    masks: Option<PathBuf>,
    sbm_nodes: Option<usize>,
    sbm_classes: Option<usize>,
    sbm_p_in: Option<f64>,
    sbm_p_out: Option<f64>,
    sbm_feat_dim: Option<usize>,
    sbm_noise: Option<f64>,
}

/// Where the graph comes from once flags and config are merged.
#[derive(Debug, Clone, PartialEq)]
pub enum DatasetSpec {
    Files {
        edge_list: PathBuf,
        features: PathBuf,
        labels: PathBuf,
        masks: PathBuf,
    },
    Sbm {
        nodes: usize,
        classes: usize,
        p_in: f64,
        p_out: f64,
        feat_dim: usize,
        noise: f64,
    },
}

fn parse_model(s: &str) -> Result<ModelKind, CliError> {
    s.parse().map_err(CliError::Usage)
}

fn parse_mode(s: &str) -> Result<Mode, CliError> {
    s.parse().map_err(CliError::Usage)
}

fn load_file_config(path: Option<&Path>) -> Result<FileConfig, CliError> {
    match path {
        None => Ok(FileConfig::default()),
        Some(p) => {
            let text = fs::read_to_string(p)
                .map_err(|e| CliError::Usage(format!("config {}: {e}", p.display())))?;
            serde_json::from_str(&text)
                .map_err(|e| CliError::Usage(format!("config {}: {e}", p.display())))
        }
    }
}

/// Merges flags over the JSON config over defaults into a full train config
/// and a dataset source.
pub fn resolve_train_config(args: &TrainArgs) -> Result<(TrainConfig, DatasetSpec), CliError> {
    let file = load_file_config(args.config.as_deref())?;
    let defaults = TrainConfig::default();

    let model = match args.model.as_deref().or(file.model.as_deref()) {
        Some(s) => parse_model(s)?,
        None => defaults.model,
    };
    let mode = match args.mode.as_deref().or(file.mode.as_deref()) {
        Some(s) => parse_mode(s)?,
        None => defaults.policy.mode,
    };
    let policy = BackwardPolicy {
        mode,
        budget_c: args
            .budget_c
            .or(file.budget_c)
            .unwrap_or(defaults.policy.budget_c),
        alpha: args.alpha.or(file.alpha).unwrap_or(defaults.policy.alpha),
        alloc_interval: args
            .alloc_interval
            .or(file.alloc_interval)
            .unwrap_or(defaults.policy.alloc_interval),
        cache_interval: args
            .cache_interval
            .or(file.cache_interval)
            .unwrap_or(defaults.policy.cache_interval),
        switch_fraction: args
            .switch_fraction
            .or(file.switch_fraction)
            .unwrap_or(defaults.policy.switch_fraction),
    };
    let cfg = TrainConfig {
        model,
        layers: args.layers.or(file.layers).unwrap_or(defaults.layers),
        hidden: args.hidden.or(file.hidden).unwrap_or(defaults.hidden),
        epochs: args.epochs.or(file.epochs).unwrap_or(defaults.epochs),
        lr: args.lr.or(file.lr).unwrap_or(defaults.lr),
        seed: args.seed.or(file.seed).unwrap_or(defaults.seed),
        policy,
    };

    let edge_list = args.edge_list.clone().or(file.edge_list);
    let sbm_nodes = args.sbm_nodes.or(file.sbm_nodes);
    let dataset = if let Some(edges) = edge_list {
        let need = |cli: &Option<PathBuf>, file: Option<PathBuf>, name: &str| {
            cli.clone()
                .or(file)
                .ok_or_else(|| CliError::Usage(format!("--edge-list requires --{name}")))
        };
        DatasetSpec::Files {
            edge_list: edges,
            features: need(&args.features, file.features, "features")?,
            labels: need(&args.labels, file.labels, "labels")?,
            masks: need(&args.masks, file.masks, "masks")?,
        }
    } else if let Some(nodes) = sbm_nodes {
        DatasetSpec::Sbm {
            nodes,
            classes: args.sbm_classes.or(file.sbm_classes).unwrap_or(4),
            p_in: args.sbm_p_in.or(file.sbm_p_in).unwrap_or(0.01),
            p_out: args.sbm_p_out.or(file.sbm_p_out).unwrap_or(0.001),
            feat_dim: args.sbm_feat_dim.or(file.sbm_feat_dim).unwrap_or(16),
            noise: args.sbm_noise.or(file.sbm_noise).unwrap_or(1.0),
        }
    } else {
        return Err(CliError::Usage(
            "no dataset: pass --edge-list with --features/--labels/--masks, or --sbm-nodes".into(),
        ));
    };
    Ok((cfg, dataset))
}

/// Loads or generates the graph named by a resolved dataset spec.
pub fn load_dataset(spec: &DatasetSpec, seed: u64) -> Result<GraphDataset, CliError> {
    match spec {
        DatasetSpec::Files {
            edge_list,
            features,
            labels,
            masks,
        } => {
            let adj = data::load_edge_list(edge_list)?;
            let feats = data::load_features_csv(features)?;
            let labs = data::load_labels(labels)?;
            let split = data::load_masks(masks)?;
            Ok(GraphDataset::assemble(adj, feats, labs, split)?)
        }
        DatasetSpec::Sbm {
            nodes,
            classes,
            p_in,
            p_out,
            feat_dim,
            noise,
        } => Ok(data::generate_sbm(
            *nodes, *classes, *p_in, *p_out, *feat_dim, *noise, seed,
        )?),
    }
}

/// One-line run digest printed after training.
#[derive(Debug, Clone)]
pub struct TrainSummary {
    pub test_acc_at_best: f64,
    pub best_val_epoch: usize,
    pub total_bwd_spmm_flops: u64,
    /// Paid-over-exact backward cost across the whole run.
    pub flop_ratio_total: f64,
    /// Paid-over-exact backward cost in the approximated phase; NaN if none.
    pub flop_ratio_approx_phase: f64,
    pub wall_ms: f64,
}

impl TrainSummary {
    fn of(report: &TrainReport) -> Self {
        TrainSummary {
            test_acc_at_best: report.test_acc_at_best,
            best_val_epoch: report.best_val_epoch,
            total_bwd_spmm_flops: report.total_bwd_flops,
            flop_ratio_total: report.total_flop_ratio(),
            flop_ratio_approx_phase: report.approx_flop_ratio(),
            wall_ms: report.wall_ms,
        }
    }
}

impl fmt::Display for TrainSummary {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "test_acc_at_best={} best_val_epoch={} total_bwd_spmm_flops={} \
             flop_ratio_total={:.6} flop_ratio_approx_phase={:.6} wall_ms={:.1}",
            self.test_acc_at_best,
            self.best_val_epoch,
            self.total_bwd_spmm_flops,
            self.flop_ratio_total,
            self.flop_ratio_approx_phase,
            self.wall_ms,
        )
    }
}

fn write_out(out: Option<&Path>, body: &str) -> Result<(), CliError> {
    match out {
        Some(p) => fs::write(p, body)
            .map_err(|e| CliError::Runtime(format!("write {}: {e}", p.display()))),
        None => {
            // Locked stdout keeps rows contiguous if anything else prints.
            let stdout = std::io::stdout();
            let mut h = stdout.lock();
            h.write_all(body.as_bytes())
                .map_err(|e| CliError::Runtime(format!("stdout: {e}")))
        }
    }
}

/// Trains per the merged config, writes the metrics CSV, prints the summary.
///
/// The summary goes to stderr when the CSV itself occupies stdout.
pub fn cmd_train(args: &TrainArgs) -> Result<TrainReport, CliError> {
    let (cfg, spec) = resolve_train_config(args)?;
    let dataset = load_dataset(&spec, cfg.seed)?;
    let report = engine::train(&cfg, &dataset)?;
    let csv = data::metrics_to_string(&report.records);
    write_out(args.out.as_deref(), &csv)?;
    let summary = TrainSummary::of(&report);
    if args.out.is_some() {
        println!("{summary}");
    } else {
        eprintln!("{summary}");
    }
    Ok(report)
}

/// Microbenchmark flags.
#[derive(Debug, Clone, Args)]
pub struct BenchArgs {
    /// Operator side length.
    #[arg(long, default_value_t = 512)]
    pub n: usize,
    /// Operator fill probability per entry.
    #[arg(long, default_value_t = 0.05)]
    pub density: f64,
    /// Dense operand width.
    #[arg(long, default_value_t = 64)]
    pub d: usize,
    /// Comma-separated kept-pair fractions.
    #[arg(long, default_value = "0.1,0.25,0.5,1.0", value_delimiter = ',')]
    pub k_fractions: Vec<f64>,
    /// Timing repetitions per row; floored at 20, preceded by 3 warmups.
    #[arg(long, default_value_t = 20)]
    pub trials: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Write CSV here instead of stdout.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

/// One output row of the microbenchmark.
#[derive(Debug, Clone)]
pub struct BenchRow {
    pub method: &'static str,
    pub k_fraction: f64,
    pub k: usize,
    pub median_ms: f64,
    pub flops: u64,
    pub rel_error: f64,
}

fn bench_header() -> &'static str {
    "method,k_fraction,k,median_ms,flops,rel_error"
}

fn median(samples: &mut [f64]) -> f64 {
    samples.sort_by(f64::total_cmp);
    let m = samples.len() / 2;
    if samples.len() % 2 == 1 {
        samples[m]
    } else {
        0.5 * (samples[m - 1] + samples[m])
    }
}

fn time_median(trials: usize, mut job: impl FnMut()) -> f64 {
    for _ in 0..3 {
        job();
    }
    let mut samples = Vec::with_capacity(trials);
    for _ in 0..trials {
        let t = Instant::now();
        job();
        samples.push(t.elapsed().as_secs_f64() * 1e3);
    }
    median(&mut samples)
}

fn random_csr(n: usize, density: f64, rng: &mut impl Rng) -> Result<CsrMatrix, CliError> {
    let mut triples = Vec::new();
    for i in 0..n {
        for j in 0..n {
            if rng.random::<f64>() < density {
                triples.push((i, j, rng.random::<f64>() * 2.0 - 1.0));
            }
        }
    }
    CsrMatrix::from_coo(n, n, &triples).map_err(|e| CliError::Runtime(e.to_string()))
}

fn random_dense(n_rows: usize, n_cols: usize, rng: &mut impl Rng) -> DenseMatrix {
    let data: Vec<f64> = (0..n_rows * n_cols)
        .map(|_| rng.random::<f64>() * 2.0 - 1.0)
        .collect();
    DenseMatrix::from_vec(n_rows, n_cols, data)
}

/// Times exact against sliced products at each kept fraction and reports
/// median wall time, analytic multiply-add cost, and relative error.
pub fn cmd_bench_spmm(args: &BenchArgs) -> Result<Vec<BenchRow>, CliError> {
    if args.n == 0 || args.d == 0 {
        return Err(CliError::Usage("--n and --d must be positive".into()));
    }
    if !(args.density > 0.0 && args.density <= 1.0) {
        return Err(CliError::Usage("--density must lie in (0, 1]".into()));
    }
    for &f in &args.k_fractions {
        if !(f > 0.0 && f <= 1.0) {
            return Err(CliError::Usage(format!("k fraction {f} outside (0, 1]")));
        }
    }
    let trials = args.trials.max(20);

    let mut graph_rng = rng::stream(args.seed, Purpose::Graph);
    let a = random_csr(args.n, args.density, &mut graph_rng)?;
    let mut feat_rng = rng::stream(args.seed, Purpose::Features);
    let b = random_dense(args.n, args.d, &mut feat_rng);

    let exact = sparse::spmm(&a, &b);
    let exact_flops = samplegnn::flops::spmm_cost(a.nnz(), args.d);
    let mut rows = vec![BenchRow {
        method: "exact",
        k_fraction: 1.0,
        k: args.n,
        median_ms: time_median(trials, || {
            std::hint::black_box(sparse::spmm(&a, &b));
        }),
        flops: exact_flops,
        rel_error: 0.0,
    }];

    let stats = approx::pair_stats(&a, &b);
    let exact_norm = samplegnn::dense::frobenius_norm(&exact);
    for &f in &args.k_fractions {
        let k = ((f * args.n as f64).round() as usize).clamp(1, args.n);
        let sel = approx::topk_indices(&stats, k).map_err(|e| CliError::Runtime(e.to_string()))?;
        let (sliced, _) = sparse::csr_select_columns(&a, &sel.indices)
            .map_err(|e| CliError::Runtime(e.to_string()))?;
        let approx_out = approx::approx_spmm_topk(&a, &b, &sel);
        let mut residual_sq = 0.0;
        for (x, y) in exact.data.iter().zip(&approx_out.data) {
            let diff = x - y;
            residual_sq += diff * diff;
        }
        let rel_error = if exact_norm > 0.0 {
            residual_sq.sqrt() / exact_norm
        } else {
            0.0
        };
        rows.push(BenchRow {
            method: "topk",
            k_fraction: f,
            k,
            median_ms: time_median(trials, || {
                std::hint::black_box(approx::approx_spmm_topk(&a, &b, &sel));
            }),
            flops: samplegnn::flops::spmm_cost(sliced.nnz(), args.d),
            rel_error,
        });
    }

    let mut csv = String::from(bench_header());
    csv.push('\n');
    for r in &rows {
        csv.push_str(&format!(
            "{},{},{},{:.4},{},{}\n",
            r.method, r.k_fraction, r.k, r.median_ms, r.flops, r.rel_error
        ));
    }
    write_out(args.out.as_deref(), &csv)?;
    Ok(rows)
}

fn stability_header() -> &'static str {
    "step,layer,auc,degenerate"
}

/// Trains with caching disabled and emits the selection-overlap series.
///
/// Rows where the kept set is empty or everything (overlap undefined) carry
/// `auc=nan` and `degenerate=true`.
pub fn cmd_stability(args: &TrainArgs) -> Result<TrainReport, CliError> {
    let (mut cfg, spec) = resolve_train_config(args)?;
    if cfg.policy.mode == Mode::Exact {
        return Err(CliError::Usage(
            "stability needs an approximating mode; pass --mode rsc or --mode uniform".into(),
        ));
    }
    // Fresh slice every step; overlap then reflects the selections themselves.
    cfg.policy.cache_interval = 1;
    let dataset = load_dataset(&spec, cfg.seed)?;
    let report = engine::train(&cfg, &dataset)?;

    let mut csv = String::from(stability_header());
    csv.push('\n');
    for s in &report.auc_series {
        match s.auc {
            Some(v) => csv.push_str(&format!("{},{},{v},false\n", s.step, s.layer)),
            None => csv.push_str(&format!("{},{},nan,true\n", s.step, s.layer)),
        }
    }
    write_out(args.out.as_deref(), &csv)?;
    Ok(report)
}

/// Offline allocation flags.
#[derive(Debug, Clone, Args)]
pub struct AllocateArgs {
    /// Profile CSV with header layer,pair_index,product,nnz,d.
    #[arg(long)]
    pub profile: PathBuf,
    /// FLOP budget as a fraction of the full cost.
    #[arg(long, visible_alias = "budget", default_value_t = 0.1)]
    pub budget_c: f64,
    /// Step quantum as a fraction of each layer's pair count.
    #[arg(long, default_value_t = 0.02)]
    pub alpha: f64,
    /// Write CSV here instead of stdout.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

const PROFILE_HEADER: &str = "layer,pair_index,product,nnz,d";

/// Parses a recorded profile CSV into allocator inputs.
///
/// Products are taken as already normalized, so the objective denominator is
/// one. Pair indices must be contiguous from zero within each layer and the
/// width must be constant per layer.
pub fn parse_profile_csv(text: &str) -> Result<Vec<LayerProfile>, CliError> {
    let mut lines = text
        .lines()
        .map(str::trim)
        .filter(|l| !l.is_empty() && !l.starts_with('#'));
    match lines.next() {
        Some(h) if h == PROFILE_HEADER => {}
        other => {
            return Err(CliError::Usage(format!(
                "profile header must be '{PROFILE_HEADER}', got {:?}",
                other.unwrap_or("")
            )))
        }
    }
    // layer -> (pair_index, product, nnz, d) rows, order-independent input.
    let mut rows: std::collections::BTreeMap<usize, Vec<(usize, f64, usize, usize)>> =
        std::collections::BTreeMap::new();
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') || line == PROFILE_HEADER {
            continue;
        }
        let fields: Vec<&str> = line.split(',').map(str::trim).collect();
        if fields.len() != 5 {
            return Err(CliError::Usage(format!(
                "profile line {}: expected 5 fields, got {}",
                lineno + 1,
                fields.len()
            )));
        }
        let bad = |what: &str| {
            CliError::Usage(format!("profile line {}: bad {what}", lineno + 1))
        };
        let layer: usize = fields[0].parse().map_err(|_| bad("layer"))?;
        let pair: usize = fields[1].parse().map_err(|_| bad("pair_index"))?;
        let product: f64 = fields[2].parse().map_err(|_| bad("product"))?;
        let nnz: usize = fields[3].parse().map_err(|_| bad("nnz"))?;
        let d: usize = fields[4].parse().map_err(|_| bad("d"))?;
        if !(product.is_finite() && product >= 0.0) {
            return Err(bad("product (must be finite and nonnegative)"));
        }
        if d == 0 {
            return Err(bad("d (must be positive)"));
        }
        rows.entry(layer).or_default().push((pair, product, nnz, d));
    }
    if rows.is_empty() {
        return Err(CliError::Usage("profile has no data rows".into()));
    }

    let mut profiles = Vec::with_capacity(rows.len());
    for (layer_id, mut layer_rows) in rows {
        layer_rows.sort_by_key(|r| r.0);
        let d = layer_rows[0].3;
        let mut products = Vec::with_capacity(layer_rows.len());
        let mut nnz_per_col = Vec::with_capacity(layer_rows.len());
        for (i, (pair, product, nnz, row_d)) in layer_rows.iter().enumerate() {
            if *pair != i {
                return Err(CliError::Usage(format!(
                    "layer {layer_id}: pair indices must be contiguous from 0, missing {i}"
                )));
            }
            if *row_d != d {
                return Err(CliError::Usage(format!(
                    "layer {layer_id}: inconsistent d ({row_d} vs {d})"
                )));
            }
            products.push(*product);
            nnz_per_col.push(*nnz);
        }
        profiles.push(LayerProfile {
            layer_id,
            products,
            nnz_per_col,
            d,
            frob_denominator: 1.0,
        });
    }
    Ok(profiles)
}

fn plan_csv(profiles: &[LayerProfile], plan: &AllocationPlan) -> String {
    let mut csv = String::new();
    if !plan.feasible {
        // Floors alone exceed the budget; the plan below is the closest fit.
        csv.push_str("# infeasible\n");
    }
    csv.push_str("layer_id,k_l,captured_mass,flops\n");
    for (p, sel) in profiles.iter().zip(&plan.selections) {
        let mass: f64 = sel.indices.iter().map(|&i| p.products[i]).sum();
        let flops: u64 = sel
            .indices
            .iter()
            .map(|&i| p.nnz_per_col[i] as u64 * p.d as u64)
            .sum();
        csv.push_str(&format!("{},{},{mass},{flops}\n", p.layer_id, sel.k()));
    }
    csv.push_str(&format!(
        "# achieved_flops={} budget_flops={}\n",
        plan.achieved_flops, plan.budget_flops
    ));
    csv
}

/// Runs the greedy split on a recorded profile and emits the per-layer plan.
pub fn cmd_allocate(args: &AllocateArgs) -> Result<AllocationPlan, CliError> {
    let text = fs::read_to_string(&args.profile)
        .map_err(|e| CliError::Usage(format!("profile {}: {e}", args.profile.display())))?;
    let profiles = parse_profile_csv(&text)?;
    if !(args.budget_c > 0.0 && args.budget_c <= 1.0) {
        return Err(CliError::Usage("--budget-c must lie in (0, 1]".into()));
    }
    if !(args.alpha > 0.0 && args.alpha <= 1.0) {
        return Err(CliError::Usage("--alpha must lie in (0, 1]".into()));
    }
    // Allocator rejections here can only come from the profile's shape.
    let plan = alloc::greedy_allocate(&profiles, args.budget_c, args.alpha)
        .map_err(|e| CliError::Usage(e.to_string()))?;
    write_out(args.out.as_deref(), &plan_csv(&profiles, &plan))?;
    Ok(plan)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sbm_args(nodes: usize, epochs: usize) -> TrainArgs {
        TrainArgs {
            sbm_nodes: Some(nodes),
            sbm_classes: Some(2),
            sbm_p_in: Some(0.2),
            sbm_p_out: Some(0.01),
            sbm_feat_dim: Some(4),
            epochs: Some(epochs),
            hidden: Some(8),
            ..TrainArgs::default()
        }
    }

    #[test]
    fn flags_override_config_file_which_overrides_defaults() {
        let dir = tempfile::tempdir().unwrap();
        let cfg_path = dir.path().join("run.json");
        fs::write(
            &cfg_path,
            r#"{"epochs": 7, "lr": 0.5, "mode": "uniform", "sbm_nodes": 30}"#,
        )
        .unwrap();
        let args = TrainArgs {
            epochs: Some(9),
            config: Some(cfg_path),
            ..TrainArgs::default()
        };
        let (cfg, spec) = resolve_train_config(&args).unwrap();
        // Flag beats file, file beats default, untouched fields stay default.
        assert_eq!(cfg.epochs, 9);
        assert_eq!(cfg.lr, 0.5);
        assert_eq!(cfg.policy.mode, Mode::Uniform);
        assert_eq!(cfg.hidden, TrainConfig::default().hidden);
        match spec {
            DatasetSpec::Sbm { nodes, classes, .. } => {
                assert_eq!(nodes, 30);
                assert_eq!(classes, 4);
            }
            other => panic!("expected sbm spec, got {other:?}"),
        }
    }

    #[test]
    fn unknown_config_key_is_a_usage_error() {
        let dir = tempfile::tempdir().unwrap();
        let cfg_path = dir.path().join("run.json");
        fs::write(&cfg_path, r#"{"epochz": 7}"#).unwrap();
        let args = TrainArgs {
            config: Some(cfg_path),
            ..TrainArgs::default()
        };
        let err = resolve_train_config(&args).unwrap_err();
        assert_eq!(err.exit_code(), 2);
    }

    #[test]
    fn missing_dataset_is_a_usage_error() {
        let err = resolve_train_config(&TrainArgs::default()).unwrap_err();
        assert_eq!(err.exit_code(), 2);
        assert!(err.to_string().contains("no dataset"));
    }

    #[test]
    fn edge_list_without_companions_is_a_usage_error() {
        let args = TrainArgs {
            edge_list: Some(PathBuf::from("g.txt")),
            features: Some(PathBuf::from("x.csv")),
            labels: Some(PathBuf::from("y.txt")),
            ..TrainArgs::default()
        };
        let err = resolve_train_config(&args).unwrap_err();
        assert_eq!(err.exit_code(), 2);
        assert!(err.to_string().contains("--masks"));
    }

    #[test]
    fn train_writes_csv_and_returns_the_report() {
        let dir = tempfile::tempdir().unwrap();
        let out = dir.path().join("metrics.csv");
        let mut args = sbm_args(40, 5);
        args.out = Some(out.clone());
        let report = cmd_train(&args).unwrap();
        assert_eq!(report.records.len(), 5);
        let body = fs::read_to_string(&out).unwrap();
        assert!(body.starts_with(data::METRICS_HEADER));
        assert_eq!(body.lines().count(), 6);
    }

    #[test]
    fn bench_flops_never_decrease_in_the_kept_fraction() {
        let dir = tempfile::tempdir().unwrap();
        let args = BenchArgs {
            n: 48,
            density: 0.2,
            d: 8,
            k_fractions: vec![0.1, 0.3, 0.6, 1.0],
            trials: 20,
            seed: 5,
            out: Some(dir.path().join("bench.csv")),
        };
        let rows = cmd_bench_spmm(&args).unwrap();
        assert_eq!(rows[0].method, "exact");
        let topk: Vec<&BenchRow> = rows.iter().filter(|r| r.method == "topk").collect();
        // Larger k keeps a superset of pairs, so cost is monotone.
        for pair in topk.windows(2) {
            assert!(pair[0].flops <= pair[1].flops);
        }
        // Full selection is the exact product again.
        let full = topk.last().unwrap();
        assert_eq!(full.flops, rows[0].flops);
        assert_eq!(full.rel_error, 0.0);
    }

    #[test]
    fn bench_rejects_bad_fractions() {
        let args = BenchArgs {
            n: 8,
            density: 0.5,
            d: 2,
            k_fractions: vec![0.0],
            trials: 20,
            seed: 0,
            out: None,
        };
        assert_eq!(cmd_bench_spmm(&args).unwrap_err().exit_code(), 2);
    }

    #[test]
    fn stability_emits_flagged_rows_for_degenerate_selections() {
        let dir = tempfile::tempdir().unwrap();
        let out = dir.path().join("auc.csv");
        let mut args = sbm_args(40, 12);
        args.mode = Some("rsc".into());
        // Full budget keeps every selection at k = n, all rows degenerate.
        args.budget_c = Some(1.0);
        args.switch_fraction = Some(1.0);
        args.out = Some(out.clone());
        cmd_stability(&args).unwrap();
        let body = fs::read_to_string(&out).unwrap();
        let mut lines = body.lines();
        assert_eq!(lines.next(), Some(stability_header()));
        let rows: Vec<&str> = lines.collect();
        assert!(!rows.is_empty());
        assert!(rows.iter().all(|r| r.ends_with("nan,true")));
    }

    #[test]
    fn stability_requires_an_approximating_mode() {
        let mut args = sbm_args(40, 5);
        args.mode = Some("exact".into());
        assert_eq!(cmd_stability(&args).unwrap_err().exit_code(), 2);
    }

    #[test]
    fn allocate_matches_the_direct_greedy_call() {
        let dir = tempfile::tempdir().unwrap();
        let profile = dir.path().join("profile.csv");
        // Two layers, four pairs each, distinct products and costs.
        let mut text = String::from("layer,pair_index,product,nnz,d\n");
        let prods = [[9.0, 4.0, 2.0, 1.0], [8.0, 6.0, 1.0, 0.5]];
        let nnzs = [[3, 2, 2, 1], [2, 2, 1, 1]];
        for l in 0..2 {
            for p in 0..4 {
                let d = if l == 0 { 4 } else { 2 };
                text.push_str(&format!("{l},{p},{},{},{d}\n", prods[l][p], nnzs[l][p]));
            }
        }
        fs::write(&profile, &text).unwrap();
        let args = AllocateArgs {
            profile,
            budget_c: 0.5,
            alpha: 0.25,
            out: Some(dir.path().join("plan.csv")),
        };
        let plan = cmd_allocate(&args).unwrap();

        let profiles: Vec<LayerProfile> = (0..2)
            .map(|l| LayerProfile {
                layer_id: l,
                products: prods[l].to_vec(),
                nnz_per_col: nnzs[l].to_vec(),
                d: if l == 0 { 4 } else { 2 },
                frob_denominator: 1.0,
            })
            .collect();
        let direct = alloc::greedy_allocate(&profiles, 0.5, 0.25).unwrap();
        assert_eq!(plan.k_per_layer, direct.k_per_layer);
        assert_eq!(plan.achieved_flops, direct.achieved_flops);
        assert!(plan.achieved_flops <= plan.budget_flops);
    }

    #[test]
    fn allocate_keeps_everything_at_full_budget() {
        let dir = tempfile::tempdir().unwrap();
        let profile = dir.path().join("profile.csv");
        fs::write(
            &profile,
            "layer,pair_index,product,nnz,d\n0,0,3,2,2\n0,1,1,1,2\n1,0,5,2,3\n1,1,2,2,3\n",
        )
        .unwrap();
        let args = AllocateArgs {
            profile,
            budget_c: 1.0,
            alpha: 0.5,
            out: Some(dir.path().join("plan.csv")),
        };
        let plan = cmd_allocate(&args).unwrap();
        assert_eq!(plan.k_per_layer, vec![2, 2]);
    }

    #[test]
    fn allocate_flags_an_infeasible_floor() {
        let dir = tempfile::tempdir().unwrap();
        let profile = dir.path().join("profile.csv");
        // One pair per layer with heavy columns: floors already overflow
        // a 1% budget.
        fs::write(
            &profile,
            "layer,pair_index,product,nnz,d\n0,0,3,50,4\n1,0,5,50,4\n",
        )
        .unwrap();
        let out = dir.path().join("plan.csv");
        let args = AllocateArgs {
            profile,
            budget_c: 0.01,
            alpha: 1.0,
            out: Some(out.clone()),
        };
        let plan = cmd_allocate(&args).unwrap();
        assert!(!plan.feasible);
        let body = fs::read_to_string(&out).unwrap();
        assert!(body.starts_with("# infeasible"));
    }

    #[test]
    fn allocate_rejects_a_wrong_header_and_gappy_pairs() {
        let dir = tempfile::tempdir().unwrap();
        let bad_header = dir.path().join("bad1.csv");
        fs::write(&bad_header, "layer,product,nnz,d\n").unwrap();
        let args = AllocateArgs {
            profile: bad_header,
            budget_c: 0.5,
            alpha: 0.5,
            out: None,
        };
        assert_eq!(cmd_allocate(&args).unwrap_err().exit_code(), 2);

        let gappy = dir.path().join("bad2.csv");
        fs::write(&gappy, "layer,pair_index,product,nnz,d\n0,0,1,1,2\n0,2,1,1,2\n").unwrap();
        let args = AllocateArgs {
            profile: gappy,
            budget_c: 0.5,
            alpha: 0.5,
            out: None,
        };
        let err = cmd_allocate(&args).unwrap_err();
        assert!(err.to_string().contains("contiguous"));
    }

    #[test]
    fn profile_parser_accepts_comments_and_blank_lines() {
        let text = "# recorded at step 12\nlayer,pair_index,product,nnz,d\n\n0,0,2,1,2\n0,1,1,1,2\n";
        let profiles = parse_profile_csv(text).unwrap();
        assert_eq!(profiles.len(), 1);
        assert_eq!(profiles[0].products, vec![2.0, 1.0]);
        assert_eq!(profiles[0].frob_denominator, 1.0);
    }

    #[test]
    fn cli_parses_the_documented_flags() {
        use clap::Parser as _;
        let cli = Cli::try_parse_from([
            "samplegnn",
            "train",
            "--sbm-nodes",
            "100",
            "--mode",
            "rsc",
            "--budget",
            "0.2",
            "--epochs",
            "3",
        ])
        .unwrap();
        match cli.command {
            Command::Train(args) => {
                assert_eq!(args.sbm_nodes, Some(100));
                assert_eq!(args.mode.as_deref(), Some("rsc"));
                assert_eq!(args.budget_c, Some(0.2));
            }
            other => panic!("expected train, got {other:?}"),
        }
    }
}
