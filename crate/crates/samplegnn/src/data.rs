//! Dataset container, text-format loaders and writers, a stochastic block
//! model generator for synthetic fixtures, and metrics serialization.

use std::fmt::Write as _;
use std::path::Path;

use rand::Rng;
use rand_distr::StandardNormal;
use thiserror::Error;

use crate::dense::DenseMatrix;
use crate::engine::EpochRecord;
use crate::rng::{self, Purpose};
use crate::sparse::{CsrMatrix, SparseError};

#[derive(Debug, Error)]
pub enum DataError {
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("invalid dataset: {0}")]
    Invalid(String),
    #[error(transparent)]
    Sparse(#[from] SparseError),
}

/// A node-classification problem: raw symmetric adjacency, features, integer
/// labels, and disjoint train/val/test masks.
#[derive(Debug, Clone)]
pub struct GraphDataset {
    pub adjacency: CsrMatrix,
    pub features: DenseMatrix,
    pub labels: Vec<usize>,
    pub n_classes: usize,
    pub train_mask: Vec<bool>,
    pub val_mask: Vec<bool>,
    pub test_mask: Vec<bool>,
}

impl GraphDataset {
    /// Validates shapes, mask disjointness, and label coverage.
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        adjacency: CsrMatrix,
        features: DenseMatrix,
        labels: Vec<usize>,
        n_classes: usize,
        train_mask: Vec<bool>,
        val_mask: Vec<bool>,
        test_mask: Vec<bool>,
    ) -> Result<Self, DataError> {
        if adjacency.n_rows != adjacency.n_cols {
            return Err(DataError::Invalid(format!(
                "adjacency must be square, got {}x{}",
                adjacency.n_rows, adjacency.n_cols
            )));
        }
        let n = adjacency.n_rows;
        if n == 0 {
            return Err(DataError::Invalid("graph has no nodes".into()));
        }
        if features.n_rows != n {
            return Err(DataError::Invalid(format!(
                "feature rows ({}) != node count ({n})",
                features.n_rows
            )));
        }
        for (name, len) in [
            ("labels", labels.len()),
            ("train mask", train_mask.len()),
            ("val mask", val_mask.len()),
            ("test mask", test_mask.len()),
        ] {
            if len != n {
                return Err(DataError::Invalid(format!(
                    "{name} length ({len}) != node count ({n})"
                )));
            }
        }
        if n_classes < 2 {
            return Err(DataError::Invalid("need at least two classes".into()));
        }
        if let Some(&bad) = labels.iter().find(|&&l| l >= n_classes) {
            return Err(DataError::Invalid(format!(
                "label {bad} outside 0..{n_classes}"
            )));
        }
        for v in 0..n {
            if (train_mask[v] as u8) + (val_mask[v] as u8) + (test_mask[v] as u8) > 1 {
                return Err(DataError::Invalid(format!("node {v} is in two splits")));
            }
        }
        for (name, mask) in [
            ("train", &train_mask),
            ("val", &val_mask),
            ("test", &test_mask),
        ] {
            if !mask.iter().any(|&m| m) {
                return Err(DataError::Invalid(format!("{name} split is empty")));
            }
        }
        let mut seen = vec![false; n_classes];
        for v in 0..n {
            if train_mask[v] {
                seen[labels[v]] = true;
            }
        }
        if let Some(missing) = seen.iter().position(|&s| !s) {
            return Err(DataError::Invalid(format!(
                "class {missing} has no training node"
            )));
        }
        Ok(GraphDataset {
            adjacency,
            features,
            labels,
            n_classes,
            train_mask,
            val_mask,
            test_mask,
        })
    }

    /// Assembles loaded parts, inferring the class count from the labels.
    pub fn assemble(
        adjacency: CsrMatrix,
        features: DenseMatrix,
        labels: Vec<usize>,
        masks: (Vec<bool>, Vec<bool>, Vec<bool>),
    ) -> Result<Self, DataError> {
        let n_classes = labels.iter().max().map_or(0, |&m| m + 1);
        GraphDataset::new(
            adjacency, features, labels, n_classes, masks.0, masks.1, masks.2,
        )
    }

    pub fn n_nodes(&self) -> usize {
        self.adjacency.n_rows
    }
}

/// Reads an undirected edge list: one "src dst" pair per line, '#' starts a
/// comment, and an optional "# nodes N" header fixes the node count (else it
/// is one past the largest index). Output is symmetric and binary with
/// self-loops dropped and duplicates collapsed.
pub fn load_edge_list(path: &Path) -> Result<CsrMatrix, DataError> {
    let text = std::fs::read_to_string(path)?;
    let mut declared: Option<usize> = None;
    let mut edges: Vec<(usize, usize)> = Vec::new();
    let mut max_idx = 0usize;
    let mut any = false;
    for (i, raw) in text.lines().enumerate() {
        let line_no = i + 1;
        let line = raw.trim();
        if let Some(rest) = line.strip_prefix('#') {
            let mut it = rest.split_whitespace();
            if it.next() == Some("nodes") {
                let n = it.next().and_then(|t| t.parse::<usize>().ok()).ok_or(
                    DataError::Parse {
                        line: line_no,
                        message: "expected '# nodes N'".into(),
                    },
                )?;
                declared = Some(n);
            }
            continue;
        }
        if line.is_empty() {
            continue;
        }
        let mut it = line.split_whitespace();
        let next_idx = |it: &mut std::str::SplitWhitespace| -> Result<usize, DataError> {
            let tok = it.next().ok_or(DataError::Parse {
                line: line_no,
                message: "expected two node indices".into(),
            })?;
            tok.parse::<usize>().map_err(|_| DataError::Parse {
                line: line_no,
                message: format!("bad node index '{tok}'"),
            })
        };
        let u = next_idx(&mut it)?;
        let v = next_idx(&mut it)?;
        if it.next().is_some() {
            return Err(DataError::Parse {
                line: line_no,
                message: "trailing tokens after edge".into(),
            });
        }
        max_idx = max_idx.max(u).max(v);
        any = true;
        if u == v {
            continue; // dropped, but the index still counts toward the size
        }
        edges.push((u.min(v), u.max(v)));
    }
    let n = match declared {
        Some(n) => n,
        None if any => max_idx + 1,
        None => 0,
    };
    edges.sort_unstable();
    edges.dedup();
    let mut triples = Vec::with_capacity(edges.len() * 2);
    for &(u, v) in &edges {
        if u >= n || v >= n {
            return Err(DataError::Invalid(format!(
                "edge ({u}, {v}) outside declared node count {n}"
            )));
        }
        triples.push((u, v, 1.0));
        triples.push((v, u, 1.0));
    }
    Ok(CsrMatrix::from_coo(n, n, &triples)?)
}

/// Writes the upper triangle of a symmetric adjacency as an edge list with a
/// node-count header, so isolated trailing nodes survive a round trip.
pub fn write_edge_list(a: &CsrMatrix, path: &Path) -> Result<(), DataError> {
    let mut out = String::new();
    writeln!(out, "# nodes {}", a.n_rows).expect("string write");
    for r in 0..a.n_rows {
        let (cols, _) = a.row(r);
        for &c in cols {
            if r < c {
                writeln!(out, "{r} {c}").expect("string write");
            }
        }
    }
    std::fs::write(path, out)?;
    Ok(())
}

/// Reads a CSV of reals, one node per row; all rows must have equal width.
pub fn load_features_csv(path: &Path) -> Result<DenseMatrix, DataError> {
    let text = std::fs::read_to_string(path)?;
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() {
            continue;
        }
        let mut row = Vec::new();
        for cell in line.split(',') {
            let cell = cell.trim();
            row.push(cell.parse::<f64>().map_err(|_| DataError::Parse {
                line: i + 1,
                message: format!("bad feature value '{cell}'"),
            })?);
        }
        if let Some(first) = rows.first() {
            if row.len() != first.len() {
                return Err(DataError::Parse {
                    line: i + 1,
                    message: format!("expected {} columns, got {}", first.len(), row.len()),
                });
            }
        }
        rows.push(row);
    }
    if rows.is_empty() {
        return Err(DataError::Invalid("feature file has no rows".into()));
    }
    Ok(DenseMatrix::from_rows(&rows))
}

/// Reads one integer label per line.
pub fn load_labels(path: &Path) -> Result<Vec<usize>, DataError> {
    let text = std::fs::read_to_string(path)?;
    let mut labels = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() {
            continue;
        }
        labels.push(line.parse::<usize>().map_err(|_| DataError::Parse {
            line: i + 1,
            message: format!("bad label '{line}'"),
        })?);
    }
    Ok(labels)
}

/// Per-node train, validation, and test membership flags, in that order.
pub type SplitMasks = (Vec<bool>, Vec<bool>, Vec<bool>);

/// Reads one of train/val/test/none per line into three boolean masks.
pub fn load_masks(path: &Path) -> Result<SplitMasks, DataError> {
    let text = std::fs::read_to_string(path)?;
    let (mut train, mut val, mut test) = (Vec::new(), Vec::new(), Vec::new());
    for (i, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() {
            continue;
        }
        let (t, v, s) = match line {
            "train" => (true, false, false),
            "val" => (false, true, false),
            "test" => (false, false, true),
            "none" => (false, false, false),
            other => {
                return Err(DataError::Parse {
                    line: i + 1,
                    message: format!("bad mask token '{other}'"),
                })
            }
        };
        train.push(t);
        val.push(v);
        test.push(s);
    }
    Ok((train, val, test))
}

/// Per-class block assignment: node `v` belongs to class `v * k / n`, giving
/// contiguous, nearly equal blocks.
fn sbm_class(v: usize, n: usize, k: usize) -> usize {
    v * k / n
}

/// Stochastic block model fixture. Nodes split into contiguous classes;
/// within-class pairs connect with `p_in`, cross-class with `p_out`. Features
/// are the one-hot class mean plus `noise` times standard Gaussian draws.
/// Masks are a stratified 60/20/20 split. Bit-identical for a fixed seed.
pub fn generate_sbm(
    n_nodes: usize,
    n_classes: usize,
    p_in: f64,
    p_out: f64,
    feat_dim: usize,
    noise: f64,
    seed: u64,
) -> Result<GraphDataset, DataError> {
    if n_classes < 2 {
        return Err(DataError::Invalid("need at least two classes".into()));
    }
    if n_nodes < 3 * n_classes {
        return Err(DataError::Invalid(format!(
            "need at least {} nodes for {} classes",
            3 * n_classes,
            n_classes
        )));
    }
    if feat_dim < n_classes {
        return Err(DataError::Invalid(format!(
            "feat_dim ({feat_dim}) must cover the {n_classes} class means"
        )));
    }
    if !(0.0..=1.0).contains(&p_out) || !(0.0..=1.0).contains(&p_in) || p_out >= p_in {
        return Err(DataError::Invalid(format!(
            "need 0 <= p_out < p_in <= 1, got p_in={p_in} p_out={p_out}"
        )));
    }
    let labels: Vec<usize> = (0..n_nodes).map(|v| sbm_class(v, n_nodes, n_classes)).collect();

    let mut graph_rng = rng::stream(seed, Purpose::Graph);
    let mut triples = Vec::new();
    for i in 0..n_nodes {
        for j in (i + 1)..n_nodes {
            let p = if labels[i] == labels[j] { p_in } else { p_out };
            // One draw per pair keeps the stream layout independent of p.
            if graph_rng.random::<f64>() < p {
                triples.push((i, j, 1.0));
                triples.push((j, i, 1.0));
            }
        }
    }
    let adjacency = CsrMatrix::from_coo(n_nodes, n_nodes, &triples)?;

    let mut feat_rng = rng::stream(seed, Purpose::Features);
    let mut features = DenseMatrix::zeros(n_nodes, feat_dim);
    for (v, &label) in labels.iter().enumerate() {
        let row = features.row_mut(v);
        for (d, slot) in row.iter_mut().enumerate() {
            let mean = if d == label { 1.0 } else { 0.0 };
            let z: f64 = feat_rng.sample(StandardNormal);
            *slot = mean + noise * z;
        }
    }

    let mut mask_rng = rng::stream(seed, Purpose::Masks);
    let mut train_mask = vec![false; n_nodes];
    let mut val_mask = vec![false; n_nodes];
    let mut test_mask = vec![false; n_nodes];
    for class in 0..n_classes {
        let mut members: Vec<usize> = (0..n_nodes).filter(|&v| labels[v] == class).collect();
        // Fisher-Yates, spelled out so the draw sequence is pinned.
        for i in (1..members.len()).rev() {
            let j = mask_rng.random_range(0..=i);
            members.swap(i, j);
        }
        let m = members.len();
        let n_train = ((0.6 * m as f64).floor() as usize).max(1);
        let n_val = ((0.2 * m as f64).floor() as usize).max(1);
        if n_train + n_val >= m {
            return Err(DataError::Invalid(format!(
                "class {class} too small to split three ways"
            )));
        }
        for (rank, &v) in members.iter().enumerate() {
            if rank < n_train {
                train_mask[v] = true;
            } else if rank < n_train + n_val {
                val_mask[v] = true;
            } else {
                test_mask[v] = true;
            }
        }
    }

    GraphDataset::new(
        adjacency, features, labels, n_classes, train_mask, val_mask, test_mask,
    )
}

/// Column order of the metrics CSV; timing columns are the only
/// run-dependent ones.
pub const METRICS_HEADER: &str = "epoch,loss,train_acc,val_acc,test_acc,bwd_spmm_flops,bwd_spmm_flops_exact_equiv,alloc_ms,elapsed_ms,approx_active,mean_auc_stability";

/// Serializes the training history; floats use shortest round-trip form.
pub fn write_metrics_csv(history: &[EpochRecord], path: &Path) -> Result<(), DataError> {
    std::fs::write(path, metrics_to_string(history))?;
    Ok(())
}

/// The CSV text itself; also used to stream to stdout.
pub fn metrics_to_string(history: &[EpochRecord]) -> String {
    let mut out = String::with_capacity(64 * (history.len() + 1));
    out.push_str(METRICS_HEADER);
    out.push('\n');
    for r in history {
        writeln!(
            out,
            "{},{},{},{},{},{},{},{},{},{},{}",
            r.epoch,
            r.loss,
            r.train_acc,
            r.val_acc,
            r.test_acc,
            r.bwd_spmm_flops,
            r.bwd_spmm_flops_exact_equiv,
            r.alloc_ms,
            r.elapsed_ms,
            r.approx_active,
            r.mean_auc_stability
        )
        .expect("string write");
    }
    out
}

/// Parses a metrics CSV back into records, verifying the header.
pub fn read_metrics_csv(path: &Path) -> Result<Vec<EpochRecord>, DataError> {
    let text = std::fs::read_to_string(path)?;
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, h)) if h == METRICS_HEADER => {}
        _ => {
            return Err(DataError::Parse {
                line: 1,
                message: "bad or missing metrics header".into(),
            })
        }
    }
    let mut records = Vec::new();
    for (i, line) in lines {
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 11 {
            return Err(DataError::Parse {
                line: i + 1,
                message: format!("expected 11 fields, got {}", fields.len()),
            });
        }
        let parse_err = |what: &str| DataError::Parse {
            line: i + 1,
            message: format!("bad {what}"),
        };
        records.push(EpochRecord {
            epoch: fields[0].parse().map_err(|_| parse_err("epoch"))?,
            loss: fields[1].parse().map_err(|_| parse_err("loss"))?,
            train_acc: fields[2].parse().map_err(|_| parse_err("train_acc"))?,
            val_acc: fields[3].parse().map_err(|_| parse_err("val_acc"))?,
            test_acc: fields[4].parse().map_err(|_| parse_err("test_acc"))?,
            bwd_spmm_flops: fields[5].parse().map_err(|_| parse_err("flops"))?,
            bwd_spmm_flops_exact_equiv: fields[6]
                .parse()
                .map_err(|_| parse_err("exact flops"))?,
            alloc_ms: fields[7].parse().map_err(|_| parse_err("alloc_ms"))?,
            elapsed_ms: fields[8].parse().map_err(|_| parse_err("elapsed_ms"))?,
            approx_active: fields[9].parse().map_err(|_| parse_err("approx_active"))?,
            mean_auc_stability: fields[10]
                .parse()
                .map_err(|_| parse_err("mean_auc_stability"))?,
        });
    }
    Ok(records)
}

#[cfg(test)]
mod tests {
    use super::*;
    use tempfile::tempdir;

    fn write_tmp(dir: &tempfile::TempDir, name: &str, content: &str) -> std::path::PathBuf {
        let p = dir.path().join(name);
        std::fs::write(&p, content).unwrap();
        p
    }

    #[test]
    fn edge_list_single_edge_is_symmetric() {
        let dir = tempdir().unwrap();
        let p = write_tmp(&dir, "e.txt", "0 1\n");
        let a = load_edge_list(&p).unwrap();
        assert_eq!((a.n_rows, a.n_cols, a.nnz()), (2, 2, 2));
        assert_eq!(a.to_dense().data, vec![0.0, 1.0, 1.0, 0.0]);
    }

    #[test]
    fn edge_list_duplicates_collapse() {
        let dir = tempdir().unwrap();
        let p = write_tmp(&dir, "e.txt", "0 1\n1 0\n0 1\n");
        let a = load_edge_list(&p).unwrap();
        assert_eq!(a.nnz(), 2);
    }

    #[test]
    fn edge_list_three_edges_four_nodes() {
        let dir = tempdir().unwrap();
        let p = write_tmp(&dir, "e.txt", "0 1\n1 2\n2 3\n");
        let a = load_edge_list(&p).unwrap();
        assert_eq!((a.n_rows, a.nnz()), (4, 6));
    }

    #[test]
    fn edge_list_header_keeps_isolated_tail() {
        let dir = tempdir().unwrap();
        let p = write_tmp(&dir, "e.txt", "# nodes 5\n# a comment\n\n0 1\n");
        let a = load_edge_list(&p).unwrap();
        assert_eq!(a.n_rows, 5);
        assert_eq!(a.row(4).0.len(), 0);
    }

    #[test]
    fn edge_list_drops_self_loops() {
        let dir = tempdir().unwrap();
        let p = write_tmp(&dir, "e.txt", "0 1\n2 2\n");
        let a = load_edge_list(&p).unwrap();
        assert_eq!(a.n_rows, 3);
        assert_eq!(a.nnz(), 2);
    }

    #[test]
    fn edge_list_rejects_malformed_lines() {
        let dir = tempdir().unwrap();
        for (content, want_line) in [("0 x\n", 1), ("0 1\n-1 2\n", 2), ("0\n", 1), ("0 1 2\n", 1)]
        {
            let p = write_tmp(&dir, "bad.txt", content);
            match load_edge_list(&p) {
                Err(DataError::Parse { line, .. }) => assert_eq!(line, want_line),
                other => panic!("expected parse error for {content:?}, got {other:?}"),
            }
        }
    }

    #[test]
    fn edge_list_round_trip_is_identity() {
        let dir = tempdir().unwrap();
        let p = write_tmp(&dir, "e.txt", "# nodes 6\n0 1\n0 2\n3 4\n");
        let a = load_edge_list(&p).unwrap();
        let q = dir.path().join("copy.txt");
        write_edge_list(&a, &q).unwrap();
        let b = load_edge_list(&q).unwrap();
        assert_eq!(a.rowptr, b.rowptr);
        assert_eq!(a.col, b.col);
        assert_eq!(a.val, b.val);
    }

    #[test]
    fn features_csv_parses_reals() {
        let dir = tempdir().unwrap();
        let p = write_tmp(&dir, "x.csv", "1.0, 2.5\n-3,4e-2\n");
        let x = load_features_csv(&p).unwrap();
        assert_eq!((x.n_rows, x.n_cols), (2, 2));
        assert_eq!(x.data, vec![1.0, 2.5, -3.0, 0.04]);
        let ragged = write_tmp(&dir, "r.csv", "1,2\n3\n");
        assert!(matches!(
            load_features_csv(&ragged),
            Err(DataError::Parse { line: 2, .. })
        ));
        let bad = write_tmp(&dir, "b.csv", "1,zz\n");
        assert!(load_features_csv(&bad).is_err());
    }

    #[test]
    fn labels_and_masks_parse() {
        let dir = tempdir().unwrap();
        let lp = write_tmp(&dir, "y.txt", "0\n1\n0\n");
        assert_eq!(load_labels(&lp).unwrap(), vec![0, 1, 0]);
        let mp = write_tmp(&dir, "m.txt", "train\nval\ntest\nnone\n");
        let (t, v, s) = load_masks(&mp).unwrap();
        assert_eq!(t, vec![true, false, false, false]);
        assert_eq!(v, vec![false, true, false, false]);
        assert_eq!(s, vec![false, false, true, false]);
        let bad = write_tmp(&dir, "bad.txt", "train\neval\n");
        assert!(matches!(
            load_masks(&bad),
            Err(DataError::Parse { line: 2, .. })
        ));
    }

    fn small_parts() -> (CsrMatrix, DenseMatrix, Vec<usize>) {
        let a = CsrMatrix::from_coo(4, 4, &[(0, 1, 1.0), (1, 0, 1.0)]).unwrap();
        let x = DenseMatrix::zeros(4, 2);
        (a, x, vec![0, 1, 0, 1])
    }

    #[test]
    fn assembly_infers_classes_and_validates_splits() {
        let (a, x, y) = small_parts();
        let ds = GraphDataset::assemble(
            a.clone(),
            x.clone(),
            y.clone(),
            (
                vec![true, true, false, false],
                vec![false, false, true, false],
                vec![false, false, false, true],
            ),
        )
        .unwrap();
        assert_eq!(ds.n_classes, 2);
        // All-train masks leave val empty.
        let all_train = GraphDataset::assemble(
            a.clone(),
            x.clone(),
            y.clone(),
            (vec![true; 4], vec![false; 4], vec![false; 4]),
        );
        assert!(matches!(all_train, Err(DataError::Invalid(_))));
        // Feature row count must match the graph.
        let short = GraphDataset::assemble(
            a.clone(),
            DenseMatrix::zeros(3, 2),
            y.clone(),
            (
                vec![true, true, false, false],
                vec![false, false, true, false],
                vec![false, false, false, true],
            ),
        );
        assert!(matches!(short, Err(DataError::Invalid(_))));
        // A class absent from the training split is rejected.
        let missing = GraphDataset::assemble(
            a,
            x,
            y,
            (
                vec![true, false, true, false],
                vec![false, true, false, false],
                vec![false, false, false, true],
            ),
        );
        assert!(matches!(missing, Err(DataError::Invalid(_))));
    }

    #[test]
    fn dataset_rejects_overlapping_masks_and_bad_labels() {
        let (a, x, y) = small_parts();
        let overlap = GraphDataset::new(
            a.clone(),
            x.clone(),
            y,
            2,
            vec![true, true, false, false],
            vec![true, false, true, false],
            vec![false, false, false, true],
        );
        assert!(matches!(overlap, Err(DataError::Invalid(_))));
        let bad_label = GraphDataset::new(
            a,
            x,
            vec![0, 5, 0, 1],
            2,
            vec![true, true, false, false],
            vec![false, false, true, false],
            vec![false, false, false, true],
        );
        assert!(matches!(bad_label, Err(DataError::Invalid(_))));
    }

    #[test]
    fn sbm_disconnects_classes_when_p_out_is_zero() {
        let ds = generate_sbm(60, 3, 0.5, 0.0, 4, 0.1, 7).unwrap();
        for r in 0..ds.n_nodes() {
            let (cols, _) = ds.adjacency.row(r);
            for &c in cols {
                assert_eq!(ds.labels[r], ds.labels[c], "cross-class edge {r}-{c}");
            }
        }
    }

    #[test]
    fn sbm_zero_noise_gives_exact_one_hot_features() {
        let ds = generate_sbm(30, 2, 0.4, 0.1, 3, 0.0, 11).unwrap();
        for v in 0..ds.n_nodes() {
            for d in 0..3 {
                let want = if d == ds.labels[v] { 1.0 } else { 0.0 };
                assert_eq!(ds.features.get(v, d), want);
            }
        }
    }

    #[test]
    fn sbm_masks_are_stratified_sixty_twenty_twenty() {
        let ds = generate_sbm(100, 2, 0.2, 0.02, 4, 0.5, 3).unwrap();
        for class in 0..2 {
            let members: Vec<usize> =
                (0..100).filter(|&v| ds.labels[v] == class).collect();
            assert_eq!(members.len(), 50);
            let count = |mask: &Vec<bool>| members.iter().filter(|&&v| mask[v]).count();
            assert_eq!(count(&ds.train_mask), 30);
            assert_eq!(count(&ds.val_mask), 10);
            assert_eq!(count(&ds.test_mask), 10);
        }
    }

    #[test]
    fn sbm_is_bit_identical_per_seed_and_varies_across_seeds() {
        let a = generate_sbm(50, 2, 0.3, 0.05, 4, 1.0, 42).unwrap();
        let b = generate_sbm(50, 2, 0.3, 0.05, 4, 1.0, 42).unwrap();
        assert_eq!(a.adjacency.col, b.adjacency.col);
        assert_eq!(a.adjacency.rowptr, b.adjacency.rowptr);
        let bits = |m: &DenseMatrix| m.data.iter().map(|v| v.to_bits()).collect::<Vec<_>>();
        assert_eq!(bits(&a.features), bits(&b.features));
        assert_eq!(a.train_mask, b.train_mask);
        let c = generate_sbm(50, 2, 0.3, 0.05, 4, 1.0, 43).unwrap();
        assert!(bits(&a.features) != bits(&c.features));
    }

    #[test]
    fn sbm_rejects_degenerate_shapes() {
        assert!(generate_sbm(4, 2, 0.5, 0.1, 4, 0.0, 0).is_err());
        assert!(generate_sbm(30, 2, 0.5, 0.1, 1, 0.0, 0).is_err());
        assert!(generate_sbm(30, 2, 0.1, 0.5, 4, 0.0, 0).is_err());
        assert!(generate_sbm(30, 1, 0.5, 0.1, 4, 0.0, 0).is_err());
    }

    fn sample_records() -> Vec<EpochRecord> {
        vec![
            EpochRecord {
                epoch: 0,
                loss: 1.375,
                train_acc: 0.5,
                val_acc: 0.25,
                test_acc: 0.125,
                bwd_spmm_flops: 123,
                bwd_spmm_flops_exact_equiv: 456,
                alloc_ms: 0.75,
                elapsed_ms: 1.5,
                approx_active: true,
                mean_auc_stability: 0.8125,
            },
            EpochRecord {
                epoch: 1,
                loss: 0.1234567890123456,
                train_acc: 1.0,
                val_acc: 1.0,
                test_acc: 1.0,
                bwd_spmm_flops: 456,
                bwd_spmm_flops_exact_equiv: 456,
                alloc_ms: 0.0,
                elapsed_ms: 2.25,
                approx_active: false,
                mean_auc_stability: f64::NAN,
            },
        ]
    }

    #[test]
    fn metrics_csv_layout() {
        let dir = tempdir().unwrap();
        let p = dir.path().join("m.csv");
        write_metrics_csv(&[], &p).unwrap();
        let text = std::fs::read_to_string(&p).unwrap();
        assert_eq!(text.trim_end(), METRICS_HEADER);
        write_metrics_csv(&sample_records(), &p).unwrap();
        let text = std::fs::read_to_string(&p).unwrap();
        assert_eq!(text.lines().count(), 3);
    }

    #[test]
    fn metrics_round_trip_to_nine_digits() {
        let dir = tempdir().unwrap();
        let p = dir.path().join("m.csv");
        let records = sample_records();
        write_metrics_csv(&records, &p).unwrap();
        let back = read_metrics_csv(&p).unwrap();
        assert_eq!(back.len(), records.len());
        for (a, b) in records.iter().zip(&back) {
            assert_eq!(a.epoch, b.epoch);
            assert!((a.loss - b.loss).abs() <= 1e-9);
            assert!((a.val_acc - b.val_acc).abs() <= 1e-9);
            assert_eq!(a.bwd_spmm_flops, b.bwd_spmm_flops);
            assert_eq!(a.approx_active, b.approx_active);
            assert_eq!(
                a.mean_auc_stability.is_nan(),
                b.mean_auc_stability.is_nan()
            );
        }
    }
}
