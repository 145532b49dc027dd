//! End-to-end invariants of the training loop: switch prefix shape, budget
//! compliance, and the stability-sample layout.

use samplegnn::data::GraphDataset;
use samplegnn::dense::DenseMatrix;
use samplegnn::engine::{
    train, BackwardPolicy, Mode, ModelKind, TrainConfig, STABILITY_LAG,
};
use samplegnn::sparse::CsrMatrix;

/// Two disjoint 6-cliques with one-hot features.
fn two_cluster_dataset() -> GraphDataset {
    let n = 12;
    let mut triples = Vec::new();
    for cluster in 0..2usize {
        let base = cluster * 6;
        for i in 0..6 {
            for j in 0..6 {
                if i != j {
                    triples.push((base + i, base + j, 1.0));
                }
            }
        }
    }
    let adjacency = CsrMatrix::from_coo(n, n, &triples).unwrap();
    let mut features = DenseMatrix::zeros(n, 2);
    let mut labels = vec![0usize; n];
    for (v, slot) in labels.iter_mut().enumerate() {
        *slot = v / 6;
        features.set(v, *slot, 1.0);
    }
    let mut train_mask = vec![false; n];
    let mut val_mask = vec![false; n];
    let mut test_mask = vec![false; n];
    for v in 0..n {
        match v % 6 {
            0..=2 => train_mask[v] = true,
            3 | 4 => val_mask[v] = true,
            _ => test_mask[v] = true,
        }
    }
    GraphDataset::new(adjacency, features, labels, 2, train_mask, val_mask, test_mask).unwrap()
}

#[test]
fn approx_phase_is_exactly_the_switch_prefix() {
    let data = two_cluster_dataset();
    let cfg = TrainConfig {
        hidden: 8,
        epochs: 30,
        lr: 0.05,
        seed: 11,
        policy: BackwardPolicy {
            mode: Mode::Rsc,
            budget_c: 0.5,
            switch_fraction: 0.8,
            ..BackwardPolicy::default()
        },
        ..TrainConfig::default()
    };
    let report = train(&cfg, &data).unwrap();
    // floor(0.8 * 30) = 24 approximated epochs, then exact to the end.
    for r in &report.records {
        assert_eq!(r.approx_active, r.epoch < 24, "epoch {}", r.epoch);
    }
    let tail = &report.records[24..];
    assert!(tail
        .iter()
        .all(|r| r.bwd_spmm_flops == r.bwd_spmm_flops_exact_equiv));
}

#[test]
fn budget_holds_every_approximated_epoch() {
    let data = two_cluster_dataset();
    for mode in [Mode::Rsc, Mode::Uniform] {
        for c in [0.3, 0.6] {
            let cfg = TrainConfig {
                hidden: 8,
                epochs: 40,
                lr: 0.05,
                seed: 21,
                policy: BackwardPolicy {
                    mode,
                    budget_c: c,
                    switch_fraction: 1.0,
                    ..BackwardPolicy::default()
                },
                ..TrainConfig::default()
            };
            let report = train(&cfg, &data).unwrap();
            // Cache and allocation intervals are aligned, so each epoch runs
            // a plan that was checked against the budget when built.
            for r in &report.records {
                assert!(r.approx_active);
                let budget = (c * r.bwd_spmm_flops_exact_equiv as f64).floor() as u64;
                assert!(
                    r.bwd_spmm_flops <= budget,
                    "{mode} C={c} epoch {}: {} > {budget}",
                    r.epoch,
                    r.bwd_spmm_flops
                );
            }
        }
    }
}

#[test]
fn exact_equiv_cost_matches_operator_size() {
    let data = two_cluster_dataset();
    let cfg = TrainConfig {
        hidden: 8,
        epochs: 2,
        lr: 0.05,
        seed: 1,
        ..TrainConfig::default()
    };
    let report = train(&cfg, &data).unwrap();
    // Normalized operator: 60 clique edges plus 12 loops; widths 8 and 2.
    let nnz = 72u64;
    assert_eq!(
        report.records[0].bwd_spmm_flops_exact_equiv,
        nnz * 8 + nnz * 2
    );
}

#[test]
fn stability_samples_start_after_the_lag_and_cover_each_operation() {
    let data = two_cluster_dataset();
    let epochs = 30;
    // At C = 0.2 the budget (144 of 720) cannot hold either operation at
    // full k (the other's floor alone would overflow), so both selections
    // stay interior and every sample carries a score.
    let cfg = TrainConfig {
        hidden: 8,
        epochs,
        lr: 0.05,
        seed: 31,
        policy: BackwardPolicy {
            mode: Mode::Rsc,
            budget_c: 0.2,
            switch_fraction: 1.0,
            ..BackwardPolicy::default()
        },
        ..TrainConfig::default()
    };
    let report = train(&cfg, &data).unwrap();
    // Two operations, one sample each from step LAG onward.
    assert_eq!(report.auc_series.len(), 2 * (epochs - STABILITY_LAG));
    for pair in report.auc_series.chunks(2) {
        assert_eq!(pair[0].step, pair[1].step);
        assert!(pair[0].step >= STABILITY_LAG);
        assert_eq!((pair[0].layer, pair[1].layer), (0, 1));
        for s in pair {
            let auc = s.auc.expect("k is interior, score defined");
            assert!((0.0..=1.0).contains(&auc), "auc {auc}");
        }
    }
    // Epoch records during the scored phase carry the per-step mean.
    for r in &report.records {
        if r.epoch >= STABILITY_LAG {
            assert!(r.mean_auc_stability.is_finite());
        } else {
            assert!(r.mean_auc_stability.is_nan());
        }
    }
}

#[test]
fn full_budget_selections_are_flagged_degenerate() {
    let data = two_cluster_dataset();
    let epochs = 15;
    let cfg = TrainConfig {
        hidden: 8,
        epochs,
        lr: 0.05,
        seed: 33,
        policy: BackwardPolicy {
            mode: Mode::Rsc,
            budget_c: 1.0,
            switch_fraction: 1.0,
            ..BackwardPolicy::default()
        },
        ..TrainConfig::default()
    };
    let report = train(&cfg, &data).unwrap();
    // k = n for both operations: one flagged row per operation per step,
    // from step 0, and never a finite mean.
    assert_eq!(report.auc_series.len(), 2 * epochs);
    assert!(report.auc_series.iter().all(|s| s.auc.is_none()));
    assert_eq!(report.auc_series[0].step, 0);
    assert!(report.records.iter().all(|r| r.mean_auc_stability.is_nan()));
}

#[test]
fn uniform_and_greedy_pay_comparable_flops_at_equal_budget() {
    let data = two_cluster_dataset();
    let mk = |mode: Mode| TrainConfig {
        hidden: 8,
        epochs: 20,
        lr: 0.05,
        seed: 41,
        policy: BackwardPolicy {
            mode,
            budget_c: 0.4,
            switch_fraction: 1.0,
            ..BackwardPolicy::default()
        },
        ..TrainConfig::default()
    };
    let greedy = train(&mk(Mode::Rsc), &data).unwrap();
    let uniform = train(&mk(Mode::Uniform), &data).unwrap();
    let budget = (0.4 * greedy.approx_bwd_flops_exact_equiv as f64).ceil() as u64;
    assert!(greedy.approx_bwd_flops <= budget);
    assert!(uniform.approx_bwd_flops <= budget);
    assert!(greedy.approx_bwd_flops > 0);
    assert!(uniform.approx_bwd_flops > 0);
}

#[test]
fn sage_training_runs_with_approximation() {
    let data = two_cluster_dataset();
    let cfg = TrainConfig {
        model: ModelKind::Sage,
        layers: 2,
        hidden: 8,
        epochs: 60,
        lr: 0.05,
        seed: 51,
        policy: BackwardPolicy {
            mode: Mode::Rsc,
            budget_c: 0.5,
            switch_fraction: 0.8,
            ..BackwardPolicy::default()
        },
    };
    let report = train(&cfg, &data).unwrap();
    // One backward product (the hidden layer's), so one slice per interval.
    assert!(report.slicings > 0);
    assert!(report.best_val_acc >= 0.9, "val {}", report.best_val_acc);
    let approx_epochs = report.records.iter().filter(|r| r.approx_active).count();
    assert_eq!(approx_epochs, 48);
}
