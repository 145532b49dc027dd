//! Calibration of the synthetic block-model fixture: exact training must
//! solve it comfortably, leaving headroom for the approximation comparisons.

use samplegnn::data::generate_sbm;
use samplegnn::engine::{train, TrainConfig};

#[test]
fn exact_gcn_solves_the_block_model_fixture() {
    let data = generate_sbm(2000, 4, 0.01, 0.001, 16, 1.0, 0).unwrap();
    let cfg = TrainConfig {
        epochs: 150,
        seed: 0,
        ..TrainConfig::default()
    };
    let report = train(&cfg, &data).unwrap();
    assert!(
        report.best_val_acc >= 0.85,
        "val accuracy {}",
        report.best_val_acc
    );
    assert!(report.test_acc_at_best >= 0.8, "test {}", report.test_acc_at_best);
}
