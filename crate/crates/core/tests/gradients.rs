//! Finite-difference checks for every layer, across seeds.

mod common;

use common::all_layer_checks;

#[test]
fn every_layer_passes_grad_check_on_five_seeds() {
    for seed in [11u64, 22, 33, 44, 55] {
        for (name, report) in all_layer_checks(seed, 1e-4) {
            assert!(
                report.passed(),
                "{name} (seed {seed}) failed grad check: {:?}, max err {}",
                report.failing(),
                report.max_error()
            );
        }
    }
}

#[test]
fn layer_reports_carry_per_parameter_errors() {
    let report = common::check_attention(5, 1e-4);
    // x plus the eight projection parameters
    assert_eq!(report.per_param.len(), 9);
    assert!(report.max_error() < 1e-4);
}

#[test]
fn layer_norm_meets_the_tighter_tolerance() {
    for seed in [1u64, 2, 3] {
        let report = common::check_layer_norm(seed, 1e-5);
        assert!(
            report.passed(),
            "seed {seed}: max err {}",
            report.max_error()
        );
    }
}
