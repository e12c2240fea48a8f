//! Release gate: every criterion must pass at its pinned tolerance.
//! Run with `cargo test -p rdqc-core --test acceptance -- --nocapture`
//! to see the per-criterion lines.

use rdqc_core::acceptance::{run_all, DEFAULT_SUITE_SEED};

#[test]
fn acceptance_criteria() {
    let reports = run_all(DEFAULT_SUITE_SEED);
    let mut failures = Vec::new();
    for report in &reports {
        println!("{report}");
        if !report.passed {
            failures.push(report.id);
        }
    }
    assert!(failures.is_empty(), "criteria failed: {failures:?}");
}
