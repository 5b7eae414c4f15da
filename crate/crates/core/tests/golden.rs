//! Byte-exact report output for the ten-service scenario.
//!
//! Regenerate with `UPDATE_GOLDEN=1 cargo test -p sizer-core --test golden`.

use std::path::PathBuf;

use chrono::{TimeZone, Utc};
use sizer_core::report::{
    emit_infrastructure_diagram, emit_performance_curve, emit_summary_report, emit_topology_graph,
};
use sizer_core::{size, ModelCoefficients, RunStamp, RuntimeProfile, SizingRequest, SizingResult};

fn ten_services() -> SizingResult {
    size(
        &SizingRequest::homogeneous(10, RuntimeProfile::reference()),
        &ModelCoefficients::default(),
        RunStamp::new("golden", Utc.timestamp_opt(0, 0).unwrap()),
    )
    .unwrap()
}

fn check(name: &str, actual: &str) {
    let path = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/golden").join(name);
    if std::env::var_os("UPDATE_GOLDEN").is_some() {
        std::fs::write(&path, actual).unwrap();
    }
    let expected = std::fs::read_to_string(&path).unwrap_or_else(|e| panic!("{}: {e}", path.display()));
    assert_eq!(actual, expected, "{name} differs from golden file");
}

#[test]
fn topology_large() {
    check("topology_large.dot", &emit_topology_graph(&ten_services().per_tier["large"]));
}

#[test]
fn curve_perflab() {
    let r = ten_services();
    check("curve_perflab.csv", &emit_performance_curve(&r.curves["perflab"], r.request_echo.packer.cpu_cap_pct));
}

#[test]
fn infrastructure() {
    check("infrastructure.dot", &emit_infrastructure_diagram(&ten_services()).unwrap());
}

#[test]
fn summary_report() {
    check("report.md", &emit_summary_report(&ten_services()));
}

#[test]
fn emitters_are_repeatable() {
    let a = ten_services();
    let b = ten_services();
    assert_eq!(emit_summary_report(&a), emit_summary_report(&b));
    assert_eq!(emit_topology_graph(&a.per_tier["medium"]), emit_topology_graph(&b.per_tier["medium"]));
}
