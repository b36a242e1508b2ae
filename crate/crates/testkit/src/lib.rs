//! Shared test support: fixture access, the independent status oracle and
//! project/command generators.

pub mod generate;
pub mod operations;
pub mod oracle;

use std::path::PathBuf;
use std::sync::Arc;

use veritrack_core::norm::{load_norm_template, NormTemplate};
use veritrack_core::project::ProjectParameterization;

pub fn fixtures_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../fixtures")
}

pub fn fixture(name: &str) -> PathBuf {
    fixtures_dir().join(name)
}

pub fn demo_norm_bytes() -> Vec<u8> {
    std::fs::read(fixture("norms/do178b-demo.json")).expect("demo norm fixture")
}

pub fn demo_norm() -> Arc<NormTemplate> {
    Arc::new(load_norm_template(&demo_norm_bytes()).expect("demo norm is valid"))
}

pub fn reference_params() -> ProjectParameterization {
    let text = std::fs::read_to_string(fixture("reference-params.json")).expect("params fixture");
    serde_json::from_str(&text).expect("params fixture parses")
}

/// Published per-process non-conformity counts of the case study.
pub const CASE_STUDY_OPENED: [(&str, usize); 6] = [
    ("Planning", 113),
    ("Requirements", 112),
    ("Design", 290),
    ("Coding&Integration", 3003),
    ("Integration", 60),
    ("Verification-of-Verification", 28),
];
