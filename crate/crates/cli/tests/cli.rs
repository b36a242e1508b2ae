use std::path::Path;
use std::process::{Command, Output};

use veritrack_testkit::fixture;

fn veritrack(store: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_veritrack"))
        .arg("--store")
        .arg(store)
        .args(args)
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8(o.stderr.clone()).unwrap()
}

fn load(store: &Path, name: &str) {
    let f = fixture(name);
    let o = veritrack(store, &["fixtures", "load", f.to_str().unwrap()]);
    assert!(o.status.success(), "{}", stderr(&o));
}

#[test]
fn validates_the_bundled_norm() {
    let dir = tempfile::tempdir().unwrap();
    let f = fixture("norms/do178b-demo.json");
    let o = veritrack(dir.path(), &["norm", "validate", f.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0));
    assert_eq!(stdout(&o), "DO-178B-demo: valid\n");
}

#[test]
fn invalid_norm_is_a_domain_error() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.json");
    std::fs::write(&bad, "{\"norm_id\": \"X\",\n  oops}").unwrap();
    let o = veritrack(dir.path(), &["--format", "json", "norm", "validate", bad.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
    let err: serde_json::Value = serde_json::from_str(stderr(&o).trim()).unwrap();
    assert_eq!(err["error_code"], "ParseError");
    assert!(err["message"].as_str().unwrap().contains("line 2"));
}

#[test]
fn usage_errors_exit_with_two() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(veritrack(dir.path(), &["project", "explode"]).status.code(), Some(2));
    assert_eq!(veritrack(dir.path(), &["--format", "xml", "roles", "show"]).status.code(), Some(2));
    load(dir.path(), "completed-project.json");
    let o = veritrack(dir.path(), &["checklist", "answer", "PC-planning", "Q1", "yes"]);
    assert_eq!(o.status.code(), Some(2), "mutation without --as");
    let o = veritrack(dir.path(), &["--format", "csv", "norm", "show", "DO-178B-demo"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn case_study_metrics_as_csv() {
    let dir = tempfile::tempdir().unwrap();
    load(dir.path(), "case-study.json");
    let o = veritrack(dir.path(), &["--format", "csv", "project", "metrics"]);
    assert!(o.status.success());
    assert_eq!(
        stdout(&o),
        "process_id,opened,resolved,closed,still_open\n\
         planning,113,0,113,0\n\
         requirements,112,0,112,0\n\
         design,290,0,290,0\n\
         coding-integration,3003,0,3003,0\n\
         integration,60,0,60,0\n\
         verification-of-verification,28,0,25,3\n"
    );
}

#[test]
fn completed_fixture_reports_completed() {
    let dir = tempfile::tempdir().unwrap();
    load(dir.path(), "completed-project.json");
    let o = veritrack(dir.path(), &["project", "status"]);
    assert_eq!(o.status.code(), Some(0));
    assert!(stdout(&o).starts_with("nav-db-loader: Completed\n"), "{}", stdout(&o));
}

#[test]
fn json_output_is_canonical_and_stable() {
    let dir = tempfile::tempdir().unwrap();
    load(dir.path(), "near-complete-project.json");
    let first = stdout(&veritrack(dir.path(), &["--format", "json", "project", "status"]));
    let second = stdout(&veritrack(dir.path(), &["--format", "json", "project", "status"]));
    assert_eq!(first, second);
    let value: serde_json::Value = serde_json::from_str(&first).unwrap();
    assert_eq!(format!("{}\n", serde_json::to_string(&value).unwrap()), first);
    assert_eq!(value["project_status"], "Pending");
}

#[test]
fn cli_mutations_land_in_the_audit_log() {
    let dir = tempfile::tempdir().unwrap();
    let store = dir.path();
    load(store, "near-complete-project.json");
    let steps: [&[&str]; 3] = [
        &["--as", "ver1", "checklist", "answer", "PDC-SRS", "Q3", "na", "--justification", "no derived requirements"],
        &["--as", "ver1", "obs", "transition", "obs-2", "closed", "--comment", "verified"],
        &["--as", "ver1", "obs", "open", "--item", "SRS", "--text", "late finding"],
    ];
    for args in steps {
        let o = veritrack(store, args);
        assert!(o.status.success(), "{args:?}: {}", stderr(&o));
    }
    let o = veritrack(store, &["--as", "dev1", "obs", "transition", "obs-3", "closed", "--comment", "x"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("IllegalTransition"));

    let log = std::fs::read_to_string(store.join("projects/nav-db-loader.log")).unwrap();
    let parsed = veritrack_core::audit::EventLog::from_ndjson(&log).unwrap();
    let last = parsed.records().last().unwrap();
    assert_eq!(last.actor, "ver1");
    assert_eq!(last.event.type_name(), "ObservationOpened");

    let o = veritrack(store, &["--format", "json", "obs", "list", "--item", "SRS"]);
    let list: serde_json::Value = serde_json::from_str(&stdout(&o)).unwrap();
    assert_eq!(list.as_array().unwrap().len(), 3);
}

#[test]
fn evidence_export_and_tamper_check() {
    let dir = tempfile::tempdir().unwrap();
    load(dir.path(), "completed-project.json");
    let tar = dir.path().join("evidence.tar");
    let o = veritrack(dir.path(), &["evidence", "export", "--up-to", "3", "-o", tar.to_str().unwrap()]);
    assert!(o.status.success(), "{}", stderr(&o));
    let o = veritrack(dir.path(), &["evidence", "verify", tar.to_str().unwrap()]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(stdout(&o).contains("verified 4 records"));

    let mut bytes = std::fs::read(&tar).unwrap();
    let text = String::from_utf8_lossy(&bytes).into_owned();
    let at = text.find("\"actor\":\"admin\"").unwrap() + 10;
    bytes[at] = b'b';
    std::fs::write(&tar, &bytes).unwrap();
    let o = veritrack(dir.path(), &["evidence", "verify", tar.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("ChainCorruption"), "{}", stderr(&o));
}

#[test]
fn roles_matrix_as_json() {
    let dir = tempfile::tempdir().unwrap();
    let o = veritrack(dir.path(), &["--format", "json", "roles", "show"]);
    let m: serde_json::Value = serde_json::from_str(&stdout(&o)).unwrap();
    assert_eq!(m["Reader"], serde_json::json!(["ReadStatus"]));
    assert_eq!(m["Administrator"].as_array().unwrap().len(), 13);
}

#[test]
fn project_create_from_params_file() {
    let dir = tempfile::tempdir().unwrap();
    let norms = fixture("norms");
    let params = fixture("reference-params.json");
    let o = Command::new(env!("CARGO_BIN_EXE_veritrack"))
        .args(["--store", dir.path().to_str().unwrap(), "--norms", norms.to_str().unwrap()])
        .args(["--as", "admin", "project", "create", "--params", params.to_str().unwrap()])
        .output()
        .unwrap();
    assert!(o.status.success(), "{}", stderr(&o));
    assert_eq!(stdout(&o), "#0 ProjectCreated; project cockpit-display is Pending\n");
    let o = veritrack(dir.path(), &["--norms", norms.to_str().unwrap(), "--format", "csv", "project", "status"]);
    assert_eq!(stdout(&o).lines().count(), 7);
}
