use std::io::Write;

use chrono::Duration;
use proptest::prelude::*;
use veritrack_core::audit::{
    export_evidence, replay, sha256_hex, AuditError, EventLog, EvidencePackage, GENESIS_HASH,
};
use veritrack_core::canonical::to_canonical_bytes;
use veritrack_core::command::{Command, Event};
use veritrack_core::project::ObservationState;
use veritrack_core::status::cc_check;
use veritrack_core::store::{ProjectLedger, StoreError};
use veritrack_testkit::operations::{run_session, session_start};
use veritrack_testkit::{demo_norm, reference_params};

fn creation_event() -> Event {
    Event::ProjectCreated {
        params: reference_params(),
        norm: (*demo_norm()).clone(),
    }
}

fn persisted(dir: &std::path::Path, observations: usize) -> std::path::PathBuf {
    let path = dir.join("p.log");
    let (mut ledger, _) = ProjectLedger::create(
        "admin",
        reference_params(),
        demo_norm(),
        session_start(),
        Some(&path),
    )
    .unwrap();
    for k in 0..observations {
        let cmd = Command::OpenObservation {
            item_id: "PSAC".into(),
            text: format!("finding {k}"),
        };
        ledger
            .execute("ver1", &cmd, session_start() + Duration::seconds(k as i64))
            .unwrap();
    }
    path
}

#[test]
fn chain_starts_at_genesis_and_links_every_record() {
    let session = run_session(11, 60);
    let records = session.ledger.log().records();
    assert_eq!(records[0].prev_hash, GENESIS_HASH);
    assert_eq!(records[0].sequence, 0);
    for (k, r) in records.iter().enumerate() {
        assert_eq!(r.sequence, k as u64);
        let mut value = serde_json::to_value(r).unwrap();
        value.as_object_mut().unwrap().remove("this_hash");
        assert_eq!(r.this_hash, sha256_hex(&serde_json::to_vec(&value).unwrap()));
        if k > 0 {
            assert_eq!(r.prev_hash, records[k - 1].this_hash);
        }
    }
    assert_eq!(session.ledger.log().head_hash(), records.last().unwrap().this_hash);
}

#[test]
fn header_names_the_digest() {
    let log = EventLog::new("x");
    assert_eq!(
        log.header_line(),
        r#"{"digest_algorithm":"sha256","format_version":1,"project_id":"x"}"#
    );
    assert_eq!(log.head_hash(), GENESIS_HASH);
}

#[test]
fn reopening_replays_the_same_state() {
    let dir = tempfile::tempdir().unwrap();
    let path = persisted(dir.path(), 5);
    let ledger = ProjectLedger::open(&path).unwrap();
    assert_eq!(ledger.project().observations().count(), 5);
    assert_eq!(ledger.log().len(), 6);
}

#[test]
fn flipped_byte_on_disk_is_detected_on_open() {
    let dir = tempfile::tempdir().unwrap();
    let path = persisted(dir.path(), 3);
    let mut bytes = std::fs::read(&path).unwrap();
    let last_line_start = bytes[..bytes.len() - 1]
        .iter()
        .rposition(|b| *b == b'\n')
        .unwrap()
        + 1;
    bytes[last_line_start + 20] ^= 0x01;
    std::fs::write(&path, &bytes).unwrap();
    match ProjectLedger::open(&path) {
        Err(StoreError::Audit(AuditError::ChainCorruption { index, .. })) => assert_eq!(index, 3),
        other => panic!("expected corruption, got {other:?}"),
    }
}

#[test]
fn external_modification_blocks_appends() {
    let dir = tempfile::tempdir().unwrap();
    let path = persisted(dir.path(), 1);
    let mut ledger = ProjectLedger::open(&path).unwrap();
    std::fs::OpenOptions::new()
        .append(true)
        .open(&path)
        .unwrap()
        .write_all(b"{}\n")
        .unwrap();
    let cmd = Command::OpenObservation {
        item_id: "PSAC".into(),
        text: "late".into(),
    };
    let err = ledger.execute("ver1", &cmd, session_start()).unwrap_err();
    assert_eq!(err.code(), "ChainCorruption");
}

#[test]
fn transition_before_opening_is_an_invalid_sequence() {
    let mut log = EventLog::new("cockpit-display");
    log.append("admin", session_start(), creation_event());
    log.append(
        "dev1",
        session_start(),
        Event::ObservationTransitioned {
            observation_id: "obs-1".into(),
            to_state: ObservationState::Resolved,
            comment: "fixed".into(),
        },
    );
    match replay(log.records()) {
        Err(AuditError::InvalidEventSequence { sequence, .. }) => assert_eq!(sequence, 1),
        other => panic!("expected invalid sequence, got {other:?}"),
    }
}

#[test]
fn creation_alone_replays_to_the_reference_project() {
    let mut log = EventLog::new("cockpit-display");
    log.append("admin", session_start(), creation_event());
    let project = replay(log.records()).unwrap();
    assert_eq!(project.processes.len(), 6);
    assert_eq!(project.items().count(), 8);
}

#[test]
fn evidence_at_head_and_at_creation() {
    let session = run_session(5, 80);
    let log = session.ledger.log();
    let head = log.len() as u64 - 1;

    let full = export_evidence(log, head).unwrap();
    full.verify().unwrap();
    assert_eq!(full.manifest.head_hash, log.head_hash());
    assert_eq!(
        full.snapshot,
        serde_json::to_value(cc_check(session.ledger.project())).unwrap()
    );

    let first = export_evidence(log, 0).unwrap();
    first.verify().unwrap();
    assert_eq!(first.manifest.record_count, 1);
    assert_eq!(first.manifest.head_hash, log.records()[0].this_hash);

    assert!(matches!(
        export_evidence(log, head + 1),
        Err(AuditError::UnknownSequence(_))
    ));
}

#[test]
fn evidence_archive_round_trips() {
    let session = run_session(9, 40);
    let package = session.ledger.export_evidence(None).unwrap();
    let mut bytes = Vec::new();
    package.write_archive(&mut bytes).unwrap();
    let read = EvidencePackage::read_archive(bytes.as_slice()).unwrap();
    read.verify().unwrap();
    assert_eq!(read.manifest, package.manifest);
    assert_eq!(to_canonical_bytes(&read.snapshot), to_canonical_bytes(&package.snapshot));
}

#[test]
fn doctored_snapshot_fails_verification() {
    let session = run_session(3, 40);
    let mut package = session.ledger.export_evidence(None).unwrap();
    package.snapshot["project_status"] = serde_json::json!("Completed");
    assert!(matches!(
        package.verify(),
        Err(AuditError::EvidenceMismatch(_))
    ));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn replay_reproduces_the_live_state(seed in any::<u64>(), steps in 1usize..120) {
        let session = run_session(seed, steps);
        let text = session.ledger.log().to_ndjson();
        let reloaded = EventLog::from_ndjson(&text).unwrap();
        let replayed = replay(reloaded.records()).unwrap();
        prop_assert_eq!(
            to_canonical_bytes(&replayed),
            to_canonical_bytes(session.ledger.project())
        );
        let accepted = session.attempts.iter().filter(|a| a.2.is_ok()).count();
        prop_assert_eq!(session.ledger.log().len(), accepted + 1);
    }

    #[test]
    fn any_single_byte_change_is_detected(seed in any::<u64>(), position in any::<prop::sample::Index>(), bit in 0u8..8) {
        let session = run_session(seed, 20);
        let text = session.ledger.log().to_ndjson();
        let header_len = text.find('\n').unwrap() + 1;
        let mut bytes = text.into_bytes();
        let at = header_len + position.index(bytes.len() - header_len - 1);
        bytes[at] ^= 1 << bit;
        let tampered = String::from_utf8_lossy(&bytes);
        prop_assert!(EventLog::from_ndjson(&tampered).is_err());
    }
}
