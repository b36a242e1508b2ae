//! Hash-chained audit log, replay and evidence packages.
//!
//! A project log is a header line followed by one canonical JSON record per
//! line. Each record's `this_hash` is the SHA-256 of the canonical encoding
//! of every other field, and its `prev_hash` is the previous record's
//! `this_hash` (64 zeros for the first record). Verification works on the
//! raw lines: a line must be exactly the canonical encoding of the value it
//! parses to, so any single-byte change alters the hashed content.

use std::io::{Read, Write};

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::canonical::{to_canonical_bytes, to_canonical_pretty, to_canonical_string, to_canonical_value};
use crate::command::{apply_creation, apply_event, ApplyError, Event};
use crate::project::Project;
use crate::status::{cc_check, nonconformity_metrics};

pub const FORMAT_VERSION: u32 = 1;
pub const DIGEST_ALGORITHM: &str = "sha256";
pub const GENESIS_HASH: &str = "0000000000000000000000000000000000000000000000000000000000000000";

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum AuditError {
    #[error("chain corruption at record {index}: {reason}")]
    ChainCorruption { index: usize, reason: String },
    #[error("invalid event sequence at record {sequence}: {reason}")]
    InvalidEventSequence { sequence: u64, reason: String },
    #[error("storage failure: {0}")]
    StorageFailure(String),
    #[error("unknown project {0:?}")]
    UnknownProject(String),
    #[error("unknown sequence {0}")]
    UnknownSequence(u64),
    #[error("evidence package does not verify: {0}")]
    EvidenceMismatch(String),
}

impl AuditError {
    pub fn code(&self) -> &'static str {
        match self {
            AuditError::ChainCorruption { .. } => "ChainCorruption",
            AuditError::InvalidEventSequence { .. } => "InvalidEventSequence",
            AuditError::StorageFailure(_) => "StorageFailure",
            AuditError::UnknownProject(_) => "UnknownProject",
            AuditError::UnknownSequence(_) => "UnknownSequence",
            AuditError::EvidenceMismatch(_) => "EvidenceMismatch",
        }
    }
}

fn corrupt(index: usize, reason: impl Into<String>) -> AuditError {
    AuditError::ChainCorruption {
        index,
        reason: reason.into(),
    }
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LogHeader {
    pub format_version: u32,
    pub project_id: String,
    pub digest_algorithm: String,
}

impl LogHeader {
    pub fn new(project_id: &str) -> Self {
        Self {
            format_version: FORMAT_VERSION,
            project_id: project_id.to_string(),
            digest_algorithm: DIGEST_ALGORITHM.to_string(),
        }
    }

    fn check(&self) -> Result<(), AuditError> {
        if self.format_version != FORMAT_VERSION {
            return Err(AuditError::StorageFailure(format!(
                "unsupported log format version {}",
                self.format_version
            )));
        }
        if self.digest_algorithm != DIGEST_ALGORITHM {
            return Err(AuditError::StorageFailure(format!(
                "unsupported digest algorithm {:?}",
                self.digest_algorithm
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EventRecord {
    pub sequence: u64,
    pub timestamp: DateTime<Utc>,
    pub actor: String,
    #[serde(flatten)]
    pub event: Event,
    pub prev_hash: String,
    pub this_hash: String,
}

impl EventRecord {
    /// Digest over the canonical encoding of every field but `this_hash`.
    pub fn compute_hash(&self) -> String {
        let mut value = to_canonical_value(self);
        hash_without_self(&mut value)
    }

    pub fn to_line(&self) -> String {
        to_canonical_string(self)
    }
}

fn hash_without_self(value: &mut serde_json::Value) -> String {
    if let Some(map) = value.as_object_mut() {
        map.remove("this_hash");
    }
    sha256_hex(&serde_json::to_vec(value).expect("JSON value always serializes"))
}

/// A verified, in-memory event chain for one project.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EventLog {
    header: LogHeader,
    records: Vec<EventRecord>,
}

impl EventLog {
    pub fn new(project_id: &str) -> Self {
        Self {
            header: LogHeader::new(project_id),
            records: Vec::new(),
        }
    }

    pub fn header(&self) -> &LogHeader {
        &self.header
    }

    pub fn records(&self) -> &[EventRecord] {
        &self.records
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn head_hash(&self) -> &str {
        self.records
            .last()
            .map(|r| r.this_hash.as_str())
            .unwrap_or(GENESIS_HASH)
    }

    /// Extends the chain; returns the sealed record.
    pub fn append(&mut self, actor: &str, timestamp: DateTime<Utc>, event: Event) -> &EventRecord {
        let mut record = EventRecord {
            sequence: self.records.len() as u64,
            timestamp,
            actor: actor.to_string(),
            event,
            prev_hash: self.head_hash().to_string(),
            this_hash: String::new(),
        };
        record.this_hash = record.compute_hash();
        self.records.push(record);
        self.records.last().expect("just pushed")
    }

    pub fn header_line(&self) -> String {
        to_canonical_string(&self.header)
    }

    /// Header line followed by one line per record, newline-terminated.
    pub fn to_ndjson(&self) -> String {
        let mut out = self.header_line();
        out.push('\n');
        for r in &self.records {
            out.push_str(&r.to_line());
            out.push('\n');
        }
        out
    }

    /// Parses and verifies a complete log file.
    pub fn from_ndjson(text: &str) -> Result<Self, AuditError> {
        let mut lines = text.split('\n');
        let header_line = lines
            .next()
            .filter(|l| !l.is_empty())
            .ok_or_else(|| AuditError::StorageFailure("log has no header".into()))?;
        let header: LogHeader = serde_json::from_str(header_line)
            .map_err(|e| AuditError::StorageFailure(format!("bad log header: {e}")))?;
        if header_line != to_canonical_string(&header) {
            return Err(AuditError::StorageFailure("log header is not canonical".into()));
        }
        header.check()?;
        let body: Vec<&str> = lines.collect();
        let body = match body.split_last() {
            Some((&"", rest)) => rest,
            Some(_) => return Err(corrupt(body.len() - 1, "log does not end with a newline")),
            None => &[][..],
        };
        let records = verify_lines(body)?;
        Ok(Self { header, records })
    }

    /// The first `count` records as a log of their own.
    pub fn prefix(&self, count: usize) -> Self {
        Self {
            header: self.header.clone(),
            records: self.records[..count.min(self.records.len())].to_vec(),
        }
    }
}

/// Verifies raw record lines and returns the typed records.
pub fn verify_lines<S: AsRef<str>>(lines: &[S]) -> Result<Vec<EventRecord>, AuditError> {
    let mut prev = GENESIS_HASH.to_string();
    let mut out = Vec::with_capacity(lines.len());
    for (index, line) in lines.iter().enumerate() {
        let line = line.as_ref();
        let mut value: serde_json::Value =
            serde_json::from_str(line).map_err(|e| corrupt(index, format!("unparseable: {e}")))?;
        let canonical = serde_json::to_string(&value).expect("JSON value always serializes");
        if canonical != line {
            return Err(corrupt(index, "record is not in canonical form"));
        }
        let stored = value
            .get("this_hash")
            .and_then(|h| h.as_str())
            .ok_or_else(|| corrupt(index, "missing this_hash"))?
            .to_string();
        let record: EventRecord = serde_json::from_value(value.clone())
            .map_err(|e| corrupt(index, format!("malformed record: {e}")))?;
        let computed = hash_without_self(&mut value);
        if computed != stored {
            return Err(corrupt(index, "this_hash does not match record content"));
        }
        if record.prev_hash != prev {
            return Err(corrupt(index, "prev_hash does not match previous record"));
        }
        if record.sequence != index as u64 {
            return Err(corrupt(
                index,
                format!("sequence {} where {index} expected", record.sequence),
            ));
        }
        prev = stored;
        out.push(record);
    }
    Ok(out)
}

/// Rechecks the hash chain of already-parsed records.
pub fn verify_records(records: &[EventRecord]) -> Result<(), AuditError> {
    let lines: Vec<String> = records.iter().map(EventRecord::to_line).collect();
    verify_lines(&lines).map(|_| ())
}

/// Rebuilds a project by applying every record through the project logic.
pub fn replay(records: &[EventRecord]) -> Result<Project, AuditError> {
    verify_records(records)?;
    replay_unchecked(records)
}

/// Replay for records whose chain has just been verified.
pub(crate) fn replay_unchecked(records: &[EventRecord]) -> Result<Project, AuditError> {
    let invalid = |r: &EventRecord, e: ApplyError| AuditError::InvalidEventSequence {
        sequence: r.sequence,
        reason: match e {
            ApplyError::Rejected(err) => format!("{}: {err}", err.code()),
            ApplyError::OutOfSequence(msg) => msg,
        },
    };
    let (first, rest) = records
        .split_first()
        .ok_or_else(|| AuditError::InvalidEventSequence {
            sequence: 0,
            reason: "log is empty".into(),
        })?;
    let mut project = apply_creation(&first.event, first.timestamp).map_err(|e| invalid(first, e))?;
    for r in rest {
        apply_event(&mut project, &r.actor, r.timestamp, &r.event).map_err(|e| invalid(r, e))?;
    }
    Ok(project)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EvidenceManifest {
    pub format_version: u32,
    pub project_id: String,
    pub digest_algorithm: String,
    pub up_to_sequence: u64,
    pub record_count: u64,
    pub head_hash: String,
    /// Digest of `snapshot.json`.
    pub snapshot_digest: String,
    /// Digest of `metrics.csv`.
    pub metrics_digest: String,
}

/// A self-contained bundle: log prefix, status snapshot, metrics and an
/// integrity manifest tying them together.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EvidencePackage {
    pub manifest: EvidenceManifest,
    /// Canonical `ProjectStatusReport` of the replayed prefix.
    pub snapshot: serde_json::Value,
    pub metrics: serde_json::Value,
    pub metrics_csv: String,
    pub log_header: LogHeader,
    pub log: Vec<serde_json::Value>,
}

const ARCHIVE_MANIFEST: &str = "manifest.json";
const ARCHIVE_SNAPSHOT: &str = "snapshot.json";
const ARCHIVE_METRICS_JSON: &str = "metrics.json";
const ARCHIVE_METRICS_CSV: &str = "metrics.csv";
const ARCHIVE_LOG: &str = "log.ndjson";

/// Builds the evidence package for records `0..=up_to_sequence`.
pub fn export_evidence(log: &EventLog, up_to_sequence: u64) -> Result<EvidencePackage, AuditError> {
    if up_to_sequence >= log.len() as u64 {
        return Err(AuditError::UnknownSequence(up_to_sequence));
    }
    let prefix = log.prefix(up_to_sequence as usize + 1);
    let project = replay(prefix.records())?;
    build_package(&prefix, &project)
}

fn build_package(prefix: &EventLog, project: &Project) -> Result<EvidencePackage, AuditError> {
    let snapshot = to_canonical_value(&cc_check(project));
    let metrics_report = nonconformity_metrics(project);
    let metrics_csv = metrics_report.to_csv();
    let manifest = EvidenceManifest {
        format_version: FORMAT_VERSION,
        project_id: prefix.header().project_id.clone(),
        digest_algorithm: DIGEST_ALGORITHM.to_string(),
        up_to_sequence: prefix.len() as u64 - 1,
        record_count: prefix.len() as u64,
        head_hash: prefix.head_hash().to_string(),
        snapshot_digest: sha256_hex(&to_canonical_bytes(&snapshot)),
        metrics_digest: sha256_hex(metrics_csv.as_bytes()),
    };
    Ok(EvidencePackage {
        manifest,
        snapshot,
        metrics: to_canonical_value(&metrics_report),
        metrics_csv,
        log_header: prefix.header().clone(),
        log: prefix.records().iter().map(to_canonical_value).collect(),
    })
}

impl EvidencePackage {
    /// Offline verification: the chain, the manifest and a fresh replay
    /// must all agree with what the package claims.
    pub fn verify(&self) -> Result<(), AuditError> {
        let lines: Vec<String> = self.log.iter().map(to_canonical_string).collect();
        let records = verify_lines(&lines)?;
        let m = &self.manifest;
        let mismatch = |what: &str| Err(AuditError::EvidenceMismatch(what.to_string()));
        if records.len() as u64 != m.record_count || m.record_count == 0 {
            return mismatch("record count");
        }
        if m.up_to_sequence + 1 != m.record_count {
            return mismatch("up_to_sequence");
        }
        let head = records.last().map(|r| r.this_hash.as_str()).unwrap_or(GENESIS_HASH);
        if head != m.head_hash {
            return mismatch("head hash");
        }
        if self.log_header.project_id != m.project_id || m.digest_algorithm != DIGEST_ALGORITHM {
            return mismatch("header");
        }
        self.log_header.check()?;
        if sha256_hex(&to_canonical_bytes(&self.snapshot)) != m.snapshot_digest {
            return mismatch("snapshot digest");
        }
        if sha256_hex(self.metrics_csv.as_bytes()) != m.metrics_digest {
            return mismatch("metrics digest");
        }
        let project = replay_unchecked(&records)?;
        if project.project_id() != m.project_id {
            return mismatch("project id");
        }
        if to_canonical_value(&cc_check(&project)) != self.snapshot {
            return mismatch("snapshot differs from replay");
        }
        let metrics = nonconformity_metrics(&project);
        if to_canonical_value(&metrics) != self.metrics || metrics.to_csv() != self.metrics_csv {
            return mismatch("metrics differ from replay");
        }
        Ok(())
    }

    /// Writes the package as a tar archive.
    pub fn write_archive<W: Write>(&self, out: W) -> Result<(), AuditError> {
        let io = |e: std::io::Error| AuditError::StorageFailure(e.to_string());
        let mut log = to_canonical_string(&self.log_header);
        log.push('\n');
        for r in &self.log {
            log.push_str(&to_canonical_string(r));
            log.push('\n');
        }
        let files: [(&str, Vec<u8>); 5] = [
            (ARCHIVE_MANIFEST, to_canonical_pretty(&self.manifest).into_bytes()),
            (ARCHIVE_SNAPSHOT, to_canonical_bytes(&self.snapshot)),
            (ARCHIVE_METRICS_JSON, to_canonical_bytes(&self.metrics)),
            (ARCHIVE_METRICS_CSV, self.metrics_csv.clone().into_bytes()),
            (ARCHIVE_LOG, log.into_bytes()),
        ];
        let mut builder = tar::Builder::new(out);
        for (name, bytes) in files {
            let mut header = tar::Header::new_gnu();
            header.set_size(bytes.len() as u64);
            header.set_mode(0o644);
            header.set_mtime(0);
            header.set_cksum();
            builder
                .append_data(&mut header, name, bytes.as_slice())
                .map_err(io)?;
        }
        builder.into_inner().map_err(io)?.flush().map_err(io)
    }

    /// Reads a package written by [`EvidencePackage::write_archive`]. The
    /// result still has to be checked with [`EvidencePackage::verify`].
    pub fn read_archive<R: Read>(input: R) -> Result<Self, AuditError> {
        let bad = |what: String| AuditError::EvidenceMismatch(what);
        let mut archive = tar::Archive::new(input);
        let mut files = std::collections::BTreeMap::new();
        for entry in archive.entries().map_err(|e| bad(e.to_string()))? {
            let mut entry = entry.map_err(|e| bad(e.to_string()))?;
            let name = entry
                .path()
                .map_err(|e| bad(e.to_string()))?
                .to_string_lossy()
                .into_owned();
            let mut buf = String::new();
            entry
                .read_to_string(&mut buf)
                .map_err(|e| bad(format!("{name}: {e}")))?;
            files.insert(name, buf);
        }
        let take = |name: &str| {
            files
                .get(name)
                .cloned()
                .ok_or_else(|| bad(format!("archive lacks {name}")))
        };
        let json = |name: &str| -> Result<serde_json::Value, AuditError> {
            serde_json::from_str(&take(name)?).map_err(|e| bad(format!("{name}: {e}")))
        };
        let manifest: EvidenceManifest = serde_json::from_value(json(ARCHIVE_MANIFEST)?)
            .map_err(|e| bad(format!("{ARCHIVE_MANIFEST}: {e}")))?;
        let snapshot_text = take(ARCHIVE_SNAPSHOT)?;
        let snapshot: serde_json::Value =
            serde_json::from_str(&snapshot_text).map_err(|e| bad(e.to_string()))?;
        if to_canonical_string(&snapshot) != snapshot_text {
            return Err(bad("snapshot.json is not canonical".into()));
        }
        let log = EventLog::from_ndjson(&take(ARCHIVE_LOG)?)?;
        Ok(Self {
            manifest,
            snapshot,
            metrics: json(ARCHIVE_METRICS_JSON)?,
            metrics_csv: take(ARCHIVE_METRICS_CSV)?,
            log_header: log.header().clone(),
            log: log.records().iter().map(to_canonical_value).collect(),
        })
    }
}
