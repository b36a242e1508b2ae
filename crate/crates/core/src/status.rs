//! Status computation and read-only views.
//!
//! Everything here is a pure function of a [`Project`] snapshot.
//!
//! A process checklist, document checklist or observation list is each an
//! independent conjunct: a configuration item is `Completed` when its
//! document checklist and its observations both are, a process when its
//! process checklist and every owned item are, and the project when every
//! process is. A checklist is `Completed` when every question is answered
//! and none is answered `No`; an observation list when every observation is
//! `Closed`.

use std::fmt;

use serde::Serialize;
use thiserror::Error;

use crate::project::{
    Answer, ChecklistInstance, ConfigurationItem, Observation, ObservationState, Project,
    VerificationProcess,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
pub enum Status {
    Pending,
    Completed,
}

impl Status {
    pub fn from_bool(completed: bool) -> Self {
        if completed {
            Status::Completed
        } else {
            Status::Pending
        }
    }

    pub fn is_completed(self) -> bool {
        self == Status::Completed
    }
}

impl fmt::Display for Status {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Debug::fmt(self, f)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
#[serde(tag = "reason")]
pub enum PendingReason {
    NegativeAnswer { checklist: String, question: String },
    Unfilled { checklist: String },
    OpenObservation { observation_id: String },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ItemStatusReport {
    pub item_id: String,
    pub pdc_status: Status,
    pub observations_status: Status,
    pub item_status: Status,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ProcessStatusReport {
    pub process_id: String,
    pub pc_status: Status,
    pub items: Vec<ItemStatusReport>,
    pub process_status: Status,
    pub pending_reasons: Vec<PendingReason>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ProjectStatusReport {
    pub project_id: String,
    pub processes: Vec<ProcessStatusReport>,
    pub project_status: Status,
}

impl ProjectStatusReport {
    pub fn process(&self, process_id: &str) -> Option<&ProcessStatusReport> {
        self.processes.iter().find(|p| p.process_id == process_id)
    }

    pub fn pending_reasons(&self) -> impl Iterator<Item = &PendingReason> {
        self.processes.iter().flat_map(|p| p.pending_reasons.iter())
    }
}

pub fn checklist_status(checklist: &ChecklistInstance) -> Status {
    Status::from_bool(checklist.is_filled() && !checklist.answers.values().any(Answer::is_negative))
}

/// Only `Closed` counts as addressed; an empty list is vacuously complete.
pub fn observations_status(observations: &[Observation]) -> Status {
    Status::from_bool(
        observations
            .iter()
            .all(|o| o.state == ObservationState::Closed),
    )
}

pub fn item_status(item: &ConfigurationItem) -> ItemStatusReport {
    let pdc_status = checklist_status(&item.document_checklist);
    let observations_status = observations_status(&item.observations);
    ItemStatusReport {
        item_id: item.item_id.clone(),
        pdc_status,
        observations_status,
        item_status: Status::from_bool(
            pdc_status.is_completed() && observations_status.is_completed(),
        ),
    }
}

fn checklist_reasons(checklist: &ChecklistInstance, out: &mut Vec<PendingReason>) {
    if !checklist.is_filled() {
        out.push(PendingReason::Unfilled {
            checklist: checklist.instance_id.clone(),
        });
    }
    for q in &checklist.questions {
        if checklist
            .answer(&q.question_id)
            .is_some_and(Answer::is_negative)
        {
            out.push(PendingReason::NegativeAnswer {
                checklist: checklist.instance_id.clone(),
                question: q.question_id.clone(),
            });
        }
    }
}

pub fn process_status(process: &VerificationProcess) -> ProcessStatusReport {
    let pc_status = checklist_status(&process.process_checklist);
    let mut pending_reasons = Vec::new();
    checklist_reasons(&process.process_checklist, &mut pending_reasons);

    let mut items = Vec::with_capacity(process.configuration_items.len());
    for item in &process.configuration_items {
        items.push(item_status(item));
        checklist_reasons(&item.document_checklist, &mut pending_reasons);
        let mut open: Vec<&Observation> = item
            .observations
            .iter()
            .filter(|o| o.state != ObservationState::Closed)
            .collect();
        open.sort_by_key(|o| (o.opened_at, o.serial));
        pending_reasons.extend(open.into_iter().map(|o| PendingReason::OpenObservation {
            observation_id: o.observation_id.clone(),
        }));
    }

    let process_status = Status::from_bool(
        pc_status.is_completed() && items.iter().all(|i| i.item_status.is_completed()),
    );
    debug_assert_eq!(process_status.is_completed(), pending_reasons.is_empty());
    ProcessStatusReport {
        process_id: process.process_id.clone(),
        pc_status,
        items,
        process_status,
        pending_reasons,
    }
}

/// The consistency & completeness check over a whole project.
pub fn cc_check(project: &Project) -> ProjectStatusReport {
    let processes: Vec<_> = project.processes.iter().map(process_status).collect();
    let project_status =
        Status::from_bool(processes.iter().all(|p| p.process_status.is_completed()));
    ProjectStatusReport {
        project_id: project.project_id().to_string(),
        processes,
        project_status,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ProcessProgress {
    pub process_id: String,
    pub name: String,
    pub process_status: Status,
    pub answered_questions: usize,
    pub total_questions: usize,
    pub answered_fraction: f64,
    pub completed_items: usize,
    pub total_items: usize,
    pub completed_items_fraction: f64,
    pub open_nonconformities: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ProgressSummary {
    pub project_id: String,
    pub project_status: Status,
    pub processes: Vec<ProcessProgress>,
}

/// `done / total`; when there is nothing to count the fraction follows the
/// process status, so an empty process reads 0 while pending and 1 once
/// complete.
fn fraction(done: usize, total: usize, status: Status) -> f64 {
    if total == 0 {
        if status.is_completed() {
            1.0
        } else {
            0.0
        }
    } else {
        done as f64 / total as f64
    }
}

pub fn progress(project: &Project) -> ProgressSummary {
    let report = cc_check(project);
    let processes = project
        .processes
        .iter()
        .zip(&report.processes)
        .map(|(p, r)| {
            let checklists = std::iter::once(&p.process_checklist)
                .chain(p.configuration_items.iter().map(|i| &i.document_checklist));
            let (answered, total) = checklists.fold((0, 0), |(a, t), c| {
                (a + c.answered_count(), t + c.questions.len())
            });
            let completed_items = r
                .items
                .iter()
                .filter(|i| i.item_status.is_completed())
                .count();
            let open = p
                .configuration_items
                .iter()
                .flat_map(|i| &i.observations)
                .filter(|o| o.state == ObservationState::Open)
                .count();
            ProcessProgress {
                process_id: p.process_id.clone(),
                name: p.name.clone(),
                process_status: r.process_status,
                answered_questions: answered,
                total_questions: total,
                answered_fraction: fraction(answered, total, r.process_status),
                completed_items,
                total_items: r.items.len(),
                completed_items_fraction: fraction(completed_items, r.items.len(), r.process_status),
                open_nonconformities: open,
            }
        })
        .collect();
    ProgressSummary {
        project_id: report.project_id,
        project_status: report.project_status,
        processes,
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct NcCounts {
    /// Every observation ever opened, whatever its current state.
    pub opened: usize,
    pub resolved: usize,
    pub closed: usize,
    pub still_open: usize,
}

impl NcCounts {
    fn add(&mut self, state: ObservationState) {
        self.opened += 1;
        match state {
            ObservationState::Open => self.still_open += 1,
            ObservationState::Resolved => self.resolved += 1,
            ObservationState::Closed => self.closed += 1,
        }
    }

    fn merge(&mut self, other: &NcCounts) {
        self.opened += other.opened;
        self.resolved += other.resolved;
        self.closed += other.closed;
        self.still_open += other.still_open;
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ProcessNcCounts {
    pub process_id: String,
    pub name: String,
    #[serde(flatten)]
    pub counts: NcCounts,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct NonConformityMetrics {
    pub project_id: String,
    pub processes: Vec<ProcessNcCounts>,
    pub totals: NcCounts,
}

impl NonConformityMetrics {
    pub fn process(&self, process_id: &str) -> Option<&NcCounts> {
        self.processes
            .iter()
            .find(|p| p.process_id == process_id)
            .map(|p| &p.counts)
    }

    /// `process_id,opened,resolved,closed,still_open`, one row per process.
    pub fn to_csv(&self) -> String {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(["process_id", "opened", "resolved", "closed", "still_open"])
            .expect("in-memory write");
        for p in &self.processes {
            let c = &p.counts;
            w.write_record([
                p.process_id.clone(),
                c.opened.to_string(),
                c.resolved.to_string(),
                c.closed.to_string(),
                c.still_open.to_string(),
            ])
            .expect("in-memory write");
        }
        String::from_utf8(w.into_inner().expect("in-memory flush")).expect("csv emits UTF-8")
    }
}

pub fn nonconformity_metrics(project: &Project) -> NonConformityMetrics {
    let mut totals = NcCounts::default();
    let processes = project
        .processes
        .iter()
        .map(|p| {
            let mut counts = NcCounts::default();
            for o in p.configuration_items.iter().flat_map(|i| &i.observations) {
                counts.add(o.state);
            }
            totals.merge(&counts);
            ProcessNcCounts {
                process_id: p.process_id.clone(),
                name: p.name.clone(),
                counts,
            }
        })
        .collect();
    NonConformityMetrics {
        project_id: project.project_id().to_string(),
        processes,
        totals,
    }
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ViewError {
    #[error("unknown selector {0:?}")]
    UnknownSelector(String),
}

impl ViewError {
    pub fn code(&self) -> &'static str {
        "UnknownSelector"
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ProcessStatusRow {
    pub process_id: String,
    pub name: String,
    pub status: Status,
    pub pending_reason_count: usize,
}

/// Project board: one row per verification process.
pub fn view_project_status(project: &Project) -> Vec<ProcessStatusRow> {
    project
        .processes
        .iter()
        .map(|p| {
            let r = process_status(p);
            ProcessStatusRow {
                process_id: p.process_id.clone(),
                name: p.name.clone(),
                status: r.process_status,
                pending_reason_count: r.pending_reasons.len(),
            }
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct QuestionRow {
    pub question_id: String,
    pub text: String,
    pub objective_refs: Vec<String>,
    pub answer: Option<Answer>,
}

fn question_rows(c: &ChecklistInstance) -> Vec<QuestionRow> {
    c.questions
        .iter()
        .map(|q| QuestionRow {
            question_id: q.question_id.clone(),
            text: q.text.clone(),
            objective_refs: q.objective_refs.clone(),
            answer: c.answer(&q.question_id).cloned(),
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ProcessView {
    pub process_id: String,
    pub name: String,
    pub checklist_id: String,
    pub pc_status: Status,
    pub process_status: Status,
    pub questions: Vec<QuestionRow>,
    pub pending_reasons: Vec<PendingReason>,
}

pub fn view_process_status(project: &Project, process_id: &str) -> Result<ProcessView, ViewError> {
    let p = project
        .process(process_id)
        .ok_or_else(|| ViewError::UnknownSelector(process_id.to_string()))?;
    let r = process_status(p);
    Ok(ProcessView {
        process_id: p.process_id.clone(),
        name: p.name.clone(),
        checklist_id: p.process_checklist.instance_id.clone(),
        pc_status: r.pc_status,
        process_status: r.process_status,
        questions: question_rows(&p.process_checklist),
        pending_reasons: r.pending_reasons,
    })
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ItemRow {
    pub item_id: String,
    pub process_id: String,
    pub document_spec_ref: String,
    pub title: String,
    pub version_label: String,
    pub checklist_id: String,
    pub pdc_status: Status,
    pub observations_status: Status,
    pub item_status: Status,
    pub observation_count: usize,
}

fn item_row(item: &ConfigurationItem) -> ItemRow {
    let r = item_status(item);
    ItemRow {
        item_id: item.item_id.clone(),
        process_id: item.owning_process.clone(),
        document_spec_ref: item.document_spec_ref.clone(),
        title: item.title.clone(),
        version_label: item.version_label.clone(),
        checklist_id: item.document_checklist.instance_id.clone(),
        pdc_status: r.pdc_status,
        observations_status: r.observations_status,
        item_status: r.item_status,
        observation_count: item.observations.len(),
    }
}

/// Items of one process, or of the whole project when `process_id` is `None`.
pub fn view_configuration_items(
    project: &Project,
    process_id: Option<&str>,
) -> Result<Vec<ItemRow>, ViewError> {
    match process_id {
        Some(id) => {
            let p = project
                .process(id)
                .ok_or_else(|| ViewError::UnknownSelector(id.to_string()))?;
            Ok(p.configuration_items.iter().map(item_row).collect())
        }
        None => Ok(project.items().map(item_row).collect()),
    }
}

pub fn view_observations(project: &Project, item_id: &str) -> Result<Vec<Observation>, ViewError> {
    project
        .item(item_id)
        .map(|i| i.observations.clone())
        .ok_or_else(|| ViewError::UnknownSelector(item_id.to_string()))
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ItemView {
    pub item: ItemRow,
    pub questions: Vec<QuestionRow>,
    pub observations: Vec<Observation>,
}

pub fn view_item(project: &Project, item_id: &str) -> Result<ItemView, ViewError> {
    let item = project
        .item(item_id)
        .ok_or_else(|| ViewError::UnknownSelector(item_id.to_string()))?;
    Ok(ItemView {
        item: item_row(item),
        questions: question_rows(&item.document_checklist),
        observations: item.observations.clone(),
    })
}
