//! Brute-force evaluator of the textual project-status rule.
//!
//! Pending is assigned when any question of a process or configuration-item
//! checklist is unanswered or answered negatively, or when any comment on a
//! configuration item has not been addressed (closed). Completed otherwise.
//! The project is completed exactly when every process is.
//!
//! Deliberately written against the raw data only: it never calls the
//! status module or the checklist helpers it is meant to check.

use veritrack_core::project::{Answer, ObservationState, Project};
use veritrack_core::Status;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Verdict {
    pub project: Status,
    pub processes: Vec<Status>,
    /// Per process, per owned item.
    pub items: Vec<Vec<Status>>,
}

fn status(pending: bool) -> Status {
    if pending {
        Status::Pending
    } else {
        Status::Completed
    }
}

fn question_blocks(answer: Option<&Answer>) -> bool {
    match answer {
        None => true,
        Some(Answer::No) => true,
        Some(Answer::Yes) | Some(Answer::NA { .. }) => false,
    }
}

pub fn evaluate(project: &Project) -> Verdict {
    let mut processes = Vec::new();
    let mut items = Vec::new();
    let mut project_pending = false;
    for process in &project.processes {
        let pc = &process.process_checklist;
        let mut process_pending = false;
        for q in &pc.questions {
            if question_blocks(pc.answers.get(&q.question_id)) {
                process_pending = true;
            }
        }
        let mut item_verdicts = Vec::new();
        for item in &process.configuration_items {
            let pdc = &item.document_checklist;
            let mut item_pending = false;
            for q in &pdc.questions {
                if question_blocks(pdc.answers.get(&q.question_id)) {
                    item_pending = true;
                }
            }
            for o in &item.observations {
                if o.state != ObservationState::Closed {
                    item_pending = true;
                }
            }
            if item_pending {
                process_pending = true;
            }
            item_verdicts.push(status(item_pending));
        }
        if process_pending {
            project_pending = true;
        }
        processes.push(status(process_pending));
        items.push(item_verdicts);
    }
    Verdict {
        project: status(project_pending),
        processes,
        items,
    }
}

/// Projects a full status report onto the same shape as a [`Verdict`].
pub fn verdict_of(report: &veritrack_core::status::ProjectStatusReport) -> Verdict {
    Verdict {
        project: report.project_status,
        processes: report.processes.iter().map(|p| p.process_status).collect(),
        items: report
            .processes
            .iter()
            .map(|p| p.items.iter().map(|i| i.item_status).collect())
            .collect(),
    }
}
