//! The write path vocabulary.
//!
//! A [`Command`] is what a caller asks for; an [`Event`] is what the audit
//! log records once the command succeeded. They differ only where the
//! platform assigns something the caller did not choose (observation ids)
//! or captures context needed for replay (the norm template at creation).

use std::sync::Arc;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};

use crate::access::Role;
use crate::canonical::to_canonical_value;
use crate::norm::NormTemplate;
use crate::project::{
    observation_id, Answer, ObservationState, ParameterizationEdit, Project, ProjectError,
    ProjectParameterization,
};

/// A state change requested against an existing project.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum Command {
    AnswerChecklist {
        checklist_id: String,
        question_id: String,
        answer: Answer,
    },
    RegisterItem {
        process_id: String,
        item_id: String,
        spec_id: String,
        title: String,
        version_label: String,
    },
    OpenObservation {
        item_id: String,
        text: String,
    },
    TransitionObservation {
        observation_id: String,
        to_state: ObservationState,
        comment: String,
    },
    AssignUser {
        user_id: String,
        role: Role,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        display_name: Option<String>,
    },
    EditParameterization {
        edit: ParameterizationEdit,
    },
}

/// One recorded project mutation. Serialized adjacently tagged so a log
/// record carries `event_type` and `payload` side by side.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "event_type", content = "payload")]
#[allow(clippy::large_enum_variant)]
pub enum Event {
    ProjectCreated {
        params: ProjectParameterization,
        norm: NormTemplate,
    },
    ChecklistAnswered {
        checklist_id: String,
        question_id: String,
        answer: Answer,
    },
    ItemRegistered {
        process_id: String,
        item_id: String,
        spec_id: String,
        title: String,
        version_label: String,
    },
    ObservationOpened {
        observation_id: String,
        item_id: String,
        text: String,
    },
    ObservationTransitioned {
        observation_id: String,
        to_state: ObservationState,
        comment: String,
    },
    UserAssigned {
        user_id: String,
        role: Role,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        display_name: Option<String>,
    },
    ParameterizationEdited {
        edit: ParameterizationEdit,
    },
}

impl Event {
    pub fn type_name(&self) -> &'static str {
        match self {
            Event::ProjectCreated { .. } => "ProjectCreated",
            Event::ChecklistAnswered { .. } => "ChecklistAnswered",
            Event::ItemRegistered { .. } => "ItemRegistered",
            Event::ObservationOpened { .. } => "ObservationOpened",
            Event::ObservationTransitioned { .. } => "ObservationTransitioned",
            Event::UserAssigned { .. } => "UserAssigned",
            Event::ParameterizationEdited { .. } => "ParameterizationEdited",
        }
    }
}

impl Command {
    /// The event this command records when applied to `project` now.
    pub fn to_event(&self, project: &Project) -> Event {
        match self.clone() {
            Command::AnswerChecklist {
                checklist_id,
                question_id,
                answer,
            } => Event::ChecklistAnswered {
                checklist_id,
                question_id,
                answer,
            },
            Command::RegisterItem {
                process_id,
                item_id,
                spec_id,
                title,
                version_label,
            } => Event::ItemRegistered {
                process_id,
                item_id,
                spec_id,
                title,
                version_label,
            },
            Command::OpenObservation { item_id, text } => Event::ObservationOpened {
                observation_id: observation_id(project.next_observation_serial),
                item_id,
                text,
            },
            Command::TransitionObservation {
                observation_id,
                to_state,
                comment,
            } => Event::ObservationTransitioned {
                observation_id,
                to_state,
                comment,
            },
            Command::AssignUser {
                user_id,
                role,
                display_name,
            } => Event::UserAssigned {
                user_id,
                role,
                display_name,
            },
            Command::EditParameterization { edit } => Event::ParameterizationEdited { edit },
        }
    }
}

/// Why an event could not be applied to a project.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ApplyError {
    Rejected(ProjectError),
    /// The event is structurally out of place (e.g. a second creation, or
    /// an observation id that disagrees with the project's next serial).
    OutOfSequence(String),
}

impl From<ProjectError> for ApplyError {
    fn from(e: ProjectError) -> Self {
        ApplyError::Rejected(e)
    }
}

/// Creates a project from a `ProjectCreated` event.
pub fn apply_creation(event: &Event, at: DateTime<Utc>) -> Result<Project, ApplyError> {
    match event {
        Event::ProjectCreated { params, norm } => {
            norm.validate()
                .map_err(|e| ApplyError::OutOfSequence(format!("embedded norm invalid: {e}")))?;
            Ok(Project::create(params.clone(), Arc::new(norm.clone()), at)?)
        }
        other => Err(ApplyError::OutOfSequence(format!(
            "expected ProjectCreated, found {}",
            other.type_name()
        ))),
    }
}

/// Applies a non-creation event through the project's own operations and
/// returns the affected entity as JSON.
pub fn apply_event(
    project: &mut Project,
    actor: &str,
    at: DateTime<Utc>,
    event: &Event,
) -> Result<serde_json::Value, ApplyError> {
    let value = match event {
        Event::ProjectCreated { .. } => {
            return Err(ApplyError::OutOfSequence(
                "ProjectCreated on an existing project".into(),
            ))
        }
        Event::ChecklistAnswered {
            checklist_id,
            question_id,
            answer,
        } => to_canonical_value(project.answer_checklist(
            actor,
            checklist_id,
            question_id,
            answer.clone(),
            at,
        )?),
        Event::ItemRegistered {
            process_id,
            item_id,
            spec_id,
            title,
            version_label,
        } => to_canonical_value(project.register_configuration_item(
            actor,
            process_id,
            item_id,
            spec_id,
            title,
            version_label,
            at,
        )?),
        Event::ObservationOpened {
            observation_id: expected,
            item_id,
            text,
        } => {
            let assigned = observation_id(project.next_observation_serial);
            if &assigned != expected {
                return Err(ApplyError::OutOfSequence(format!(
                    "observation id {expected:?} recorded where {assigned:?} is next"
                )));
            }
            to_canonical_value(project.open_observation(actor, item_id, text, at)?)
        }
        Event::ObservationTransitioned {
            observation_id,
            to_state,
            comment,
        } => to_canonical_value(project.transition_observation(
            actor,
            observation_id,
            *to_state,
            comment,
            at,
        )?),
        Event::UserAssigned {
            user_id,
            role,
            display_name,
        } => to_canonical_value(project.assign_user(
            actor,
            user_id,
            *role,
            display_name.as_deref(),
            at,
        )?),
        Event::ParameterizationEdited { edit } => {
            to_canonical_value(project.edit_parameterization(actor, edit, at)?)
        }
    };
    Ok(value)
}
