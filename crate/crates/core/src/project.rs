//! Monitored projects and every state-changing action on them.
//!
//! A [`Project`] is instantiated from a [`ProjectParameterization`] against a
//! norm template. Each selected verification process owns one process
//! checklist and a list of configuration items; each item owns a document
//! checklist and its observations. Together these form the project's
//! element set.
//!
//! Mutating methods take the acting user and the wall-clock instant of the
//! action, check the permission matrix, validate, and only then mutate.
//! A method that returns `Err` leaves the project untouched.

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::fmt;
use std::sync::Arc;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::access::{authorize, Action, Role};
use crate::norm::{ChecklistScope, ChecklistTemplate, NormError, NormRegistry, NormTemplate};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ProjectError {
    #[error("unknown norm {0:?}")]
    UnknownNorm(String),
    #[error("unknown assurance level {0:?}")]
    UnknownLevel(String),
    #[error("unknown process {0:?}")]
    UnknownProcess(String),
    #[error("unknown document spec {0:?}")]
    UnknownDocumentSpec(String),
    #[error("project has no user with role VerificationManager")]
    NoVerificationManager,
    #[error("document spec {spec_id:?} is not expected by {scope}")]
    DocumentKindUnassignable { spec_id: String, scope: String },
    #[error("{actor:?} is not permitted to {action}")]
    PermissionDenied { actor: String, action: Action },
    #[error("unknown checklist {0:?}")]
    UnknownChecklist(String),
    #[error("question {question:?} is not part of checklist {checklist:?}")]
    UnknownQuestion { checklist: String, question: String },
    #[error("a not-applicable answer requires a justification")]
    MissingJustification,
    #[error("configuration item {0:?} already exists")]
    DuplicateItemId(String),
    #[error("unknown configuration item {0:?}")]
    UnknownItem(String),
    #[error("{0} must not be empty")]
    EmptyText(&'static str),
    #[error("illegal observation transition {from} -> {to}")]
    IllegalTransition {
        from: ObservationState,
        to: ObservationState,
    },
    #[error("unknown observation {0:?}")]
    UnknownObservation(String),
    #[error("cannot remove the last verification manager {0:?}")]
    LastManagerRemoval(String),
    #[error("invalid parameterization: {0}")]
    InvalidParameterization(String),
}

impl ProjectError {
    /// Stable machine-readable name, shared by the CLI and the HTTP API.
    pub fn code(&self) -> &'static str {
        match self {
            ProjectError::UnknownNorm(_) => "UnknownNorm",
            ProjectError::UnknownLevel(_) => "UnknownLevel",
            ProjectError::UnknownProcess(_) => "UnknownProcess",
            ProjectError::UnknownDocumentSpec(_) => "UnknownDocumentSpec",
            ProjectError::NoVerificationManager => "NoVerificationManager",
            ProjectError::DocumentKindUnassignable { .. } => "DocumentKindUnassignable",
            ProjectError::PermissionDenied { .. } => "PermissionDenied",
            ProjectError::UnknownChecklist(_) => "UnknownChecklist",
            ProjectError::UnknownQuestion { .. } => "UnknownQuestion",
            ProjectError::MissingJustification => "MissingJustification",
            ProjectError::DuplicateItemId(_) => "DuplicateItemId",
            ProjectError::UnknownItem(_) => "UnknownItem",
            ProjectError::EmptyText(_) => "EmptyText",
            ProjectError::IllegalTransition { .. } => "IllegalTransition",
            ProjectError::UnknownObservation(_) => "UnknownObservation",
            ProjectError::LastManagerRemoval(_) => "LastManagerRemoval",
            ProjectError::InvalidParameterization(_) => "InvalidParameterization",
        }
    }
}

impl From<NormError> for ProjectError {
    fn from(e: NormError) -> Self {
        match e {
            NormError::UnknownLevel(l) => ProjectError::UnknownLevel(l),
            NormError::UnknownNorm(n) => ProjectError::UnknownNorm(n),
            other => ProjectError::InvalidParameterization(other.to_string()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct User {
    pub user_id: String,
    pub display_name: String,
    pub role: Role,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InitialDocument {
    pub spec_id: String,
    pub title: String,
    /// Defaults to the spec id.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub item_id: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub version_label: Option<String>,
}

pub const DEFAULT_VERSION_LABEL: &str = "initial";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProjectParameterization {
    pub project_id: String,
    pub norm_ref: String,
    pub assurance_level: String,
    pub life_cycle: String,
    pub selected_processes: Vec<String>,
    #[serde(default)]
    pub initial_documents: Vec<InitialDocument>,
    pub users: Vec<User>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "value")]
pub enum Answer {
    Yes,
    No,
    NA { justification: String },
}

impl Answer {
    pub fn is_negative(&self) -> bool {
        matches!(self, Answer::No)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChecklistQuestion {
    pub question_id: String,
    pub text: String,
    pub objective_refs: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChecklistInstance {
    pub instance_id: String,
    pub template_ref: String,
    pub scope: ChecklistScope,
    /// The questions asked at the project's assurance level, template order.
    pub questions: Vec<ChecklistQuestion>,
    pub answers: BTreeMap<String, Answer>,
}

impl ChecklistInstance {
    fn instantiate(
        instance_id: String,
        template: &ChecklistTemplate,
        norm: &NormTemplate,
        level: &str,
    ) -> Self {
        Self {
            instance_id,
            template_ref: template.template_id.clone(),
            scope: template.scope,
            questions: norm
                .applicable_questions(template, level)
                .map(|q| ChecklistQuestion {
                    question_id: q.question_id.clone(),
                    text: q.text.clone(),
                    objective_refs: q.objective_refs.clone(),
                })
                .collect(),
            answers: BTreeMap::new(),
        }
    }

    pub fn has_question(&self, question_id: &str) -> bool {
        self.questions.iter().any(|q| q.question_id == question_id)
    }

    pub fn answer(&self, question_id: &str) -> Option<&Answer> {
        self.answers.get(question_id)
    }

    /// Every question has an answer.
    pub fn is_filled(&self) -> bool {
        self.questions
            .iter()
            .all(|q| self.answers.contains_key(&q.question_id))
    }

    pub fn answered_count(&self) -> usize {
        self.questions
            .iter()
            .filter(|q| self.answers.contains_key(&q.question_id))
            .count()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ObservationState {
    Open,
    Resolved,
    Closed,
}

impl ObservationState {
    /// The permission an edge requires, or `None` when the edge is illegal.
    pub fn edge_action(from: ObservationState, to: ObservationState) -> Option<Action> {
        use ObservationState::*;
        match (from, to) {
            (Open, Resolved) => Some(Action::ResolveObservation),
            (Resolved, Closed) => Some(Action::CloseObservation),
            (Resolved, Open) => Some(Action::ReopenObservation),
            _ => None,
        }
    }
}

impl fmt::Display for ObservationState {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Debug::fmt(self, f)
    }
}

impl std::str::FromStr for ObservationState {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "open" => Ok(ObservationState::Open),
            "resolved" => Ok(ObservationState::Resolved),
            "closed" => Ok(ObservationState::Closed),
            _ => Err(format!("unknown observation state {s:?}")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Transition {
    pub actor: String,
    pub from: ObservationState,
    pub to: ObservationState,
    pub comment: String,
    pub timestamp: DateTime<Utc>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Observation {
    pub observation_id: String,
    /// Project-wide opening order; ties on `opened_at` are broken by it.
    pub serial: u64,
    pub item_ref: String,
    pub author: String,
    pub text: String,
    pub opened_at: DateTime<Utc>,
    pub state: ObservationState,
    pub transitions: Vec<Transition>,
}

impl Observation {
    /// Folds the transition history from `Open`, checking every edge.
    pub fn replay_state(&self) -> Result<ObservationState, String> {
        let mut state = ObservationState::Open;
        let mut last = self.opened_at;
        for (i, t) in self.transitions.iter().enumerate() {
            if t.from != state {
                return Err(format!(
                    "transition {i} starts from {} but state is {state}",
                    t.from
                ));
            }
            if ObservationState::edge_action(t.from, t.to).is_none() {
                return Err(format!("transition {i} uses illegal edge {} -> {}", t.from, t.to));
            }
            if t.timestamp < last {
                return Err(format!("transition {i} goes back in time"));
            }
            last = t.timestamp;
            state = t.to;
        }
        Ok(state)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfigurationItem {
    pub item_id: String,
    pub document_spec_ref: String,
    pub title: String,
    pub version_label: String,
    pub document_checklist: ChecklistInstance,
    pub observations: Vec<Observation>,
    pub owning_process: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct VerificationProcess {
    pub process_id: String,
    pub name: String,
    /// Document spec ids this process accepts as configuration items.
    pub expected_documents: Vec<String>,
    pub process_checklist: ChecklistInstance,
    pub configuration_items: Vec<ConfigurationItem>,
}

/// One member of a project's element set.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
#[serde(tag = "kind", content = "id")]
pub enum ElementRef {
    Checklist(String),
    Item(String),
    Observation(String),
}

/// Changes a verification manager may make to a running project.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ParameterizationEdit {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub life_cycle: Option<String>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub add_processes: Vec<String>,
}

#[derive(Debug, Clone, Serialize)]
pub struct Project {
    pub parameterization: ProjectParameterization,
    pub processes: Vec<VerificationProcess>,
    pub created_at: DateTime<Utc>,
    pub next_observation_serial: u64,
    #[serde(skip)]
    pub norm: Arc<NormTemplate>,
}

impl PartialEq for Project {
    fn eq(&self, other: &Self) -> bool {
        self.parameterization == other.parameterization
            && self.processes == other.processes
            && self.created_at == other.created_at
            && self.next_observation_serial == other.next_observation_serial
            && self.norm == other.norm
    }
}

pub fn process_checklist_id(process_id: &str) -> String {
    format!("PC-{process_id}")
}

pub fn document_checklist_id(item_id: &str) -> String {
    format!("PDC-{item_id}")
}

pub fn observation_id(serial: u64) -> String {
    format!("obs-{serial}")
}

fn non_empty(s: &str, what: &'static str) -> Result<(), ProjectError> {
    if s.trim().is_empty() {
        Err(ProjectError::EmptyText(what))
    } else {
        Ok(())
    }
}

/// Instantiates a project, resolving the norm through `registry`.
pub fn create_project(
    params: ProjectParameterization,
    registry: &NormRegistry,
    now: DateTime<Utc>,
) -> Result<Project, ProjectError> {
    let norm = registry.get(&params.norm_ref)?;
    Project::create(params, norm, now)
}

impl Project {
    /// Instantiates a project against an already-resolved norm.
    pub fn create(
        params: ProjectParameterization,
        norm: Arc<NormTemplate>,
        now: DateTime<Utc>,
    ) -> Result<Self, ProjectError> {
        if params.norm_ref != norm.norm_id {
            return Err(ProjectError::UnknownNorm(params.norm_ref.clone()));
        }
        non_empty(&params.project_id, "project_id")?;
        norm.level(&params.assurance_level)?;
        if params.selected_processes.is_empty() {
            return Err(ProjectError::InvalidParameterization(
                "selected_processes must not be empty".into(),
            ));
        }
        let mut seen = HashSet::new();
        for p in &params.selected_processes {
            if norm.process(p).is_none() {
                return Err(ProjectError::UnknownProcess(p.clone()));
            }
            if !seen.insert(p.as_str()) {
                return Err(ProjectError::InvalidParameterization(format!(
                    "process {p:?} selected twice"
                )));
            }
        }
        let mut user_ids = HashSet::new();
        for u in &params.users {
            non_empty(&u.user_id, "user_id")?;
            if !user_ids.insert(u.user_id.as_str()) {
                return Err(ProjectError::InvalidParameterization(format!(
                    "user {:?} listed twice",
                    u.user_id
                )));
            }
        }
        if !params
            .users
            .iter()
            .any(|u| u.role == Role::VerificationManager)
        {
            return Err(ProjectError::NoVerificationManager);
        }

        let mut project = Project {
            processes: Vec::new(),
            created_at: now,
            next_observation_serial: 1,
            norm,
            parameterization: params,
        };
        for process_id in project.parameterization.selected_processes.clone() {
            project.instantiate_process(&process_id);
        }
        for doc in project.parameterization.initial_documents.clone() {
            let process_id = project
                .processes
                .iter()
                .find(|p| p.expected_documents.contains(&doc.spec_id))
                .map(|p| p.process_id.clone());
            if project.norm.document(&doc.spec_id).is_none() {
                return Err(ProjectError::UnknownDocumentSpec(doc.spec_id));
            }
            let Some(process_id) = process_id else {
                return Err(ProjectError::DocumentKindUnassignable {
                    spec_id: doc.spec_id,
                    scope: "any selected process".into(),
                });
            };
            let item_id = doc.item_id.clone().unwrap_or_else(|| doc.spec_id.clone());
            let version = doc
                .version_label
                .clone()
                .unwrap_or_else(|| DEFAULT_VERSION_LABEL.to_string());
            project.insert_item(&process_id, &item_id, &doc.spec_id, &doc.title, &version)?;
        }
        Ok(project)
    }

    fn instantiate_process(&mut self, process_id: &str) {
        let template = self
            .norm
            .process(process_id)
            .expect("process ids are checked before instantiation");
        let pc = ChecklistInstance::instantiate(
            process_checklist_id(process_id),
            &template.checklist_template,
            &self.norm,
            &self.parameterization.assurance_level,
        );
        self.processes.push(VerificationProcess {
            process_id: template.process_id.clone(),
            name: template.name.clone(),
            expected_documents: template.expected_document_kinds.clone(),
            process_checklist: pc,
            configuration_items: Vec::new(),
        });
    }

    fn insert_item(
        &mut self,
        process_id: &str,
        item_id: &str,
        spec_id: &str,
        title: &str,
        version_label: &str,
    ) -> Result<(), ProjectError> {
        non_empty(item_id, "item_id")?;
        non_empty(title, "title")?;
        let spec = self
            .norm
            .document(spec_id)
            .ok_or_else(|| ProjectError::UnknownDocumentSpec(spec_id.to_string()))?;
        let pidx = self.process_index(process_id)?;
        if !self.processes[pidx]
            .expected_documents
            .iter()
            .any(|s| s == spec_id)
        {
            return Err(ProjectError::DocumentKindUnassignable {
                spec_id: spec_id.to_string(),
                scope: format!("process {process_id:?}"),
            });
        }
        if self.item(item_id).is_some() {
            return Err(ProjectError::DuplicateItemId(item_id.to_string()));
        }
        let template = self
            .norm
            .document_checklist(&spec.document_checklist_template)
            .expect("validated norm resolves document checklists");
        let pdc = ChecklistInstance::instantiate(
            document_checklist_id(item_id),
            template,
            &self.norm,
            &self.parameterization.assurance_level,
        );
        self.processes[pidx]
            .configuration_items
            .push(ConfigurationItem {
                item_id: item_id.to_string(),
                document_spec_ref: spec_id.to_string(),
                title: title.to_string(),
                version_label: version_label.to_string(),
                document_checklist: pdc,
                observations: Vec::new(),
                owning_process: process_id.to_string(),
            });
        Ok(())
    }

    pub fn project_id(&self) -> &str {
        &self.parameterization.project_id
    }

    pub fn users(&self) -> &[User] {
        &self.parameterization.users
    }

    pub fn role_of(&self, user_id: &str) -> Option<Role> {
        self.users()
            .iter()
            .find(|u| u.user_id == user_id)
            .map(|u| u.role)
    }

    /// Fails with `PermissionDenied` unless `actor` is a project user whose
    /// role allows `action`.
    pub fn require(&self, actor: &str, action: Action) -> Result<Role, ProjectError> {
        match self.role_of(actor) {
            Some(role) if authorize(role, action).is_allowed() => Ok(role),
            _ => Err(ProjectError::PermissionDenied {
                actor: actor.to_string(),
                action,
            }),
        }
    }

    pub fn process(&self, process_id: &str) -> Option<&VerificationProcess> {
        self.processes.iter().find(|p| p.process_id == process_id)
    }

    fn process_index(&self, process_id: &str) -> Result<usize, ProjectError> {
        self.processes
            .iter()
            .position(|p| p.process_id == process_id)
            .ok_or_else(|| ProjectError::UnknownProcess(process_id.to_string()))
    }

    pub fn items(&self) -> impl Iterator<Item = &ConfigurationItem> {
        self.processes
            .iter()
            .flat_map(|p| p.configuration_items.iter())
    }

    pub fn item(&self, item_id: &str) -> Option<&ConfigurationItem> {
        self.items().find(|i| i.item_id == item_id)
    }

    fn item_mut(&mut self, item_id: &str) -> Option<&mut ConfigurationItem> {
        self.processes
            .iter_mut()
            .flat_map(|p| p.configuration_items.iter_mut())
            .find(|i| i.item_id == item_id)
    }

    pub fn checklists(&self) -> impl Iterator<Item = &ChecklistInstance> {
        self.processes.iter().flat_map(|p| {
            std::iter::once(&p.process_checklist)
                .chain(p.configuration_items.iter().map(|i| &i.document_checklist))
        })
    }

    pub fn checklist(&self, instance_id: &str) -> Option<&ChecklistInstance> {
        self.checklists().find(|c| c.instance_id == instance_id)
    }

    fn checklist_mut(&mut self, instance_id: &str) -> Option<&mut ChecklistInstance> {
        self.processes
            .iter_mut()
            .flat_map(|p| {
                std::iter::once(&mut p.process_checklist).chain(
                    p.configuration_items
                        .iter_mut()
                        .map(|i| &mut i.document_checklist),
                )
            })
            .find(|c| c.instance_id == instance_id)
    }

    pub fn observations(&self) -> impl Iterator<Item = &Observation> {
        self.items().flat_map(|i| i.observations.iter())
    }

    pub fn observation(&self, observation_id: &str) -> Option<&Observation> {
        self.observations()
            .find(|o| o.observation_id == observation_id)
    }

    fn observation_mut(&mut self, observation_id: &str) -> Option<&mut Observation> {
        self.processes
            .iter_mut()
            .flat_map(|p| p.configuration_items.iter_mut())
            .flat_map(|i| i.observations.iter_mut())
            .find(|o| o.observation_id == observation_id)
    }

    /// The set of monitored elements, gathered by full traversal.
    pub fn element_set(&self) -> BTreeSet<ElementRef> {
        let mut set = BTreeSet::new();
        for p in &self.processes {
            set.insert(ElementRef::Checklist(p.process_checklist.instance_id.clone()));
            for item in &p.configuration_items {
                set.insert(ElementRef::Item(item.item_id.clone()));
                set.insert(ElementRef::Checklist(
                    item.document_checklist.instance_id.clone(),
                ));
                for o in &item.observations {
                    set.insert(ElementRef::Observation(o.observation_id.clone()));
                }
            }
        }
        set
    }

    /// Walks the whole project and reports the first broken structural
    /// invariant: duplicate element ids, wrong owner back-references,
    /// answers outside the question set, unjustified NA answers, or an
    /// observation history that does not replay to its current state.
    pub fn check_invariants(&self) -> Result<(), String> {
        let mut ids = HashSet::new();
        let mut element_count = 0usize;
        let mut insert = |e: ElementRef| {
            element_count += 1;
            if ids.insert(e.clone()) {
                Ok(())
            } else {
                Err(format!("duplicate element {e:?}"))
            }
        };
        if self.processes.len() != self.parameterization.selected_processes.len() {
            return Err("process count differs from selected processes".into());
        }
        for (p, selected) in self
            .processes
            .iter()
            .zip(&self.parameterization.selected_processes)
        {
            if &p.process_id != selected {
                return Err(format!("process {:?} out of order", p.process_id));
            }
            check_checklist(&p.process_checklist, ChecklistScope::Process)?;
            insert(ElementRef::Checklist(p.process_checklist.instance_id.clone()))?;
            for item in &p.configuration_items {
                if item.owning_process != p.process_id {
                    return Err(format!("item {:?} has wrong owner", item.item_id));
                }
                check_checklist(&item.document_checklist, ChecklistScope::Document)?;
                insert(ElementRef::Item(item.item_id.clone()))?;
                insert(ElementRef::Checklist(
                    item.document_checklist.instance_id.clone(),
                ))?;
                for o in &item.observations {
                    if o.item_ref != item.item_id {
                        return Err(format!("observation {:?} has wrong item", o.observation_id));
                    }
                    if o.serial >= self.next_observation_serial {
                        return Err(format!("observation {:?} serial ahead", o.observation_id));
                    }
                    let replayed = o
                        .replay_state()
                        .map_err(|e| format!("observation {:?}: {e}", o.observation_id))?;
                    if replayed != o.state {
                        return Err(format!(
                            "observation {:?} replays to {replayed} but is {}",
                            o.observation_id, o.state
                        ));
                    }
                    insert(ElementRef::Observation(o.observation_id.clone()))?;
                }
            }
        }
        if element_count != self.element_set().len() {
            return Err("element set is not closed under traversal".into());
        }
        Ok(())
    }

    pub fn answer_checklist(
        &mut self,
        actor: &str,
        checklist_id: &str,
        question_id: &str,
        answer: Answer,
        _now: DateTime<Utc>,
    ) -> Result<&ChecklistInstance, ProjectError> {
        let checklist = self
            .checklist(checklist_id)
            .ok_or_else(|| ProjectError::UnknownChecklist(checklist_id.to_string()))?;
        let action = match checklist.scope {
            ChecklistScope::Process => Action::AnswerProcessChecklist,
            ChecklistScope::Document => Action::AnswerDocumentChecklist,
        };
        self.require(actor, action)?;
        if !checklist.has_question(question_id) {
            return Err(ProjectError::UnknownQuestion {
                checklist: checklist_id.to_string(),
                question: question_id.to_string(),
            });
        }
        if let Answer::NA { justification } = &answer {
            if justification.trim().is_empty() {
                return Err(ProjectError::MissingJustification);
            }
        }
        let checklist = self.checklist_mut(checklist_id).expect("checked above");
        checklist.answers.insert(question_id.to_string(), answer);
        Ok(checklist)
    }

    #[allow(clippy::too_many_arguments)]
    pub fn register_configuration_item(
        &mut self,
        actor: &str,
        process_id: &str,
        item_id: &str,
        spec_id: &str,
        title: &str,
        version_label: &str,
        _now: DateTime<Utc>,
    ) -> Result<&ConfigurationItem, ProjectError> {
        self.require(actor, Action::RegisterItem)?;
        non_empty(version_label, "version_label")?;
        self.insert_item(process_id, item_id, spec_id, title, version_label)?;
        Ok(self.item(item_id).expect("just inserted"))
    }

    pub fn open_observation(
        &mut self,
        actor: &str,
        item_id: &str,
        text: &str,
        now: DateTime<Utc>,
    ) -> Result<&Observation, ProjectError> {
        self.require(actor, Action::OpenObservation)?;
        if self.item(item_id).is_none() {
            return Err(ProjectError::UnknownItem(item_id.to_string()));
        }
        non_empty(text, "observation text")?;
        let serial = self.next_observation_serial;
        self.next_observation_serial += 1;
        let item = self.item_mut(item_id).expect("checked above");
        item.observations.push(Observation {
            observation_id: observation_id(serial),
            serial,
            item_ref: item_id.to_string(),
            author: actor.to_string(),
            text: text.to_string(),
            opened_at: now,
            state: ObservationState::Open,
            transitions: Vec::new(),
        });
        Ok(item.observations.last().expect("just pushed"))
    }

    pub fn transition_observation(
        &mut self,
        actor: &str,
        observation_id: &str,
        to: ObservationState,
        comment: &str,
        now: DateTime<Utc>,
    ) -> Result<&Observation, ProjectError> {
        let obs = self
            .observation(observation_id)
            .ok_or_else(|| ProjectError::UnknownObservation(observation_id.to_string()))?;
        let from = obs.state;
        let action = ObservationState::edge_action(from, to)
            .ok_or(ProjectError::IllegalTransition { from, to })?;
        self.require(actor, action)?;
        non_empty(comment, "transition comment")?;
        let last = obs
            .transitions
            .last()
            .map(|t| t.timestamp)
            .unwrap_or(obs.opened_at);
        let obs = self.observation_mut(observation_id).expect("checked above");
        obs.transitions.push(Transition {
            actor: actor.to_string(),
            from,
            to,
            comment: comment.to_string(),
            // History stays monotone even if the caller's clock steps back.
            timestamp: now.max(last),
        });
        obs.state = to;
        Ok(obs)
    }

    pub fn assign_user(
        &mut self,
        actor: &str,
        user_id: &str,
        role: Role,
        display_name: Option<&str>,
        _now: DateTime<Utc>,
    ) -> Result<&User, ProjectError> {
        self.require(actor, Action::ManageUsers)?;
        non_empty(user_id, "user_id")?;
        let managers = self
            .users()
            .iter()
            .filter(|u| u.role == Role::VerificationManager)
            .count();
        let users = &mut self.parameterization.users;
        let idx = match users.iter().position(|u| u.user_id == user_id) {
            Some(idx) => {
                let user = &mut users[idx];
                if user.role == Role::VerificationManager
                    && role != Role::VerificationManager
                    && managers == 1
                {
                    return Err(ProjectError::LastManagerRemoval(user_id.to_string()));
                }
                user.role = role;
                if let Some(name) = display_name {
                    user.display_name = name.to_string();
                }
                idx
            }
            None => {
                users.push(User {
                    user_id: user_id.to_string(),
                    display_name: display_name.unwrap_or(user_id).to_string(),
                    role,
                });
                users.len() - 1
            }
        };
        Ok(&self.parameterization.users[idx])
    }

    pub fn edit_parameterization(
        &mut self,
        actor: &str,
        edit: &ParameterizationEdit,
        _now: DateTime<Utc>,
    ) -> Result<&ProjectParameterization, ProjectError> {
        self.require(actor, Action::EditProjectParameterization)?;
        if let Some(lc) = &edit.life_cycle {
            non_empty(lc, "life_cycle")?;
        }
        let mut seen: HashSet<&str> = self
            .parameterization
            .selected_processes
            .iter()
            .map(String::as_str)
            .collect();
        for p in &edit.add_processes {
            if self.norm.process(p).is_none() {
                return Err(ProjectError::UnknownProcess(p.clone()));
            }
            if !seen.insert(p) {
                return Err(ProjectError::InvalidParameterization(format!(
                    "process {p:?} selected twice"
                )));
            }
        }
        if let Some(lc) = &edit.life_cycle {
            self.parameterization.life_cycle = lc.clone();
        }
        for p in &edit.add_processes {
            self.parameterization.selected_processes.push(p.clone());
            self.instantiate_process(p);
        }
        Ok(&self.parameterization)
    }
}

fn check_checklist(c: &ChecklistInstance, scope: ChecklistScope) -> Result<(), String> {
    if c.scope != scope {
        return Err(format!("checklist {:?} has scope {:?}", c.instance_id, c.scope));
    }
    for (q, a) in &c.answers {
        if !c.has_question(q) {
            return Err(format!("checklist {:?} answers unknown {q:?}", c.instance_id));
        }
        if let Answer::NA { justification } = a {
            if justification.trim().is_empty() {
                return Err(format!("checklist {:?}: unjustified NA", c.instance_id));
            }
        }
    }
    Ok(())
}
