//! Synthetic project builders: explicit shapes, random instances and a
//! bounded-exhaustive enumerator over answers and observation states.

use std::collections::BTreeMap;
use std::sync::Arc;

use chrono::{DateTime, Duration, Utc};
use rand::Rng;
use veritrack_core::access::Role;
use veritrack_core::norm::{load_norm_template, ChecklistScope, NormTemplate};
use veritrack_core::project::{
    Answer, ChecklistInstance, ChecklistQuestion, ConfigurationItem, Observation,
    ObservationState, Project, ProjectParameterization, Transition, User, VerificationProcess,
};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ItemShape {
    pub questions: usize,
    pub observations: usize,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ProcessShape {
    pub questions: usize,
    pub items: Vec<ItemShape>,
}

pub const VERIFIER: &str = "ver";
pub const MANAGER: &str = "vm";
pub const DEVELOPER: &str = "dev";

pub fn epoch() -> DateTime<Utc> {
    DateTime::from_timestamp(1_600_000_000, 0).expect("valid timestamp")
}

fn placeholder_norm() -> Arc<NormTemplate> {
    let text = r#"{
        "norm_id": "SYNTH", "title": "synthetic",
        "assurance_levels": [{"symbol": "L", "rank": 0, "failure_condition": "Major"}],
        "processes": [{"process_id": "p0", "name": "p0",
            "checklist_template": {"template_id": "t", "scope": "Process",
                "questions": [{"question_id": "q0", "text": "?"}]}}],
        "documents": [], "objectives": []
    }"#;
    Arc::new(load_norm_template(text.as_bytes()).expect("placeholder norm"))
}

fn checklist(id: String, scope: ChecklistScope, questions: usize) -> ChecklistInstance {
    ChecklistInstance {
        instance_id: id,
        template_ref: "t".into(),
        scope,
        questions: (0..questions)
            .map(|k| ChecklistQuestion {
                question_id: format!("q{k}"),
                text: format!("question {k}"),
                objective_refs: vec![],
            })
            .collect(),
        answers: BTreeMap::new(),
    }
}

fn observation(serial: u64, item: &str) -> Observation {
    Observation {
        observation_id: format!("obs-{serial}"),
        serial,
        item_ref: item.to_string(),
        author: VERIFIER.into(),
        text: format!("finding {serial}"),
        opened_at: epoch() + Duration::seconds(serial as i64),
        state: ObservationState::Open,
        transitions: vec![],
    }
}

/// Builds a project with the given shape: every question unanswered and
/// every observation open.
pub fn build(shape: &[ProcessShape]) -> Project {
    let mut serial = 1u64;
    let mut item_no = 0usize;
    let processes: Vec<VerificationProcess> = shape
        .iter()
        .enumerate()
        .map(|(p, ps)| {
            let process_id = format!("p{p}");
            let configuration_items = ps
                .items
                .iter()
                .map(|is| {
                    let item_id = format!("i{item_no}");
                    item_no += 1;
                    let observations = (0..is.observations)
                        .map(|_| {
                            let o = observation(serial, &item_id);
                            serial += 1;
                            o
                        })
                        .collect();
                    ConfigurationItem {
                        document_checklist: checklist(
                            format!("PDC-{item_id}"),
                            ChecklistScope::Document,
                            is.questions,
                        ),
                        item_id,
                        document_spec_ref: "DOC".into(),
                        title: "doc".into(),
                        version_label: "1".into(),
                        observations,
                        owning_process: process_id.clone(),
                    }
                })
                .collect();
            VerificationProcess {
                process_checklist: checklist(
                    format!("PC-{process_id}"),
                    ChecklistScope::Process,
                    ps.questions,
                ),
                name: process_id.to_uppercase(),
                process_id,
                expected_documents: vec!["DOC".into()],
                configuration_items,
            }
        })
        .collect();
    let user = |id: &str, role| User {
        user_id: id.into(),
        display_name: id.into(),
        role,
    };
    Project {
        parameterization: ProjectParameterization {
            project_id: "synthetic".into(),
            norm_ref: "SYNTH".into(),
            assurance_level: "L".into(),
            life_cycle: "V-Model".into(),
            selected_processes: processes.iter().map(|p| p.process_id.clone()).collect(),
            initial_documents: vec![],
            users: vec![
                user(MANAGER, Role::VerificationManager),
                user(VERIFIER, Role::Verifier),
                user(DEVELOPER, Role::Developer),
            ],
        },
        processes,
        created_at: epoch(),
        next_observation_serial: serial,
        norm: placeholder_norm(),
    }
}

fn answer_for(code: usize) -> Option<Answer> {
    match code {
        0 => None,
        1 => Some(Answer::Yes),
        2 => Some(Answer::No),
        _ => Some(Answer::NA {
            justification: "not applicable".into(),
        }),
    }
}

fn state_for(code: usize) -> ObservationState {
    match code {
        0 => ObservationState::Open,
        1 => ObservationState::Resolved,
        _ => ObservationState::Closed,
    }
}

/// Gives an observation a minimal legal history ending in `state`.
pub fn set_state_with_history(o: &mut Observation, state: ObservationState) {
    use ObservationState::*;
    let path: &[(ObservationState, ObservationState)] = match state {
        Open => &[],
        Resolved => &[(Open, Resolved)],
        Closed => &[(Open, Resolved), (Resolved, Closed)],
    };
    o.transitions = path
        .iter()
        .enumerate()
        .map(|(k, (from, to))| Transition {
            actor: if *to == Resolved { DEVELOPER } else { VERIFIER }.into(),
            from: *from,
            to: *to,
            comment: "generated".into(),
            timestamp: o.opened_at + Duration::seconds(k as i64 + 1),
        })
        .collect();
    o.state = state;
}

fn set_answer(c: &mut ChecklistInstance, question: usize, code: usize) {
    let qid = format!("q{question}");
    match answer_for(code) {
        Some(a) => {
            c.answers.insert(qid, a);
        }
        None => {
            c.answers.remove(&qid);
        }
    }
}

/// Random shape within the bounds, with random answers and observation
/// states (all histories legal).
pub fn random_project<R: Rng>(
    rng: &mut R,
    max_processes: usize,
    max_items_per_process: usize,
    max_questions: usize,
    max_observations_per_item: usize,
) -> Project {
    let shape: Vec<ProcessShape> = (0..rng.random_range(1..=max_processes))
        .map(|_| ProcessShape {
            questions: rng.random_range(0..=max_questions),
            items: (0..rng.random_range(0..=max_items_per_process))
                .map(|_| ItemShape {
                    questions: rng.random_range(0..=max_questions),
                    observations: rng.random_range(0..=max_observations_per_item),
                })
                .collect(),
        })
        .collect();
    let mut project = build(&shape);
    // Bias towards complete answers so that Completed statuses are common.
    let pick_answer = |rng: &mut R| {
        if rng.random_bool(0.7) {
            if rng.random_bool(0.8) {
                1
            } else {
                3
            }
        } else {
            rng.random_range(0..4)
        }
    };
    for p in &mut project.processes {
        for q in 0..p.process_checklist.questions.len() {
            let code = pick_answer(rng);
            set_answer(&mut p.process_checklist, q, code);
        }
        for item in &mut p.configuration_items {
            for q in 0..item.document_checklist.questions.len() {
                let code = pick_answer(rng);
                set_answer(&mut item.document_checklist, q, code);
            }
            for o in &mut item.observations {
                let code = if rng.random_bool(0.6) { 2 } else { rng.random_range(0..3) };
                set_state_with_history(o, state_for(code));
            }
        }
    }
    project
}

#[derive(Debug, Clone, Copy)]
enum Slot {
    ProcessAnswer { p: usize, q: usize },
    ItemAnswer { p: usize, i: usize, q: usize },
    Observation { p: usize, i: usize, o: usize },
}

impl Slot {
    fn radix(self) -> usize {
        match self {
            Slot::Observation { .. } => 3,
            _ => 4,
        }
    }

    fn set(self, project: &mut Project, code: usize) {
        match self {
            Slot::ProcessAnswer { p, q } => {
                set_answer(&mut project.processes[p].process_checklist, q, code)
            }
            Slot::ItemAnswer { p, i, q } => set_answer(
                &mut project.processes[p].configuration_items[i].document_checklist,
                q,
                code,
            ),
            Slot::Observation { p, i, o } => {
                project.processes[p].configuration_items[i].observations[o].state = state_for(code)
            }
        }
    }
}

/// Every structurally distinct shape within the bounds: 1..=`max_processes`
/// processes, at most `max_items` items in total (assigned to processes in
/// process order), 0..=`max_questions` questions per checklist and at most
/// `max_observations` observations in total.
pub fn shapes(
    max_processes: usize,
    max_items: usize,
    max_questions: usize,
    max_observations: usize,
) -> Vec<Vec<ProcessShape>> {
    let mut out = Vec::new();
    for np in 1..=max_processes {
        for ni in 0..=max_items {
            for owners in non_decreasing(ni, np) {
                let checklists = np + ni;
                for qcounts in all_tuples(checklists, max_questions + 1) {
                    for ocounts in all_tuples(ni, max_observations + 1) {
                        if ocounts.iter().sum::<usize>() > max_observations {
                            continue;
                        }
                        let mut shape: Vec<ProcessShape> = (0..np)
                            .map(|p| ProcessShape {
                                questions: qcounts[p],
                                items: vec![],
                            })
                            .collect();
                        for (k, owner) in owners.iter().enumerate() {
                            shape[*owner].items.push(ItemShape {
                                questions: qcounts[np + k],
                                observations: ocounts[k],
                            });
                        }
                        out.push(shape);
                    }
                }
            }
        }
    }
    out
}

fn all_tuples(len: usize, radix: usize) -> Vec<Vec<usize>> {
    let mut out = vec![vec![]];
    for _ in 0..len {
        out = out
            .into_iter()
            .flat_map(|t| {
                (0..radix).map(move |d| {
                    let mut t = t.clone();
                    t.push(d);
                    t
                })
            })
            .collect();
    }
    out
}

fn non_decreasing(len: usize, radix: usize) -> Vec<Vec<usize>> {
    all_tuples(len, radix)
        .into_iter()
        .filter(|t| t.windows(2).all(|w| w[0] <= w[1]))
        .collect()
}

/// Calls `f` on every answer/state combination of `shape`. Observation
/// states are set directly (histories are not maintained). Returns the
/// number of projects visited.
pub fn for_each_combination(shape: &[ProcessShape], mut f: impl FnMut(&Project)) -> u64 {
    let mut project = build(shape);
    let mut slots = Vec::new();
    for (p, ps) in shape.iter().enumerate() {
        slots.extend((0..ps.questions).map(|q| Slot::ProcessAnswer { p, q }));
        for (i, is) in ps.items.iter().enumerate() {
            slots.extend((0..is.questions).map(|q| Slot::ItemAnswer { p, i, q }));
            slots.extend((0..is.observations).map(|o| Slot::Observation { p, i, o }));
        }
    }
    let mut digits = vec![0usize; slots.len()];
    let mut visited = 0u64;
    loop {
        f(&project);
        visited += 1;
        let mut k = 0;
        loop {
            if k == slots.len() {
                return visited;
            }
            digits[k] += 1;
            if digits[k] < slots[k].radix() {
                slots[k].set(&mut project, digits[k]);
                break;
            }
            digits[k] = 0;
            slots[k].set(&mut project, 0);
            k += 1;
        }
    }
}

/// A change that can only move statuses towards completion.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum PositiveDelta {
    /// Answer Yes to an unanswered or negatively answered question.
    AnswerYes { checklist: String, question: String },
    Resolve { observation: String },
    Close { observation: String },
}

pub fn positive_deltas(project: &Project) -> Vec<PositiveDelta> {
    let mut out = Vec::new();
    for c in project.checklists() {
        for q in &c.questions {
            if matches!(c.answers.get(&q.question_id), None | Some(Answer::No)) {
                out.push(PositiveDelta::AnswerYes {
                    checklist: c.instance_id.clone(),
                    question: q.question_id.clone(),
                });
            }
        }
    }
    for o in project.observations() {
        let observation = o.observation_id.clone();
        match o.state {
            ObservationState::Open => out.push(PositiveDelta::Resolve { observation }),
            ObservationState::Resolved => out.push(PositiveDelta::Close { observation }),
            ObservationState::Closed => {}
        }
    }
    out
}

/// Applies a delta through the project's own operations. A `Close` whose
/// observation is still open resolves it first.
pub fn apply_delta(project: &mut Project, delta: &PositiveDelta) {
    let at = epoch() + Duration::days(1);
    let transition = |project: &mut Project, actor: &str, id: &str, to| {
        project
            .transition_observation(actor, id, to, "progress", at)
            .expect("forward transition applies");
    };
    match delta {
        PositiveDelta::AnswerYes {
            checklist,
            question,
        } => {
            project
                .answer_checklist(VERIFIER, checklist, question, Answer::Yes, at)
                .expect("positive answer applies");
        }
        PositiveDelta::Resolve { observation } => {
            if project.observation(observation).map(|o| o.state) == Some(ObservationState::Open) {
                transition(project, DEVELOPER, observation, ObservationState::Resolved);
            }
        }
        PositiveDelta::Close { observation } => {
            if project.observation(observation).map(|o| o.state) == Some(ObservationState::Open) {
                transition(project, DEVELOPER, observation, ObservationState::Resolved);
            }
            if project.observation(observation).map(|o| o.state) == Some(ObservationState::Resolved) {
                transition(project, VERIFIER, observation, ObservationState::Closed);
            }
        }
    }
}
