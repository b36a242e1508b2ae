//! Random command sessions against the reference parameterization.
//!
//! Commands are drawn from the current project state so most of them
//! succeed, mixed with a share of invalid attempts (wrong role, unknown ids,
//! illegal transitions) that must be rejected without leaving a trace.

use chrono::{DateTime, Duration, Utc};
use rand::rngs::StdRng;
use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use veritrack_core::access::Role;
use veritrack_core::command::Command;
use veritrack_core::project::{Answer, ObservationState, ParameterizationEdit, Project};
use veritrack_core::store::{ProjectLedger, StoreError};

pub const USERS: [&str; 7] = ["admin", "vm", "ver1", "ver2", "dev1", "dev2", "pm"];

/// Documents that may be registered after creation, with a stable suffix
/// pool so that duplicate registrations also occur.
const REGISTRABLE: [&str; 6] = ["SRS", "SDD", "SRC", "EOC", "SVCP", "SVR"];

pub fn session_start() -> DateTime<Utc> {
    DateTime::parse_from_rfc3339("2019-03-04T08:00:00Z")
        .expect("valid timestamp")
        .with_timezone(&Utc)
}

fn pick<'a, R: Rng>(rng: &mut R, items: &'a [String]) -> Option<&'a String> {
    items.choose(rng)
}

fn random_answer<R: Rng>(rng: &mut R) -> Answer {
    match rng.random_range(0..10) {
        0..=5 => Answer::Yes,
        6..=7 => Answer::No,
        _ => Answer::NA {
            justification: "not relevant for this configuration".into(),
        },
    }
}

/// Draws one (actor, command) pair given the current project.
pub fn random_command<R: Rng>(rng: &mut R, project: &Project) -> (String, Command) {
    let actor = USERS.choose(rng).expect("non-empty").to_string();
    let checklists: Vec<String> = project.checklists().map(|c| c.instance_id.clone()).collect();
    let items: Vec<String> = project.items().map(|i| i.item_id.clone()).collect();
    let observations: Vec<String> = project
        .observations()
        .map(|o| o.observation_id.clone())
        .collect();
    let command = match rng.random_range(0..100) {
        0..=34 => {
            let checklist_id = pick(rng, &checklists).cloned().unwrap_or_default();
            let question_id = project
                .checklist(&checklist_id)
                .and_then(|c| c.questions.choose(rng))
                .map(|q| q.question_id.clone())
                .unwrap_or_else(|| "Q1".into());
            Command::AnswerChecklist {
                checklist_id,
                question_id,
                answer: random_answer(rng),
            }
        }
        35..=44 => {
            let spec = *REGISTRABLE.choose(rng).expect("non-empty");
            let process_id = project
                .norm
                .process_templates
                .iter()
                .find(|p| p.expects(spec))
                .map(|p| p.process_id.clone())
                .unwrap_or_default();
            let suffix = rng.random_range(0..3);
            Command::RegisterItem {
                process_id,
                item_id: format!("{spec}-{suffix}"),
                spec_id: spec.into(),
                title: format!("{spec} document"),
                version_label: "1.0".into(),
            }
        }
        45..=64 => Command::OpenObservation {
            item_id: pick(rng, &items).cloned().unwrap_or_else(|| "PSAC".into()),
            text: format!("finding {}", rng.random_range(0..1000)),
        },
        65..=91 => {
            let observation_id = pick(rng, &observations)
                .cloned()
                .unwrap_or_else(|| "obs-1".into());
            let to_state = *[
                ObservationState::Open,
                ObservationState::Resolved,
                ObservationState::Closed,
            ]
            .choose(rng)
            .expect("non-empty");
            Command::TransitionObservation {
                observation_id,
                to_state,
                comment: "checked".into(),
            }
        }
        92..=95 => Command::AssignUser {
            user_id: format!("user{}", rng.random_range(0..4)),
            role: *Role::ALL.choose(rng).expect("non-empty"),
            display_name: None,
        },
        96..=97 => Command::EditParameterization {
            edit: ParameterizationEdit {
                life_cycle: Some(["V-Model", "Waterfall", "Incremental"]
                    .choose(rng)
                    .expect("non-empty")
                    .to_string()),
                add_processes: vec![],
            },
        },
        _ => Command::OpenObservation {
            item_id: "NO-SUCH-ITEM".into(),
            text: "stray".into(),
        },
    };
    (actor, command)
}

/// Outcome of a random session run against an in-memory ledger.
pub struct Session {
    pub ledger: ProjectLedger,
    /// Every attempted command, with whether it was accepted.
    pub attempts: Vec<(String, Command, Result<u64, String>)>,
}

/// Creates the reference project and applies `steps` random commands.
pub fn run_session(seed: u64, steps: usize) -> Session {
    let mut rng = StdRng::seed_from_u64(seed);
    let start = session_start();
    let (mut ledger, _) = ProjectLedger::create(
        "admin",
        crate::reference_params(),
        crate::demo_norm(),
        start,
        None,
    )
    .expect("reference project creates");
    let mut attempts = Vec::with_capacity(steps);
    for k in 0..steps {
        let (actor, command) = random_command(&mut rng, ledger.project());
        let at = start + Duration::seconds(k as i64 + 1);
        let result = ledger
            .execute(&actor, &command, at)
            .map(|e| e.sequence)
            .map_err(|e: StoreError| e.code().to_string());
        attempts.push((actor, command, result));
    }
    Session { ledger, attempts }
}
