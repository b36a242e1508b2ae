//! Role/action permission matrix.
//!
//! The matrix is fixed at compile time. Allow-sets nest strictly:
//! Reader ⊂ Developer ⊂ Verifier ⊂ VerificationManager, and an
//! Administrator may perform every action.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Role {
    Administrator,
    VerificationManager,
    Verifier,
    Developer,
    Reader,
}

impl Role {
    pub const ALL: [Role; 5] = [
        Role::Administrator,
        Role::VerificationManager,
        Role::Verifier,
        Role::Developer,
        Role::Reader,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Role::Administrator => "Administrator",
            Role::VerificationManager => "VerificationManager",
            Role::Verifier => "Verifier",
            Role::Developer => "Developer",
            Role::Reader => "Reader",
        }
    }
}

impl fmt::Display for Role {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Role {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Role::ALL
            .into_iter()
            .find(|r| r.as_str().eq_ignore_ascii_case(s))
            .ok_or_else(|| format!("unknown role {s:?}"))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Action {
    ReadStatus,
    ReadAll,
    AnswerProcessChecklist,
    AnswerDocumentChecklist,
    RegisterItem,
    OpenObservation,
    ResolveObservation,
    CloseObservation,
    ReopenObservation,
    EditProjectParameterization,
    ManageUsers,
    ManageNorms,
    CreateProject,
}

impl Action {
    pub const ALL: [Action; 13] = [
        Action::ReadStatus,
        Action::ReadAll,
        Action::AnswerProcessChecklist,
        Action::AnswerDocumentChecklist,
        Action::RegisterItem,
        Action::OpenObservation,
        Action::ResolveObservation,
        Action::CloseObservation,
        Action::ReopenObservation,
        Action::EditProjectParameterization,
        Action::ManageUsers,
        Action::ManageNorms,
        Action::CreateProject,
    ];
}

impl fmt::Display for Action {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Debug::fmt(self, f)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Decision {
    Allow,
    Deny,
}

impl Decision {
    pub fn is_allowed(self) -> bool {
        self == Decision::Allow
    }
}

const READER: &[Action] = &[Action::ReadStatus];

const DEVELOPER: &[Action] = &[Action::ReadAll, Action::ResolveObservation];

const VERIFIER: &[Action] = &[
    Action::AnswerProcessChecklist,
    Action::AnswerDocumentChecklist,
    Action::RegisterItem,
    Action::OpenObservation,
    Action::CloseObservation,
    Action::ReopenObservation,
];

const VERIFICATION_MANAGER: &[Action] = &[Action::EditProjectParameterization];

/// Each tier adds to the one below it; anything not granted is denied.
pub fn authorize(role: Role, action: Action) -> Decision {
    let tiers: &[&[Action]] = match role {
        Role::Administrator => return Decision::Allow,
        Role::VerificationManager => &[READER, DEVELOPER, VERIFIER, VERIFICATION_MANAGER],
        Role::Verifier => &[READER, DEVELOPER, VERIFIER],
        Role::Developer => &[READER, DEVELOPER],
        Role::Reader => &[READER],
    };
    if tiers.iter().any(|tier| tier.contains(&action)) {
        Decision::Allow
    } else {
        Decision::Deny
    }
}

pub fn allowed_actions(role: Role) -> Vec<Action> {
    Action::ALL
        .into_iter()
        .filter(|a| authorize(role, *a).is_allowed())
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::BTreeSet;

    #[test]
    fn reader_can_only_read_status() {
        assert_eq!(allowed_actions(Role::Reader), vec![Action::ReadStatus]);
    }

    #[test]
    fn developer_cannot_answer() {
        assert_eq!(
            authorize(Role::Developer, Action::AnswerDocumentChecklist),
            Decision::Deny
        );
        assert!(authorize(Role::Developer, Action::ResolveObservation).is_allowed());
        assert!(!authorize(Role::Developer, Action::CloseObservation).is_allowed());
    }

    #[test]
    fn manager_has_verification_permissions() {
        assert!(authorize(Role::VerificationManager, Action::AnswerProcessChecklist).is_allowed());
        assert!(
            authorize(Role::VerificationManager, Action::EditProjectParameterization).is_allowed()
        );
        assert!(!authorize(Role::VerificationManager, Action::ManageUsers).is_allowed());
        assert!(!authorize(Role::Verifier, Action::EditProjectParameterization).is_allowed());
    }

    #[test]
    fn administrator_allows_everything() {
        assert_eq!(allowed_actions(Role::Administrator), Action::ALL.to_vec());
    }

    #[test]
    fn strict_inclusion_chain() {
        let chain = [
            Role::Reader,
            Role::Developer,
            Role::Verifier,
            Role::VerificationManager,
            Role::Administrator,
        ];
        for pair in chain.windows(2) {
            let lo: BTreeSet<_> = allowed_actions(pair[0]).into_iter().collect();
            let hi: BTreeSet<_> = allowed_actions(pair[1]).into_iter().collect();
            assert!(lo.is_subset(&hi) && lo != hi, "{:?} vs {:?}", pair[0], pair[1]);
        }
    }

    #[test]
    fn role_parses_case_insensitively() {
        assert_eq!("verifier".parse::<Role>().unwrap(), Role::Verifier);
        assert!("auditor".parse::<Role>().is_err());
    }
}
