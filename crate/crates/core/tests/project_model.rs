use std::sync::Arc;

use proptest::prelude::*;
use veritrack_core::norm::NormRegistry;
use veritrack_core::project::{
    create_project, Answer, ElementRef, ObservationState, Project, ProjectError,
};
use veritrack_testkit::operations::{run_session, session_start};
use veritrack_testkit::{demo_norm, reference_params};

fn reference() -> Project {
    Project::create(reference_params(), demo_norm(), session_start()).unwrap()
}

#[test]
fn reference_parameterization_instantiates_processes_and_items() {
    let p = reference();
    assert_eq!(p.processes.len(), 6);
    assert_eq!(p.items().count(), 8);
    assert!(p.process("planning").unwrap().configuration_items.len() == 8);
    assert_eq!(p.observations().count(), 0);
    p.check_invariants().unwrap();
    // 6 process checklists, 8 items, 8 document checklists.
    assert_eq!(p.element_set().len(), 22);
}

#[test]
fn registry_resolves_the_norm_reference() {
    let mut registry = NormRegistry::new();
    registry.insert((*demo_norm()).clone()).unwrap();
    let p = create_project(reference_params(), &registry, session_start()).unwrap();
    assert_eq!(p, reference());

    let mut params = reference_params();
    params.norm_ref = "ISO-26262".into();
    assert!(matches!(
        create_project(params, &registry, session_start()),
        Err(ProjectError::UnknownNorm(_))
    ));
}

#[test]
fn single_process_project_has_one_element() {
    let mut params = reference_params();
    params.selected_processes = vec!["design".into()];
    params.initial_documents.clear();
    let p = Project::create(params, demo_norm(), session_start()).unwrap();
    assert_eq!(
        p.element_set().into_iter().collect::<Vec<_>>(),
        [ElementRef::Checklist("PC-design".into())]
    );
}

#[test]
fn process_checklists_only_hold_applicable_questions() {
    let norm = demo_norm();
    let p = reference();
    let vv = p.checklist("PC-verification-of-verification").unwrap();
    let template = &norm
        .process("verification-of-verification")
        .unwrap()
        .checklist_template;
    assert_eq!(vv.questions.len(), template.questions.len() - 1);
    assert!(!vv.has_question("Q3"));
}

#[test]
fn rejected_mutations_leave_the_project_unchanged() {
    let mut p = reference();
    let before = p.clone();
    let at = session_start();
    assert!(p
        .answer_checklist("pm", "PC-planning", "Q1", Answer::Yes, at)
        .is_err());
    assert!(p
        .answer_checklist("ver1", "PC-planning", "Q9", Answer::Yes, at)
        .is_err());
    assert!(p
        .answer_checklist(
            "ver1",
            "PC-planning",
            "Q1",
            Answer::NA {
                justification: "  ".into()
            },
            at
        )
        .is_err());
    assert!(p.open_observation("dev1", "PSAC", "finding", at).is_err());
    assert!(p
        .transition_observation("ver1", "obs-1", ObservationState::Closed, "", at)
        .is_err());
    assert_eq!(p, before);
}

#[test]
fn projects_share_the_norm_without_copying() {
    let norm = demo_norm();
    let a = Project::create(reference_params(), Arc::clone(&norm), session_start()).unwrap();
    assert!(Arc::ptr_eq(&a.norm, &norm));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn random_sessions_preserve_structural_invariants(seed in any::<u64>(), steps in 0usize..150) {
        let session = run_session(seed, steps);
        let project = session.ledger.project();
        prop_assert_eq!(project.check_invariants(), Ok(()));
        let ids: Vec<_> = project.observations().map(|o| o.serial).collect();
        prop_assert!(ids.iter().all(|s| *s < project.next_observation_serial));
        for o in project.observations() {
            prop_assert_eq!(o.replay_state(), Ok(o.state));
        }
    }
}
