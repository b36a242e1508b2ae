//! Norm templates.
//!
//! A norm template is the reusable, data-only description of a standard: its
//! assurance levels, the objectives each level requires, the verification
//! processes with their checklist banks and the documents those processes
//! are expected to produce. Supporting a new norm means authoring a new
//! template file.

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::fmt;
use std::path::Path;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum NormError {
    #[error("parse error at line {line}, column {column}: {message}")]
    Parse {
        line: usize,
        column: usize,
        message: String,
    },
    #[error("invalid template: {element}: {reason}")]
    Validation { element: String, reason: String },
    #[error("unknown assurance level {0:?}")]
    UnknownLevel(String),
    #[error("unknown norm {0:?}")]
    UnknownNorm(String),
    #[error("norm {0:?} is already registered")]
    DuplicateNorm(String),
    #[error("cannot read {path}: {message}")]
    Io { path: String, message: String },
}

impl NormError {
    pub fn code(&self) -> &'static str {
        match self {
            NormError::Parse { .. } => "ParseError",
            NormError::Validation { .. } => "ValidationError",
            NormError::UnknownLevel(_) => "UnknownLevel",
            NormError::UnknownNorm(_) => "UnknownNorm",
            NormError::DuplicateNorm(_) => "DuplicateNorm",
            NormError::Io { .. } => "StorageFailure",
        }
    }
}

fn invalid(element: impl Into<String>, reason: impl Into<String>) -> NormError {
    NormError::Validation {
        element: element.into(),
        reason: reason.into(),
    }
}

/// Severity of the system-level effect of a software failure.
///
/// Declared from most to least severe, so the derived ordering grows as
/// severity drops.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum FailureCondition {
    Catastrophic,
    Hazardous,
    Major,
    Minor,
    NoEffect,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AssuranceLevel {
    pub symbol: String,
    /// 0 is the most restrictive level.
    pub rank: u32,
    pub failure_condition: FailureCondition,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Applicability {
    Required,
    RequiredWithIndependence,
    NotRequired,
}

impl Applicability {
    pub fn is_required(self) -> bool {
        !matches!(self, Applicability::NotRequired)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Objective {
    pub objective_id: String,
    pub text: String,
    pub process_ref: String,
    /// Keyed by assurance level symbol.
    pub applicability: BTreeMap<String, Applicability>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ChecklistScope {
    Process,
    Document,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Question {
    pub question_id: String,
    pub text: String,
    #[serde(default)]
    pub objective_refs: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChecklistTemplate {
    pub template_id: String,
    pub scope: ChecklistScope,
    pub questions: Vec<Question>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProcessTemplate {
    pub process_id: String,
    pub name: String,
    pub checklist_template: ChecklistTemplate,
    /// Ids of the document specs this process is expected to produce.
    #[serde(default)]
    pub expected_document_kinds: Vec<String>,
}

impl ProcessTemplate {
    pub fn expects(&self, spec_id: &str) -> bool {
        self.expected_document_kinds.iter().any(|s| s == spec_id)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum DocumentKind {
    Plan,
    Standard,
    Requirements,
    Design,
    Code,
    TestArtifact,
    Other,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DocumentSpec {
    pub spec_id: String,
    pub name: String,
    pub kind: DocumentKind,
    /// Id of a `Document`-scoped template in [`NormTemplate::document_checklists`].
    pub document_checklist_template: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NormTemplate {
    pub norm_id: String,
    pub title: String,
    /// Most restrictive first.
    pub assurance_levels: Vec<AssuranceLevel>,
    #[serde(rename = "processes")]
    pub process_templates: Vec<ProcessTemplate>,
    #[serde(rename = "documents")]
    pub document_specs: Vec<DocumentSpec>,
    pub objectives: Vec<Objective>,
    /// Question banks for configuration-item checklists.
    #[serde(default)]
    pub document_checklists: Vec<ChecklistTemplate>,
}

/// Parses and validates a template document.
pub fn load_norm_template(source: &[u8]) -> Result<NormTemplate, NormError> {
    let template: NormTemplate = serde_json::from_slice(source).map_err(|e| NormError::Parse {
        line: e.line(),
        column: e.column(),
        message: e.to_string(),
    })?;
    template.validate()?;
    Ok(template)
}

impl NormTemplate {
    pub fn level(&self, symbol: &str) -> Result<&AssuranceLevel, NormError> {
        self.assurance_levels
            .iter()
            .find(|l| l.symbol == symbol)
            .ok_or_else(|| NormError::UnknownLevel(symbol.to_string()))
    }

    pub fn most_restrictive_level(&self) -> &AssuranceLevel {
        &self.assurance_levels[0]
    }

    pub fn process(&self, process_id: &str) -> Option<&ProcessTemplate> {
        self.process_templates
            .iter()
            .find(|p| p.process_id == process_id)
    }

    pub fn document(&self, spec_id: &str) -> Option<&DocumentSpec> {
        self.document_specs.iter().find(|d| d.spec_id == spec_id)
    }

    pub fn objective(&self, objective_id: &str) -> Option<&Objective> {
        self.objectives
            .iter()
            .find(|o| o.objective_id == objective_id)
    }

    pub fn document_checklist(&self, template_id: &str) -> Option<&ChecklistTemplate> {
        self.document_checklists
            .iter()
            .find(|c| c.template_id == template_id)
    }

    /// Objectives that apply at `level`, in template order, with their flag.
    pub fn resolve_objectives(
        &self,
        level: &str,
    ) -> Result<Vec<(&Objective, Applicability)>, NormError> {
        self.level(level)?;
        Ok(self
            .objectives
            .iter()
            .filter_map(|o| {
                let a = o.applicability[level];
                a.is_required().then_some((o, a))
            })
            .collect())
    }

    /// Document specs expected by any process that has at least one
    /// applicable objective at `level`. Template order, no duplicates.
    pub fn required_documents(&self, level: &str) -> Result<Vec<&DocumentSpec>, NormError> {
        let active: HashSet<&str> = self
            .resolve_objectives(level)?
            .into_iter()
            .map(|(o, _)| o.process_ref.as_str())
            .collect();
        Ok(self
            .document_specs
            .iter()
            .filter(|d| {
                self.process_templates
                    .iter()
                    .any(|p| active.contains(p.process_id.as_str()) && p.expects(&d.spec_id))
            })
            .collect())
    }

    /// A question is asked at `level` when it references no objective or
    /// when any referenced objective applies there.
    pub fn question_applies(&self, question: &Question, level: &str) -> bool {
        question.objective_refs.is_empty()
            || question.objective_refs.iter().any(|r| {
                self.objective(r)
                    .and_then(|o| o.applicability.get(level))
                    .is_some_and(|a| a.is_required())
            })
    }

    pub fn applicable_questions<'a>(
        &'a self,
        template: &'a ChecklistTemplate,
        level: &'a str,
    ) -> impl Iterator<Item = &'a Question> + 'a {
        template
            .questions
            .iter()
            .filter(move |q| self.question_applies(q, level))
    }

    /// Structural validation. Every error names the offending element.
    pub fn validate(&self) -> Result<(), NormError> {
        if self.norm_id.trim().is_empty() {
            return Err(invalid("norm_id", "must not be empty"));
        }
        self.validate_levels()?;

        let mut process_ids = HashSet::new();
        for p in &self.process_templates {
            if !process_ids.insert(p.process_id.as_str()) {
                return Err(invalid(
                    format!("process {:?}", p.process_id),
                    "duplicate process id",
                ));
            }
        }

        let level_symbols: BTreeSet<&str> = self
            .assurance_levels
            .iter()
            .map(|l| l.symbol.as_str())
            .collect();
        let mut objective_ids = HashSet::new();
        for o in &self.objectives {
            let element = format!("objective {:?}", o.objective_id);
            if !objective_ids.insert(o.objective_id.as_str()) {
                return Err(invalid(element, "duplicate objective id"));
            }
            if !process_ids.contains(o.process_ref.as_str()) {
                return Err(invalid(
                    element,
                    format!("references unknown process {:?}", o.process_ref),
                ));
            }
            for symbol in &level_symbols {
                if !o.applicability.contains_key(*symbol) {
                    return Err(invalid(
                        element,
                        format!("missing applicability for level {symbol:?}"),
                    ));
                }
            }
            if let Some(extra) = o
                .applicability
                .keys()
                .find(|k| !level_symbols.contains(k.as_str()))
            {
                return Err(invalid(
                    element,
                    format!("applicability names unknown level {extra:?}"),
                ));
            }
        }

        let mut checklist_ids = HashSet::new();
        for c in &self.document_checklists {
            if !checklist_ids.insert(c.template_id.as_str()) {
                return Err(invalid(
                    format!("checklist {:?}", c.template_id),
                    "duplicate checklist template id",
                ));
            }
            if c.scope != ChecklistScope::Document {
                return Err(invalid(
                    format!("checklist {:?}", c.template_id),
                    "document checklist must have scope Document",
                ));
            }
            self.validate_checklist(c, &objective_ids)?;
        }

        let mut spec_ids = HashSet::new();
        for d in &self.document_specs {
            let element = format!("document {:?}", d.spec_id);
            if !spec_ids.insert(d.spec_id.as_str()) {
                return Err(invalid(element, "duplicate document spec id"));
            }
            if !checklist_ids.contains(d.document_checklist_template.as_str()) {
                return Err(invalid(
                    element,
                    format!(
                        "references unknown document checklist {:?}",
                        d.document_checklist_template
                    ),
                ));
            }
            if !self.process_templates.iter().any(|p| p.expects(&d.spec_id)) {
                return Err(invalid(element, "not expected by any process"));
            }
        }

        for p in &self.process_templates {
            let element = format!("process {:?}", p.process_id);
            let c = &p.checklist_template;
            if c.scope != ChecklistScope::Process {
                return Err(invalid(element, "process checklist must have scope Process"));
            }
            if c.questions.is_empty() {
                return Err(invalid(element, "process checklist has no questions"));
            }
            if checklist_ids.contains(c.template_id.as_str()) {
                return Err(invalid(
                    format!("checklist {:?}", c.template_id),
                    "duplicate checklist template id",
                ));
            }
            self.validate_checklist(c, &objective_ids)?;
            for spec in &p.expected_document_kinds {
                if !spec_ids.contains(spec.as_str()) {
                    return Err(invalid(
                        element,
                        format!("expects unknown document spec {spec:?}"),
                    ));
                }
            }
        }
        Ok(())
    }

    fn validate_levels(&self) -> Result<(), NormError> {
        let Some(first) = self.assurance_levels.first() else {
            return Err(invalid("assurance_levels", "must not be empty"));
        };
        if first.rank != 0 {
            return Err(invalid(
                format!("level {:?}", first.symbol),
                "most restrictive level must have rank 0",
            ));
        }
        let mut symbols = HashSet::new();
        for l in &self.assurance_levels {
            if l.symbol.trim().is_empty() {
                return Err(invalid("assurance_levels", "level symbol must not be empty"));
            }
            if !symbols.insert(l.symbol.as_str()) {
                return Err(invalid(format!("level {:?}", l.symbol), "duplicate level symbol"));
            }
        }
        for pair in self.assurance_levels.windows(2) {
            let (a, b) = (&pair[0], &pair[1]);
            if b.rank <= a.rank {
                return Err(invalid(
                    format!("level {:?}", b.symbol),
                    format!("rank {} does not follow rank {}", b.rank, a.rank),
                ));
            }
            if b.failure_condition < a.failure_condition {
                return Err(invalid(
                    format!("level {:?}", b.symbol),
                    "failure condition more severe than a more restrictive level",
                ));
            }
        }
        Ok(())
    }

    fn validate_checklist(
        &self,
        c: &ChecklistTemplate,
        objective_ids: &HashSet<&str>,
    ) -> Result<(), NormError> {
        let mut ids = HashSet::new();
        for q in &c.questions {
            let element = format!("question {:?} of checklist {:?}", q.question_id, c.template_id);
            if !ids.insert(q.question_id.as_str()) {
                return Err(invalid(element, "duplicate question id"));
            }
            if let Some(bad) = q
                .objective_refs
                .iter()
                .find(|r| !objective_ids.contains(r.as_str()))
            {
                return Err(invalid(element, format!("references unknown objective {bad:?}")));
            }
        }
        Ok(())
    }

    /// Objectives required at some level but not at a more restrictive one.
    /// Reported, never rejected: real norms are not always monotone.
    pub fn applicability_warnings(&self) -> Vec<ApplicabilityWarning> {
        let mut out = Vec::new();
        for o in &self.objectives {
            let mut seen_not_required: Option<&str> = None;
            for l in &self.assurance_levels {
                let required = o.applicability[&l.symbol].is_required();
                match (required, seen_not_required) {
                    (false, None) => seen_not_required = Some(&l.symbol),
                    (true, Some(stricter)) => {
                        out.push(ApplicabilityWarning {
                            objective_id: o.objective_id.clone(),
                            not_required_at: stricter.to_string(),
                            required_at: l.symbol.clone(),
                        });
                        break;
                    }
                    _ => {}
                }
            }
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ApplicabilityWarning {
    pub objective_id: String,
    pub not_required_at: String,
    pub required_at: String,
}

impl fmt::Display for ApplicabilityWarning {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "objective {:?} is required at level {:?} but not at the more restrictive level {:?}",
            self.objective_id, self.required_at, self.not_required_at
        )
    }
}

/// Id → template map. Templates are immutable once registered.
#[derive(Debug, Clone, Default)]
pub struct NormRegistry {
    templates: BTreeMap<String, Arc<NormTemplate>>,
}

impl NormRegistry {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, template: NormTemplate) -> Result<Arc<NormTemplate>, NormError> {
        if self.templates.contains_key(&template.norm_id) {
            return Err(NormError::DuplicateNorm(template.norm_id));
        }
        let template = Arc::new(template);
        self.templates
            .insert(template.norm_id.clone(), Arc::clone(&template));
        Ok(template)
    }

    pub fn get(&self, norm_id: &str) -> Result<Arc<NormTemplate>, NormError> {
        self.templates
            .get(norm_id)
            .cloned()
            .ok_or_else(|| NormError::UnknownNorm(norm_id.to_string()))
    }

    pub fn iter(&self) -> impl Iterator<Item = &Arc<NormTemplate>> {
        self.templates.values()
    }

    pub fn len(&self) -> usize {
        self.templates.len()
    }

    pub fn is_empty(&self) -> bool {
        self.templates.is_empty()
    }

    /// Loads every `*.json` file in `dir`. A missing directory yields an
    /// empty registry.
    pub fn load_dir(dir: &Path) -> Result<Self, NormError> {
        let mut registry = Self::new();
        if !dir.exists() {
            return Ok(registry);
        }
        let io = |e: std::io::Error| NormError::Io {
            path: dir.display().to_string(),
            message: e.to_string(),
        };
        let mut paths: Vec<_> = std::fs::read_dir(dir)
            .map_err(io)?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.extension().is_some_and(|x| x == "json"))
            .collect();
        paths.sort();
        for path in paths {
            let bytes = std::fs::read(&path).map_err(io)?;
            let template = load_norm_template(&bytes).map_err(|e| match e {
                NormError::Validation { element, reason } => NormError::Validation {
                    element: format!("{}: {element}", path.display()),
                    reason,
                },
                other => other,
            })?;
            registry.insert(template)?;
        }
        Ok(registry)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) const MINIMAL: &str = r#"{
        "norm_id": "MINI",
        "title": "Minimal norm",
        "assurance_levels": [{"symbol": "L1", "rank": 0, "failure_condition": "Major"}],
        "processes": [{
            "process_id": "p",
            "name": "Only process",
            "checklist_template": {"template_id": "pc-p", "scope": "Process",
                "questions": [{"question_id": "q1", "text": "Done?", "objective_refs": ["o1"]}]}
        }],
        "documents": [],
        "objectives": [{"objective_id": "o1", "text": "Do it", "process_ref": "p",
            "applicability": {"L1": "Required"}}]
    }"#;

    fn with(mutate: impl FnOnce(&mut serde_json::Value)) -> Vec<u8> {
        let mut v: serde_json::Value = serde_json::from_str(MINIMAL).unwrap();
        mutate(&mut v);
        serde_json::to_vec(&v).unwrap()
    }

    #[test]
    fn minimal_template_loads() {
        let t = load_norm_template(MINIMAL.as_bytes()).unwrap();
        assert_eq!(t.process_templates.len(), 1);
        assert_eq!(t.resolve_objectives("L1").unwrap().len(), 1);
        assert!(t.required_documents("L1").unwrap().is_empty());
    }

    #[test]
    fn dangling_process_reference_is_named() {
        let bytes = with(|v| v["objectives"][0]["process_ref"] = "X".into());
        let err = load_norm_template(&bytes).unwrap_err();
        assert_eq!(err.code(), "ValidationError");
        assert!(err.to_string().contains("\"X\""), "{err}");
    }

    #[test]
    fn parse_error_carries_position() {
        let err = load_norm_template(b"{\n  \"norm_id\": \"x\",\n  oops\n}").unwrap_err();
        match err {
            NormError::Parse { line, .. } => assert_eq!(line, 3),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn missing_applicability_is_rejected() {
        let bytes = with(|v| {
            v["assurance_levels"]
                .as_array_mut()
                .unwrap()
                .push(serde_json::json!({"symbol": "L2", "rank": 1, "failure_condition": "Minor"}))
        });
        let err = load_norm_template(&bytes).unwrap_err();
        assert!(err.to_string().contains("missing applicability for level \"L2\""), "{err}");
    }

    #[test]
    fn duplicate_question_and_empty_checklist_rejected() {
        let dup = with(|v| {
            let qs = v["processes"][0]["checklist_template"]["questions"]
                .as_array_mut()
                .unwrap();
            let q = qs[0].clone();
            qs.push(q);
        });
        assert!(load_norm_template(&dup)
            .unwrap_err()
            .to_string()
            .contains("duplicate question id"));
        let empty = with(|v| {
            v["processes"][0]["checklist_template"]["questions"] = serde_json::json!([])
        });
        assert!(load_norm_template(&empty)
            .unwrap_err()
            .to_string()
            .contains("no questions"));
    }

    #[test]
    fn unreferenced_document_rejected() {
        let bytes = with(|v| {
            v["document_checklists"] = serde_json::json!([
                {"template_id": "dc", "scope": "Document", "questions": []}
            ]);
            v["documents"] = serde_json::json!([
                {"spec_id": "PSAC", "name": "PSAC", "kind": "Plan", "document_checklist_template": "dc"}
            ]);
        });
        let err = load_norm_template(&bytes).unwrap_err();
        assert!(err.to_string().contains("not expected by any process"), "{err}");
    }

    #[test]
    fn ranks_must_increase() {
        let bytes = with(|v| {
            v["assurance_levels"] = serde_json::json!([
                {"symbol": "L1", "rank": 0, "failure_condition": "Major"},
                {"symbol": "L2", "rank": 0, "failure_condition": "Minor"}
            ]);
            v["objectives"][0]["applicability"] = serde_json::json!({"L1": "Required", "L2": "Required"});
        });
        assert!(load_norm_template(&bytes).is_err());
    }

    #[test]
    fn unknown_level() {
        let t = load_norm_template(MINIMAL.as_bytes()).unwrap();
        assert_eq!(
            t.resolve_objectives("Z").unwrap_err(),
            NormError::UnknownLevel("Z".into())
        );
        assert!(t.required_documents("Z").is_err());
    }

    #[test]
    fn non_monotone_applicability_warns() {
        let bytes = with(|v| {
            v["assurance_levels"] = serde_json::json!([
                {"symbol": "L1", "rank": 0, "failure_condition": "Major"},
                {"symbol": "L2", "rank": 1, "failure_condition": "Minor"}
            ]);
            v["objectives"][0]["applicability"] =
                serde_json::json!({"L1": "NotRequired", "L2": "Required"});
        });
        let t = load_norm_template(&bytes).expect("non-monotone is a warning only");
        let w = t.applicability_warnings();
        assert_eq!(w.len(), 1);
        assert_eq!(w[0].required_at, "L2");
    }

    #[test]
    fn registry_rejects_duplicates() {
        let mut r = NormRegistry::new();
        r.insert(load_norm_template(MINIMAL.as_bytes()).unwrap()).unwrap();
        let err = r
            .insert(load_norm_template(MINIMAL.as_bytes()).unwrap())
            .unwrap_err();
        assert_eq!(err, NormError::DuplicateNorm("MINI".into()));
        assert!(matches!(r.get("nope"), Err(NormError::UnknownNorm(_))));
    }
}
