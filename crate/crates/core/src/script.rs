//! Scripted command sequences.
//!
//! A script is a JSON document listing steps, each executed through the
//! regular store write path:
//!
//! ```json
//! {
//!   "start_time": "2019-03-04T08:00:00Z",
//!   "step_seconds": 60,
//!   "norms": ["norms/do178b-demo.json"],
//!   "steps": [
//!     {"as": "admin", "create_project": { ...parameterization... }},
//!     {"as": "ver1", "repeat": {"count": 3},
//!      "command": {"type": "open_observation", "item_id": "PSAC", "text": "finding {n}"}}
//!   ]
//! }
//! ```
//!
//! `repeat` runs a step `count` times with `{n}` in every string of the
//! command replaced by `first`, `first + 1`, … (`first` defaults to 1).
//! Steps target the most recently created project unless they name one
//! with `"project"`. With `start_time`, event timestamps are
//! `start_time + k·step_seconds` for the k-th event; otherwise the store's
//! clock is used.

use std::path::{Path, PathBuf};

use chrono::{DateTime, Duration, Utc};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::command::Command;
use crate::norm::{load_norm_template, NormError};
use crate::project::ProjectParameterization;
use crate::store::{Store, StoreError};

#[derive(Debug, Error)]
pub enum ScriptError {
    #[error("cannot read script {path}: {message}")]
    Read { path: String, message: String },
    #[error("malformed script: {0}")]
    Malformed(String),
    #[error("step {step} (repetition {repetition}): {source}")]
    Step {
        step: usize,
        repetition: u64,
        #[source]
        source: StoreError,
    },
    #[error("norm {path}: {source}")]
    Norm {
        path: String,
        #[source]
        source: StoreError,
    },
}

impl ScriptError {
    pub fn code(&self) -> &'static str {
        match self {
            ScriptError::Read { .. } => "StorageFailure",
            ScriptError::Malformed(_) => "ParseError",
            ScriptError::Step { source, .. } | ScriptError::Norm { source, .. } => source.code(),
        }
    }
}

fn default_step() -> i64 {
    1
}

fn default_first() -> u64 {
    1
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Script {
    #[serde(default)]
    pub start_time: Option<DateTime<Utc>>,
    #[serde(default = "default_step")]
    pub step_seconds: i64,
    #[serde(default)]
    pub norms: Vec<PathBuf>,
    pub steps: Vec<Step>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Step {
    #[serde(rename = "as")]
    pub actor: String,
    #[serde(default)]
    pub project: Option<String>,
    #[serde(default)]
    pub repeat: Option<Repeat>,
    #[serde(default)]
    pub create_project: Option<ProjectParameterization>,
    #[serde(default)]
    pub command: Option<serde_json::Value>,
}

#[derive(Debug, Clone, Copy, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Repeat {
    pub count: u64,
    #[serde(default = "default_first")]
    pub first: u64,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct ScriptReport {
    pub projects: Vec<String>,
    pub events: u64,
}

fn substitute(value: &serde_json::Value, n: u64) -> serde_json::Value {
    use serde_json::Value;
    match value {
        Value::String(s) => Value::String(s.replace("{n}", &n.to_string())),
        Value::Array(items) => Value::Array(items.iter().map(|v| substitute(v, n)).collect()),
        Value::Object(map) => Value::Object(
            map.iter()
                .map(|(k, v)| (k.clone(), substitute(v, n)))
                .collect(),
        ),
        other => other.clone(),
    }
}

impl Script {
    pub fn parse(text: &str) -> Result<Self, ScriptError> {
        serde_json::from_str(text).map_err(|e| ScriptError::Malformed(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self, ScriptError> {
        let text = std::fs::read_to_string(path).map_err(|e| ScriptError::Read {
            path: path.display().to_string(),
            message: e.to_string(),
        })?;
        Self::parse(&text)
    }

    /// Runs every step against `store`. Norm paths resolve against `base_dir`.
    pub fn run(&self, store: &Store, base_dir: &Path) -> Result<ScriptReport, ScriptError> {
        for rel in &self.norms {
            let path = base_dir.join(rel);
            let norm_err = |source: StoreError| ScriptError::Norm {
                path: path.display().to_string(),
                source,
            };
            let bytes = std::fs::read(&path).map_err(|e| ScriptError::Read {
                path: path.display().to_string(),
                message: e.to_string(),
            })?;
            let template = load_norm_template(&bytes).map_err(|e| norm_err(e.into()))?;
            match store.norm(&template.norm_id) {
                Ok(existing) if *existing == template => {}
                Ok(_) => {
                    return Err(norm_err(NormError::DuplicateNorm(template.norm_id).into()));
                }
                Err(_) => {
                    store.add_norm(&bytes).map_err(norm_err)?;
                }
            }
        }

        let mut report = ScriptReport::default();
        let mut current: Option<String> = None;
        let mut tick = 0i64;
        let mut now = || {
            let at = match self.start_time {
                Some(start) => start + Duration::seconds(tick * self.step_seconds),
                None => store.now(),
            };
            tick += 1;
            at
        };

        for (index, step) in self.steps.iter().enumerate() {
            let fail = |repetition: u64, source: StoreError| ScriptError::Step {
                step: index,
                repetition,
                source,
            };
            match (&step.create_project, &step.command) {
                (Some(params), None) => {
                    if step.repeat.is_some() {
                        return Err(ScriptError::Malformed(format!(
                            "step {index}: create_project cannot repeat"
                        )));
                    }
                    store
                        .create_project_at(&step.actor, params.clone(), now())
                        .map_err(|e| fail(0, e))?;
                    report.projects.push(params.project_id.clone());
                    report.events += 1;
                    current = Some(params.project_id.clone());
                }
                (None, Some(template)) => {
                    let project = step.project.clone().or_else(|| current.clone()).ok_or_else(|| {
                        ScriptError::Malformed(format!("step {index}: no project to act on"))
                    })?;
                    let Repeat { count, first } =
                        step.repeat.unwrap_or(Repeat { count: 1, first: 1 });
                    for k in 0..count {
                        let n = first + k;
                        let command: Command = serde_json::from_value(substitute(template, n))
                            .map_err(|e| ScriptError::Malformed(format!("step {index}: {e}")))?;
                        store
                            .execute_at(&project, &step.actor, &command, now(), false)
                            .map_err(|e| fail(k, e))?;
                        report.events += 1;
                    }
                    if !report.projects.contains(&project) {
                        report.projects.push(project);
                    }
                }
                _ => {
                    return Err(ScriptError::Malformed(format!(
                        "step {index}: exactly one of create_project or command is required"
                    )))
                }
            }
        }
        for p in &report.projects {
            store.sync(p).map_err(|source| ScriptError::Step {
                step: self.steps.len(),
                repetition: 0,
                source,
            })?;
        }
        Ok(report)
    }
}
