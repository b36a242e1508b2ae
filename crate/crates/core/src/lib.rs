//! Verification-process monitoring for safety-critical software projects.
//!
//! The crate is organised around the life of a monitored project:
//!
//! - [`norm`]: norm templates (assurance levels, objectives, processes,
//!   document specs and checklist banks) loaded from JSON.
//! - [`access`]: the fixed role/action permission matrix.
//! - [`project`]: project instantiation and every state-changing action.
//! - [`status`]: the consistency & completeness check, progress, metrics
//!   and the read-only views.
//! - [`audit`]: the hash-chained event log, replay and evidence packages.
//! - [`store`]: on-disk project logs and the single-writer command path.
//! - [`script`]: scripted command sequences used for fixtures and demos.

pub mod access;
pub mod audit;
pub mod canonical;
pub mod command;
pub mod norm;
pub mod project;
pub mod script;
pub mod status;
pub mod store;

pub use access::{authorize, Action, Decision, Role};
pub use norm::{NormError, NormRegistry, NormTemplate};
pub use project::{Project, ProjectError, ProjectParameterization};
pub use status::{cc_check, Status};
