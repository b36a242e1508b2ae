//! On-disk store and the single-writer command path.
//!
//! Layout under the store root:
//!
//! ```text
//! norms/<norm_id>.json       norm templates (the default template directory)
//! projects/<project_id>.log  one hash-chained event log per project
//! ```
//!
//! Every mutation, whichever front end issues it, goes through
//! [`ProjectLedger::execute`]: apply through the project logic, append the
//! event, then recompute status.

use std::collections::BTreeMap;
use std::fs::{File, OpenOptions};
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex, RwLock, RwLockReadGuard, RwLockWriteGuard};

use chrono::{DateTime, Duration, Utc};
use serde::Serialize;
use thiserror::Error;

use crate::access::{authorize, Action};
use crate::audit::{self, AuditError, EventLog, EvidencePackage};
use crate::canonical::to_canonical_value;
use crate::command::{apply_event, ApplyError, Command, Event};
use crate::norm::{load_norm_template, NormError, NormRegistry, NormTemplate};
use crate::project::{Project, ProjectError, ProjectParameterization};
use crate::status::{cc_check, ProjectStatusReport, ViewError};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum StoreError {
    #[error(transparent)]
    Project(#[from] ProjectError),
    #[error(transparent)]
    Norm(#[from] NormError),
    #[error(transparent)]
    Audit(#[from] AuditError),
    #[error(transparent)]
    View(#[from] ViewError),
    #[error("project {0:?} already exists")]
    DuplicateProject(String),
    #[error("unknown project {0:?}")]
    UnknownProject(String),
    #[error("invalid identifier {0:?}: use letters, digits, '.', '_' or '-'")]
    InvalidIdentifier(String),
}

impl StoreError {
    pub fn code(&self) -> &'static str {
        match self {
            StoreError::Project(e) => e.code(),
            StoreError::Norm(e) => e.code(),
            StoreError::Audit(e) => e.code(),
            StoreError::View(e) => e.code(),
            StoreError::DuplicateProject(_) => "DuplicateProject",
            StoreError::UnknownProject(_) => "UnknownProject",
            StoreError::InvalidIdentifier(_) => "InvalidIdentifier",
        }
    }
}

fn storage(e: impl std::fmt::Display) -> StoreError {
    StoreError::Audit(AuditError::StorageFailure(e.to_string()))
}

pub trait Clock: Send + Sync {
    fn now(&self) -> DateTime<Utc>;
}

#[derive(Debug, Default, Clone, Copy)]
pub struct SystemClock;

impl Clock for SystemClock {
    fn now(&self) -> DateTime<Utc> {
        Utc::now()
    }
}

/// Deterministic clock: `start`, `start + step`, `start + 2·step`, …
#[derive(Debug)]
pub struct SteppingClock {
    next: Mutex<DateTime<Utc>>,
    step: Duration,
}

impl SteppingClock {
    pub fn new(start: DateTime<Utc>, step: Duration) -> Self {
        Self {
            next: Mutex::new(start),
            step,
        }
    }
}

impl Clock for SteppingClock {
    fn now(&self) -> DateTime<Utc> {
        let mut next = self.next.lock().expect("clock lock poisoned");
        let now = *next;
        *next = now + self.step;
        now
    }
}

/// Result of one successful mutation.
#[derive(Debug, Clone, Serialize)]
pub struct Executed {
    pub sequence: u64,
    pub event_type: &'static str,
    /// The affected entity after the change.
    pub outcome: serde_json::Value,
    /// Status recomputed after the change.
    pub status: ProjectStatusReport,
}

fn valid_identifier(id: &str) -> bool {
    !id.is_empty()
        && !id.starts_with('.')
        && id
            .chars()
            .all(|c| c.is_ascii_alphanumeric() || matches!(c, '.' | '_' | '-'))
}

/// Creation is authorized against the parameterization itself: the actor
/// must be listed there with a role allowed to create projects.
pub fn authorize_creation(actor: &str, params: &ProjectParameterization) -> Result<(), ProjectError> {
    let allowed = params
        .users
        .iter()
        .find(|u| u.user_id == actor)
        .is_some_and(|u| authorize(u.role, Action::CreateProject).is_allowed());
    if allowed {
        Ok(())
    } else {
        Err(ProjectError::PermissionDenied {
            actor: actor.to_string(),
            action: Action::CreateProject,
        })
    }
}

#[derive(Debug)]
struct LogFile {
    path: PathBuf,
    file: File,
    len: u64,
}

impl LogFile {
    fn create(path: &Path, header_line: &str) -> Result<Self, StoreError> {
        let mut file = OpenOptions::new()
            .create_new(true)
            .append(true)
            .open(path)
            .map_err(|e| {
                if e.kind() == std::io::ErrorKind::AlreadyExists {
                    StoreError::DuplicateProject(
                        path.file_stem()
                            .map(|s| s.to_string_lossy().into_owned())
                            .unwrap_or_default(),
                    )
                } else {
                    storage(e)
                }
            })?;
        let line = format!("{header_line}\n");
        file.write_all(line.as_bytes()).map_err(storage)?;
        Ok(Self {
            path: path.to_path_buf(),
            file,
            len: line.len() as u64,
        })
    }

    fn open(path: &Path, len: u64) -> Result<Self, StoreError> {
        let file = OpenOptions::new().append(true).open(path).map_err(storage)?;
        Ok(Self {
            path: path.to_path_buf(),
            file,
            len,
        })
    }

    fn append(&mut self, line: &str, sync: bool) -> Result<(), StoreError> {
        // Anything else writing to the file breaks the chain we hold in memory.
        let on_disk = self.file.metadata().map_err(storage)?.len();
        if on_disk != self.len {
            return Err(AuditError::ChainCorruption {
                index: 0,
                reason: format!("{} was modified outside the store", self.path.display()),
            }
            .into());
        }
        let mut buf = String::with_capacity(line.len() + 1);
        buf.push_str(line);
        buf.push('\n');
        self.file.write_all(buf.as_bytes()).map_err(storage)?;
        self.len += buf.len() as u64;
        if sync {
            self.sync()?;
        }
        Ok(())
    }

    fn sync(&mut self) -> Result<(), StoreError> {
        self.file.sync_data().map_err(storage)
    }
}

/// A live project together with the log it was built from.
#[derive(Debug)]
pub struct ProjectLedger {
    project: Project,
    log: EventLog,
    file: Option<LogFile>,
    poisoned: bool,
}

impl ProjectLedger {
    /// Instantiates a project and records its creation. With a `path`, the
    /// log is persisted there (the file must not exist yet).
    pub fn create(
        actor: &str,
        params: ProjectParameterization,
        norm: Arc<NormTemplate>,
        at: DateTime<Utc>,
        path: Option<&Path>,
    ) -> Result<(Self, Executed), StoreError> {
        authorize_creation(actor, &params)?;
        let project = Project::create(params.clone(), Arc::clone(&norm), at)?;
        let mut log = EventLog::new(project.project_id());
        let mut file = match path {
            Some(p) => Some(LogFile::create(p, &log.header_line())?),
            None => None,
        };
        let event = Event::ProjectCreated {
            params,
            norm: (*norm).clone(),
        };
        let record = log.append(actor, at, event).clone();
        if let Some(f) = file.as_mut() {
            f.append(&record.to_line(), true)?;
        }
        let ledger = Self {
            project,
            log,
            file,
            poisoned: false,
        };
        let executed = Executed {
            sequence: record.sequence,
            event_type: "ProjectCreated",
            outcome: to_canonical_value(&ledger.project.parameterization),
            status: cc_check(&ledger.project),
        };
        Ok((ledger, executed))
    }

    /// Loads, verifies and replays a log file.
    pub fn open(path: &Path) -> Result<Self, StoreError> {
        let text = std::fs::read_to_string(path).map_err(storage)?;
        let log = EventLog::from_ndjson(&text)?;
        let project = audit::replay_unchecked(log.records())?;
        if project.project_id() != log.header().project_id {
            return Err(AuditError::InvalidEventSequence {
                sequence: 0,
                reason: "header names a different project".into(),
            }
            .into());
        }
        Ok(Self {
            project,
            log,
            file: Some(LogFile::open(path, text.len() as u64)?),
            poisoned: false,
        })
    }

    /// Rebuilds a ledger from an in-memory log (verifying it).
    pub fn from_log(log: EventLog) -> Result<Self, StoreError> {
        audit::verify_records(log.records())?;
        let project = audit::replay_unchecked(log.records())?;
        Ok(Self {
            project,
            log,
            file: None,
            poisoned: false,
        })
    }

    pub fn project(&self) -> &Project {
        &self.project
    }

    pub fn log(&self) -> &EventLog {
        &self.log
    }

    pub fn execute(
        &mut self,
        actor: &str,
        command: &Command,
        at: DateTime<Utc>,
    ) -> Result<Executed, StoreError> {
        self.execute_inner(actor, command, at, true)
    }

    /// Like [`execute`](Self::execute) but leaves the file unsynced; call
    /// [`sync`](Self::sync) before acknowledging the batch.
    pub fn execute_unsynced(
        &mut self,
        actor: &str,
        command: &Command,
        at: DateTime<Utc>,
    ) -> Result<Executed, StoreError> {
        self.execute_inner(actor, command, at, false)
    }

    fn execute_inner(
        &mut self,
        actor: &str,
        command: &Command,
        at: DateTime<Utc>,
        sync: bool,
    ) -> Result<Executed, StoreError> {
        if self.poisoned {
            return Err(storage("ledger is out of sync with its log; reopen the project"));
        }
        let event = command.to_event(&self.project);
        let outcome = apply_event(&mut self.project, actor, at, &event).map_err(|e| match e {
            ApplyError::Rejected(e) => StoreError::Project(e),
            ApplyError::OutOfSequence(msg) => storage(msg),
        })?;
        let event_type = event.type_name();
        let record = self.log.append(actor, at, event);
        let sequence = record.sequence;
        if let Some(f) = self.file.as_mut() {
            let line = record.to_line();
            if let Err(e) = f.append(&line, sync) {
                self.poisoned = true;
                return Err(e);
            }
        }
        Ok(Executed {
            sequence,
            event_type,
            outcome,
            status: cc_check(&self.project),
        })
    }

    pub fn sync(&mut self) -> Result<(), StoreError> {
        match self.file.as_mut() {
            Some(f) => f.sync(),
            None => Ok(()),
        }
    }

    pub fn export_evidence(&self, up_to: Option<u64>) -> Result<EvidencePackage, StoreError> {
        let up_to = up_to.unwrap_or(self.log.len() as u64 - 1);
        Ok(audit::export_evidence(&self.log, up_to)?)
    }
}

type SharedLedger = Arc<RwLock<ProjectLedger>>;

/// Norm registry plus project ledgers under one root directory.
pub struct Store {
    projects_dir: PathBuf,
    norms_dir: PathBuf,
    registry: RwLock<NormRegistry>,
    ledgers: Mutex<BTreeMap<String, SharedLedger>>,
    clock: Arc<dyn Clock>,
}

impl std::fmt::Debug for Store {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Store")
            .field("projects_dir", &self.projects_dir)
            .field("norms_dir", &self.norms_dir)
            .finish_non_exhaustive()
    }
}

impl Store {
    pub fn open(root: &Path) -> Result<Self, StoreError> {
        Self::open_with(root, None, Arc::new(SystemClock))
    }

    pub fn open_with(
        root: &Path,
        norms_dir: Option<&Path>,
        clock: Arc<dyn Clock>,
    ) -> Result<Self, StoreError> {
        let projects_dir = root.join("projects");
        let norms_dir = norms_dir
            .map(Path::to_path_buf)
            .unwrap_or_else(|| root.join("norms"));
        std::fs::create_dir_all(&projects_dir).map_err(storage)?;
        std::fs::create_dir_all(&norms_dir).map_err(storage)?;
        let registry = NormRegistry::load_dir(&norms_dir)?;
        Ok(Self {
            projects_dir,
            norms_dir,
            registry: RwLock::new(registry),
            ledgers: Mutex::new(BTreeMap::new()),
            clock,
        })
    }

    pub fn now(&self) -> DateTime<Utc> {
        self.clock.now()
    }

    pub fn norms(&self) -> Vec<Arc<NormTemplate>> {
        self.registry
            .read()
            .expect("registry lock poisoned")
            .iter()
            .cloned()
            .collect()
    }

    pub fn norm(&self, norm_id: &str) -> Result<Arc<NormTemplate>, StoreError> {
        Ok(self
            .registry
            .read()
            .expect("registry lock poisoned")
            .get(norm_id)?)
    }

    /// Validates a template, stores it in the template directory and
    /// registers it.
    pub fn add_norm(&self, source: &[u8]) -> Result<Arc<NormTemplate>, StoreError> {
        let template = load_norm_template(source)?;
        if !valid_identifier(&template.norm_id) {
            return Err(StoreError::InvalidIdentifier(template.norm_id));
        }
        let mut registry = self.registry.write().expect("registry lock poisoned");
        if registry.get(&template.norm_id).is_ok() {
            return Err(NormError::DuplicateNorm(template.norm_id).into());
        }
        let path = self.norms_dir.join(format!("{}.json", template.norm_id));
        std::fs::write(&path, source).map_err(storage)?;
        Ok(registry.insert(template)?)
    }

    fn log_path(&self, project_id: &str) -> PathBuf {
        self.projects_dir.join(format!("{project_id}.log"))
    }

    pub fn project_ids(&self) -> Result<Vec<String>, StoreError> {
        let mut ids: Vec<String> = std::fs::read_dir(&self.projects_dir)
            .map_err(storage)?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.extension().is_some_and(|x| x == "log"))
            .filter_map(|p| p.file_stem().map(|s| s.to_string_lossy().into_owned()))
            .collect();
        ids.sort();
        Ok(ids)
    }

    fn ledger(&self, project_id: &str) -> Result<SharedLedger, StoreError> {
        let mut ledgers = self.ledgers.lock().expect("ledger map poisoned");
        if let Some(l) = ledgers.get(project_id) {
            if !l.read().expect("ledger lock poisoned").poisoned {
                return Ok(Arc::clone(l));
            }
        }
        let path = self.log_path(project_id);
        if !valid_identifier(project_id) || !path.exists() {
            return Err(StoreError::UnknownProject(project_id.to_string()));
        }
        let ledger = Arc::new(RwLock::new(ProjectLedger::open(&path)?));
        ledgers.insert(project_id.to_string(), Arc::clone(&ledger));
        Ok(ledger)
    }

    pub fn create_project(
        &self,
        actor: &str,
        params: ProjectParameterization,
    ) -> Result<Executed, StoreError> {
        self.create_project_at(actor, params, self.now())
    }

    pub fn create_project_at(
        &self,
        actor: &str,
        params: ProjectParameterization,
        at: DateTime<Utc>,
    ) -> Result<Executed, StoreError> {
        if !valid_identifier(&params.project_id) {
            return Err(StoreError::InvalidIdentifier(params.project_id));
        }
        let mut ledgers = self.ledgers.lock().expect("ledger map poisoned");
        let path = self.log_path(&params.project_id);
        if path.exists() {
            return Err(StoreError::DuplicateProject(params.project_id));
        }
        let norm = self.norm(&params.norm_ref).map_err(|e| match e {
            StoreError::Norm(NormError::UnknownNorm(n)) => ProjectError::UnknownNorm(n).into(),
            other => other,
        })?;
        let id = params.project_id.clone();
        // Validate fully before touching the filesystem.
        authorize_creation(actor, &params)?;
        Project::create(params.clone(), Arc::clone(&norm), at)?;
        let (ledger, executed) = ProjectLedger::create(actor, params, norm, at, Some(&path))?;
        ledgers.insert(id, Arc::new(RwLock::new(ledger)));
        Ok(executed)
    }

    pub fn execute(
        &self,
        project_id: &str,
        actor: &str,
        command: &Command,
    ) -> Result<Executed, StoreError> {
        self.execute_at(project_id, actor, command, self.now(), true)
    }

    pub fn execute_at(
        &self,
        project_id: &str,
        actor: &str,
        command: &Command,
        at: DateTime<Utc>,
        sync: bool,
    ) -> Result<Executed, StoreError> {
        let ledger = self.ledger(project_id)?;
        let mut guard = write(&ledger);
        if sync {
            guard.execute(actor, command, at)
        } else {
            guard.execute_unsynced(actor, command, at)
        }
    }

    pub fn sync(&self, project_id: &str) -> Result<(), StoreError> {
        let ledger = self.ledger(project_id)?;
        let mut guard = write(&ledger);
        guard.sync()
    }

    /// Runs `f` against a consistent snapshot of the project.
    pub fn read<T>(
        &self,
        project_id: &str,
        f: impl FnOnce(&ProjectLedger) -> T,
    ) -> Result<T, StoreError> {
        let ledger = self.ledger(project_id)?;
        let guard = read(&ledger);
        Ok(f(&guard))
    }

    pub fn export_evidence(
        &self,
        project_id: &str,
        up_to: Option<u64>,
    ) -> Result<EvidencePackage, StoreError> {
        self.read(project_id, |l| l.export_evidence(up_to))?
    }
}

fn read(l: &SharedLedger) -> RwLockReadGuard<'_, ProjectLedger> {
    l.read().expect("ledger lock poisoned")
}

fn write(l: &SharedLedger) -> RwLockWriteGuard<'_, ProjectLedger> {
    l.write().expect("ledger lock poisoned")
}
