mod args;
mod output;

use std::path::Path;
use std::process::ExitCode;
use std::sync::Arc;

use clap::Parser;
use veritrack_core::access::{allowed_actions, Action, Role};
use veritrack_core::audit::{AuditError, EvidencePackage};
use veritrack_core::canonical::to_canonical_value;
use veritrack_core::command::Command;
use veritrack_core::norm::{load_norm_template, NormError};
use veritrack_core::project::{Answer, ObservationState, ProjectParameterization};
use veritrack_core::script::{Script, ScriptError};
use veritrack_core::status::{cc_check, nonconformity_metrics, view_observations, view_project_status};
use veritrack_core::store::{Store, StoreError, SystemClock};
use serde_json::json;

use args::*;
use output::Printer;

#[derive(Debug)]
enum CliError {
    Usage(String),
    Domain { code: &'static str, message: String },
}

impl CliError {
    fn domain(code: &'static str, message: impl Into<String>) -> Self {
        CliError::Domain {
            code,
            message: message.into(),
        }
    }
}

impl From<StoreError> for CliError {
    fn from(e: StoreError) -> Self {
        CliError::domain(e.code(), e.to_string())
    }
}

impl From<NormError> for CliError {
    fn from(e: NormError) -> Self {
        CliError::domain(e.code(), e.to_string())
    }
}

impl From<AuditError> for CliError {
    fn from(e: AuditError) -> Self {
        CliError::domain(e.code(), e.to_string())
    }
}

impl From<ScriptError> for CliError {
    fn from(e: ScriptError) -> Self {
        CliError::domain(e.code(), e.to_string())
    }
}

fn io_error(path: &Path, e: std::io::Error) -> CliError {
    CliError::domain("StorageFailure", format!("{}: {e}", path.display()))
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let printer = Printer::new(cli.format);
    match run(&cli, &printer) {
        Ok(()) => ExitCode::SUCCESS,
        Err(CliError::Usage(message)) => {
            eprintln!("usage error: {message}");
            ExitCode::from(2)
        }
        Err(CliError::Domain { code, message }) => {
            printer.error(code, &message);
            ExitCode::from(1)
        }
    }
}

fn open_store(cli: &Cli) -> Result<Store, CliError> {
    Ok(Store::open_with(
        &cli.store,
        cli.norms.as_deref(),
        Arc::new(SystemClock),
    )?)
}

fn actor(cli: &Cli) -> Result<&str, CliError> {
    cli.actor
        .as_deref()
        .ok_or_else(|| CliError::Usage("this command mutates a project and needs --as <user_id>".into()))
}

fn select_project(store: &Store, explicit: Option<&str>) -> Result<String, CliError> {
    if let Some(p) = explicit {
        return Ok(p.to_string());
    }
    let ids = store.project_ids()?;
    match ids.as_slice() {
        [only] => Ok(only.clone()),
        [] => Err(CliError::domain("UnknownProject", "the store holds no project")),
        _ => Err(CliError::Usage(format!(
            "the store holds several projects ({}); name one",
            ids.join(", ")
        ))),
    }
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T, CliError> {
    let text = std::fs::read_to_string(path).map_err(|e| io_error(path, e))?;
    serde_json::from_str(&text)
        .map_err(|e| CliError::domain("ParseError", format!("{}: {e}", path.display())))
}

fn run(cli: &Cli, out: &Printer) -> Result<(), CliError> {
    match &cli.command {
        Commands::Norm(cmd) => norm(cli, out, cmd),
        Commands::Project(cmd) => project(cli, out, cmd),
        Commands::Item(ItemCommand::Register {
            project,
            process,
            item,
            spec,
            title,
            version,
        }) => mutate(
            cli,
            out,
            project.as_deref(),
            Command::RegisterItem {
                process_id: process.clone(),
                item_id: item.clone(),
                spec_id: spec.clone(),
                title: title.clone(),
                version_label: version.clone(),
            },
        ),
        Commands::Checklist(ChecklistCommand::Answer {
            project,
            checklist,
            question,
            value,
            justification,
        }) => {
            let answer = match (value, justification) {
                (AnswerValue::Yes, None) => Answer::Yes,
                (AnswerValue::No, None) => Answer::No,
                (AnswerValue::Na, j) => Answer::NA {
                    justification: j.clone().unwrap_or_default(),
                },
                (_, Some(_)) => {
                    return Err(CliError::Usage("--justification only applies to `na`".into()))
                }
            };
            mutate(
                cli,
                out,
                project.as_deref(),
                Command::AnswerChecklist {
                    checklist_id: checklist.clone(),
                    question_id: question.clone(),
                    answer,
                },
            )
        }
        Commands::Obs(cmd) => obs(cli, out, cmd),
        Commands::Evidence(cmd) => evidence(cli, out, cmd),
        Commands::Fixtures(FixturesCommand::Load { file }) => {
            let store = open_store(cli)?;
            let script = Script::load(file)?;
            let base = file.parent().unwrap_or(Path::new("."));
            let report = script.run(&store, base)?;
            out.value(&report, |r| {
                format!(
                    "loaded {} events into {}\n",
                    r.events,
                    r.projects.join(", ")
                )
            })
        }
        Commands::Roles(RolesCommand::Show) => roles(out),
        Commands::Serve(args) => serve(cli, args),
    }
}

fn norm(cli: &Cli, out: &Printer, cmd: &NormCommand) -> Result<(), CliError> {
    match cmd {
        NormCommand::Validate { file } => {
            let bytes = std::fs::read(file).map_err(|e| io_error(file, e))?;
            let template = load_norm_template(&bytes)?;
            let warnings: Vec<String> = template
                .applicability_warnings()
                .iter()
                .map(ToString::to_string)
                .collect();
            let body = json!({"norm_id": template.norm_id, "valid": true, "warnings": warnings});
            out.value(&body, |_| {
                let mut s = format!("{}: valid\n", template.norm_id);
                for w in &warnings {
                    s.push_str(&format!("warning: {w}\n"));
                }
                s
            })
        }
        NormCommand::List => {
            let store = open_store(cli)?;
            let rows: Vec<Vec<String>> = store
                .norms()
                .iter()
                .map(|n| {
                    vec![
                        n.norm_id.clone(),
                        n.assurance_levels
                            .iter()
                            .map(|l| l.symbol.as_str())
                            .collect::<Vec<_>>()
                            .join(" "),
                        n.process_templates.len().to_string(),
                        n.title.clone(),
                    ]
                })
                .collect();
            out.table(&["norm_id", "levels", "processes", "title"], &rows)
        }
        NormCommand::Show { norm_id, level } => {
            let store = open_store(cli)?;
            let template = store.norm(norm_id)?;
            match level {
                None => out.value(&*template, |t| {
                    let mut s = format!("{} ({})\n", t.norm_id, t.title);
                    for p in &t.process_templates {
                        s.push_str(&format!(
                            "  {:<30} {} questions, documents: {}\n",
                            p.process_id,
                            p.checklist_template.questions.len(),
                            p.expected_document_kinds.join(" ")
                        ));
                    }
                    s
                }),
                Some(level) => {
                    let objectives = template.resolve_objectives(level)?;
                    let documents = template.required_documents(level)?;
                    let body = json!({
                        "norm_id": template.norm_id,
                        "level": level,
                        "objectives": objectives.iter().map(|(o, a)| json!({
                            "objective_id": o.objective_id,
                            "process_ref": o.process_ref,
                            "applicability": a,
                        })).collect::<Vec<_>>(),
                        "documents": documents.iter().map(|d| &d.spec_id).collect::<Vec<_>>(),
                    });
                    out.value(&body, |_| {
                        let mut s = format!("{} at level {level}\n", template.norm_id);
                        for (o, a) in &objectives {
                            s.push_str(&format!("  {:<8} {:<30} {a:?}\n", o.objective_id, o.process_ref));
                        }
                        s.push_str(&format!(
                            "required documents: {}\n",
                            documents.iter().map(|d| d.spec_id.as_str()).collect::<Vec<_>>().join(" ")
                        ));
                        s
                    })
                }
            }
        }
    }
}

fn project(cli: &Cli, out: &Printer, cmd: &ProjectCommand) -> Result<(), CliError> {
    let store = open_store(cli)?;
    match cmd {
        ProjectCommand::Create { params } => {
            let actor = actor(cli)?;
            let params: ProjectParameterization = read_json(params)?;
            let executed = store.create_project(actor, params)?;
            out.executed(&executed)
        }
        ProjectCommand::List => {
            let mut rows = Vec::new();
            for id in store.project_ids()? {
                let row = store.read(&id, |l| {
                    let p = l.project();
                    vec![
                        id.clone(),
                        p.parameterization.norm_ref.clone(),
                        p.parameterization.assurance_level.clone(),
                        cc_check(p).project_status.to_string(),
                    ]
                })?;
                rows.push(row);
            }
            out.table(&["project_id", "norm", "level", "status"], &rows)
        }
        ProjectCommand::Status(sel) => {
            let id = select_project(&store, sel.project.as_deref())?;
            let (report, rows) = store.read(&id, |l| {
                (cc_check(l.project()), view_project_status(l.project()))
            })?;
            match out.format() {
                Format::Json => out.json(&report),
                Format::Csv => out.table(
                    &["process_id", "name", "status", "pending_reason_count"],
                    &rows
                        .iter()
                        .map(|r| {
                            vec![
                                r.process_id.clone(),
                                r.name.clone(),
                                r.status.to_string(),
                                r.pending_reason_count.to_string(),
                            ]
                        })
                        .collect::<Vec<_>>(),
                ),
                Format::Human => {
                    let mut s = format!("{}: {}\n", report.project_id, report.project_status);
                    for r in &rows {
                        s.push_str(&format!(
                            "  {:<30} {:<30} {:<9} {}\n",
                            r.process_id, r.name, r.status, r.pending_reason_count
                        ));
                    }
                    out.text(&s)
                }
            }
        }
        ProjectCommand::Metrics(sel) => {
            let id = select_project(&store, sel.project.as_deref())?;
            let metrics = store.read(&id, |l| nonconformity_metrics(l.project()))?;
            match out.format() {
                Format::Json => out.json(&metrics),
                Format::Csv => out.text(&metrics.to_csv()),
                Format::Human => {
                    let mut s = format!(
                        "{:<30} {:>8} {:>8} {:>8} {:>10}\n",
                        "process", "opened", "resolved", "closed", "still_open"
                    );
                    let line = |name: &str, c: &veritrack_core::status::NcCounts| {
                        format!(
                            "{:<30} {:>8} {:>8} {:>8} {:>10}\n",
                            name, c.opened, c.resolved, c.closed, c.still_open
                        )
                    };
                    for p in &metrics.processes {
                        s.push_str(&line(&p.name, &p.counts));
                    }
                    s.push_str(&line("total", &metrics.totals));
                    out.text(&s)
                }
            }
        }
    }
}

fn mutate(cli: &Cli, out: &Printer, project: Option<&str>, command: Command) -> Result<(), CliError> {
    let actor = actor(cli)?;
    let store = open_store(cli)?;
    let id = select_project(&store, project)?;
    let executed = store.execute(&id, actor, &command)?;
    out.executed(&executed)
}

fn obs(cli: &Cli, out: &Printer, cmd: &ObsCommand) -> Result<(), CliError> {
    match cmd {
        ObsCommand::Open { project, item, text } => mutate(
            cli,
            out,
            project.as_deref(),
            Command::OpenObservation {
                item_id: item.clone(),
                text: text.clone(),
            },
        ),
        ObsCommand::Transition {
            project,
            observation,
            to,
            comment,
        } => mutate(
            cli,
            out,
            project.as_deref(),
            Command::TransitionObservation {
                observation_id: observation.clone(),
                to_state: match to {
                    StateValue::Open => ObservationState::Open,
                    StateValue::Resolved => ObservationState::Resolved,
                    StateValue::Closed => ObservationState::Closed,
                },
                comment: comment.clone(),
            },
        ),
        ObsCommand::List { project, item } => {
            let store = open_store(cli)?;
            let id = select_project(&store, project.as_deref())?;
            let observations = store
                .read(&id, |l| view_observations(l.project(), item))?
                .map_err(StoreError::from)?;
            match out.format() {
                Format::Json => out.json(&observations),
                _ => out.table(
                    &["observation_id", "state", "author", "opened_at", "text"],
                    &observations
                        .iter()
                        .map(|o| {
                            vec![
                                o.observation_id.clone(),
                                o.state.to_string(),
                                o.author.clone(),
                                o.opened_at.to_rfc3339(),
                                o.text.clone(),
                            ]
                        })
                        .collect::<Vec<_>>(),
                ),
            }
        }
    }
}

fn evidence(cli: &Cli, out: &Printer, cmd: &EvidenceCommand) -> Result<(), CliError> {
    match cmd {
        EvidenceCommand::Export {
            project,
            up_to,
            output,
        } => {
            let store = open_store(cli)?;
            let id = select_project(&store, project.as_deref())?;
            let package = store.export_evidence(&id, *up_to)?;
            let file = std::fs::File::create(output).map_err(|e| io_error(output, e))?;
            package.write_archive(std::io::BufWriter::new(file))?;
            out.value(&package.manifest, |m| {
                format!(
                    "wrote {} ({} records, head {})\n",
                    output.display(),
                    m.record_count,
                    m.head_hash
                )
            })
        }
        EvidenceCommand::Verify { file } => {
            let input = std::fs::File::open(file).map_err(|e| io_error(file, e))?;
            let package = EvidencePackage::read_archive(std::io::BufReader::new(input))?;
            package.verify()?;
            out.value(&package.manifest, |m| {
                format!(
                    "{}: verified {} records of {} up to sequence {}\n",
                    file.display(),
                    m.record_count,
                    m.project_id,
                    m.up_to_sequence
                )
            })
        }
    }
}

fn roles(out: &Printer) -> Result<(), CliError> {
    let allowed: Vec<(Role, Vec<Action>)> =
        Role::ALL.iter().map(|r| (*r, allowed_actions(*r))).collect();
    match out.format() {
        Format::Json => {
            let map: serde_json::Map<String, serde_json::Value> = allowed
                .iter()
                .map(|(r, a)| (r.to_string(), to_canonical_value(a)))
                .collect();
            out.json(&map)
        }
        _ => {
            let mut header = vec!["action"];
            header.extend(Role::ALL.iter().map(|r| r.as_str()));
            let rows: Vec<Vec<String>> = Action::ALL
                .iter()
                .map(|action| {
                    let mut row = vec![action.to_string()];
                    row.extend(allowed.iter().map(|(_, a)| {
                        if a.contains(action) { "allow" } else { "deny" }.to_string()
                    }));
                    row
                })
                .collect();
            out.table(&header, &rows)
        }
    }
}

fn serve(cli: &Cli, args: &ServeArgs) -> Result<(), CliError> {
    tracing_subscriber::fmt()
        .with_env_filter(
            tracing_subscriber::EnvFilter::try_from_default_env()
                .unwrap_or_else(|_| tracing_subscriber::EnvFilter::new("info")),
        )
        .init();
    let tokens = veritrack_api::TokenTable::load(&args.tokens)
        .map_err(|e| CliError::domain("StorageFailure", e))?;
    let config = veritrack_api::ServeConfig {
        listen: args.listen,
        store: cli.store.clone(),
        norms: cli.norms.clone(),
        tokens,
    };
    let runtime = tokio::runtime::Runtime::new()
        .map_err(|e| CliError::domain("StorageFailure", e.to_string()))?;
    runtime
        .block_on(veritrack_api::serve(config))
        .map_err(|e| CliError::domain("StorageFailure", e.to_string()))
}
