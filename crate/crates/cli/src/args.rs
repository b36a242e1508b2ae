use std::net::SocketAddr;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Debug, Parser)]
#[command(name = "veritrack", version, about = "Monitor software verification processes against a certification norm")]
pub struct Cli {
    /// Store directory holding project logs and uploaded norms.
    #[arg(long, global = true, env = "VERITRACK_STORE", default_value = ".veritrack")]
    pub store: PathBuf,
    /// Norm template directory (defaults to <store>/norms).
    #[arg(long, global = true, env = "VERITRACK_NORMS")]
    pub norms: Option<PathBuf>,
    #[arg(long, global = true, value_enum, default_value_t = Format::Human)]
    pub format: Format,
    /// Acting user for mutations.
    #[arg(long = "as", global = true, value_name = "USER_ID")]
    pub actor: Option<String>,
    #[command(subcommand)]
    pub command: Commands,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Human,
    Json,
    Csv,
}

#[derive(Debug, Subcommand)]
pub enum Commands {
    /// Norm templates.
    #[command(subcommand)]
    Norm(NormCommand),
    /// Projects, their status and metrics.
    #[command(subcommand)]
    Project(ProjectCommand),
    /// Configuration items.
    #[command(subcommand)]
    Item(ItemCommand),
    /// Checklist answers.
    #[command(subcommand)]
    Checklist(ChecklistCommand),
    /// Observations (non-conformities).
    #[command(subcommand)]
    Obs(ObsCommand),
    /// Evidence packages.
    #[command(subcommand)]
    Evidence(EvidenceCommand),
    /// Scripted datasets.
    #[command(subcommand)]
    Fixtures(FixturesCommand),
    /// The role/permission matrix.
    #[command(subcommand)]
    Roles(RolesCommand),
    /// Run the HTTP service.
    Serve(ServeArgs),
}

#[derive(Debug, Subcommand)]
pub enum NormCommand {
    /// Parse and validate a template file without installing it.
    Validate { file: PathBuf },
    /// List installed templates.
    List,
    /// Show a template, or what it requires at one assurance level.
    Show {
        norm_id: String,
        #[arg(long)]
        level: Option<String>,
    },
}

#[derive(Debug, Args)]
pub struct ProjectSelector {
    /// Project id; may be omitted when the store holds a single project.
    pub project: Option<String>,
}

#[derive(Debug, Subcommand)]
pub enum ProjectCommand {
    /// Create a project from a parameterization file.
    Create {
        #[arg(long)]
        params: PathBuf,
    },
    Status(ProjectSelector),
    Metrics(ProjectSelector),
    List,
}

#[derive(Debug, Subcommand)]
pub enum ItemCommand {
    /// Register a configuration item under a process.
    Register {
        #[arg(long)]
        project: Option<String>,
        #[arg(long)]
        process: String,
        #[arg(long)]
        item: String,
        #[arg(long)]
        spec: String,
        #[arg(long)]
        title: String,
        #[arg(long, default_value = "initial")]
        version: String,
    },
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum AnswerValue {
    Yes,
    No,
    Na,
}

#[derive(Debug, Subcommand)]
pub enum ChecklistCommand {
    /// Record an answer; `na` needs --justification.
    Answer {
        #[arg(long)]
        project: Option<String>,
        checklist: String,
        question: String,
        #[arg(value_enum)]
        value: AnswerValue,
        #[arg(long)]
        justification: Option<String>,
    },
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum StateValue {
    Open,
    Resolved,
    Closed,
}

#[derive(Debug, Subcommand)]
pub enum ObsCommand {
    Open {
        #[arg(long)]
        project: Option<String>,
        #[arg(long)]
        item: String,
        #[arg(long)]
        text: String,
    },
    Transition {
        #[arg(long)]
        project: Option<String>,
        observation: String,
        #[arg(value_enum)]
        to: StateValue,
        #[arg(long)]
        comment: String,
    },
    List {
        #[arg(long)]
        project: Option<String>,
        #[arg(long)]
        item: String,
    },
}

#[derive(Debug, Subcommand)]
pub enum EvidenceCommand {
    /// Write a tar evidence package for the log prefix up to a sequence.
    Export {
        #[arg(long)]
        project: Option<String>,
        #[arg(long)]
        up_to: Option<u64>,
        #[arg(long, short)]
        output: PathBuf,
    },
    /// Check an evidence package offline.
    Verify { file: PathBuf },
}

#[derive(Debug, Subcommand)]
pub enum FixturesCommand {
    /// Run a scripted command sequence through the normal write path.
    Load { file: PathBuf },
}

#[derive(Debug, Subcommand)]
pub enum RolesCommand {
    Show,
}

#[derive(Debug, Args)]
pub struct ServeArgs {
    #[arg(long, default_value = "127.0.0.1:8080")]
    pub listen: SocketAddr,
    /// JSON object mapping bearer tokens to users.
    #[arg(long)]
    pub tokens: PathBuf,
}
