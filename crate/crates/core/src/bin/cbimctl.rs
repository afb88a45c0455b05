use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use cbim_core::connector::{ConnectorError, Workspace};
use cbim_core::Discipline;

/// Discipline connector: push local model changes, pull references.
#[derive(Parser)]
#[command(name = "cbimctl", version)]
struct Cli {
    #[arg(long, global = true, default_value = ".")]
    workspace: PathBuf,
    /// Server address (host:port); overrides the one stored at init.
    #[arg(long, global = true)]
    server: Option<String>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Turn the workspace directory into a connector workspace.
    Init {
        #[arg(long)]
        discipline: String,
    },
    /// Diff a model container against the last push and send the changes.
    Push { container: PathBuf },
    /// Fetch new reference packages into references/.
    Pull,
    /// Show workspace state and pending local changes.
    Status {
        /// Container to diff; defaults to the one last pushed.
        container: Option<PathBuf>,
    },
}

fn run(cli: Cli) -> Result<String, ConnectorError> {
    let server = cli.server.as_deref();
    match cli.command {
        Command::Init { discipline } => {
            let d: Discipline = discipline.parse().map_err(|e| ConnectorError::Usage(format!("{e}")))?;
            let server = server.ok_or_else(|| ConnectorError::Usage("init needs --server host:port".into()))?;
            let ws = Workspace::init(&cli.workspace, d, server)?;
            Ok(format!("initialized {} workspace for {}", d, ws.state().server))
        }
        Command::Push { container } => Ok(Workspace::open(&cli.workspace)?.push(&container, server)?.to_string()),
        Command::Pull => Ok(Workspace::open(&cli.workspace)?.pull(server)?.to_string()),
        Command::Status { container } => Ok(Workspace::open(&cli.workspace)?.status(container.as_deref())?.to_string()),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    match run(cli) {
        Ok(out) => {
            println!("{out}");
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("cbimctl: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
