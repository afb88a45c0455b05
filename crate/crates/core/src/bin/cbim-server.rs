use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;

use cbim_core::server::{serve, Coordinator, Rules};

/// Coordination server for object-level BIM collaboration.
#[derive(Parser)]
#[command(name = "cbim-server", version)]
struct Args {
    /// TCP port; 0 picks a free one.
    #[arg(long, default_value_t = 7878)]
    port: u16,
    /// Interface to bind.
    #[arg(long, default_value = "127.0.0.1")]
    host: String,
    #[arg(long, env = "CBIM_DATA_DIR")]
    data_dir: PathBuf,
    /// Enrichment ruleset JSON, optionally with a `relevance` section.
    #[arg(long)]
    ruleset: Option<PathBuf>,
    /// Tolerances JSON (touch_tol, near_tol, weld_eps), overriding the ruleset's.
    #[arg(long)]
    tolerances: Option<PathBuf>,
    #[arg(long, default_value = "info")]
    log_level: log::LevelFilter,
}

fn main() -> ExitCode {
    let args = Args::parse();
    env_logger::Builder::new().filter_level(args.log_level).init();
    let rules = match Rules::load(args.ruleset.as_deref(), args.tolerances.as_deref()) {
        Ok(r) => r,
        Err(e) => {
            eprintln!("cbim-server: {e}");
            return ExitCode::from(2);
        }
    };
    let coordinator = match Coordinator::open(&args.data_dir, rules) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("cbim-server: {e}");
            return ExitCode::from(1);
        }
    };
    let server = match serve(coordinator, (args.host.as_str(), args.port)) {
        Ok(s) => s,
        Err(e) => {
            eprintln!("cbim-server: cannot listen on {}:{}: {e}", args.host, args.port);
            return ExitCode::from(1);
        }
    };
    println!("cbim-server listening on {}", server.local_addr());
    server.wait();
    ExitCode::SUCCESS
}
