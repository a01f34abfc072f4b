mod args;
mod commands;

use std::process::ExitCode;

use clap::Parser;
use engage_core::EngageError;

use args::{Cli, Command};

fn error_kind(err: &anyhow::Error) -> &'static str {
    err.chain().find_map(|e| e.downcast_ref::<EngageError>()).map_or("error", EngageError::kind)
}

fn run(cli: Cli) -> anyhow::Result<()> {
    if let Some(n) = cli.threads {
        rayon::ThreadPoolBuilder::new().num_threads(n).build_global()?;
    }
    match &cli.command {
        Command::Ingest(a) => commands::ingest_cmd(a),
        Command::Simulate(a) => commands::simulate_cmd(a),
        Command::Fit(a) => commands::fit_cmd(a),
        Command::SweepK(a) => commands::sweep_k_cmd(a),
        Command::Assign(a) => commands::assign_cmd(a),
        Command::Taxonomy(a) => commands::taxonomy_cmd(a),
        Command::Retention(a) => commands::retention_cmd(a),
        Command::Report(a) => commands::report_cmd(a),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("ENGAGE_LOG", "warn")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            // The full context chain, outermost first.
            let message = err.chain().map(ToString::to_string).collect::<Vec<_>>().join(": ");
            let report = serde_json::json!({ "error": error_kind(&err), "message": message });
            eprintln!("{report}");
            ExitCode::FAILURE
        }
    }
}
