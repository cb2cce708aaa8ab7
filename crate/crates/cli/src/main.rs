mod config;
mod error;
mod output;
mod probes;
mod run;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

/// Runs estimate probes and small-data solves from a TOML config.
#[derive(Parser)]
#[command(name = "dwl", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run every probe and solve in the config, writing reports to its output directory.
    Run { config: PathBuf },
    /// List available probes, or print the config JSON schema with --json.
    ListProbes {
        #[arg(long)]
        json: bool,
    },
    /// Pretty-print a JSON file written by `run`.
    ShowReport { path: PathBuf },
}

fn list_probes(json: bool) {
    if json {
        println!("{}", serde_json::to_string_pretty(&config::schema()).expect("schema serializes"));
        return;
    }
    for p in probes::CATALOGUE {
        println!("{}\n  checks: {}\n  parameters: {}", p.name, p.estimate, p.parameters);
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match cli.command {
        Command::ListProbes { json } => {
            list_probes(json);
            ExitCode::SUCCESS
        }
        Command::ShowReport { path } => match output::render(&path) {
            Ok(s) => {
                print!("{s}");
                ExitCode::SUCCESS
            }
            Err(e) => {
                eprintln!("error: {e}");
                ExitCode::from(1)
            }
        },
        Command::Run { config } => match run::run(&config) {
            Ok(outcome) => {
                if !outcome.checks.is_empty() {
                    print!("{}", output::summary_table(&outcome.checks));
                }
                println!("reports written to {}", outcome.output.display());
                if outcome.all_pass() {
                    ExitCode::SUCCESS
                } else {
                    ExitCode::from(2)
                }
            }
            Err(e) => {
                eprintln!("error: {e}");
                ExitCode::from(1)
            }
        },
    }
}
