mod analyze;
mod config;
mod fit;
mod generate;
mod ingest;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use serde_json::json;

#[derive(Debug, Parser)]
#[command(name = "hbtm", version, about = "Hidden behavior traits model for event logs")]
struct Cli {
    /// JSON file with settings for the subcommand; flags override it.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Turn raw activity logs into per-session token corpora.
    Ingest(ingest::IngestArgs),
    /// Fit a model to a corpus with collapsed Gibbs sampling.
    Fit(fit::FitArgs),
    /// Sample parameters and a labeled synthetic corpus.
    Generate(generate::GenerateArgs),
    /// Cluster trait mixtures and relate them to grades.
    Analyze(analyze::AnalyzeArgs),
    /// Write the event, time and interaction profile of one trait.
    ExportTrait(analyze::ExportArgs),
}

fn run(cli: Cli) -> anyhow::Result<()> {
    let file = cli.config.as_deref();
    match cli.command {
        Command::Ingest(a) => ingest::run(config::resolve(a, file)?),
        Command::Fit(a) => fit::run(config::resolve(a, file)?),
        Command::Generate(a) => generate::run(config::resolve(a, file)?),
        Command::Analyze(a) => analyze::run(config::resolve(a, file)?),
        Command::ExportTrait(a) => analyze::run_export(config::resolve(a, file)?),
    }
}

fn error_kind(err: &anyhow::Error) -> &'static str {
    for cause in err.chain() {
        if let Some(e) = cause.downcast_ref::<hbtm::Error>() {
            return e.kind();
        }
        if cause.is::<std::io::Error>() {
            return "io";
        }
        if cause.is::<serde_json::Error>() {
            return "json";
        }
        if cause.is::<csv::Error>() {
            return "csv";
        }
    }
    "error"
}

fn report(kind: &str, message: &str) {
    eprintln!("{}", json!({ "error": { "kind": kind, "message": message } }));
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => {
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            report("usage", e.render().to_string().trim());
            return ExitCode::from(2);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            report(error_kind(&e), &format!("{e:#}"));
            ExitCode::FAILURE
        }
    }
}
