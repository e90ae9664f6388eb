use std::fs::File;
use std::io::{BufReader, Write};
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use clap::Args;
use hbtm::ingest::{
    build_corpora, parse_raw_log, write_rejects_csv, ActivityMapping, ColumnMap, FilterConfig, IngestSummary,
};
use hbtm::Schema;
use serde::{Deserialize, Serialize};
use walkdir::WalkDir;

use crate::config::{create, read_json, required, write_json};

#[derive(Debug, Args, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IngestArgs {
    /// Raw log files, or directories whose files are read in name order.
    #[serde(default)]
    pub inputs: Vec<PathBuf>,
    /// Column-map JSON; defaults to the headerless lab-session layout.
    #[arg(long)]
    pub column_map: Option<PathBuf>,
    /// Activity-to-event rules JSON.
    #[arg(long)]
    pub activity_map: Option<PathBuf>,
    /// Schema JSON with event labels and bin edges.
    #[arg(long)]
    pub schema: Option<PathBuf>,
    /// Shortest admitted duration in seconds.
    #[arg(long)]
    pub min_duration: Option<f64>,
    /// Longest admitted duration in seconds.
    #[arg(long)]
    pub max_duration: Option<f64>,
    #[arg(long)]
    pub out_dir: Option<PathBuf>,
}

#[derive(Serialize)]
struct IngestRun {
    inputs: Vec<PathBuf>,
    files: Vec<PathBuf>,
    column_map: ColumnMap,
    activity_map: ActivityMapping,
    schema: Schema,
    filter: FilterConfig,
    out_dir: PathBuf,
}

#[derive(Serialize)]
struct SummaryFile<'a> {
    command: &'static str,
    config: &'a IngestRun,
    summary: IngestSummary,
}

fn collect_files(inputs: &[PathBuf]) -> Result<Vec<PathBuf>> {
    let mut files = Vec::new();
    for input in inputs {
        if input.is_dir() {
            for entry in WalkDir::new(input).sort_by_file_name() {
                let entry = entry.with_context(|| format!("walking {}", input.display()))?;
                let hidden = entry.file_name().to_string_lossy().starts_with('.');
                if entry.file_type().is_file() && !hidden {
                    files.push(entry.into_path());
                }
            }
        } else if input.is_file() {
            files.push(input.clone());
        } else {
            return Err(hbtm::Error::Config(format!("input {} does not exist", input.display())).into());
        }
    }
    Ok(files)
}

fn session_file_name(session: &str) -> String {
    let clean: String = session
        .chars()
        .map(|c| if c.is_ascii_alphanumeric() || c == '-' { c } else { '_' })
        .collect();
    format!("session_{clean}.jsonl")
}

pub fn run(args: IngestArgs) -> Result<()> {
    if args.inputs.is_empty() {
        return Err(hbtm::Error::Config("at least one input path is required".into()).into());
    }
    let out_dir = required(args.out_dir, "out-dir")?;
    let column_map = match &args.column_map {
        Some(p) => read_json(p)?,
        None => ColumnMap::epm(),
    };
    let activity_map: ActivityMapping = match &args.activity_map {
        Some(p) => read_json(p)?,
        None => ActivityMapping::default(),
    };
    let schema: Schema = match &args.schema {
        Some(p) => read_json(p)?,
        None => Schema::default(),
    };
    schema.validate()?;
    let defaults = FilterConfig::default();
    let filter = FilterConfig {
        min_duration_s: args.min_duration.unwrap_or(defaults.min_duration_s),
        max_duration_s: args.max_duration.unwrap_or(defaults.max_duration_s),
    };
    filter.validate()?;

    let files = collect_files(&args.inputs)?;
    let mut events = Vec::new();
    let mut rejects = Vec::new();
    let mut rows = 0;
    for path in &files {
        let file = File::open(path).with_context(|| format!("opening {}", path.display()))?;
        let parsed = parse_raw_log(&path.display().to_string(), BufReader::new(file), &column_map)
            .with_context(|| format!("reading {}", path.display()))?;
        rows += parsed.rows;
        events.extend(parsed.events);
        rejects.extend(parsed.rejects);
    }
    let output = build_corpora(&events, &activity_map, &schema, &filter)?;

    let run = IngestRun {
        inputs: args.inputs,
        files,
        column_map,
        activity_map,
        schema: schema.clone(),
        filter,
        out_dir: out_dir.clone(),
    };
    write_json(&out_dir.join("schema.json"), &schema)?;
    for (session, corpus) in &output.corpora {
        let path = out_dir.join(session_file_name(session));
        let mut w = create(&path)?;
        corpus.write_jsonl(&mut w)?;
        w.flush()?;
    }
    write_rejects_file(&out_dir.join("rejects.csv"), rejects.iter().chain(&output.filtered))?;
    let summary = output.summary(&schema, rows, rejects.len() as u64);
    write_json(
        &out_dir.join("summary.json"),
        &SummaryFile {
            command: "ingest",
            config: &run,
            summary,
        },
    )
}

fn write_rejects_file<'a>(path: &Path, rejects: impl IntoIterator<Item = &'a hbtm::ingest::Reject>) -> Result<()> {
    let mut w = create(path)?;
    write_rejects_csv(&mut w, rejects)?;
    w.flush()?;
    Ok(())
}
