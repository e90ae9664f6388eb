use std::fs::File;
use std::io::{BufReader, Write};
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use clap::Args;
use hbtm::analysis::{export_trait, run_analysis, AnalysisConfig, GradeTable};
use hbtm::{AnalysisReport64, FitResult64};
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::config::{create, read_json, required, with_suffix, write_json};
use crate::fit::ModelFile;

#[derive(Debug, Args, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AnalyzeArgs {
    /// Model JSON written by `fit`.
    #[arg(long)]
    pub model: Option<PathBuf>,
    /// CSV with columns trace_id, SA, SFE, FE.
    #[arg(long)]
    pub grades: Option<PathBuf>,
    /// Significance level; a p-value strictly below it is significant.
    #[arg(long)]
    pub threshold: Option<f64>,
    /// Seed for the k-means restarts.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Number of learner clusters.
    #[arg(long)]
    pub clusters: Option<usize>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExportArgs {
    /// Model JSON written by `fit`.
    #[arg(long)]
    pub model: Option<PathBuf>,
    /// Trait number, starting at 1.
    #[arg(long = "trait")]
    #[serde(rename = "trait")]
    pub trait_number: Option<usize>,
    /// Profile CSV; the resolved settings go to `<out>.meta.json`.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Serialize)]
struct AnalyzeRun {
    model: PathBuf,
    grades: PathBuf,
    out: PathBuf,
    analysis: AnalysisConfig,
}

#[derive(Serialize)]
struct ReportFile<'a> {
    command: &'static str,
    config: AnalyzeRun,
    model_config: &'a Value,
    report: AnalysisReport64,
}

#[derive(Serialize)]
struct ExportMeta<'a> {
    command: &'static str,
    config: ExportRun,
    model_config: &'a Value,
    num_traits: usize,
}

#[derive(Serialize)]
struct ExportRun {
    model: PathBuf,
    #[serde(rename = "trait")]
    trait_number: usize,
    out: PathBuf,
}

fn load_model(path: &Path) -> Result<ModelFile<Value>> {
    read_json(path)
}

pub fn run(args: AnalyzeArgs) -> Result<()> {
    let model_path = required(args.model, "model")?;
    let grades_path = required(args.grades, "grades")?;
    let out = required(args.out, "out")?;
    let defaults = AnalysisConfig::default();
    let config = AnalysisConfig {
        threshold: args.threshold.unwrap_or(defaults.threshold),
        seed: args.seed.unwrap_or(defaults.seed),
        clusters: args.clusters.unwrap_or(defaults.clusters),
        ..defaults
    };
    let model = load_model(&model_path)?;
    let file = File::open(&grades_path).with_context(|| format!("opening {}", grades_path.display()))?;
    let grades =
        GradeTable::read_csv(BufReader::new(file)).with_context(|| format!("reading {}", grades_path.display()))?;
    let fit: &FitResult64 = &model.model;
    let report = run_analysis(fit, &grades, &config)?;
    write_json(
        &out,
        &ReportFile {
            command: "analyze",
            config: AnalyzeRun {
                model: model_path,
                grades: grades_path,
                out: out.clone(),
                analysis: config,
            },
            model_config: &model.config,
            report,
        },
    )
}

pub fn run_export(args: ExportArgs) -> Result<()> {
    let model_path = required(args.model, "model")?;
    let number = required(args.trait_number, "trait")?;
    let out = required(args.out, "out")?;
    let model = load_model(&model_path)?;
    let num_traits = model.model.posterior.num_traits;
    if number == 0 || number > num_traits {
        return Err(hbtm::Error::Config(format!("--trait must be between 1 and {num_traits}, got {number}")).into());
    }
    let profile = export_trait(&model.model.posterior, number - 1)?;
    let mut w = create(&out)?;
    profile.write_csv(&mut w)?;
    w.flush()?;
    write_json(
        &with_suffix(&out, ".meta.json"),
        &ExportMeta {
            command: "export-trait",
            config: ExportRun {
                model: model_path,
                trait_number: number,
                out: out.clone(),
            },
            model_config: &model.config,
            num_traits,
        },
    )
}
