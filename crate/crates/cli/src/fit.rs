use std::fs::File;
use std::io::BufReader;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use clap::Args;
use hbtm::{Corpus, FitConfig64, FitResult64, Hyperparams64, Schema};
use serde::{Deserialize, Serialize};

use crate::config::{read_json, required, write_json};

#[derive(Debug, Args, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FitArgs {
    /// Corpus in JSON lines, one trace per line.
    #[arg(long)]
    pub corpus: Option<PathBuf>,
    /// Schema JSON; defaults to `<stem>.schema.json` or `schema.json` next
    /// to the corpus, then to the built-in schema.
    #[arg(long)]
    pub schema: Option<PathBuf>,
    /// Number of traits.
    #[arg(long)]
    pub k: Option<usize>,
    #[arg(long)]
    pub sweeps: Option<usize>,
    #[arg(long)]
    pub burn_in: Option<usize>,
    /// Keep one posterior snapshot every this many sweeps after burn-in.
    #[arg(long)]
    pub stride: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub alpha: Option<f64>,
    #[arg(long)]
    pub beta: Option<f64>,
    #[arg(long)]
    pub gamma: Option<f64>,
    #[arg(long)]
    pub delta: Option<f64>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Serialize)]
pub struct FitRun {
    pub corpus: PathBuf,
    pub schema: Option<PathBuf>,
    pub out: PathBuf,
    pub fit: FitConfig64,
}

/// What `fit` writes: the resolved run plus the fitted model.
#[derive(Serialize, Deserialize)]
pub struct ModelFile<R> {
    pub command: String,
    pub config: R,
    pub model: FitResult64,
}

pub fn hyper(defaults: Hyperparams64, a: Option<f64>, b: Option<f64>, g: Option<f64>, d: Option<f64>) -> Hyperparams64 {
    Hyperparams64 {
        alpha: a.unwrap_or(defaults.alpha),
        beta: b.unwrap_or(defaults.beta),
        gamma: g.unwrap_or(defaults.gamma),
        delta: d.unwrap_or(defaults.delta),
    }
}

fn find_schema(corpus: &Path) -> Option<PathBuf> {
    let dir = corpus.parent().unwrap_or(Path::new(""));
    let stem = corpus.file_stem()?.to_string_lossy();
    [dir.join(format!("{stem}.schema.json")), dir.join("schema.json")]
        .into_iter()
        .find(|p| p.is_file())
}

pub fn load_corpus(path: &Path, schema_path: Option<&Path>) -> Result<(Corpus, Option<PathBuf>)> {
    let schema_path = schema_path.map(Path::to_path_buf).or_else(|| find_schema(path));
    let schema: Schema = match &schema_path {
        Some(p) => read_json(p)?,
        None => Schema::default(),
    };
    let file = File::open(path).with_context(|| format!("opening {}", path.display()))?;
    let corpus =
        Corpus::read_jsonl(schema, BufReader::new(file)).with_context(|| format!("reading {}", path.display()))?;
    corpus.ensure_valid()?;
    Ok((corpus, schema_path))
}

pub fn run(args: FitArgs) -> Result<()> {
    let corpus_path = required(args.corpus, "corpus")?;
    let out = required(args.out, "out")?;
    let k = required(args.k, "k")?;
    let defaults = FitConfig64::new(k);
    let config = FitConfig64 {
        num_traits: k,
        sweeps: args.sweeps.unwrap_or(defaults.sweeps),
        burn_in: args.burn_in.unwrap_or(defaults.burn_in),
        sample_stride: args.stride.unwrap_or(defaults.sample_stride),
        seed: args.seed.unwrap_or(defaults.seed),
        hyper: hyper(defaults.hyper, args.alpha, args.beta, args.gamma, args.delta),
    };
    config.validate()?;
    let (corpus, schema) = load_corpus(&corpus_path, args.schema.as_deref())?;
    let model = hbtm::fit(&corpus, &config)?;
    let run = FitRun {
        corpus: corpus_path,
        schema,
        out: out.clone(),
        fit: config,
    };
    write_json(
        &out,
        &ModelFile {
            command: "fit".into(),
            config: run,
            model,
        },
    )
}
