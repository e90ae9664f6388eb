use std::io::Write;
use std::path::PathBuf;

use anyhow::Result;
use clap::Args;
use hbtm::generator::{generate, sample_params};
use hbtm::{Hyperparams64, Schema, TrueParams64};
use serde::{Deserialize, Serialize};

use crate::config::{create, required, with_suffix, write_json};
use crate::fit::hyper;

#[derive(Debug, Args, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GenerateArgs {
    /// Number of traits.
    #[arg(long)]
    pub k: Option<usize>,
    /// Number of event types.
    #[arg(long)]
    pub events: Option<usize>,
    /// Number of time bins.
    #[arg(long)]
    pub time_bins: Option<usize>,
    /// Number of interaction levels.
    #[arg(long)]
    pub levels: Option<usize>,
    /// Number of traces.
    #[arg(long)]
    pub traces: Option<usize>,
    /// Tokens per trace.
    #[arg(long)]
    pub tokens: Option<usize>,
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
    /// Writes `<prefix>.jsonl`, `<prefix>.schema.json` and `<prefix>.truth.json`.
    #[arg(long)]
    pub out_prefix: Option<PathBuf>,
}

#[derive(Serialize)]
struct GenerateRun {
    num_traits: usize,
    events: usize,
    time_bins: usize,
    levels: usize,
    traces: usize,
    tokens_per_trace: usize,
    seed: u64,
    hyper: Hyperparams64,
    out_prefix: PathBuf,
}

#[derive(Serialize)]
struct TruthFile {
    command: &'static str,
    config: GenerateRun,
    params: TrueParams64,
    assignments: Vec<Vec<u32>>,
}

pub fn run(args: GenerateArgs) -> Result<()> {
    let prefix = required(args.out_prefix, "out-prefix")?;
    let k = required(args.k, "k")?;
    let logs = Schema::default();
    let d = logs.dims();
    let (e, t, i) = (
        args.events.unwrap_or(d.events),
        args.time_bins.unwrap_or(d.time_bins),
        args.levels.unwrap_or(d.levels),
    );
    let traces = args.traces.unwrap_or(100);
    let tokens = args.tokens.unwrap_or(50);
    if traces == 0 {
        return Err(hbtm::Error::Config("--traces must be at least 1".into()).into());
    }
    if tokens == 0 {
        return Err(hbtm::Error::Config("--tokens must be at least 1".into()).into());
    }
    let schema = if (e, t, i) == (d.events, d.time_bins, d.levels) {
        logs
    } else {
        Schema::synthetic(e, t, i)?
    };
    let seed = args.seed.unwrap_or(0);
    let hyper = hyper(Hyperparams64::default(), args.alpha, args.beta, args.gamma, args.delta);

    let params = sample_params(k, traces, &schema, &hyper, seed)?;
    let labeled = generate(&params, &schema, &vec![tokens; traces], seed)?;

    let mut w = create(&with_suffix(&prefix, ".jsonl"))?;
    labeled.corpus.write_jsonl(&mut w)?;
    w.flush()?;
    write_json(&with_suffix(&prefix, ".schema.json"), &schema)?;
    let run = GenerateRun {
        num_traits: k,
        events: e,
        time_bins: t,
        levels: i,
        traces,
        tokens_per_trace: tokens,
        seed,
        hyper,
        out_prefix: prefix.clone(),
    };
    write_json(
        &with_suffix(&prefix, ".truth.json"),
        &TruthFile {
            command: "generate",
            config: run,
            params,
            assignments: labeled.assignments,
        },
    )
}
