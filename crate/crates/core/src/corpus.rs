//! Alphabets, tokens, traces and corpora, plus their on-disk formats.
//!
//! A corpus is stored as JSON lines, one trace per line:
//!
//! ```text
//! {"trace_id":"s17@3","tokens":[[0,2,1],[8,0,0]]}
//! ```
//!
//! with 0-based `[event, time_bin, interaction_level]` triples. The schema
//! that gives those indices meaning lives once in a separate JSON file.

use std::fmt;
use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Real;

/// Short labels for the fifteen aggregated activity types of the lab-session
/// logs, in event-index order (event 1 is index 0).
pub const DEFAULT_EVENT_LABELS: [&str; 15] = [
    "study exercise",
    "Deeds exercise",
    "Deeds unspecified exercise",
    "Deeds other",
    "text editor exercise",
    "text editor unspecified exercise",
    "text editor other",
    "simulation timing diagram",
    "properties",
    "study materials",
    "FSM exercise",
    "FSM related",
    "Aulaweb",
    "blank title",
    "other",
];

/// Duration bin edges in seconds: (0,9], (9,15], ..., (1200,14000].
pub const DEFAULT_TIME_BIN_EDGES: [f64; 8] = [0.0, 9.0, 15.0, 30.0, 60.0, 600.0, 1200.0, 14000.0];

/// Interaction-count edges: [0,2), [2,3), [3,6), [6,16), [16,4779).
pub const DEFAULT_INTERACTION_BIN_EDGES: [f64; 6] = [0.0, 2.0, 3.0, 6.0, 16.0, 4779.0];

/// The fixed alphabets a corpus is written in.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Schema {
    pub event_labels: Vec<String>,
    /// `T + 1` strictly increasing boundaries; bins are left-open, right-closed.
    pub time_bin_edges: Vec<f64>,
    /// `I + 1` strictly increasing boundaries; bins are left-closed, right-open.
    pub interaction_bin_edges: Vec<f64>,
}

impl Default for Schema {
    fn default() -> Self {
        Schema {
            event_labels: DEFAULT_EVENT_LABELS.iter().map(|s| s.to_string()).collect(),
            time_bin_edges: DEFAULT_TIME_BIN_EDGES.to_vec(),
            interaction_bin_edges: DEFAULT_INTERACTION_BIN_EDGES.to_vec(),
        }
    }
}

impl Schema {
    pub fn new(event_labels: Vec<String>, time_bin_edges: Vec<f64>, interaction_bin_edges: Vec<f64>) -> Result<Self> {
        let schema = Schema {
            event_labels,
            time_bin_edges,
            interaction_bin_edges,
        };
        schema.validate()?;
        Ok(schema)
    }

    /// A schema with generic labels and unit-spaced edges, for synthetic data.
    pub fn synthetic(events: usize, time_bins: usize, levels: usize) -> Result<Self> {
        Schema::new(
            (1..=events).map(|e| format!("event {e}")).collect(),
            (0..=time_bins).map(|t| t as f64).collect(),
            (0..=levels).map(|i| i as f64).collect(),
        )
    }

    pub fn validate(&self) -> Result<()> {
        if self.event_labels.is_empty() {
            return Err(Error::Config("schema needs at least one event type".into()));
        }
        check_edges("time_bin_edges", &self.time_bin_edges)?;
        check_edges("interaction_bin_edges", &self.interaction_bin_edges)?;
        if self.time_bin_edges[0] < 0.0 {
            return Err(Error::Config("time_bin_edges must start at or above 0".into()));
        }
        Ok(())
    }

    pub fn num_events(&self) -> usize {
        self.event_labels.len()
    }

    pub fn num_time_bins(&self) -> usize {
        self.time_bin_edges.len() - 1
    }

    pub fn num_levels(&self) -> usize {
        self.interaction_bin_edges.len() - 1
    }

    pub fn dims(&self) -> Dims {
        Dims {
            events: self.num_events(),
            time_bins: self.num_time_bins(),
            levels: self.num_levels(),
        }
    }
}

fn check_edges(name: &str, edges: &[f64]) -> Result<()> {
    if edges.len() < 2 {
        return Err(Error::Config(format!("{name} needs at least two edges")));
    }
    if edges.iter().any(|x| !x.is_finite()) {
        return Err(Error::Config(format!("{name} must be finite")));
    }
    if edges.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::Config(format!("{name} must be strictly increasing")));
    }
    Ok(())
}

/// Alphabet sizes `(E, T, I)`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Dims {
    pub events: usize,
    pub time_bins: usize,
    pub levels: usize,
}

/// One preprocessed log event, serialized as `[event, time_bin, level]`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(from = "[u32; 3]", into = "[u32; 3]")]
pub struct Token {
    pub event: u32,
    pub time_bin: u32,
    pub level: u32,
}

impl Token {
    pub fn new(event: usize, time_bin: usize, level: usize) -> Self {
        Token {
            event: event as u32,
            time_bin: time_bin as u32,
            level: level as u32,
        }
    }

    #[inline]
    pub fn e(&self) -> usize {
        self.event as usize
    }

    #[inline]
    pub fn t(&self) -> usize {
        self.time_bin as usize
    }

    #[inline]
    pub fn i(&self) -> usize {
        self.level as usize
    }
}

impl From<[u32; 3]> for Token {
    fn from([event, time_bin, level]: [u32; 3]) -> Self {
        Token { event, time_bin, level }
    }
}

impl From<Token> for [u32; 3] {
    fn from(t: Token) -> Self {
        [t.event, t.time_bin, t.level]
    }
}

/// One student's events within one session.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Trace {
    pub trace_id: String,
    pub tokens: Vec<Token>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Corpus {
    pub schema: Schema,
    pub traces: Vec<Trace>,
}

/// A single broken rule found by [`validate_corpus`].
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub enum Violation {
    EmptyTrace {
        trace_id: String,
    },
    OutOfRange {
        trace_id: String,
        position: usize,
        field: &'static str,
        value: u32,
        bound: usize,
    },
    NoTraces,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::EmptyTrace { trace_id } => write!(f, "trace {trace_id:?} has no tokens"),
            Violation::OutOfRange {
                trace_id,
                position,
                field,
                value,
                bound,
            } => write!(
                f,
                "trace {trace_id:?} token {position}: {field} = {value} is outside [0, {bound})"
            ),
            Violation::NoTraces => write!(f, "corpus has no traces"),
        }
    }
}

/// Lists every out-of-range token index and every empty trace.
pub fn validate_corpus(corpus: &Corpus) -> Vec<Violation> {
    let dims = corpus.schema.dims();
    let mut out = Vec::new();
    if corpus.traces.is_empty() {
        out.push(Violation::NoTraces);
    }
    for trace in &corpus.traces {
        if trace.tokens.is_empty() {
            out.push(Violation::EmptyTrace {
                trace_id: trace.trace_id.clone(),
            });
        }
        for (position, tok) in trace.tokens.iter().enumerate() {
            let checks = [
                ("event", tok.event, dims.events),
                ("time_bin", tok.time_bin, dims.time_bins),
                ("interaction_level", tok.level, dims.levels),
            ];
            for (field, value, bound) in checks {
                if value as usize >= bound {
                    out.push(Violation::OutOfRange {
                        trace_id: trace.trace_id.clone(),
                        position,
                        field,
                        value,
                        bound,
                    });
                }
            }
        }
    }
    out
}

impl Corpus {
    pub fn new(schema: Schema, traces: Vec<Trace>) -> Self {
        Corpus { schema, traces }
    }

    /// Builds a corpus and rejects it unless [`validate_corpus`] is clean.
    pub fn checked(schema: Schema, traces: Vec<Trace>) -> Result<Self> {
        schema.validate()?;
        let corpus = Corpus { schema, traces };
        corpus.ensure_valid()?;
        Ok(corpus)
    }

    pub fn ensure_valid(&self) -> Result<()> {
        let violations = validate_corpus(self);
        if violations.is_empty() {
            return Ok(());
        }
        let shown: Vec<String> = violations.iter().take(5).map(|v| v.to_string()).collect();
        Err(Error::Input(format!(
            "{} corpus violation(s): {}",
            violations.len(),
            shown.join("; ")
        )))
    }

    pub fn num_traces(&self) -> usize {
        self.traces.len()
    }

    pub fn num_tokens(&self) -> usize {
        self.traces.iter().map(|t| t.tokens.len()).sum()
    }

    pub fn trace_ids(&self) -> Vec<String> {
        self.traces.iter().map(|t| t.trace_id.clone()).collect()
    }

    /// Writes the traces as JSON lines (the schema is written separately).
    pub fn write_jsonl<W: Write>(&self, mut w: W) -> Result<()> {
        for trace in &self.traces {
            serde_json::to_writer(&mut w, trace)?;
            w.write_all(b"\n")?;
        }
        Ok(())
    }

    /// Reads JSON-lines traces; blank lines are skipped.
    pub fn read_jsonl<R: BufRead>(schema: Schema, r: R) -> Result<Self> {
        let mut traces = Vec::new();
        for (lineno, line) in r.lines().enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let trace: Trace =
                serde_json::from_str(&line).map_err(|e| Error::Input(format!("corpus line {}: {e}", lineno + 1)))?;
            traces.push(trace);
        }
        Ok(Corpus { schema, traces })
    }
}

/// Symmetric Dirichlet concentrations over traits, events, time bins and
/// interaction levels.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound = "F: Real")]
pub struct Hyperparams<F> {
    pub alpha: F,
    pub beta: F,
    pub gamma: F,
    pub delta: F,
}

impl<F: Real> Default for Hyperparams<F> {
    fn default() -> Self {
        Hyperparams {
            alpha: F::one(),
            beta: F::lit(0.1),
            gamma: F::lit(0.1),
            delta: F::lit(0.1),
        }
    }
}

impl<F: Real> Hyperparams<F> {
    pub fn symmetric(c: F) -> Self {
        Hyperparams {
            alpha: c,
            beta: c,
            gamma: c,
            delta: c,
        }
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("alpha", self.alpha),
            ("beta", self.beta),
            ("gamma", self.gamma),
            ("delta", self.delta),
        ] {
            if !(v > F::zero() && v.is_finite()) {
                return Err(Error::Config(format!("{name} must be positive and finite, got {v}")));
            }
        }
        Ok(())
    }
}

/// Paper-facing event number (1-based) for an internal index.
pub fn event_number(index: usize) -> usize {
    index + 1
}

/// Internal index for a user-facing (1-based) number.
pub fn event_index(number: usize) -> Option<usize> {
    number.checked_sub(1)
}
