//! Raw event logs to token corpora.
//!
//! Rows are parsed through a configurable column map, activity strings are
//! folded into event types by an ordered rule list, events outside the
//! admitted duration window are filtered, and the remaining durations and
//! click+keystroke counts are binned. Every input row ends up in exactly one
//! of three places: a token, the filtered list, or the rejects list.

use std::io::{Read, Write};

use chrono::NaiveDateTime;
use indexmap::IndexMap;
use serde::{Deserialize, Serialize};

use crate::corpus::{Corpus, Schema, Token, Trace};
use crate::error::{Error, Result};

/// Column names of the lab-session process logs, which ship without a header.
pub const EPM_COLUMNS: [&str; 13] = [
    "session",
    "student_Id",
    "exercise",
    "activity",
    "start_time",
    "end_time",
    "idle_time",
    "mouse_wheel",
    "mouse_wheel_click",
    "mouse_click_left",
    "mouse_click_right",
    "mouse_movement",
    "keystroke",
];

pub const DEFAULT_TIMESTAMP_FORMAT: &str = "%d.%m.%Y %H:%M:%S";

/// Which source column feeds each [`RawEvent`] field.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ColumnMap {
    pub session: String,
    pub student_id: String,
    pub activity: String,
    pub start_time: String,
    pub end_time: String,
    /// Summed into `mouse_clicks`.
    pub mouse_clicks: Vec<String>,
    pub keystrokes: String,
    /// chrono format for timestamps; plain numbers are read as seconds.
    #[serde(default = "default_timestamp_format")]
    pub timestamp_format: String,
    #[serde(default = "default_true")]
    pub has_header: bool,
    /// Column names for headerless files.
    #[serde(default)]
    pub column_names: Option<Vec<String>>,
}

fn default_timestamp_format() -> String {
    DEFAULT_TIMESTAMP_FORMAT.to_string()
}

fn default_true() -> bool {
    true
}

impl ColumnMap {
    /// Layout of the headerless lab-session logs. Clicks are the left, right
    /// and wheel-click counters; wheel scrolling and movement are not clicks.
    pub fn epm() -> Self {
        ColumnMap {
            session: "session".into(),
            student_id: "student_Id".into(),
            activity: "activity".into(),
            start_time: "start_time".into(),
            end_time: "end_time".into(),
            mouse_clicks: vec![
                "mouse_wheel_click".into(),
                "mouse_click_left".into(),
                "mouse_click_right".into(),
            ],
            keystrokes: "keystroke".into(),
            timestamp_format: default_timestamp_format(),
            has_header: false,
            column_names: Some(EPM_COLUMNS.iter().map(|s| s.to_string()).collect()),
        }
    }
}

/// One parsed log row.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RawEvent {
    pub source: String,
    /// Line number in the source file.
    pub row: u64,
    pub session: String,
    pub student_id: String,
    pub activity: String,
    /// Seconds on an arbitrary but consistent clock.
    pub start_time: f64,
    pub end_time: f64,
    pub mouse_clicks: u64,
    pub keystrokes: u64,
}

impl RawEvent {
    pub fn duration(&self) -> f64 {
        self.end_time - self.start_time
    }
}

/// A row that did not become a token.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Reject {
    pub source: String,
    pub row: u64,
    pub reason: String,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct ParsedLog {
    pub events: Vec<RawEvent>,
    pub rejects: Vec<Reject>,
    /// Data rows seen, rejected or not.
    pub rows: u64,
}

struct Resolved {
    session: usize,
    student: usize,
    activity: usize,
    start: usize,
    end: usize,
    clicks: Vec<usize>,
    keys: usize,
}

fn resolve(names: &[String], map: &ColumnMap) -> Result<Resolved> {
    let find = |name: &str| {
        names
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| Error::Config(format!("column {name:?} not found in the input")))
    };
    Ok(Resolved {
        session: find(&map.session)?,
        student: find(&map.student_id)?,
        activity: find(&map.activity)?,
        start: find(&map.start_time)?,
        end: find(&map.end_time)?,
        clicks: map.mouse_clicks.iter().map(|c| find(c)).collect::<Result<_>>()?,
        keys: find(&map.keystrokes)?,
    })
}

fn parse_timestamp(s: &str, format: &str) -> Option<f64> {
    if let Ok(dt) = NaiveDateTime::parse_from_str(s, format) {
        let utc = dt.and_utc();
        return Some(utc.timestamp() as f64 + utc.timestamp_subsec_nanos() as f64 * 1e-9);
    }
    s.parse::<f64>().ok().filter(|x| x.is_finite())
}

fn parse_count(s: &str) -> Option<u64> {
    if let Ok(n) = s.parse::<u64>() {
        return Some(n);
    }
    // some exports write integral counts as floats
    s.parse::<f64>()
        .ok()
        .filter(|x| x.is_finite() && *x >= 0.0 && x.fract() == 0.0 && *x < u64::MAX as f64)
        .map(|x| x as u64)
}

/// Parses one CSV source into raw events; malformed rows become rejects.
pub fn parse_raw_log<R: Read>(source: &str, input: R, map: &ColumnMap) -> Result<ParsedLog> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(map.has_header)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(input);
    let names: Vec<String> = if map.has_header {
        reader.headers()?.iter().map(|s| s.to_string()).collect()
    } else {
        map.column_names
            .clone()
            .ok_or_else(|| Error::Config("headerless input needs column_names".into()))?
    };
    let cols = resolve(&names, map)?;

    let mut out = ParsedLog::default();
    let mut record = csv::StringRecord::new();
    loop {
        match reader.read_record(&mut record) {
            Ok(true) => {}
            Ok(false) => break,
            Err(e) => {
                let row = e.position().map_or(0, |p| p.line());
                if !e.is_io_error() {
                    out.rows += 1;
                    out.rejects.push(Reject {
                        source: source.to_string(),
                        row,
                        reason: format!("malformed row: {e}"),
                    });
                    continue;
                }
                return Err(e.into());
            }
        }
        let row = record.position().map_or(0, |p| p.line());
        if record.iter().all(|f| f.is_empty()) {
            continue;
        }
        out.rows += 1;
        match parse_row(&record, &cols, map) {
            Ok(mut ev) => {
                ev.source = source.to_string();
                ev.row = row;
                out.events.push(ev);
            }
            Err(reason) => out.rejects.push(Reject {
                source: source.to_string(),
                row,
                reason,
            }),
        }
    }
    Ok(out)
}

fn parse_row(record: &csv::StringRecord, cols: &Resolved, map: &ColumnMap) -> std::result::Result<RawEvent, String> {
    let field = |j: usize, name: &str| record.get(j).ok_or_else(|| format!("missing field {name:?}"));
    let start_s = field(cols.start, &map.start_time)?;
    let end_s = field(cols.end, &map.end_time)?;
    let start_time =
        parse_timestamp(start_s, &map.timestamp_format).ok_or_else(|| format!("unparseable timestamp {start_s:?}"))?;
    let end_time =
        parse_timestamp(end_s, &map.timestamp_format).ok_or_else(|| format!("unparseable timestamp {end_s:?}"))?;
    if end_time < start_time {
        return Err("negative duration".into());
    }
    let mut mouse_clicks = 0u64;
    for (&j, name) in cols.clicks.iter().zip(&map.mouse_clicks) {
        let v = field(j, name)?;
        mouse_clicks += parse_count(v).ok_or_else(|| format!("bad count {v:?} in {name:?}"))?;
    }
    let k = field(cols.keys, &map.keystrokes)?;
    let keystrokes = parse_count(k).ok_or_else(|| format!("bad count {k:?} in {:?}", map.keystrokes))?;
    Ok(RawEvent {
        source: String::new(),
        row: 0,
        session: field(cols.session, &map.session)?.to_string(),
        student_id: field(cols.student, &map.student_id)?.to_string(),
        activity: field(cols.activity, &map.activity)?.to_string(),
        start_time,
        end_time,
        mouse_clicks,
        keystrokes,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MatchKind {
    Exact,
    Prefix,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MappingRule {
    #[serde(rename = "match")]
    pub kind: MatchKind,
    pub pattern: String,
    /// 0-based event index.
    pub event_index: usize,
}

/// Ordered activity-label rules; the first match wins.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ActivityMapping {
    pub rules: Vec<MappingRule>,
    pub default_event_index: usize,
}

impl Default for ActivityMapping {
    /// Rules for the lab-session activity labels, e.g. `Deeds_Es_6_1` is an
    /// identified Deeds exercise (event 2) while bare `Deeds_Es` is an
    /// unidentified one (event 3). Unknown labels fall into "other" (15).
    fn default() -> Self {
        use MatchKind::{Exact, Prefix};
        let rules = [
            (Prefix, "Study_Es_", 0),
            (Exact, "Study_Es", 0),
            (Prefix, "Deeds_Es_", 1),
            (Exact, "Deeds_Es", 2),
            (Prefix, "Deeds", 3),
            (Prefix, "TextEditor_Es_", 4),
            (Exact, "TextEditor_Es", 5),
            (Prefix, "TextEditor", 6),
            (Prefix, "Simulat", 7),
            (Prefix, "Properties", 8),
            (Prefix, "Study_Materials", 9),
            (Prefix, "FSM_Es", 10),
            (Prefix, "FSM", 11),
            (Prefix, "Aulaweb", 12),
            (Exact, "Blank", 13),
            (Exact, "Other", 14),
        ];
        ActivityMapping {
            rules: rules
                .into_iter()
                .map(|(kind, pattern, event_index)| MappingRule {
                    kind,
                    pattern: pattern.to_string(),
                    event_index,
                })
                .collect(),
            default_event_index: 14,
        }
    }
}

impl ActivityMapping {
    pub fn validate(&self, num_events: usize) -> Result<()> {
        if self.default_event_index >= num_events {
            return Err(Error::Config(format!(
                "default_event_index {} outside [0, {num_events})",
                self.default_event_index
            )));
        }
        if let Some(r) = self.rules.iter().find(|r| r.event_index >= num_events) {
            return Err(Error::Config(format!(
                "rule {:?} maps to event_index {} outside [0, {num_events})",
                r.pattern, r.event_index
            )));
        }
        Ok(())
    }
}

/// Event index of an activity label.
pub fn map_activity(label: &str, mapping: &ActivityMapping) -> usize {
    mapping
        .rules
        .iter()
        .find(|r| match r.kind {
            MatchKind::Exact => label == r.pattern,
            MatchKind::Prefix => label.starts_with(&r.pattern),
        })
        .map_or(mapping.default_event_index, |r| r.event_index)
}

/// Admitted duration window in seconds, both ends inclusive.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FilterConfig {
    pub min_duration_s: f64,
    pub max_duration_s: f64,
}

impl Default for FilterConfig {
    fn default() -> Self {
        FilterConfig {
            min_duration_s: 1.0,
            max_duration_s: 14000.0,
        }
    }
}

impl FilterConfig {
    /// Drops everything over twenty minutes; the (1200, 14000] bin then
    /// stays empty.
    pub fn twenty_minute_cap() -> Self {
        FilterConfig {
            max_duration_s: 1200.0,
            ..FilterConfig::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.min_duration_s > 0.0 && self.min_duration_s.is_finite()) {
            return Err(Error::Config("min_duration_s must be positive".into()));
        }
        if self.max_duration_s.is_nan() || self.max_duration_s <= self.min_duration_s {
            return Err(Error::Config("max_duration_s must exceed min_duration_s".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum DurationBin {
    Bin(usize),
    /// Below the minimum, above the maximum, or outside the schema's edges.
    Filtered,
}

/// Time-bin index of a duration, with bins `(edge[t], edge[t+1]]`.
pub fn discretize_duration(seconds: f64, schema: &Schema, filter: &FilterConfig) -> Result<DurationBin> {
    if seconds <= 0.0 || !seconds.is_finite() {
        return Err(Error::Input(format!(
            "duration must be positive and finite, got {seconds}"
        )));
    }
    if seconds < filter.min_duration_s || seconds > filter.max_duration_s {
        return Ok(DurationBin::Filtered);
    }
    let edges = &schema.time_bin_edges;
    let below = edges.partition_point(|&e| e < seconds);
    if below == 0 || below == edges.len() {
        return Ok(DurationBin::Filtered);
    }
    Ok(DurationBin::Bin(below - 1))
}

/// Interaction level of a click+keystroke count, with levels
/// `[edge[i], edge[i+1])`. Counts past the last edge fall into the top
/// level; counts below the first edge into level 0.
pub fn discretize_interaction(total_count: u64, schema: &Schema) -> usize {
    let edges = &schema.interaction_bin_edges;
    let c = total_count as f64;
    let at_or_below = edges.partition_point(|&e| e <= c);
    at_or_below.saturating_sub(1).min(schema.num_levels() - 1)
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct SessionSummary {
    pub session: String,
    pub traces: usize,
    pub tokens: usize,
}

/// Counts describing one ingestion run.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct IngestSummary {
    pub rows: u64,
    pub rejected_rows: u64,
    pub filtered_events: u64,
    pub tokenized_events: u64,
    pub sessions: Vec<SessionSummary>,
    /// Traces with no events left after filtering.
    pub dropped_traces: Vec<String>,
    /// Tokens per event type, by 0-based index.
    pub event_counts: Vec<u64>,
    pub time_bin_counts: Vec<u64>,
    pub interaction_level_counts: Vec<u64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct IngestOutput {
    /// One corpus per session, in order of first appearance.
    pub corpora: IndexMap<String, Corpus>,
    /// Events dropped by the duration filter.
    pub filtered: Vec<Reject>,
    pub dropped_traces: Vec<String>,
}

/// Trace id for a student within a session.
pub fn trace_id(student_id: &str, session: &str) -> String {
    format!("{student_id}@{session}")
}

/// Groups events by (session, student) and turns each admitted event into a
/// token. Trace order and token order follow first appearance in `raw`.
pub fn build_corpora(
    raw: &[RawEvent],
    mapping: &ActivityMapping,
    schema: &Schema,
    filter: &FilterConfig,
) -> Result<IngestOutput> {
    schema.validate()?;
    filter.validate()?;
    mapping.validate(schema.num_events())?;

    let mut sessions: IndexMap<&str, IndexMap<&str, Vec<Token>>> = IndexMap::new();
    let mut filtered = Vec::new();
    for ev in raw {
        let traces = sessions.entry(ev.session.as_str()).or_default();
        let tokens = traces.entry(ev.student_id.as_str()).or_default();
        let duration = ev.duration();
        let bin = if duration > 0.0 {
            discretize_duration(duration, schema, filter)?
        } else {
            DurationBin::Filtered
        };
        match bin {
            DurationBin::Bin(t) => {
                let e = map_activity(&ev.activity, mapping);
                let i = discretize_interaction(ev.mouse_clicks.saturating_add(ev.keystrokes), schema);
                tokens.push(Token::new(e, t, i));
            }
            DurationBin::Filtered => filtered.push(Reject {
                source: ev.source.clone(),
                row: ev.row,
                reason: format!(
                    "duration {duration} s outside [{}, {}]",
                    filter.min_duration_s, filter.max_duration_s
                ),
            }),
        }
    }

    let mut corpora = IndexMap::new();
    let mut dropped_traces = Vec::new();
    for (session, students) in sessions {
        let mut traces = Vec::new();
        for (student, tokens) in students {
            let id = trace_id(student, session);
            if tokens.is_empty() {
                dropped_traces.push(id);
            } else {
                traces.push(Trace { trace_id: id, tokens });
            }
        }
        if !traces.is_empty() {
            corpora.insert(session.to_string(), Corpus::new(schema.clone(), traces));
        }
    }
    Ok(IngestOutput {
        corpora,
        filtered,
        dropped_traces,
    })
}

impl IngestOutput {
    pub fn summary(&self, schema: &Schema, rows: u64, rejected_rows: u64) -> IngestSummary {
        let d = schema.dims();
        let mut s = IngestSummary {
            rows,
            rejected_rows,
            filtered_events: self.filtered.len() as u64,
            dropped_traces: self.dropped_traces.clone(),
            event_counts: vec![0; d.events],
            time_bin_counts: vec![0; d.time_bins],
            interaction_level_counts: vec![0; d.levels],
            ..IngestSummary::default()
        };
        for (session, corpus) in &self.corpora {
            s.sessions.push(SessionSummary {
                session: session.clone(),
                traces: corpus.num_traces(),
                tokens: corpus.num_tokens(),
            });
            for tok in corpus.traces.iter().flat_map(|t| &t.tokens) {
                s.event_counts[tok.e()] += 1;
                s.time_bin_counts[tok.t()] += 1;
                s.interaction_level_counts[tok.i()] += 1;
                s.tokenized_events += 1;
            }
        }
        s
    }
}

/// Writes `source,row,reason` rows.
pub fn write_rejects_csv<'a, W, I>(w: W, rejects: I) -> Result<()>
where
    W: Write,
    I: IntoIterator<Item = &'a Reject>,
{
    // explicit header so an empty list still gets one
    let mut writer = csv::WriterBuilder::new().has_headers(false).from_writer(w);
    writer.write_record(["source", "row", "reason"])?;
    for r in rejects {
        writer.serialize(r)?;
    }
    writer.flush()?;
    Ok(())
}
