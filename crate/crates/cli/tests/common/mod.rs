//! Helpers shared by the CLI test targets: running the binary and writing a
//! synthetic replica of the lab-session process logs.

#![allow(dead_code)]

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use chrono::{Duration, NaiveDate, NaiveDateTime};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

pub fn bin() -> &'static str {
    env!("CARGO_BIN_EXE_hbtm")
}

pub fn hbtm(dir: &Path, args: &[&str]) -> Output {
    Command::new(bin())
        .current_dir(dir)
        .args(args)
        .output()
        .expect("spawn hbtm")
}

/// Runs the binary and panics with its stderr unless it succeeds.
pub fn hbtm_ok(dir: &Path, args: &[&str]) {
    let out = hbtm(dir, args);
    assert!(
        out.status.success(),
        "hbtm {args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
}

pub fn error_json(out: &Output) -> serde_json::Value {
    let text = String::from_utf8_lossy(&out.stderr);
    serde_json::from_str(text.trim()).unwrap_or_else(|e| panic!("stderr is not JSON ({e}): {text}"))
}

pub struct ReplicaSpec {
    pub sessions: usize,
    pub students: usize,
    /// Total rows over all files, malformed rows included.
    pub rows: usize,
    /// Probability that a student attends a given session.
    pub attendance: f64,
    pub seed: u64,
}

impl ReplicaSpec {
    /// Same shape as the public course logs: 6 sessions, 115 students,
    /// 230318 rows.
    pub fn full() -> Self {
        ReplicaSpec {
            sessions: 6,
            students: 115,
            rows: 230_318,
            attendance: 0.85,
            seed: 2014,
        }
    }

    pub fn tiny(seed: u64) -> Self {
        ReplicaSpec {
            sessions: 2,
            students: 8,
            rows: 600,
            attendance: 0.9,
            seed,
        }
    }
}

pub struct Replica {
    /// Directory holding `Session <s>/<student>` files.
    pub processes: PathBuf,
    pub grades: PathBuf,
    pub files: usize,
    pub rows: usize,
}

// (label, base weight, skill slope); `{s}` and `{x}` become the session and
// exercise numbers
const ACTIVITIES: [(&str, f64, f64); 16] = [
    ("Study_Es_{s}_{x}", 6.0, 0.6),
    ("Study_Es", 1.0, -0.3),
    ("Deeds_Es_{s}_{x}", 12.0, 1.2),
    ("Deeds_Es", 3.0, -0.4),
    ("Deeds", 2.0, 0.2),
    ("TextEditor_Es_{s}_{x}", 8.0, 0.9),
    ("TextEditor_Es", 2.0, -0.2),
    ("TextEditor", 3.0, 0.0),
    ("Simulator", 1.0, 0.3),
    ("Properties", 1.0, 0.0),
    ("Study_Materials", 4.0, 0.1),
    ("FSM_Es_{s}_{x}", 2.0, 0.5),
    ("FSM_Related", 1.0, 0.0),
    ("Aulaweb", 6.0, -0.8),
    ("Blank", 5.0, -1.2),
    ("Other", 4.0, -1.0),
];

// duration ranges in whole seconds with their weights
const DURATIONS: [(u64, u64, f64); 9] = [
    (0, 0, 0.04),
    (1, 9, 0.31),
    (10, 15, 0.15),
    (16, 30, 0.15),
    (31, 60, 0.12),
    (61, 600, 0.17),
    (601, 1200, 0.03),
    (1201, 14000, 0.025),
    (14001, 20000, 0.005),
];

fn pick(weights: &[f64], rng: &mut impl Rng) -> usize {
    let total: f64 = weights.iter().sum();
    let mut u = rng.random::<f64>() * total;
    for (j, &w) in weights.iter().enumerate() {
        if u < w {
            return j;
        }
        u -= w;
    }
    weights.len() - 1
}

fn stamp(t: NaiveDateTime) -> String {
    // day and month without padding, as in the original exports
    t.format("%-d.%-m.%Y %H:%M:%S").to_string()
}

/// Writes headerless per-student session logs plus a grades CSV keyed by
/// `student@session`. Student skill drives both activity mix and grades.
pub fn write_replica(root: &Path, shape: &ReplicaSpec) -> Replica {
    let mut rng = ChaCha8Rng::seed_from_u64(shape.seed);
    let noise = Normal::new(0.0, 1.0).unwrap();
    let processes = root.join("Processes");
    let skill: Vec<f64> = (0..shape.students).map(|_| rng.random::<f64>()).collect();

    let mut slots = Vec::new();
    for s in 1..=shape.sessions {
        for st in 1..=shape.students {
            if rng.random::<f64>() < shape.attendance {
                slots.push((s, st));
            }
        }
    }
    // split the rows over the attended slots
    let weights: Vec<f64> = slots.iter().map(|_| 0.5 + rng.random::<f64>()).collect();
    let total_w: f64 = weights.iter().sum();
    let mut lens: Vec<usize> = weights
        .iter()
        .map(|w| ((w / total_w) * shape.rows as f64).floor().max(1.0) as usize)
        .collect();
    let assigned: usize = lens.iter().sum();
    let last = lens.len() - 1;
    lens[last] = (lens[last] + shape.rows).saturating_sub(assigned).max(1);

    let mut rows = 0;
    for (&(s, st), &len) in slots.iter().zip(&lens) {
        let dir = processes.join(format!("Session {s}"));
        fs::create_dir_all(&dir).unwrap();
        let mut f = fs::File::create(dir.join(st.to_string())).unwrap();
        let sk = skill[st - 1];
        let act_w: Vec<f64> = ACTIVITIES
            .iter()
            .map(|&(_, w, b)| w * (b * (sk - 0.5) * 3.0).exp())
            .collect();
        let dur_w: Vec<f64> = DURATIONS.iter().map(|d| d.2).collect();
        let mut t = NaiveDate::from_ymd_opt(2014, 10, 1)
            .unwrap()
            .and_hms_opt(9, 0, 0)
            .unwrap()
            + Duration::days(7 * (s as i64 - 1));
        for _ in 0..len {
            let x = rng.random_range(1..=6);
            let label = ACTIVITIES[pick(&act_w, &mut rng)]
                .0
                .replace("{s}", &s.to_string())
                .replace("{x}", &x.to_string());
            let (lo, hi, _) = DURATIONS[pick(&dur_w, &mut rng)];
            let d = rng.random_range(lo..=hi);
            let end = t + Duration::seconds(d as i64);
            let busy = (d as f64).sqrt() * (0.5 + sk);
            let left = (busy * rng.random::<f64>() * 1.5) as u64;
            let right = u64::from(rng.random::<f64>() < 0.05);
            let keys = if label.starts_with("TextEditor") || label.starts_with("Deeds") {
                (busy * rng.random::<f64>() * 4.0) as u64
            } else {
                0
            };
            let (start_s, end_s) = match rng.random_range(0..2500) {
                0 => (stamp(end), stamp(t)),
                1 => ("n/a".to_string(), stamp(end)),
                _ => (stamp(t), stamp(end)),
            };
            writeln!(
                f,
                "{s}, {st}, Es_{s}_{x}, {label}, {start_s}, {end_s}, {}, {}, 0, {left}, {right}, {}, {keys}",
                d * 1000 / 3,
                rng.random_range(0..4),
                left * 10 + rng.random_range(0..50),
            )
            .unwrap();
            rows += 1;
            t = end + Duration::seconds(rng.random_range(0..3));
        }
    }

    let grades = root.join("grades.csv");
    let mut g = fs::File::create(&grades).unwrap();
    writeln!(g, "trace_id,SA,SFE,FE").unwrap();
    for st in 1..=shape.students {
        let sk = skill[st - 1];
        let fe = (100.0 * sk + 8.0 * noise.sample(&mut rng)).clamp(0.0, 100.0);
        for s in 1..=shape.sessions {
            let sa = (5.0 * sk + 0.6 * noise.sample(&mut rng)).clamp(0.0, 5.0);
            let sfe = (12.0 * sk + 1.5 * noise.sample(&mut rng)).max(0.0);
            writeln!(g, "{st}@{s},{sa:.2},{sfe:.2},{fe:.1}").unwrap();
        }
    }
    Replica {
        processes,
        grades,
        files: slots.len(),
        rows,
    }
}
