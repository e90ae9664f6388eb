use std::collections::{BTreeMap, HashMap, HashSet};
use std::fmt;
use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use super::kmeans::{kmeans_restarts, DEFAULT_MAX_ITERS, DEFAULT_RESTARTS};
use super::stats::{pearson, welch_t_test, Correlation, TTest};
use crate::error::{Error, Result};
use crate::posterior::Posterior;
use crate::sampler::FitResult;
use crate::scalar::Real;

pub const DEFAULT_THRESHOLD: f64 = 0.05;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum GradeKind {
    /// Session assessment, 0–5.
    SA,
    /// Session-aligned final-exam problem score.
    SFE,
    /// Total final exam, 0–100.
    FE,
}

impl GradeKind {
    pub const ALL: [GradeKind; 3] = [GradeKind::SA, GradeKind::SFE, GradeKind::FE];

    fn range(self) -> Option<(f64, f64)> {
        match self {
            GradeKind::SA => Some((0.0, 5.0)),
            GradeKind::SFE => None,
            GradeKind::FE => Some((0.0, 100.0)),
        }
    }
}

impl fmt::Display for GradeKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            GradeKind::SA => "SA",
            GradeKind::SFE => "SFE",
            GradeKind::FE => "FE",
        };
        f.write_str(s)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GradeRow {
    pub trace_id: String,
    #[serde(rename = "SA")]
    pub sa: Option<f64>,
    #[serde(rename = "SFE")]
    pub sfe: Option<f64>,
    #[serde(rename = "FE")]
    pub fe: Option<f64>,
}

impl GradeRow {
    pub fn get(&self, kind: GradeKind) -> Option<f64> {
        match kind {
            GradeKind::SA => self.sa,
            GradeKind::SFE => self.sfe,
            GradeKind::FE => self.fe,
        }
    }
}

/// Grades keyed by trace id; any of the three scores may be missing.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct GradeTable {
    rows: Vec<GradeRow>,
    index: HashMap<String, usize>,
}

impl GradeTable {
    pub fn new(rows: Vec<GradeRow>) -> Result<Self> {
        let mut index = HashMap::with_capacity(rows.len());
        for (j, row) in rows.iter().enumerate() {
            if index.insert(row.trace_id.clone(), j).is_some() {
                return Err(Error::Input(format!("duplicate trace_id {:?} in grades", row.trace_id)));
            }
            for kind in GradeKind::ALL {
                let Some(v) = row.get(kind) else { continue };
                if !v.is_finite() {
                    return Err(Error::Input(format!("{}: {kind} is not finite", row.trace_id)));
                }
                if let Some((lo, hi)) = kind.range() {
                    if v < lo || v > hi {
                        return Err(Error::Input(format!(
                            "{}: {kind} = {v} outside [{lo}, {hi}]",
                            row.trace_id
                        )));
                    }
                }
            }
        }
        Ok(GradeTable { rows, index })
    }

    /// Reads `trace_id,SA,SFE,FE`; blank cells are missing scores.
    pub fn read_csv<R: Read>(r: R) -> Result<Self> {
        let mut reader = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(r);
        let headers = reader.headers()?.clone();
        for want in ["trace_id", "SA", "SFE", "FE"] {
            if !headers.iter().any(|h| h == want) {
                return Err(Error::Input(format!("grades CSV is missing column {want:?}")));
            }
        }
        let rows = reader
            .deserialize()
            .collect::<std::result::Result<Vec<GradeRow>, _>>()?;
        GradeTable::new(rows)
    }

    pub fn get(&self, trace_id: &str) -> Option<&GradeRow> {
        self.index.get(trace_id).map(|&j| &self.rows[j])
    }

    pub fn rows(&self) -> &[GradeRow] {
        &self.rows
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AnalysisConfig {
    pub threshold: f64,
    pub seed: u64,
    pub clusters: usize,
    pub max_iters: usize,
    pub restarts: usize,
}

impl Default for AnalysisConfig {
    fn default() -> Self {
        AnalysisConfig {
            threshold: DEFAULT_THRESHOLD,
            seed: 0,
            clusters: 2,
            max_iters: DEFAULT_MAX_ITERS,
            restarts: DEFAULT_RESTARTS,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound = "F: Real")]
pub struct ClusterSummary<F> {
    /// Cluster of each trace, aligned with `trace_ids`.
    pub trace_ids: Vec<String>,
    pub labels: Vec<usize>,
    pub sizes: Vec<usize>,
    pub centroids: Vec<Vec<F>>,
    pub wcss: F,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound = "F: Real")]
pub struct GroupComparison<F> {
    pub grade: GradeKind,
    pub test: Option<TTest<F>>,
    pub significant: bool,
    /// Why no test was run, when `test` is absent.
    pub skipped: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound = "F: Real")]
pub struct TraitCorrelation<F> {
    /// 1-based trait number.
    #[serde(rename = "trait")]
    pub trait_number: usize,
    pub grade: GradeKind,
    pub correlation: Option<Correlation<F>>,
    pub significant: bool,
    /// `"+"` or `"-"` for significant entries.
    pub sign: Option<String>,
    pub skipped: Option<String>,
}

/// Downstream statistics for one fitted model.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound = "F: Real")]
pub struct AnalysisReport<F> {
    pub config: AnalysisConfig,
    pub num_traits: usize,
    pub joined_traces: usize,
    pub clusters: ClusterSummary<F>,
    pub ttests: Vec<GroupComparison<F>>,
    pub correlations: Vec<TraitCorrelation<F>>,
    /// Grade types whose cluster comparison is significant (one row of a
    /// "which models separate learners" table).
    pub significant_grades: Vec<GradeKind>,
    /// Per grade type, the significant traits as signed labels such as
    /// `"(+)T3"` (one row of a "which traits correlate" table).
    pub significant_traits: BTreeMap<GradeKind, Vec<String>>,
}

/// Clusters trait mixtures, compares clusters on each grade type, and
/// correlates every trait's weight with every grade type.
///
/// All traces of the model are clustered; tests and correlations use the
/// traces that also appear in `grades` and have the relevant score.
pub fn run_analysis<F: Real>(
    fit: &FitResult<F>,
    grades: &GradeTable,
    config: &AnalysisConfig,
) -> Result<AnalysisReport<F>> {
    if !(config.threshold > 0.0 && config.threshold <= 1.0) {
        return Err(Error::Config(format!(
            "threshold must be in (0, 1], got {}",
            config.threshold
        )));
    }
    let theta = &fit.posterior.theta;
    if theta.len() != fit.trace_ids.len() {
        return Err(Error::Input("model trace ids do not match theta rows".into()));
    }
    let joined: Vec<(usize, &GradeRow)> = fit
        .trace_ids
        .iter()
        .enumerate()
        .filter_map(|(m, id)| grades.get(id).map(|g| (m, g)))
        .collect();
    if joined.is_empty() {
        return Err(Error::Input(
            "empty join: no model trace id appears in the grades".into(),
        ));
    }
    let threshold = F::lit(config.threshold);

    let km = kmeans_restarts(theta, config.clusters, config.seed, config.max_iters, config.restarts)?;

    let mut ttests = Vec::new();
    for kind in GradeKind::ALL {
        let mut groups: Vec<Vec<F>> = vec![Vec::new(); config.clusters];
        for &(m, g) in &joined {
            if let Some(v) = g.get(kind) {
                groups[km.labels[m]].push(F::lit(v));
            }
        }
        let cmp = if config.clusters != 2 {
            skipped_comparison(kind, "t-tests need exactly two clusters".into())
        } else if groups.iter().any(|g| g.len() < 2) {
            skipped_comparison(
                kind,
                format!(
                    "too few scored traces per cluster ({} and {})",
                    groups[0].len(),
                    groups[1].len()
                ),
            )
        } else {
            let test = welch_t_test(&groups[0], &groups[1])?;
            GroupComparison {
                grade: kind,
                significant: test.p < threshold,
                test: Some(test),
                skipped: None,
            }
        };
        ttests.push(cmp);
    }

    let mut correlations = Vec::new();
    #[allow(clippy::needless_range_loop)]
    for k in 0..fit.posterior.num_traits {
        for kind in GradeKind::ALL {
            let (xs, ys): (Vec<F>, Vec<F>) = joined
                .iter()
                .filter_map(|&(m, g)| g.get(kind).map(|v| (theta[m][k], F::lit(v))))
                .unzip();
            let entry = match pearson(&xs, &ys) {
                Ok(c) => {
                    let significant = c.p < threshold;
                    let sign = significant.then(|| if c.r >= F::zero() { "+" } else { "-" }.to_string());
                    TraitCorrelation {
                        trait_number: k + 1,
                        grade: kind,
                        correlation: Some(c),
                        significant,
                        sign,
                        skipped: None,
                    }
                }
                Err(e) => TraitCorrelation {
                    trait_number: k + 1,
                    grade: kind,
                    correlation: None,
                    significant: false,
                    sign: None,
                    skipped: Some(e.to_string()),
                },
            };
            correlations.push(entry);
        }
    }

    let significant_grades = ttests.iter().filter(|c| c.significant).map(|c| c.grade).collect();
    let mut significant_traits: BTreeMap<GradeKind, Vec<String>> = BTreeMap::new();
    for kind in GradeKind::ALL {
        let cells = correlations
            .iter()
            .filter(|c| c.grade == kind && c.significant)
            .map(|c| format!("({})T{}", c.sign.as_deref().unwrap_or("?"), c.trait_number))
            .collect();
        significant_traits.insert(kind, cells);
    }

    Ok(AnalysisReport {
        config: config.clone(),
        num_traits: fit.posterior.num_traits,
        joined_traces: joined.len(),
        clusters: ClusterSummary {
            trace_ids: fit.trace_ids.clone(),
            labels: km.labels,
            sizes: km.sizes,
            centroids: km.centroids,
            wcss: km.wcss,
        },
        ttests,
        correlations,
        significant_grades,
        significant_traits,
    })
}

fn skipped_comparison<F>(grade: GradeKind, reason: String) -> GroupComparison<F> {
    GroupComparison {
        grade,
        test: None,
        significant: false,
        skipped: Some(reason),
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ProfileKind {
    Event,
    Time,
    Interaction,
}

/// One bar of a trait profile. `event_label` and `bin_index` are 1-based;
/// for `event` rows both name the event.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound = "F: Real")]
pub struct ProfileRow<F> {
    pub kind: ProfileKind,
    pub event_label: usize,
    pub bin_index: usize,
    pub probability: F,
}

/// A trait's event distribution plus its per-event time-bin and
/// interaction-level distributions, as plot-ready rows.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound = "F: Real")]
pub struct TraitProfile<F> {
    /// 1-based trait number.
    pub trait_number: usize,
    pub rows: Vec<ProfileRow<F>>,
}

/// Exports trait `k` (0-based) of a posterior.
pub fn export_trait<F: Real>(posterior: &Posterior<F>, k: usize) -> Result<TraitProfile<F>> {
    if k >= posterior.num_traits {
        return Err(Error::Input(format!(
            "trait {} out of range for a {}-trait model",
            k + 1,
            posterior.num_traits
        )));
    }
    let mut rows = Vec::new();
    for (e, &p) in posterior.phi[k].iter().enumerate() {
        rows.push(ProfileRow {
            kind: ProfileKind::Event,
            event_label: e + 1,
            bin_index: e + 1,
            probability: p,
        });
    }
    for (kind, table) in [
        (ProfileKind::Time, &posterior.psi[k]),
        (ProfileKind::Interaction, &posterior.tau[k]),
    ] {
        for (e, dist) in table.iter().enumerate() {
            for (b, &p) in dist.iter().enumerate() {
                rows.push(ProfileRow {
                    kind,
                    event_label: e + 1,
                    bin_index: b + 1,
                    probability: p,
                });
            }
        }
    }
    Ok(TraitProfile {
        trait_number: k + 1,
        rows,
    })
}

impl<F: Real> TraitProfile<F> {
    /// Writes `kind,event_label,bin_index,probability` rows. Probabilities
    /// use the shortest representation that parses back exactly.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut writer = csv::Writer::from_writer(w);
        writer.write_record(["kind", "event_label", "bin_index", "probability"])?;
        for row in &self.rows {
            let kind = match row.kind {
                ProfileKind::Event => "event",
                ProfileKind::Time => "time",
                ProfileKind::Interaction => "interaction",
            };
            writer.write_record([
                kind.to_string(),
                row.event_label.to_string(),
                row.bin_index.to_string(),
                row.probability.to_string(),
            ])?;
        }
        writer.flush()?;
        Ok(())
    }

    pub fn read_csv<R: Read>(trait_number: usize, r: R) -> Result<Self> {
        #[derive(Deserialize)]
        struct Raw {
            kind: ProfileKind,
            event_label: usize,
            bin_index: usize,
            probability: String,
        }
        let mut reader = csv::Reader::from_reader(r);
        let mut rows = Vec::new();
        for raw in reader.deserialize::<Raw>() {
            let raw = raw?;
            let p: f64 = raw
                .probability
                .parse()
                .map_err(|_| Error::Input(format!("bad probability {:?}", raw.probability)))?;
            rows.push(ProfileRow {
                kind: raw.kind,
                event_label: raw.event_label,
                bin_index: raw.bin_index,
                probability: F::lit(p),
            });
        }
        Ok(TraitProfile { trait_number, rows })
    }

    /// Distributions in the profile, grouped as exported.
    pub fn distributions(&self) -> Vec<Vec<F>> {
        let mut groups: Vec<((ProfileKind, usize), Vec<F>)> = Vec::new();
        let mut seen = HashSet::new();
        for row in &self.rows {
            let key = match row.kind {
                ProfileKind::Event => (ProfileKind::Event, 0),
                kind => (kind, row.event_label),
            };
            if seen.insert(key) {
                groups.push((key, Vec::new()));
            }
            let slot = groups.iter_mut().find(|(k, _)| *k == key).expect("inserted");
            slot.1.push(row.probability);
        }
        groups.into_iter().map(|(_, v)| v).collect()
    }
}
