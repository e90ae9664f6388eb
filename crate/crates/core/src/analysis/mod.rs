//! Downstream use of a fitted model: clustering learners by trait mixture,
//! comparing the clusters' grades, correlating traits with grades, and
//! exporting per-trait distributions.

pub mod kmeans;
pub mod report;
pub mod stats;

pub use kmeans::{kmeans, kmeans_restarts, KMeansResult};
pub use report::{
    export_trait, run_analysis, AnalysisConfig, AnalysisReport, GradeKind, GradeRow, GradeTable, ProfileKind,
    ProfileRow, TraitProfile, DEFAULT_THRESHOLD,
};
pub use stats::{pearson, welch_t_test, Correlation, TTest};
