//! Hidden behavior traits model (HBTM).
//!
//! An LDA-style latent variable model for event-log traces in which every
//! token is a triple (event type, time-span bin, interaction-intensity level).
//! Each trace mixes `K` latent traits; a trait emits an event type, and given
//! the (trait, event) pair emits a time bin and an interaction level
//! independently.
//!
//! The crate covers the whole pipeline:
//!
//! - [`ingest`]: raw CSV logs to per-session token corpora,
//! - [`generator`]: the generative process and its explicit joint density,
//! - [`sampler`]: collapsed Gibbs inference,
//! - [`analysis`]: k-means on trait mixtures, t-tests, correlations, and
//!   per-trait profile export.
//!
//! Numeric code is generic over [`Real`] (`f32` or `f64`); the aliases below
//! fix the scalar for the common cases.

pub mod analysis;
pub mod corpus;
pub mod counts;
pub mod error;
pub mod generator;
pub mod ingest;
pub mod posterior;
pub mod rng;
pub mod sampler;
pub mod scalar;

pub use corpus::{validate_corpus, Corpus, Dims, Hyperparams, Schema, Token, Trace, Violation};
pub use counts::Counts;
pub use error::{Error, Result};
pub use generator::{generate, joint_log_likelihood, sample_params, LabeledCorpus, TrueParams};
pub use posterior::{estimate_posterior, Posterior};
pub use sampler::{
    collapsed_log_joint, conditional_weights, fit, fit_observed, gibbs_sweep, init_state, FitConfig, FitResult,
    ModelState,
};
pub use scalar::Real;

pub type Hyperparams64 = Hyperparams<f64>;
pub type Hyperparams32 = Hyperparams<f32>;
pub type Posterior64 = Posterior<f64>;
pub type Posterior32 = Posterior<f32>;
pub type TrueParams64 = TrueParams<f64>;
pub type TrueParams32 = TrueParams<f32>;
pub type FitConfig64 = FitConfig<f64>;
pub type FitConfig32 = FitConfig<f32>;
pub type FitResult64 = FitResult<f64>;
pub type FitResult32 = FitResult<f32>;
pub type ModelState64 = ModelState<f64>;
pub type ModelState32 = ModelState<f32>;
pub type AnalysisReport64 = analysis::AnalysisReport<f64>;
pub type TraitProfile64 = analysis::TraitProfile<f64>;
