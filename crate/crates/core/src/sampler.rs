//! Collapsed Gibbs sampling over per-token trait assignments.
//!
//! With every Dirichlet-distributed parameter integrated out, the full
//! conditional of one token's trait `z = k` given all other assignments is
//!
//! ```text
//! (N_mk + α) · (N_ke + β)/(N_k + Eβ) · (N_ket + γ)/(N_ke + Tγ) · (N_kei + δ)/(N_ke + Iδ)
//! ```
//!
//! where all counts exclude the token being resampled. Tokens are visited in
//! trace order, then position order.

use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::{Corpus, Dims, Hyperparams, Schema, Token};
use crate::counts::Counts;
use crate::error::{Error, Result};
use crate::posterior::{estimate_posterior, Posterior, PosteriorMean};
use crate::rng::{chain_rng, sample_categorical};
use crate::scalar::{ln_gamma, Real};

/// Sampler configuration.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound = "F: Real")]
pub struct FitConfig<F> {
    pub num_traits: usize,
    pub sweeps: usize,
    pub burn_in: usize,
    pub sample_stride: usize,
    pub seed: u64,
    pub hyper: Hyperparams<F>,
}

impl<F: Real> FitConfig<F> {
    /// Default schedule (2000 sweeps, 1000 burn-in, stride 10) for `num_traits`.
    pub fn new(num_traits: usize) -> Self {
        FitConfig {
            num_traits,
            sweeps: 2000,
            burn_in: 1000,
            sample_stride: 10,
            seed: 0,
            hyper: Hyperparams::default(),
        }
    }

    /// Whether the state after sweep `s` (1-based) contributes a snapshot.
    pub fn retains(&self, s: usize) -> bool {
        s > self.burn_in && (s - self.burn_in).is_multiple_of(self.sample_stride)
    }

    pub fn retained_samples(&self) -> usize {
        if self.sample_stride == 0 || self.burn_in >= self.sweeps {
            return 0;
        }
        (self.sweeps - self.burn_in) / self.sample_stride
    }

    pub fn validate(&self) -> Result<()> {
        if self.num_traits < 1 {
            return Err(Error::Config("number of traits must be at least 1".into()));
        }
        if self.sample_stride < 1 {
            return Err(Error::Config("sample_stride must be at least 1".into()));
        }
        if self.burn_in >= self.sweeps {
            return Err(Error::Config(format!(
                "burn_in ({}) must be smaller than sweeps ({})",
                self.burn_in, self.sweeps
            )));
        }
        if self.retained_samples() == 0 {
            return Err(Error::Config(format!(
                "no samples retained: {} post-burn-in sweeps with stride {}",
                self.sweeps - self.burn_in,
                self.sample_stride
            )));
        }
        self.hyper.validate()
    }
}

/// Trait assignments plus the count tables they induce.
#[derive(Clone, Debug)]
pub struct ModelState<F> {
    num_traits: usize,
    /// `offsets[m]..offsets[m+1]` are the flat token indices of trace `m`.
    offsets: Vec<usize>,
    tokens: Vec<Token>,
    z: Vec<u32>,
    counts: Counts,
    rng: ChaCha8Rng,
    sweeps_done: usize,
    log_joint: F,
    detached: Option<usize>,
}

impl<F: Real> ModelState<F> {
    pub fn num_traits(&self) -> usize {
        self.num_traits
    }

    pub fn num_traces(&self) -> usize {
        self.offsets.len() - 1
    }

    pub fn dims(&self) -> Dims {
        self.counts.dims
    }

    pub fn counts(&self) -> &Counts {
        &self.counts
    }

    pub fn sweeps_done(&self) -> usize {
        self.sweeps_done
    }

    /// Collapsed log joint maintained incrementally across updates.
    pub fn tracked_log_joint(&self) -> F {
        self.log_joint
    }

    pub fn trace_len(&self, m: usize) -> usize {
        self.offsets[m + 1] - self.offsets[m]
    }

    #[inline]
    fn flat(&self, m: usize, n: usize) -> usize {
        self.offsets[m] + n
    }

    pub fn assignment(&self, m: usize, n: usize) -> u32 {
        self.z[self.flat(m, n)]
    }

    /// Assignments grouped per trace.
    pub fn assignments(&self) -> Vec<Vec<u32>> {
        self.offsets.windows(2).map(|w| self.z[w[0]..w[1]].to_vec()).collect()
    }

    fn docs(&self) -> impl ExactSizeIterator<Item = (&[Token], &[u32])> {
        self.offsets
            .windows(2)
            .map(move |w| (&self.tokens[w[0]..w[1]], &self.z[w[0]..w[1]]))
    }

    /// Compares the incremental tables with a from-scratch recount and checks
    /// their marginal equalities. Empty means consistent.
    pub fn audit(&self) -> Vec<String> {
        let mut out = self.counts.consistency_violations();
        if self.detached.is_some() {
            out.push("a token is detached from the count tables".into());
            return out;
        }
        if self.z.iter().any(|&k| k as usize >= self.num_traits) {
            out.push("assignment out of trait range".into());
        }
        let fresh = Counts::from_assignments(self.num_traits, self.counts.dims, self.docs());
        if fresh != self.counts {
            out.push("incremental counts differ from a full recount".into());
        }
        out
    }

    /// Takes token `(m, n)` out of the count tables ahead of resampling it.
    pub fn detach(&mut self, m: usize, n: usize) -> Result<()> {
        if self.detached.is_some() {
            return Err(Error::State("another token is already detached".into()));
        }
        let idx = self.flat(m, n);
        self.counts.remove(m, self.tokens[idx], self.z[idx] as usize);
        self.detached = Some(idx);
        Ok(())
    }

    /// Puts the detached token `(m, n)` back with trait `k`.
    pub fn attach(&mut self, m: usize, n: usize, k: usize) -> Result<()> {
        let idx = self.flat(m, n);
        if self.detached != Some(idx) {
            return Err(Error::State(format!("token ({m}, {n}) is not detached")));
        }
        if k >= self.num_traits {
            return Err(Error::State(format!("trait {k} out of range")));
        }
        self.z[idx] = k as u32;
        self.counts.add(m, self.tokens[idx], k);
        self.detached = None;
        Ok(())
    }

    /// Posterior means of the current counts.
    pub fn posterior(&self, hyper: &Hyperparams<F>) -> Result<Posterior<F>> {
        if self.detached.is_some() {
            return Err(Error::State("cannot estimate with a detached token".into()));
        }
        estimate_posterior(&self.counts, hyper)
    }
}

/// Draws every token's trait uniformly from `[0, K)` with the config seed.
pub fn init_state<F: Real>(corpus: &Corpus, config: &FitConfig<F>) -> Result<ModelState<F>> {
    if config.num_traits < 1 {
        return Err(Error::Config("number of traits must be at least 1".into()));
    }
    config.hyper.validate()?;
    corpus.ensure_valid()?;
    let kk = config.num_traits;
    let mut rng = chain_rng(config.seed);
    let uniform = vec![F::one(); kk];

    let mut offsets = Vec::with_capacity(corpus.num_traces() + 1);
    let mut tokens = Vec::with_capacity(corpus.num_tokens());
    offsets.push(0);
    for trace in &corpus.traces {
        tokens.extend_from_slice(&trace.tokens);
        offsets.push(tokens.len());
    }
    let z: Vec<u32> = tokens
        .iter()
        .map(|_| sample_categorical(&uniform, &mut rng).expect("uniform weights") as u32)
        .collect();

    let mut state = ModelState {
        num_traits: kk,
        counts: Counts::zeros(kk, corpus.num_traces(), corpus.schema.dims()),
        offsets,
        tokens,
        z,
        rng,
        sweeps_done: 0,
        log_joint: F::zero(),
        detached: None,
    };
    state.counts = Counts::from_assignments(kk, state.counts.dims, state.docs());
    state.log_joint = collapsed_log_joint(&state.counts, &config.hyper);
    Ok(state)
}

/// Unnormalized full-conditional weights for the detached token `(m, n)`.
pub fn conditional_weights<F: Real>(
    state: &ModelState<F>,
    m: usize,
    n: usize,
    hyper: &Hyperparams<F>,
    out: &mut [F],
) -> Result<()> {
    let idx = state.flat(m, n);
    if state.detached != Some(idx) {
        return Err(Error::State(format!(
            "token ({m}, {n}) must be detached before computing its conditional"
        )));
    }
    let tok = state.tokens[idx];
    fill_weights(&state.counts, m, tok, &WeightConsts::new(hyper, state.counts.dims), out);
    Ok(())
}

struct WeightConsts<F> {
    alpha: F,
    beta: F,
    gamma: F,
    delta: F,
    e_beta: F,
    t_gamma: F,
    i_delta: F,
}

impl<F: Real> WeightConsts<F> {
    fn new(h: &Hyperparams<F>, d: Dims) -> Self {
        WeightConsts {
            alpha: h.alpha,
            beta: h.beta,
            gamma: h.gamma,
            delta: h.delta,
            e_beta: F::from_len(d.events) * h.beta,
            t_gamma: F::from_len(d.time_bins) * h.gamma,
            i_delta: F::from_len(d.levels) * h.delta,
        }
    }
}

#[inline]
fn fill_weights<F: Real>(counts: &Counts, m: usize, tok: Token, c: &WeightConsts<F>, out: &mut [F]) {
    let d = counts.dims;
    let (e, t, i) = (tok.e(), tok.t(), tok.i());
    let kk = counts.num_traits;
    let doc = &counts.trace_trait[m * kk..(m + 1) * kk];
    for (k, w) in out.iter_mut().enumerate().take(kk) {
        let ke = k * d.events + e;
        let n_ke = F::from_count(counts.trait_event[ke]);
        let n_ket = F::from_count(counts.trait_event_time[ke * d.time_bins + t]);
        let n_kei = F::from_count(counts.trait_event_level[ke * d.levels + i]);
        let n_k = F::from_count(counts.trait_total[k]);
        *w = (F::from_count(doc[k]) + c.alpha) * (n_ke + c.beta) / (n_k + c.e_beta) * (n_ket + c.gamma)
            / (n_ke + c.t_gamma)
            * (n_kei + c.delta)
            / (n_ke + c.i_delta);
    }
}

/// One full scan: every token is detached, resampled from its conditional,
/// and reattached. The tracked collapsed log joint is updated along the way.
pub fn gibbs_sweep<F: Real>(state: &mut ModelState<F>, hyper: &Hyperparams<F>) -> Result<()> {
    if state.detached.is_some() {
        return Err(Error::State("sweep started with a detached token".into()));
    }
    let consts = WeightConsts::new(hyper, state.counts.dims);
    let mut weights = vec![F::zero(); state.num_traits];
    let mut log_joint = state.log_joint;
    for m in 0..state.num_traces() {
        for idx in state.offsets[m]..state.offsets[m + 1] {
            let tok = state.tokens[idx];
            let old = state.z[idx] as usize;
            state.counts.remove(m, tok, old);
            fill_weights(&state.counts, m, tok, &consts, &mut weights);
            let new = sample_categorical(&weights, &mut state.rng)
                .ok_or_else(|| Error::State(format!("degenerate conditional at trace {m}")))?;
            if new != old {
                // Joint = rest + ln predictive(z); the trace normalizer cancels.
                log_joint = log_joint + weights[new].ln() - weights[old].ln();
                state.z[idx] = new as u32;
            }
            state.counts.add(m, tok, new);
        }
    }
    state.log_joint = log_joint;
    state.sweeps_done += 1;
    Ok(())
}

/// `ln p(z, tokens)` with all parameters integrated out, computed from scratch.
///
/// Sum of Dirichlet-multinomial terms
/// `ln Γ(Dc) - ln Γ(N + Dc) + Σ_j [ln Γ(n_j + c) - ln Γ(c)]`
/// over traces (α), traits (β), and (trait, event) pairs for time bins (γ)
/// and interaction levels (δ). Empty groups contribute exactly zero.
pub fn collapsed_log_joint<F: Real>(counts: &Counts, hyper: &Hyperparams<F>) -> F {
    let kk = counts.num_traits;
    let d = counts.dims;
    let mut total = F::zero();

    let mut group = |cells: &mut dyn Iterator<Item = u32>, n: u32, c: F, dim: usize| {
        if n == 0 {
            return;
        }
        let lg_c = ln_gamma(c);
        let dc = F::from_len(dim) * c;
        let mut acc = ln_gamma(dc) - ln_gamma(F::from_count(n) + dc);
        for x in cells {
            if x > 0 {
                acc = acc + ln_gamma(F::from_count(x) + c) - lg_c;
            }
        }
        total = total + acc;
    };

    for m in 0..counts.num_traces {
        let cells = &counts.trace_trait[m * kk..(m + 1) * kk];
        group(&mut cells.iter().copied(), counts.trace_total[m], hyper.alpha, kk);
    }
    for k in 0..kk {
        let cells = &counts.trait_event[k * d.events..(k + 1) * d.events];
        group(&mut cells.iter().copied(), counts.trait_total[k], hyper.beta, d.events);
    }
    for ke in 0..kk * d.events {
        let n = counts.trait_event[ke];
        let times = &counts.trait_event_time[ke * d.time_bins..(ke + 1) * d.time_bins];
        group(&mut times.iter().copied(), n, hyper.gamma, d.time_bins);
        let levels = &counts.trait_event_level[ke * d.levels..(ke + 1) * d.levels];
        group(&mut levels.iter().copied(), n, hyper.delta, d.levels);
    }
    total
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FitDiagnostics {
    pub retained_samples: usize,
    pub num_traces: usize,
    pub num_tokens: usize,
    /// `|tracked - recomputed|` collapsed log joint after the last sweep.
    pub final_log_joint_drift: f64,
}

/// Output of [`fit`].
///
/// `final_state` is not serialized; the final assignments are kept instead.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(bound = "F: Real")]
pub struct FitResult<F> {
    pub config: FitConfig<F>,
    pub schema: Schema,
    pub trace_ids: Vec<String>,
    pub posterior: Posterior<F>,
    pub log_joint_trace: Vec<F>,
    pub assignments: Vec<Vec<u32>>,
    pub diagnostics: FitDiagnostics,
    #[serde(skip)]
    pub final_state: Option<ModelState<F>>,
}

/// Runs the sampler and averages the retained posterior snapshots.
pub fn fit<F: Real>(corpus: &Corpus, config: &FitConfig<F>) -> Result<FitResult<F>> {
    fit_observed(corpus, config, |_, _| Ok(()))
}

/// [`fit`] with a callback invoked after every sweep with the 1-based sweep
/// number and the state. An error from the callback aborts the fit.
pub fn fit_observed<F, O>(corpus: &Corpus, config: &FitConfig<F>, mut observer: O) -> Result<FitResult<F>>
where
    F: Real,
    O: FnMut(usize, &ModelState<F>) -> Result<()>,
{
    config.validate()?;
    let mut state = init_state(corpus, config)?;
    let mut mean = PosteriorMean::default();
    let mut log_joint_trace = Vec::with_capacity(config.sweeps);
    for s in 1..=config.sweeps {
        gibbs_sweep(&mut state, &config.hyper)?;
        log_joint_trace.push(state.tracked_log_joint());
        if config.retains(s) {
            mean.push(state.posterior(&config.hyper)?);
        }
        observer(s, &state)?;
    }
    let retained_samples = mean.count();
    let posterior = mean
        .finish()
        .ok_or_else(|| Error::Config("no samples retained".into()))?;
    let recomputed = collapsed_log_joint(&state.counts, &config.hyper);
    let diagnostics = FitDiagnostics {
        retained_samples,
        num_traces: corpus.num_traces(),
        num_tokens: corpus.num_tokens(),
        final_log_joint_drift: (state.tracked_log_joint() - recomputed).abs().to_f64_lossy(),
    };
    Ok(FitResult {
        config: config.clone(),
        schema: corpus.schema.clone(),
        trace_ids: corpus.trace_ids(),
        posterior,
        log_joint_trace,
        assignments: state.assignments(),
        diagnostics,
        final_state: Some(state),
    })
}
