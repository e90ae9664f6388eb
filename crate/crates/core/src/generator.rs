//! The forward generative process and its explicit joint density.
//!
//! Per trace `m` a trait mixture `θ_m ~ Dir(α)`; per trait `k` an event
//! distribution `φ_k ~ Dir(β)`; per (trait, event) a time-bin distribution
//! `ψ_{k,e} ~ Dir(γ)` and an interaction-level distribution
//! `τ_{k,e} ~ Dir(δ)`. Each token then draws
//!
//! ```text
//! z ~ Cat(θ_m),  e ~ Cat(φ_z),  t ~ Cat(ψ_{z,e}),  i ~ Cat(τ_{z,e})
//! ```
//!
//! with `t` and `i` conditionally independent given `(z, e)`.

use serde::{Deserialize, Serialize};

use crate::corpus::{Corpus, Dims, Hyperparams, Schema, Token, Trace};
use crate::error::{Error, Result};
use crate::rng::{categorical_from_uniform, keyed_stream, keyed_uniform, sample_dirichlet, slot, Domain};
use crate::scalar::{ln_dirichlet_norm, Real};

/// Ground-truth categorical parameters of a synthetic corpus.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound = "F: Real")]
pub struct TrueParams<F> {
    pub theta: Vec<Vec<F>>,
    pub phi: Vec<Vec<F>>,
    pub psi: Vec<Vec<Vec<F>>>,
    pub tau: Vec<Vec<Vec<F>>>,
}

/// A generated corpus together with the trait behind every token.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LabeledCorpus {
    pub corpus: Corpus,
    /// `assignments[m][n]` is the trait of token `n` of trace `m`.
    pub assignments: Vec<Vec<u32>>,
}

impl<F: Real> TrueParams<F> {
    pub fn num_traits(&self) -> usize {
        self.phi.len()
    }

    pub fn num_traces(&self) -> usize {
        self.theta.len()
    }

    pub fn dims(&self) -> Dims {
        Dims {
            events: self.phi.first().map_or(0, |r| r.len()),
            time_bins: self.psi.first().and_then(|r| r.first()).map_or(0, |r| r.len()),
            levels: self.tau.first().and_then(|r| r.first()).map_or(0, |r| r.len()),
        }
    }

    /// Checks shapes and that every row is a distribution within `tol`.
    pub fn validate(&self, tol: F) -> Result<()> {
        let kk = self.num_traits();
        let d = self.dims();
        if kk == 0 || d.events == 0 || d.time_bins == 0 || d.levels == 0 {
            return Err(Error::Input("parameters have an empty dimension".into()));
        }
        let shape_ok = self.theta.iter().all(|r| r.len() == kk)
            && self.phi.iter().all(|r| r.len() == d.events)
            && self.psi.len() == kk
            && self.tau.len() == kk
            && self
                .psi
                .iter()
                .all(|r| r.len() == d.events && r.iter().all(|x| x.len() == d.time_bins))
            && self
                .tau
                .iter()
                .all(|r| r.len() == d.events && r.iter().all(|x| x.len() == d.levels));
        if !shape_ok {
            return Err(Error::Input("parameter tables are ragged".into()));
        }
        let rows = self
            .theta
            .iter()
            .chain(&self.phi)
            .chain(self.psi.iter().flatten())
            .chain(self.tau.iter().flatten());
        for row in rows {
            let s: F = row.iter().copied().sum();
            if row.iter().any(|&p| !(p >= F::zero() && p <= F::one())) || (s - F::one()).abs() > tol {
                return Err(Error::Input("parameter row is not a probability distribution".into()));
            }
        }
        Ok(())
    }

    /// Renames trait `k` to `perm[k]` everywhere.
    pub fn permute_traits(&self, perm: &[usize]) -> Self {
        let kk = self.num_traits();
        assert_eq!(perm.len(), kk);
        let mut phi = self.phi.clone();
        let mut psi = self.psi.clone();
        let mut tau = self.tau.clone();
        for k in 0..kk {
            phi[perm[k]] = self.phi[k].clone();
            psi[perm[k]] = self.psi[k].clone();
            tau[perm[k]] = self.tau[k].clone();
        }
        let theta = self
            .theta
            .iter()
            .map(|row| {
                let mut out = row.clone();
                for k in 0..kk {
                    out[perm[k]] = row[k];
                }
                out
            })
            .collect();
        TrueParams { theta, phi, psi, tau }
    }
}

impl LabeledCorpus {
    /// Renames trait `k` to `perm[k]` in every assignment.
    pub fn permute_traits(&self, perm: &[usize]) -> Self {
        LabeledCorpus {
            corpus: self.corpus.clone(),
            assignments: self
                .assignments
                .iter()
                .map(|z| z.iter().map(|&k| perm[k as usize] as u32).collect())
                .collect(),
        }
    }
}

/// Draws every parameter row from its symmetric Dirichlet prior.
///
/// Row `m` of theta uses the stream keyed `(seed, Theta, m)`, row `k` of phi
/// `(seed, Phi, k)`, and the (k, e) rows of psi/tau `(seed, Psi|Tau, k, e)`,
/// so the result depends on nothing but the seed and the shapes.
pub fn sample_params<F: Real>(
    num_traits: usize,
    num_traces: usize,
    schema: &Schema,
    hyper: &Hyperparams<F>,
    seed: u64,
) -> Result<TrueParams<F>> {
    if num_traits == 0 {
        return Err(Error::Config("number of traits must be at least 1".into()));
    }
    schema.validate()?;
    hyper.validate()?;
    let d = schema.dims();
    let conc = |c: F, n: usize| vec![c.to_f64_lossy(); n];

    let theta_conc = conc(hyper.alpha, num_traits);
    let theta = (0..num_traces)
        .map(|m| sample_dirichlet(&theta_conc, &mut keyed_stream(seed, Domain::Theta, m as u64, 0)))
        .collect();
    let phi_conc = conc(hyper.beta, d.events);
    let phi = (0..num_traits)
        .map(|k| sample_dirichlet(&phi_conc, &mut keyed_stream(seed, Domain::Phi, k as u64, 0)))
        .collect();
    let psi_conc = conc(hyper.gamma, d.time_bins);
    let tau_conc = conc(hyper.delta, d.levels);
    let per_event = |domain: Domain, c: &[f64]| -> Vec<Vec<Vec<F>>> {
        (0..num_traits)
            .map(|k| {
                (0..d.events)
                    .map(|e| sample_dirichlet(c, &mut keyed_stream(seed, domain, k as u64, e as u64)))
                    .collect()
            })
            .collect()
    };
    let psi = per_event(Domain::Psi, &psi_conc);
    let tau = per_event(Domain::Tau, &tau_conc);
    Ok(TrueParams { theta, phi, psi, tau })
}

/// Runs the generative process for `tokens_per_trace[m]` tokens in trace `m`.
///
/// Each draw uses the uniform keyed by `(seed, m, n, slot)`, so any subset of
/// traces can be regenerated independently.
pub fn generate<F: Real>(
    params: &TrueParams<F>,
    schema: &Schema,
    tokens_per_trace: &[usize],
    seed: u64,
) -> Result<LabeledCorpus> {
    params.validate(F::lit(1e-6))?;
    if params.dims() != schema.dims() {
        return Err(Error::Input(format!(
            "parameter dims {:?} do not match schema dims {:?}",
            params.dims(),
            schema.dims()
        )));
    }
    if tokens_per_trace.len() != params.num_traces() {
        return Err(Error::Input(format!(
            "{} trace lengths given for {} traces",
            tokens_per_trace.len(),
            params.num_traces()
        )));
    }
    if tokens_per_trace.contains(&0) {
        return Err(Error::Input("every trace needs at least one token".into()));
    }

    let mut traces = Vec::with_capacity(tokens_per_trace.len());
    let mut assignments = Vec::with_capacity(tokens_per_trace.len());
    for (m, &len) in tokens_per_trace.iter().enumerate() {
        let (tokens, z) = generate_trace(params, m, len, seed);
        traces.push(Trace {
            trace_id: format!("trace{m}"),
            tokens,
        });
        assignments.push(z);
    }
    Ok(LabeledCorpus {
        corpus: Corpus::new(schema.clone(), traces),
        assignments,
    })
}

/// Tokens and traits of trace `m` alone; `generate` is this applied to
/// every trace. Parameters are assumed valid.
pub fn generate_trace<F: Real>(params: &TrueParams<F>, m: usize, len: usize, seed: u64) -> (Vec<Token>, Vec<u32>) {
    let draw = |weights: &[F], n: usize, s: u64| -> usize {
        let u = keyed_uniform(seed, Domain::Token, m as u64, n as u64, s);
        categorical_from_uniform(weights, F::lit(u)).expect("distribution has mass")
    };
    let mut tokens = Vec::with_capacity(len);
    let mut z = Vec::with_capacity(len);
    for n in 0..len {
        let k = draw(&params.theta[m], n, slot::TRAIT);
        let e = draw(&params.phi[k], n, slot::EVENT);
        let t = draw(&params.psi[k][e], n, slot::TIME);
        let i = draw(&params.tau[k][e], n, slot::LEVEL);
        tokens.push(Token::new(e, t, i));
        z.push(k as u32);
    }
    (tokens, z)
}

/// Log density of a symmetric Dirichlet with concentration `c` at `x`.
///
/// Zero components give `-∞` for `c > 1`, `+∞` for `c < 1`, and contribute
/// nothing for `c = 1`.
pub fn ln_dirichlet_density<F: Real>(x: &[F], c: F) -> F {
    let norm = ln_dirichlet_norm(c, x.len());
    if c == F::one() {
        return norm;
    }
    let cm1 = c - F::one();
    norm + order_free_sum(x.iter().map(|&p| cm1 * p.ln()).collect())
}

/// Sum in ascending order, so permuting the terms cannot change the result.
fn order_free_sum<F: Real>(mut terms: Vec<F>) -> F {
    terms.sort_by(|a, b| a.partial_cmp(b).unwrap_or(std::cmp::Ordering::Equal));
    terms.into_iter().fold(F::zero(), |acc, x| acc + x)
}

/// Log of the full joint density of parameters, assignments and tokens.
///
/// Sums the log Dirichlet density of every parameter row and, per token,
/// `ln θ[m][z] + ln φ[z][e] + ln ψ[z][e][t] + ln τ[z][e][i]`. A token with
/// zero probability under the parameters makes the result `-∞`. The prior
/// terms are summed in sorted order, so relabeling traits gives the same
/// value bit for bit.
pub fn joint_log_likelihood<F: Real>(
    params: &TrueParams<F>,
    labeled: &LabeledCorpus,
    hyper: &Hyperparams<F>,
) -> Result<F> {
    let traces = &labeled.corpus.traces;
    if traces.len() != params.num_traces() || labeled.assignments.len() != traces.len() {
        return Err(Error::Input(
            "corpus, assignments and theta disagree on trace count".into(),
        ));
    }
    if params.dims() != labeled.corpus.schema.dims() {
        return Err(Error::Input("parameter dims do not match corpus schema".into()));
    }
    let kk = params.num_traits();

    let mut prior_terms: Vec<F> = params
        .theta
        .iter()
        .map(|row| ln_dirichlet_density(row, hyper.alpha))
        .collect();
    for k in 0..kk {
        prior_terms.push(ln_dirichlet_density(&params.phi[k], hyper.beta));
        for e in 0..params.phi[k].len() {
            prior_terms.push(ln_dirichlet_density(&params.psi[k][e], hyper.gamma));
            prior_terms.push(ln_dirichlet_density(&params.tau[k][e], hyper.delta));
        }
    }
    let prior = order_free_sum(prior_terms);

    let mut data = F::zero();
    for (m, (trace, z)) in traces.iter().zip(&labeled.assignments).enumerate() {
        if trace.tokens.len() != z.len() {
            return Err(Error::Input(format!("trace {m}: assignments do not match tokens")));
        }
        for (tok, &k) in trace.tokens.iter().zip(z) {
            let k = k as usize;
            if k >= kk {
                return Err(Error::Input(format!("trace {m}: trait {k} out of range")));
            }
            let (e, t, i) = (tok.e(), tok.t(), tok.i());
            let p = [
                params.theta[m][k],
                params.phi[k][e],
                params.psi[k][e][t],
                params.tau[k][e][i],
            ];
            if p.iter().any(|&x| x <= F::zero()) {
                return Ok(F::neg_infinity());
            }
            data = data + p.iter().map(|x| x.ln()).sum::<F>();
        }
    }
    Ok(prior + data)
}

/// Half the L1 distance between two distributions.
pub fn total_variation<F: Real>(a: &[F], b: &[F]) -> F {
    a.iter().zip(b).map(|(&x, &y)| (x - y).abs()).sum::<F>() / F::lit(2.0)
}

/// Greedy one-to-one matching of reference traits to estimated traits.
///
/// Repeatedly pairs the closest remaining (reference, estimate) rows by
/// total variation; ties go to the lowest indices. Returns `m` with
/// `m[reference] = estimate`.
pub fn match_traits<F: Real>(reference: &[Vec<F>], estimate: &[Vec<F>]) -> Vec<usize> {
    let kk = reference.len();
    assert_eq!(kk, estimate.len(), "trait counts differ");
    let mut pairs: Vec<(F, usize, usize)> = Vec::with_capacity(kk * kk);
    for (r, ref_row) in reference.iter().enumerate() {
        for (s, est_row) in estimate.iter().enumerate() {
            pairs.push((total_variation(ref_row, est_row), r, s));
        }
    }
    pairs.sort_by(|a, b| {
        a.0.partial_cmp(&b.0)
            .unwrap_or(std::cmp::Ordering::Equal)
            .then((a.1, a.2).cmp(&(b.1, b.2)))
    });
    let mut mapping = vec![usize::MAX; kk];
    let mut used = vec![false; kk];
    for (_, r, s) in pairs {
        if mapping[r] == usize::MAX && !used[s] {
            mapping[r] = s;
            used[s] = true;
        }
    }
    mapping
}
