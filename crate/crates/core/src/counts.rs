//! Sufficient statistics of the collapsed model.

use serde::{Deserialize, Serialize};

use crate::corpus::{Dims, Token};

/// The count tables behind a set of trait assignments.
///
/// All tables are flat row-major vectors:
/// `trace_trait[m*K + k]`, `trait_event[k*E + e]`,
/// `trait_event_time[(k*E + e)*T + t]`, `trait_event_level[(k*E + e)*I + i]`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Counts {
    pub num_traits: usize,
    pub num_traces: usize,
    pub dims: Dims,
    pub trace_trait: Vec<u32>,
    pub trace_total: Vec<u32>,
    pub trait_event: Vec<u32>,
    pub trait_total: Vec<u32>,
    pub trait_event_time: Vec<u32>,
    pub trait_event_level: Vec<u32>,
}

impl Counts {
    pub fn zeros(num_traits: usize, num_traces: usize, dims: Dims) -> Self {
        let ke = num_traits * dims.events;
        Counts {
            num_traits,
            num_traces,
            dims,
            trace_trait: vec![0; num_traces * num_traits],
            trace_total: vec![0; num_traces],
            trait_event: vec![0; ke],
            trait_total: vec![0; num_traits],
            trait_event_time: vec![0; ke * dims.time_bins],
            trait_event_level: vec![0; ke * dims.levels],
        }
    }

    /// Recounts from scratch; `docs[m]` are the tokens of trace `m` and
    /// `z[m][n]` their traits.
    pub fn from_assignments<'a, I>(num_traits: usize, dims: Dims, docs: I) -> Self
    where
        I: IntoIterator<Item = (&'a [Token], &'a [u32])>,
        I::IntoIter: ExactSizeIterator,
    {
        let docs = docs.into_iter();
        let mut counts = Counts::zeros(num_traits, docs.len(), dims);
        for (m, (tokens, z)) in docs.enumerate() {
            for (tok, &k) in tokens.iter().zip(z) {
                counts.add(m, *tok, k as usize);
            }
        }
        counts
    }

    #[inline]
    pub fn add(&mut self, m: usize, tok: Token, k: usize) {
        let ke = k * self.dims.events + tok.e();
        self.trace_trait[m * self.num_traits + k] += 1;
        self.trace_total[m] += 1;
        self.trait_event[ke] += 1;
        self.trait_total[k] += 1;
        self.trait_event_time[ke * self.dims.time_bins + tok.t()] += 1;
        self.trait_event_level[ke * self.dims.levels + tok.i()] += 1;
    }

    #[inline]
    pub fn remove(&mut self, m: usize, tok: Token, k: usize) {
        let ke = k * self.dims.events + tok.e();
        self.trace_trait[m * self.num_traits + k] -= 1;
        self.trace_total[m] -= 1;
        self.trait_event[ke] -= 1;
        self.trait_total[k] -= 1;
        self.trait_event_time[ke * self.dims.time_bins + tok.t()] -= 1;
        self.trait_event_level[ke * self.dims.levels + tok.i()] -= 1;
    }

    #[inline]
    pub fn trace_trait(&self, m: usize, k: usize) -> u32 {
        self.trace_trait[m * self.num_traits + k]
    }

    #[inline]
    pub fn trait_event(&self, k: usize, e: usize) -> u32 {
        self.trait_event[k * self.dims.events + e]
    }

    #[inline]
    pub fn trait_event_time(&self, k: usize, e: usize, t: usize) -> u32 {
        self.trait_event_time[(k * self.dims.events + e) * self.dims.time_bins + t]
    }

    #[inline]
    pub fn trait_event_level(&self, k: usize, e: usize, i: usize) -> u32 {
        self.trait_event_level[(k * self.dims.events + e) * self.dims.levels + i]
    }

    pub fn total_tokens(&self) -> u64 {
        self.trace_total.iter().map(|&n| n as u64).sum()
    }

    /// Checks the marginal equalities that tie the tables together. Returns
    /// one message per broken equality; empty means consistent.
    pub fn consistency_violations(&self) -> Vec<String> {
        let (kk, d) = (self.num_traits, self.dims);
        let mut out = Vec::new();
        let sized = [
            ("trace_trait", self.trace_trait.len(), self.num_traces * kk),
            ("trace_total", self.trace_total.len(), self.num_traces),
            ("trait_event", self.trait_event.len(), kk * d.events),
            ("trait_total", self.trait_total.len(), kk),
            (
                "trait_event_time",
                self.trait_event_time.len(),
                kk * d.events * d.time_bins,
            ),
            (
                "trait_event_level",
                self.trait_event_level.len(),
                kk * d.events * d.levels,
            ),
        ];
        for (name, got, want) in sized {
            if got != want {
                out.push(format!("{name} has {got} cells, expected {want}"));
            }
        }
        if !out.is_empty() {
            return out;
        }
        for m in 0..self.num_traces {
            let s: u32 = (0..kk).map(|k| self.trace_trait(m, k)).sum();
            if s != self.trace_total[m] {
                out.push(format!(
                    "trace {m}: sum over traits {s} != total {}",
                    self.trace_total[m]
                ));
            }
        }
        for k in 0..kk {
            let s: u32 = (0..d.events).map(|e| self.trait_event(k, e)).sum();
            if s != self.trait_total[k] {
                out.push(format!(
                    "trait {k}: sum over events {s} != total {}",
                    self.trait_total[k]
                ));
            }
            for e in 0..d.events {
                let n = self.trait_event(k, e);
                let st: u32 = (0..d.time_bins).map(|t| self.trait_event_time(k, e, t)).sum();
                if st != n {
                    out.push(format!("trait {k} event {e}: time-bin sum {st} != {n}"));
                }
                let si: u32 = (0..d.levels).map(|i| self.trait_event_level(k, e, i)).sum();
                if si != n {
                    out.push(format!("trait {k} event {e}: level sum {si} != {n}"));
                }
            }
        }
        let by_trace = self.total_tokens();
        let by_trait: u64 = self.trait_total.iter().map(|&n| n as u64).sum();
        if by_trace != by_trait {
            out.push(format!("grand totals differ: traces {by_trace}, traits {by_trait}"));
        }
        out
    }
}
