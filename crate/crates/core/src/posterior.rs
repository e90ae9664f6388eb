use serde::{Deserialize, Serialize};

use crate::corpus::Hyperparams;
use crate::counts::Counts;
use crate::error::{Error, Result};
use crate::scalar::Real;

/// Point estimates of the model's categorical parameters.
///
/// `theta` is M×K, `phi` K×E, `psi` K×E×T and `tau` K×E×I; every innermost
/// vector is a probability distribution.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound = "F: Real")]
pub struct Posterior<F> {
    pub num_traits: usize,
    pub theta: Vec<Vec<F>>,
    pub phi: Vec<Vec<F>>,
    pub psi: Vec<Vec<Vec<F>>>,
    pub tau: Vec<Vec<Vec<F>>>,
}

/// Dirichlet posterior means of the count tables.
///
/// `theta[m][k] = (N_mk + α) / (N_m + Kα)` and likewise for `phi` (over
/// events, normalized by `N_k`), `psi` and `tau` (normalized by `N_ke`).
pub fn estimate_posterior<F: Real>(counts: &Counts, hyper: &Hyperparams<F>) -> Result<Posterior<F>> {
    let problems = counts.consistency_violations();
    if !problems.is_empty() {
        return Err(Error::State(problems.join("; ")));
    }
    let kk = counts.num_traits;
    let d = counts.dims;
    let c = F::from_count;

    let k_alpha = F::from_len(kk) * hyper.alpha;
    let theta = (0..counts.num_traces)
        .map(|m| {
            let denom = c(counts.trace_total[m]) + k_alpha;
            (0..kk)
                .map(|k| (c(counts.trace_trait(m, k)) + hyper.alpha) / denom)
                .collect()
        })
        .collect();

    let e_beta = F::from_len(d.events) * hyper.beta;
    let phi = (0..kk)
        .map(|k| {
            let denom = c(counts.trait_total[k]) + e_beta;
            (0..d.events)
                .map(|e| (c(counts.trait_event(k, e)) + hyper.beta) / denom)
                .collect()
        })
        .collect();

    let t_gamma = F::from_len(d.time_bins) * hyper.gamma;
    let psi = (0..kk)
        .map(|k| {
            (0..d.events)
                .map(|e| {
                    let denom = c(counts.trait_event(k, e)) + t_gamma;
                    (0..d.time_bins)
                        .map(|t| (c(counts.trait_event_time(k, e, t)) + hyper.gamma) / denom)
                        .collect()
                })
                .collect()
        })
        .collect();

    let i_delta = F::from_len(d.levels) * hyper.delta;
    let tau = (0..kk)
        .map(|k| {
            (0..d.events)
                .map(|e| {
                    let denom = c(counts.trait_event(k, e)) + i_delta;
                    (0..d.levels)
                        .map(|i| (c(counts.trait_event_level(k, e, i)) + hyper.delta) / denom)
                        .collect()
                })
                .collect()
        })
        .collect();

    Ok(Posterior {
        num_traits: kk,
        theta,
        phi,
        psi,
        tau,
    })
}

impl<F: Real> Posterior<F> {
    /// Every distribution in the estimate, in a fixed order.
    pub fn rows(&self) -> impl Iterator<Item = &[F]> {
        self.theta
            .iter()
            .chain(self.phi.iter())
            .chain(self.psi.iter().flatten())
            .chain(self.tau.iter().flatten())
            .map(|r| r.as_slice())
    }

    /// Largest `|Σ row - 1|` over all rows, or infinity if any entry is
    /// outside `[0, 1]`.
    pub fn max_normalization_error(&self) -> F {
        let mut worst = F::zero();
        for row in self.rows() {
            if row.iter().any(|&p| !(p >= F::zero() && p <= F::one())) {
                return F::infinity();
            }
            let s: F = row.iter().copied().sum();
            worst = worst.max((s - F::one()).abs());
        }
        worst
    }
}

/// Running element-wise mean of posterior snapshots.
#[derive(Clone, Debug)]
pub struct PosteriorMean<F> {
    sum: Option<Posterior<F>>,
    count: usize,
}

impl<F: Real> Default for PosteriorMean<F> {
    fn default() -> Self {
        PosteriorMean { sum: None, count: 0 }
    }
}

impl<F: Real> PosteriorMean<F> {
    pub fn push(&mut self, snap: Posterior<F>) {
        self.count += 1;
        match &mut self.sum {
            None => self.sum = Some(snap),
            Some(acc) => {
                add_rows(&mut acc.theta, &snap.theta);
                add_rows(&mut acc.phi, &snap.phi);
                for (a, b) in acc.psi.iter_mut().zip(&snap.psi) {
                    add_rows(a, b);
                }
                for (a, b) in acc.tau.iter_mut().zip(&snap.tau) {
                    add_rows(a, b);
                }
            }
        }
    }

    pub fn count(&self) -> usize {
        self.count
    }

    pub fn finish(self) -> Option<Posterior<F>> {
        let n = F::from_len(self.count);
        let mut p = self.sum?;
        if self.count > 1 {
            let scale = |rows: &mut Vec<Vec<F>>| {
                for row in rows.iter_mut() {
                    for x in row.iter_mut() {
                        *x = *x / n;
                    }
                }
            };
            scale(&mut p.theta);
            scale(&mut p.phi);
            p.psi.iter_mut().for_each(scale);
            p.tau.iter_mut().for_each(scale);
        }
        Some(p)
    }
}

fn add_rows<F: Real>(acc: &mut [Vec<F>], other: &[Vec<F>]) {
    for (a, b) in acc.iter_mut().zip(other) {
        for (x, y) in a.iter_mut().zip(b) {
            *x = *x + *y;
        }
    }
}
