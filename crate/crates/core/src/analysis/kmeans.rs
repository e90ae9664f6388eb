//! Lloyd's k-means with k-means++ seeding and restarts.

use std::cmp::Ordering;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::{chain_rng, sample_categorical};
use crate::scalar::Real;

pub const DEFAULT_RESTARTS: usize = 10;
pub const DEFAULT_MAX_ITERS: usize = 300;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound = "F: Real")]
pub struct KMeansResult<F> {
    /// Cluster of each point. Cluster 0 is the largest; equal sizes are
    /// ordered by their centroids lexicographically.
    pub labels: Vec<usize>,
    pub centroids: Vec<Vec<F>>,
    pub sizes: Vec<usize>,
    /// Within-cluster sum of squared distances.
    pub wcss: F,
    pub iterations: usize,
    /// WCSS after each assignment step of the winning restart.
    pub wcss_history: Vec<F>,
}

fn sq_dist<F: Real>(a: &[F], b: &[F]) -> F {
    a.iter().zip(b).map(|(&x, &y)| (x - y) * (x - y)).sum()
}

fn nearest<F: Real>(p: &[F], centroids: &[Vec<F>]) -> (usize, F) {
    let mut best = (0, F::infinity());
    for (c, centroid) in centroids.iter().enumerate() {
        let d = sq_dist(p, centroid);
        if d < best.1 {
            best = (c, d);
        }
    }
    best
}

/// [`kmeans_restarts`] with the default ten restarts.
pub fn kmeans<F: Real>(points: &[Vec<F>], k: usize, seed: u64, max_iters: usize) -> Result<KMeansResult<F>> {
    kmeans_restarts(points, k, seed, max_iters, DEFAULT_RESTARTS)
}

/// Runs `restarts` seeded k-means++/Lloyd fits and keeps the lowest WCSS
/// (earliest restart on ties).
pub fn kmeans_restarts<F: Real>(
    points: &[Vec<F>],
    k: usize,
    seed: u64,
    max_iters: usize,
    restarts: usize,
) -> Result<KMeansResult<F>> {
    if k == 0 {
        return Err(Error::Input("k must be at least 1".into()));
    }
    if points.len() < k {
        return Err(Error::Input(format!(
            "{} points cannot form {k} clusters",
            points.len()
        )));
    }
    let dim = points[0].len();
    if points
        .iter()
        .any(|p| p.len() != dim || p.iter().any(|x| !x.is_finite()))
    {
        return Err(Error::Input("points must be finite and equally sized".into()));
    }
    let mut rng = chain_rng(seed);
    let mut best: Option<KMeansResult<F>> = None;
    for _ in 0..restarts.max(1) {
        let init = plus_plus_init(points, k, &mut rng);
        let run = lloyd(points, init, max_iters);
        if best.as_ref().is_none_or(|b| run.wcss < b.wcss) {
            best = Some(run);
        }
    }
    Ok(canonicalize(best.expect("at least one restart")))
}

fn plus_plus_init<F: Real, R: Rng>(points: &[Vec<F>], k: usize, rng: &mut R) -> Vec<Vec<F>> {
    let mut centroids = vec![points[rng.random_range(0..points.len())].clone()];
    let mut d2: Vec<F> = points.iter().map(|p| sq_dist(p, &centroids[0])).collect();
    while centroids.len() < k {
        let next = match sample_categorical(&d2, rng) {
            Some(i) => i,
            // all remaining points coincide with a centroid
            None => rng.random_range(0..points.len()),
        };
        centroids.push(points[next].clone());
        for (d, p) in d2.iter_mut().zip(points) {
            *d = d.min(sq_dist(p, &centroids[centroids.len() - 1]));
        }
    }
    centroids
}

fn lloyd<F: Real>(points: &[Vec<F>], mut centroids: Vec<Vec<F>>, max_iters: usize) -> KMeansResult<F> {
    let k = centroids.len();
    let dim = points[0].len();
    let mut labels = vec![usize::MAX; points.len()];
    let mut history = Vec::new();
    let mut iterations = 0;
    loop {
        let mut changed = false;
        let mut wcss = F::zero();
        let mut dists = vec![F::zero(); points.len()];
        for (j, p) in points.iter().enumerate() {
            let (c, d) = nearest(p, &centroids);
            if labels[j] != c {
                labels[j] = c;
                changed = true;
            }
            dists[j] = d;
            wcss = wcss + d;
        }
        history.push(wcss);
        if !changed || iterations >= max_iters {
            break;
        }
        iterations += 1;

        let mut sums = vec![vec![F::zero(); dim]; k];
        let mut sizes = vec![0usize; k];
        for (p, &c) in points.iter().zip(&labels) {
            sizes[c] += 1;
            for (s, &x) in sums[c].iter_mut().zip(p) {
                *s = *s + x;
            }
        }
        for c in 0..k {
            if sizes[c] > 0 {
                let n = F::from_len(sizes[c]);
                centroids[c] = sums[c].iter().map(|&s| s / n).collect();
            } else {
                // move an empty centroid onto the worst-served point
                let far = (0..points.len())
                    .max_by(|&a, &b| dists[a].partial_cmp(&dists[b]).unwrap_or(Ordering::Equal))
                    .expect("nonempty");
                centroids[c] = points[far].clone();
                dists[far] = F::zero();
            }
        }
    }
    let mut sizes = vec![0usize; k];
    for &c in &labels {
        sizes[c] += 1;
    }
    KMeansResult {
        wcss: *history.last().expect("one assignment step"),
        labels,
        centroids,
        sizes,
        iterations,
        wcss_history: history,
    }
}

fn lex_cmp<F: Real>(a: &[F], b: &[F]) -> Ordering {
    for (x, y) in a.iter().zip(b) {
        match x.partial_cmp(y) {
            Some(Ordering::Equal) | None => continue,
            Some(o) => return o,
        }
    }
    Ordering::Equal
}

fn canonicalize<F: Real>(r: KMeansResult<F>) -> KMeansResult<F> {
    let k = r.centroids.len();
    let mut order: Vec<usize> = (0..k).collect();
    order.sort_by(|&a, &b| {
        r.sizes[b]
            .cmp(&r.sizes[a])
            .then_with(|| lex_cmp(&r.centroids[a], &r.centroids[b]))
            .then(a.cmp(&b))
    });
    let mut rename = vec![0; k];
    for (new, &old) in order.iter().enumerate() {
        rename[old] = new;
    }
    KMeansResult {
        labels: r.labels.iter().map(|&c| rename[c]).collect(),
        centroids: order.iter().map(|&c| r.centroids[c].clone()).collect(),
        sizes: order.iter().map(|&c| r.sizes[c]).collect(),
        ..r
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_cluster_is_the_mean() {
        let pts = vec![vec![0.0, 1.0], vec![2.0, 3.0], vec![4.0, -1.0]];
        let r = kmeans(&pts, 1, 0, 100).unwrap();
        assert_eq!(r.labels, vec![0, 0, 0]);
        assert!((r.centroids[0][0] - 2.0_f64).abs() < 1e-15);
        assert!((r.centroids[0][1] - 1.0_f64).abs() < 1e-15);
    }

    #[test]
    fn one_cluster_per_point() {
        let pts = vec![vec![0.0], vec![5.0], vec![1.0], vec![9.0]];
        let r = kmeans(&pts, 4, 7, 100).unwrap();
        assert_eq!(r.wcss, 0.0);
        let mut labels = r.labels.clone();
        labels.sort();
        assert_eq!(labels, vec![0, 1, 2, 3]);
        // equal sizes: ordered by centroid
        assert_eq!(r.labels, vec![0, 2, 1, 3]);
    }

    #[test]
    fn too_few_points() {
        assert!(kmeans(&[vec![1.0]], 2, 0, 10).is_err());
    }

    #[test]
    fn larger_cluster_comes_first() {
        let pts = vec![vec![10.0], vec![0.0], vec![0.1], vec![0.2]];
        let r = kmeans(&pts, 2, 1, 100).unwrap();
        assert_eq!(r.labels, vec![1, 0, 0, 0]);
        assert_eq!(r.sizes, vec![3, 1]);
    }
}
