//! 1-D k-means on the strain concentration feature.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::domain::{elastic_precompute, MicroDomain};
use crate::error::{contract, Result};

/// Lloyd result with clusters numbered by increasing center.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KMeans {
    pub labels: Vec<usize>,
    pub centers: Vec<f64>,
    /// Within-cluster sum of squares after every assignment step.
    pub objective: Vec<f64>,
    pub iterations: usize,
    /// Number of times an empty cluster was moved to the farthest point.
    pub reseeds: usize,
}

impl KMeans {
    pub fn final_objective(&self) -> f64 {
        self.objective.last().copied().unwrap_or(f64::NAN)
    }
}

fn sq(a: f64) -> f64 {
    a * a
}

fn nearest(centers: &[f64], v: f64) -> usize {
    let mut best = 0;
    for (j, c) in centers.iter().enumerate() {
        if sq(v - c) < sq(v - centers[best]) {
            best = j;
        }
    }
    best
}

fn plus_plus_init(features: &[f64], k: usize, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let mut centers = vec![features[rng.random_range(0..features.len())]];
    let mut d2: Vec<f64> = features.iter().map(|v| sq(v - centers[0])).collect();
    while centers.len() < k {
        let total: f64 = d2.iter().sum();
        let pick = if total > 0.0 {
            let mut r = rng.random_range(0.0..total);
            let mut idx = d2.len() - 1;
            for (i, d) in d2.iter().enumerate() {
                if r < *d {
                    idx = i;
                    break;
                }
                r -= d;
            }
            idx
        } else {
            rng.random_range(0..features.len())
        };
        let c = features[pick];
        centers.push(c);
        for (d, v) in d2.iter_mut().zip(features) {
            *d = d.min(sq(v - c));
        }
    }
    centers
}

/// Lloyd iterations from a seeded k-means++ start, until the assignment is stable or `max_iter`.
pub fn kmeans_cluster(features: &[f64], k: usize, seed: u64, max_iter: usize) -> Result<KMeans> {
    if k == 0 {
        return Err(contract("k must be positive"));
    }
    let mut distinct = features.to_vec();
    distinct.sort_by(f64::total_cmp);
    distinct.dedup();
    if k > distinct.len() {
        return Err(contract(format!("k = {k} exceeds the {} distinct feature values", distinct.len())));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut centers = plus_plus_init(features, k, &mut rng);
    let mut labels = vec![usize::MAX; features.len()];
    let mut objective = Vec::new();
    let mut reseeds = 0;
    let mut iterations = 0;
    while iterations < max_iter.max(1) {
        iterations += 1;
        let mut changed = false;
        for (l, v) in labels.iter_mut().zip(features) {
            let j = nearest(&centers, *v);
            changed |= *l != j;
            *l = j;
        }
        // Empty clusters take the point farthest from its own center.
        loop {
            let mut counts = vec![0usize; k];
            for &l in &labels {
                counts[l] += 1;
            }
            let Some(empty) = counts.iter().position(|&c| c == 0) else { break };
            let far = (0..features.len())
                .filter(|&i| counts[labels[i]] > 1)
                .max_by(|&a, &b| sq(features[a] - centers[labels[a]]).total_cmp(&sq(features[b] - centers[labels[b]])))
                .ok_or_else(|| contract("cannot re-seed an empty cluster"))?;
            centers[empty] = features[far];
            labels[far] = empty;
            reseeds += 1;
            changed = true;
        }
        objective.push(labels.iter().zip(features).map(|(&l, v)| sq(v - centers[l])).sum());
        let mut sums = vec![0.0; k];
        let mut counts = vec![0usize; k];
        for (&l, v) in labels.iter().zip(features) {
            sums[l] += v;
            counts[l] += 1;
        }
        for j in 0..k {
            centers[j] = sums[j] / counts[j] as f64;
        }
        if !changed {
            break;
        }
    }
    let final_obj: f64 = labels.iter().zip(features).map(|(&l, v)| sq(v - centers[l])).sum();
    objective.push(final_obj);

    let mut order: Vec<usize> = (0..k).collect();
    order.sort_by(|&a, &b| centers[a].total_cmp(&centers[b]));
    let mut rank = vec![0; k];
    for (r, &j) in order.iter().enumerate() {
        rank[j] = r;
    }
    Ok(KMeans {
        labels: labels.iter().map(|&l| rank[l]).collect(),
        centers: order.iter().map(|&j| centers[j]).collect(),
        objective,
        iterations,
        reseeds,
    })
}

/// Best of `n_init` seeded runs by final objective (ties keep the earliest run).
pub fn kmeans_restarts(features: &[f64], k: usize, seed: u64, max_iter: usize, n_init: usize) -> Result<KMeans> {
    let mut best = kmeans_cluster(features, k, seed, max_iter)?;
    for r in 1..n_init as u64 {
        let run = kmeans_cluster(features, k, seed.wrapping_add(r.wrapping_mul(0x9E37_79B9)), max_iter)?;
        if run.final_objective() < best.final_objective() {
            best = run;
        }
    }
    Ok(best)
}

/// Clusters of a domain, numbered by increasing mean coordinate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterPartition {
    pub k: usize,
    pub labels: Vec<usize>,
    /// Mean coordinate per cluster.
    pub centroid_x: Vec<f64>,
    /// Mean stiffness C^I per cluster.
    pub stiffness: Vec<f64>,
    /// Volume fraction c^I.
    pub fractions: Vec<f64>,
    pub concentration: Vec<f64>,
    pub kmeans: KMeans,
}

impl ClusterPartition {
    /// Groups grid points by label; every label in [0, k) must occur.
    pub fn from_labels(
        domain: &MicroDomain,
        labels: Vec<usize>,
        concentration: Vec<f64>,
        kmeans: KMeans,
    ) -> Result<Self> {
        if labels.len() != domain.n_points() {
            return Err(contract("one label per grid point is required"));
        }
        let k = labels.iter().max().map_or(0, |m| m + 1);
        let mut sx = vec![0.0; k];
        let mut sc = vec![0.0; k];
        let mut n = vec![0usize; k];
        for (i, &l) in labels.iter().enumerate() {
            sx[l] += domain.coords[i];
            sc[l] += domain.stiffness[i];
            n[l] += 1;
        }
        if let Some(empty) = n.iter().position(|&c| c == 0) {
            return Err(contract(format!("cluster {empty} is empty")));
        }
        let mut order: Vec<usize> = (0..k).collect();
        order.sort_by(|&a, &b| (sx[a] / n[a] as f64).total_cmp(&(sx[b] / n[b] as f64)));
        let mut rank = vec![0; k];
        for (r, &j) in order.iter().enumerate() {
            rank[j] = r;
        }
        let total = domain.n_points() as f64;
        Ok(Self {
            k,
            labels: labels.iter().map(|&l| rank[l]).collect(),
            centroid_x: order.iter().map(|&j| sx[j] / n[j] as f64).collect(),
            stiffness: order.iter().map(|&j| sc[j] / n[j] as f64).collect(),
            fractions: order.iter().map(|&j| n[j] as f64 / total).collect(),
            concentration,
            kmeans,
        })
    }

    pub fn counts(&self) -> Vec<usize> {
        let mut n = vec![0; self.k];
        for &l in &self.labels {
            n[l] += 1;
        }
        n
    }

    /// Volume-weighted mean of a per-cluster field.
    pub fn volume_mean(&self, v: &[f64]) -> f64 {
        self.fractions.iter().zip(v).map(|(c, x)| c * x).sum()
    }

    /// Per-cluster average of a pointwise field.
    pub fn cluster_average(&self, field: &[f64]) -> Vec<f64> {
        let mut s = vec![0.0; self.k];
        for (&l, v) in self.labels.iter().zip(field) {
            s[l] += v;
        }
        s.iter().zip(self.counts()).map(|(s, n)| s / n as f64).collect()
    }
}

/// Seeded restarts used by [`cluster_domain`].
pub const KMEANS_RESTARTS: usize = 30;

/// Elastic precompute followed by k-means on the concentration feature.
pub fn cluster_domain(domain: &MicroDomain, k: usize, seed: u64, max_iter: usize) -> Result<ClusterPartition> {
    let a = elastic_precompute(domain);
    let km = kmeans_restarts(&a, k, seed, max_iter, KMEANS_RESTARTS)?;
    ClusterPartition::from_labels(domain, km.labels.clone(), a, km)
}
