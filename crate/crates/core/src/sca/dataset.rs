//! Graph samples: cluster centroids with SCA strains as targets.

use serde::{Deserialize, Serialize};

use super::domain::MicroDomain;
use super::kmeans::{cluster_domain, ClusterPartition};
use super::lippmann::{interaction_tensor, sca_solve, ScaMethod, ScaSolution};
use crate::error::{contract, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GraphSample {
    pub k: usize,
    pub strain: f64,
    /// Centroid coordinate per node.
    pub x: Vec<f64>,
    /// Cluster stiffness per node.
    pub stiffness: Vec<f64>,
    pub fractions: Vec<f64>,
    /// SCA cluster strains.
    pub target: Vec<f64>,
}

impl GraphSample {
    pub fn n_nodes(&self) -> usize {
        self.x.len()
    }

    /// Same sample with nodes reordered: node i of the result is node `perm[i]` of `self`.
    pub fn permuted(&self, perm: &[usize]) -> Self {
        let p = |v: &[f64]| perm.iter().map(|&i| v[i]).collect();
        Self {
            k: self.k,
            strain: self.strain,
            x: p(&self.x),
            stiffness: p(&self.stiffness),
            fractions: p(&self.fractions),
            target: p(&self.target),
        }
    }

    pub fn volume_mean(&self, v: &[f64]) -> f64 {
        self.fractions.iter().zip(v).map(|(c, x)| c * x).sum()
    }
}

/// Clustering, interaction tensor and SCA solve for one (k, ε̄).
pub fn sca_sample(
    domain: &MicroDomain,
    partition: &ClusterPartition,
    strain: f64,
) -> Result<(GraphSample, ScaSolution)> {
    let tensor = interaction_tensor(partition, domain.mean_stiffness())?;
    let sol = sca_solve(partition, &tensor, strain, ScaMethod::Direct)?;
    let sample = GraphSample {
        k: partition.k,
        strain,
        x: partition.centroid_x.clone(),
        stiffness: partition.stiffness.clone(),
        fractions: partition.fractions.clone(),
        target: sol.strains.clone(),
    };
    Ok((sample, sol))
}

/// Clustering seed used for k clusters.
pub fn cluster_seed(seed: u64, k: usize) -> u64 {
    seed.wrapping_mul(1_000_003).wrapping_add(k as u64)
}

/// One sample per (k, ε̄), ordered k-major; clusterings run on scoped threads per k.
pub fn build_dataset(
    domain: &MicroDomain,
    k_list: &[usize],
    strains: &[f64],
    seed: u64,
    max_iter: usize,
) -> Result<Vec<GraphSample>> {
    if k_list.is_empty() || strains.is_empty() {
        return Err(contract("cluster counts and strains must be non-empty"));
    }
    let per_k: Vec<Result<Vec<GraphSample>>> = std::thread::scope(|s| {
        let handles: Vec<_> = k_list
            .iter()
            .map(|&k| {
                s.spawn(move || -> Result<Vec<GraphSample>> {
                    let part = cluster_domain(domain, k, cluster_seed(seed, k), max_iter)?;
                    strains.iter().map(|&e| sca_sample(domain, &part, e).map(|(g, _)| g)).collect()
                })
            })
            .collect();
        handles.into_iter().map(|h| h.join().expect("dataset worker panicked")).collect()
    });
    let mut out = Vec::with_capacity(k_list.len() * strains.len());
    for r in per_k {
        out.extend(r?);
    }
    Ok(out)
}
