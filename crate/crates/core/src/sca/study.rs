//! End-to-end study: oracle validation, dataset, training and extrapolation.

use serde::{Deserialize, Serialize};

use super::dataset::{build_dataset, cluster_seed, sca_sample};
use super::domain::MicroDomain;
use super::gkn::{sample_nmse, GknConfig, GraphKernelNet};
use super::kmeans::cluster_domain;
use super::lippmann::{analytic_cluster_strain, relative_l2};
use super::train::{gkn_train, split_dataset, GknTrainConfig, TrainReport};
use crate::error::Result;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScaStudyConfig {
    pub length: f64,
    pub n_points: usize,
    pub k_list: Vec<usize>,
    pub strains: Vec<f64>,
    pub kmeans_max_iter: usize,
    pub test_fraction: f64,
    pub oracle_k: usize,
    pub oracle_strain: f64,
    pub extrapolation_k: usize,
    pub extrapolation_strain: f64,
    pub network: GknConfig,
    pub train: GknTrainConfig,
}

impl Default for ScaStudyConfig {
    fn default() -> Self {
        Self {
            length: 10.0,
            n_points: 1000,
            k_list: vec![2, 3, 4, 6, 8, 12, 16, 24, 32, 48, 64, 96, 128],
            strains: (1..=10).map(|i| 0.05 * i as f64).collect(),
            kmeans_max_iter: 500,
            test_fraction: 0.2,
            oracle_k: 33,
            oracle_strain: 0.2,
            extrapolation_k: 300,
            extrapolation_strain: 0.2,
            network: GknConfig::default(),
            train: GknTrainConfig::default(),
        }
    }
}

/// Per-cluster comparison of SCA with the averaged exact strain.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OracleTable {
    pub k: usize,
    pub strain: f64,
    pub x: Vec<f64>,
    pub stiffness: Vec<f64>,
    pub fractions: Vec<f64>,
    pub sca: Vec<f64>,
    pub oracle: Vec<f64>,
    pub rel_l2: f64,
    /// |volume mean of SCA strains − ε̄|.
    pub mean_defect: f64,
    pub kmeans_reseeds: usize,
}

impl OracleTable {
    /// CSV with columns `cluster,x,stiffness,fraction,sca_strain,oracle_strain`.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("cluster,x,stiffness,fraction,sca_strain,oracle_strain\n");
        for i in 0..self.x.len() {
            s.push_str(&format!(
                "{i},{:e},{:e},{:e},{:e},{:e}\n",
                self.x[i], self.stiffness[i], self.fractions[i], self.sca[i], self.oracle[i]
            ));
        }
        s
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Extrapolation {
    pub k: usize,
    pub strain: f64,
    pub x: Vec<f64>,
    pub sca: Vec<f64>,
    pub gkn: Vec<f64>,
    pub nmse: f64,
    pub max_abs: f64,
    pub gkn_mean: f64,
    pub sca_oracle_rel_l2: f64,
}

impl Extrapolation {
    /// CSV with columns `x,sca_strain,gkn_strain`.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("x,sca_strain,gkn_strain\n");
        for i in 0..self.x.len() {
            s.push_str(&format!("{:e},{:e},{:e}\n", self.x[i], self.sca[i], self.gkn[i]));
        }
        s
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScaStudy {
    pub oracle_tables: Vec<OracleTable>,
    pub n_train: usize,
    pub n_test: usize,
    pub n_parameters: usize,
    pub training: TrainReport,
    /// Max over k of the linearity defect |ε(2ε̄₀) − 2 ε(ε̄₀)| / |2 ε(ε̄₀)|.
    pub linearity_defect: f64,
    pub extrapolation: Extrapolation,
}

impl ScaStudy {
    pub fn table(&self, k: usize) -> Option<&OracleTable> {
        self.oracle_tables.iter().find(|t| t.k == k)
    }
}

pub fn oracle_table(domain: &MicroDomain, k: usize, strain: f64, seed: u64, max_iter: usize) -> Result<OracleTable> {
    let part = cluster_domain(domain, k, cluster_seed(seed, k), max_iter)?;
    let (sample, _) = sca_sample(domain, &part, strain)?;
    let oracle = analytic_cluster_strain(domain, &part, strain);
    Ok(OracleTable {
        k,
        strain,
        rel_l2: relative_l2(&sample.target, &oracle),
        mean_defect: (sample.volume_mean(&sample.target) - strain).abs(),
        x: sample.x,
        stiffness: sample.stiffness,
        fractions: sample.fractions,
        sca: sample.target,
        oracle,
        kmeans_reseeds: part.kmeans.reseeds,
    })
}

/// SCA against the oracle at ε̄ = `oracle_strain` for every training,
/// oracle and extrapolation cluster count.
pub fn oracle_tables(cfg: &ScaStudyConfig, domain: &MicroDomain, seed: u64) -> Result<Vec<OracleTable>> {
    let mut ks = cfg.k_list.clone();
    ks.extend([cfg.oracle_k, cfg.extrapolation_k]);
    ks.sort_unstable();
    ks.dedup();
    ks.iter().map(|&k| oracle_table(domain, k, cfg.oracle_strain, seed, cfg.kmeans_max_iter)).collect()
}

/// Trained network with its dataset statistics.
#[derive(Debug, Clone)]
pub struct TrainedGkn {
    pub net: GraphKernelNet,
    pub n_train: usize,
    pub n_test: usize,
    pub report: TrainReport,
    pub linearity_defect: f64,
}

/// Builds the dataset, splits it and trains the network.
pub fn train_study_network(cfg: &ScaStudyConfig, domain: &MicroDomain, seed: u64) -> Result<TrainedGkn> {
    let data = build_dataset(domain, &cfg.k_list, &cfg.strains, seed, cfg.kmeans_max_iter)?;
    let mut linearity_defect = 0.0_f64;
    for k in &cfg.k_list {
        let base = data.iter().find(|s| s.k == *k && s.strain == cfg.strains[0]);
        let double = data.iter().find(|s| s.k == *k && (s.strain - 2.0 * cfg.strains[0]).abs() < 1e-12);
        if let (Some(a), Some(b)) = (base, double) {
            for (x, y) in a.target.iter().zip(&b.target) {
                linearity_defect = linearity_defect.max((y - 2.0 * x).abs() / (2.0 * x).abs());
            }
        }
    }
    let (train, test) = split_dataset(&data, cfg.test_fraction, seed)?;
    let mut net = GraphKernelNet::new(cfg.network.clone(), seed)?;
    let report = gkn_train(&mut net, &train, &test, &cfg.train)?;
    Ok(TrainedGkn { net, n_train: train.len(), n_test: test.len(), report, linearity_defect })
}

/// Network against SCA on the extrapolation sample.
pub fn extrapolate(
    cfg: &ScaStudyConfig,
    domain: &MicroDomain,
    net: &GraphKernelNet,
    seed: u64,
) -> Result<Extrapolation> {
    let part =
        cluster_domain(domain, cfg.extrapolation_k, cluster_seed(seed, cfg.extrapolation_k), cfg.kmeans_max_iter)?;
    let (sample, _) = sca_sample(domain, &part, cfg.extrapolation_strain)?;
    let gkn = net.forward(&sample)?;
    let oracle = analytic_cluster_strain(domain, &part, cfg.extrapolation_strain);
    Ok(Extrapolation {
        k: cfg.extrapolation_k,
        strain: cfg.extrapolation_strain,
        nmse: sample_nmse(&gkn, &sample.target),
        max_abs: gkn.iter().zip(&sample.target).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max),
        gkn_mean: sample.volume_mean(&gkn),
        sca_oracle_rel_l2: relative_l2(&sample.target, &oracle),
        x: sample.x.clone(),
        sca: sample.target.clone(),
        gkn,
    })
}

pub fn run_sca_study(cfg: &ScaStudyConfig, seed: u64) -> Result<ScaStudy> {
    let domain = MicroDomain::reference(cfg.length, cfg.n_points)?;
    let oracle_tables = oracle_tables(cfg, &domain, seed)?;
    let trained = train_study_network(cfg, &domain, seed)?;
    let extrapolation = extrapolate(cfg, &domain, &trained.net, seed)?;
    Ok(ScaStudy {
        oracle_tables,
        n_train: trained.n_train,
        n_test: trained.n_test,
        n_parameters: trained.net.n_parameters(),
        training: trained.report,
        linearity_defect: trained.linearity_defect,
        extrapolation,
    })
}
