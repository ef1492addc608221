//! Full-batch Adam training of the graph kernel network.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::dataset::GraphSample;
use super::gkn::GraphKernelNet;
use crate::error::{contract, Result};
use crate::optim::{adam_step, geometric_lr, AdamState};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GknTrainConfig {
    pub epochs: usize,
    pub lr: f64,
    /// Learning rate at the last epoch (geometric decay).
    pub lr_final: f64,
    /// A loss above this multiple of the initial loss counts as divergence.
    pub divergence_factor: f64,
}

impl Default for GknTrainConfig {
    fn default() -> Self {
        Self { epochs: 400, lr: 1e-2, lr_final: 1e-3, divergence_factor: 100.0 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_nmse: f64,
    /// NaN when no test set was given.
    pub test_nmse: f64,
    pub lr: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub history: Vec<EpochRecord>,
    pub lr_halved: bool,
    /// Training stopped after a second divergence.
    pub aborted: bool,
}

impl TrainReport {
    pub fn initial_train(&self) -> f64 {
        self.history.first().map_or(f64::NAN, |r| r.train_nmse)
    }

    pub fn final_train(&self) -> f64 {
        self.history.last().map_or(f64::NAN, |r| r.train_nmse)
    }

    pub fn final_test(&self) -> f64 {
        self.history.last().map_or(f64::NAN, |r| r.test_nmse)
    }

    /// CSV with columns `epoch,train_nmse,test_nmse,lr`.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("epoch,train_nmse,test_nmse,lr\n");
        for r in &self.history {
            s.push_str(&format!("{},{:e},{:e},{:e}\n", r.epoch, r.train_nmse, r.test_nmse, r.lr));
        }
        s
    }
}

/// Seeded shuffle split; returns (train, test) with round(fraction·n) test samples.
pub fn split_dataset(
    samples: &[GraphSample],
    test_fraction: f64,
    seed: u64,
) -> Result<(Vec<GraphSample>, Vec<GraphSample>)> {
    if !(0.0..1.0).contains(&test_fraction) {
        return Err(contract("test fraction must lie in [0, 1)"));
    }
    let mut idx: Vec<usize> = (0..samples.len()).collect();
    idx.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let n_test = (test_fraction * samples.len() as f64).round() as usize;
    let (test, train) = idx.split_at(n_test);
    let mut train = train.to_vec();
    let mut test = test.to_vec();
    train.sort_unstable();
    test.sort_unstable();
    Ok((train.iter().map(|&i| samples[i].clone()).collect(), test.iter().map(|&i| samples[i].clone()).collect()))
}

/// Minimizes the mean training NMSE. A divergent step restores the previous
/// parameters and halves the learning rate once; a second divergence stops training.
pub fn gkn_train(
    net: &mut GraphKernelNet,
    train: &[GraphSample],
    test: &[GraphSample],
    cfg: &GknTrainConfig,
) -> Result<TrainReport> {
    if cfg.epochs == 0 || train.is_empty() {
        return Err(contract("training needs samples and a positive epoch budget"));
    }
    let train_set = net.prepare(train)?;
    let test_set = if test.is_empty() { None } else { Some(net.prepare(test)?) };
    let mut state = AdamState::new(cfg.lr);
    let mut report = TrainReport { history: Vec::new(), lr_halved: false, aborted: false };
    let mut lr_scale = 1.0;
    let mut last_good = net.params.clone();
    let mut initial = f64::NAN;
    let mut epoch = 0;
    while epoch < cfg.epochs {
        let loss = net.nmse(&train_set, true)?;
        if epoch == 0 {
            initial = loss;
        }
        if !loss.is_finite() || loss > cfg.divergence_factor * initial {
            if report.lr_halved {
                report.aborted = true;
                net.params = last_good;
                break;
            }
            report.lr_halved = true;
            lr_scale = 0.5;
            net.params = last_good.clone();
            state = AdamState::new(cfg.lr * lr_scale);
            continue;
        }
        let test_nmse = match &test_set {
            Some(t) => net.nmse(t, false)?,
            None => f64::NAN,
        };
        state.lr = lr_scale * geometric_lr(cfg.lr, cfg.lr_final, epoch, cfg.epochs);
        report.history.push(EpochRecord { epoch, train_nmse: loss, test_nmse, lr: state.lr });
        last_good = net.params.clone();
        adam_step(&mut net.params, &mut state)?;
        epoch += 1;
    }
    Ok(report)
}
