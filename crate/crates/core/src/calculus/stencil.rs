//! First-derivative stencils as a single linear layer.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::linear::fit_linear;
use super::SampledFunction;
use crate::error::{contract, Error, Result};
use crate::optim::{TrainConfig, TrainingHistory};

/// Linear layer mapping the samples at `i + offsets[j]` to `f'(x_i)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StencilNet {
    pub offsets: Vec<i64>,
    pub weights: Vec<f64>,
    pub spacing: f64,
}

impl StencilNet {
    pub fn new(offsets: Vec<i64>, spacing: f64) -> Result<Self> {
        if offsets.len() < 2 {
            return Err(contract("a stencil needs at least two points"));
        }
        if !(spacing > 0.0) {
            return Err(contract("spacing must be positive"));
        }
        let weights = vec![0.0; offsets.len()];
        Ok(Self { offsets, weights, spacing })
    }

    pub fn n_points(&self) -> usize {
        self.offsets.len()
    }

    fn min_offset(&self) -> i64 {
        *self.offsets.iter().min().unwrap()
    }

    fn max_offset(&self) -> i64 {
        *self.offsets.iter().max().unwrap()
    }

    /// Evaluation indices whose full stencil lies inside `n` samples.
    pub fn valid_indices(&self, n: usize) -> std::ops::Range<usize> {
        let lo = (-self.min_offset()).max(0) as usize;
        let hi = (n as i64 - self.max_offset().max(0)).max(0) as usize;
        lo..hi.max(lo)
    }

    fn eval_at(&self, ys: &[f64], i: usize) -> f64 {
        self.offsets.iter().zip(&self.weights).map(|(&o, w)| w * ys[(i as i64 + o) as usize]).sum()
    }
}

/// Stencil predictions at the valid indices; `omitted` lists the rest.
#[derive(Debug, Clone, PartialEq)]
pub struct StencilOutput {
    pub indices: Vec<usize>,
    pub values: Vec<f64>,
    pub omitted: Vec<usize>,
}

#[derive(Debug, Clone)]
pub struct StencilFit {
    pub net: StencilNet,
    pub history: TrainingHistory,
}

fn check_spacing(net: &StencilNet, f: &SampledFunction) -> Result<()> {
    match f.spacing() {
        None => Err(Error::Unsupported("stencils require uniformly spaced samples".into())),
        Some(h) if (h - net.spacing).abs() > 1e-12 * net.spacing => {
            Err(contract(format!("sample spacing {h} differs from stencil spacing {}", net.spacing)))
        }
        Some(_) => Ok(()),
    }
}

pub fn apply_stencil(net: &StencilNet, f: &SampledFunction) -> Result<StencilOutput> {
    check_spacing(net, f)?;
    let valid = net.valid_indices(f.len());
    let indices: Vec<usize> = valid.clone().collect();
    let values = indices.iter().map(|&i| net.eval_at(f.ys(), i)).collect();
    let omitted = (0..f.len()).filter(|i| !valid.contains(i)).collect();
    Ok(StencilOutput { indices, values, omitted })
}

/// Fits the stencil weights by Adam on the mean squared derivative error.
///
/// Each dataset entry pairs samples with the exact derivative at every sample
/// coordinate; only indices where the whole stencil fits are used. Weights are
/// trained in units of `1/spacing`, in the whitened coordinates of the sample features.
pub fn train_stencil(
    net: &StencilNet,
    dataset: &[(SampledFunction, Vec<f64>)],
    cfg: &TrainConfig,
    seed: u64,
) -> Result<StencilFit> {
    if dataset.is_empty() {
        return Err(Error::Empty("stencil dataset".into()));
    }
    let mut rows: Vec<Vec<f64>> = Vec::new();
    let mut targets: Vec<f64> = Vec::new();
    for (f, df) in dataset {
        check_spacing(net, f)?;
        if df.len() != f.len() {
            return Err(contract("derivative vector must match the sample count"));
        }
        let valid = net.valid_indices(f.len());
        if valid.is_empty() {
            return Err(Error::Index(format!("offsets {:?} leave no valid index in {} samples", net.offsets, f.len())));
        }
        for i in valid {
            rows.push(net.offsets.iter().map(|&o| f.ys()[(i as i64 + o) as usize]).collect());
            targets.push(df[i]);
        }
    }
    let h = net.spacing;
    let rows: Vec<Vec<f64>> = rows.into_iter().map(|r| r.into_iter().map(|f| f / h).collect()).collect();
    let fit = fit_linear(&rows, &targets, cfg, seed)?;
    let mut trained = net.clone();
    trained.weights = fit.theta.iter().map(|t| t / h).collect();
    let history = fit.history;
    Ok(StencilFit { net: trained, history })
}

/// Weights of the unique first-derivative stencil on `offsets`, from the
/// moment conditions Σ_j w_j (o_j h)^m = δ_{m1} for m < n.
pub fn classical_stencil_oracle(offsets: &[i64], spacing: f64) -> Result<Vec<f64>> {
    let n = offsets.len();
    if n < 2 {
        return Err(contract("a stencil needs at least two points"));
    }
    if !(spacing > 0.0) {
        return Err(contract("spacing must be positive"));
    }
    for (i, a) in offsets.iter().enumerate() {
        if offsets[i + 1..].contains(a) {
            return Err(Error::Singular(format!("duplicate offset {a}")));
        }
    }
    // Solve in units of the offsets, then rescale by 1/h.
    let v = DMatrix::from_fn(n, n, |m, j| (offsets[j] as f64).powi(m as i32));
    let mut rhs = DVector::zeros(n);
    rhs[1] = 1.0;
    let w = crate::linalg::solve_dense(&v, &rhs)?;
    Ok(w.iter().map(|x| x / spacing).collect())
}
