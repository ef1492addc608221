//! Least-squares fit of a linear layer by Adam in whitened coordinates.

use nalgebra::{DMatrix, DVector};

use crate::error::Result;
use crate::linalg::condition_number;
use crate::optim::{mse_loss, run_adam, ParamStore, TrainConfig, TrainingHistory};

pub(crate) struct LinearFit {
    pub theta: Vec<f64>,
    /// Recorded parameters are mapped back to `theta`.
    pub history: TrainingHistory,
    /// Condition number of the feature Gram matrix `XᵀX / n`.
    pub gram_condition: f64,
}

/// Minimises the mean of `(rows[i] · theta − targets[i])²`.
///
/// With `G = XᵀX / n = L Lᵀ` the trainable vector is `phi = Lᵀ theta`, whose
/// features `L⁻¹ x` have an identity Gram matrix. The loss is then isotropic
/// and Adam reaches the optimum to rounding accuracy however strongly the raw
/// features are correlated. When `G` has no Cholesky factor (rank deficient
/// data) the raw features are used.
pub(crate) fn fit_linear(rows: &[Vec<f64>], targets: &[f64], cfg: &TrainConfig, seed: u64) -> Result<LinearFit> {
    let k = rows[0].len();
    let n = rows.len() as f64;
    let gram = DMatrix::from_fn(k, k, |a, b| rows.iter().map(|r| r[a] * r[b]).sum::<f64>() / n);
    let gram_condition = condition_number(&gram);
    let factor = gram.cholesky().map(|c| c.l());
    let to_theta = |phi: &[f64]| -> Vec<f64> {
        let v = DVector::from_column_slice(phi);
        factor
            .as_ref()
            .and_then(|l| l.transpose().solve_upper_triangular(&v))
            .map_or_else(|| phi.to_vec(), |t| t.as_slice().to_vec())
    };
    let features: Vec<Vec<f64>> = rows
        .iter()
        .map(|r| {
            let v = DVector::from_column_slice(r);
            factor
                .as_ref()
                .and_then(|l| l.solve_lower_triangular(&v))
                .map_or_else(|| r.clone(), |z| z.as_slice().to_vec())
        })
        .collect();

    let mut params = ParamStore::new(seed);
    let phi = params.add_random("theta", k)?;
    let mut history = run_adam(&mut params, cfg, |p| {
        let th = p.value(phi).to_vec();
        let mut grad = vec![0.0; k];
        let mut preds = Vec::with_capacity(features.len());
        for (row, t) in features.iter().zip(targets) {
            let pred: f64 = row.iter().zip(&th).map(|(x, w)| x * w).sum();
            for (g, x) in grad.iter_mut().zip(row) {
                *g += 2.0 * (pred - t) * x / n;
            }
            preds.push(pred);
        }
        p.set_grad(phi, &grad)?;
        mse_loss(&preds, targets)
    })?;
    for snapshot in history.params.iter_mut().filter(|s| !s.is_empty()) {
        *snapshot = to_theta(snapshot);
    }
    Ok(LinearFit { theta: to_theta(params.value(phi)), history, gram_condition })
}
