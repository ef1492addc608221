//! One-step Euler updates as a linear layer on (y^n, f^n[, f^{n+1}]).

use serde::{Deserialize, Serialize};

use super::linear::fit_linear;
use crate::error::{contract, Error, Result};
use crate::optim::{TrainConfig, TrainingHistory};

/// Gram-matrix condition number above which a dataset is reported as degenerate.
pub const DEGENERATE_CONDITION: f64 = 1e10;

/// Learnable generalised-alpha Euler step. Explicit nets (`alpha == 0`) hold
/// `[w_y, w_f]`; otherwise `[w_y, w_f, w_f_next]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EulerNet {
    pub alpha: f64,
    pub dt: f64,
    pub weights: Vec<f64>,
}

impl EulerNet {
    pub fn new(alpha: f64, dt: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&alpha) {
            return Err(contract("alpha must lie in [0, 1]"));
        }
        if !(dt > 0.0) {
            return Err(contract("time step must be positive"));
        }
        let n = if alpha == 0.0 { 2 } else { 3 };
        Ok(Self { alpha, dt, weights: vec![0.0; n] })
    }

    pub fn is_explicit(&self) -> bool {
        self.alpha == 0.0
    }

    /// Weights of the classical scheme with the same alpha and step.
    pub fn classical_weights(&self) -> Vec<f64> {
        if self.is_explicit() {
            vec![1.0, self.dt]
        } else {
            vec![1.0, self.dt * (1.0 - self.alpha), self.dt * self.alpha]
        }
    }
}

/// One observed step `y^n → y^{n+1}` with the right-hand side values.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EulerSample {
    pub y: f64,
    pub f: f64,
    pub f_next: Option<f64>,
    pub y_next: f64,
}

#[derive(Debug, Clone)]
pub struct EulerFit {
    pub net: EulerNet,
    pub history: TrainingHistory,
    /// Condition number of the scaled feature Gram matrix.
    pub gram_condition: f64,
    pub degenerate: bool,
}

/// Samples produced by explicit Euler on `dy/dt = f(y, t)`.
pub fn explicit_euler_trajectory(
    f: impl Fn(f64, f64) -> f64,
    y0: f64,
    t0: f64,
    dt: f64,
    n_steps: usize,
) -> Vec<EulerSample> {
    let mut out = Vec::with_capacity(n_steps);
    let mut y = y0;
    for n in 0..n_steps {
        let t = t0 + n as f64 * dt;
        let fy = f(y, t);
        let y_next = y + dt * fy;
        out.push(EulerSample { y, f: fy, f_next: Some(f(y_next, t + dt)), y_next });
        y = y_next;
    }
    out
}

fn features(net: &EulerNet, s: &EulerSample) -> Result<Vec<f64>> {
    if net.is_explicit() {
        Ok(vec![s.y, net.dt * s.f])
    } else {
        let fnext = s.f_next.ok_or_else(|| contract("implicit nets need f at the next step in every sample"))?;
        Ok(vec![s.y, net.dt * s.f, net.dt * fnext])
    }
}

/// Fits the step weights by Adam on the one-step mean squared error. The
/// right-hand side features are scaled by `dt`; training runs in whitened
/// coordinates, so the classical weights are reached to rounding accuracy.
pub fn train_euler(net: &EulerNet, samples: &[EulerSample], cfg: &TrainConfig, seed: u64) -> Result<EulerFit> {
    if samples.is_empty() {
        return Err(Error::Empty("Euler dataset".into()));
    }
    let rows: Vec<Vec<f64>> = samples.iter().map(|s| features(net, s)).collect::<Result<_>>()?;
    let targets: Vec<f64> = samples.iter().map(|s| s.y_next).collect();
    let fit = fit_linear(&rows, &targets, cfg, seed)?;
    let mut trained = net.clone();
    trained.weights = fit.theta.iter().enumerate().map(|(j, v)| if j == 0 { *v } else { v * net.dt }).collect();
    let degenerate = !(fit.gram_condition <= DEGENERATE_CONDITION);
    Ok(EulerFit { net: trained, history: fit.history, gram_condition: fit.gram_condition, degenerate })
}

/// Steps `y^{n+1} = w_y y^n + w_f f(y^n, t^n)` from `t_span.0` to `t_span.1`.
pub fn integrate(
    net: &EulerNet,
    f: impl Fn(f64, f64) -> f64,
    y0: f64,
    t_span: (f64, f64),
    dt: f64,
) -> Result<Vec<(f64, f64)>> {
    if !(dt > 0.0) {
        return Err(contract("time step must be positive"));
    }
    if !net.is_explicit() {
        return Err(Error::Unsupported("implicit nets are trained mappings only and cannot be stepped forward".into()));
    }
    if (dt - net.dt).abs() > 1e-12 * net.dt {
        return Err(contract(format!("step {dt} differs from the trained step {}", net.dt)));
    }
    let (t0, t1) = t_span;
    let n_steps = ((t1 - t0) / dt).round().max(0.0) as usize;
    let mut out = Vec::with_capacity(n_steps + 1);
    let mut y = y0;
    out.push((t0, y));
    for n in 0..n_steps {
        let t = t0 + n as f64 * dt;
        y = net.weights[0] * y + net.weights[1] * f(y, t);
        out.push((t0 + (n + 1) as f64 * dt, y));
    }
    Ok(out)
}
