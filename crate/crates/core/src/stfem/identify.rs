//! Recovering physical coefficients from response data through the
//! autoregressive stepper, with Adam on log-coefficients and an L1 loss.

use nalgebra::DVector;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::forcing::Forcing;
use super::smd::{assemble_smd, SmdProblem};
use super::system::SpaceTimeSystem;
use crate::error::{contract, Error, Result};
use crate::optim::{run_adam, ParamStore, TrainConfig, TrainingHistory};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoiseMeta {
    pub mean: f64,
    pub variance: f64,
    pub seed: u64,
}

/// Uniformly sampled response, `values[t]` holding one entry per spatial dof.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimeSeries {
    pub times: Vec<f64>,
    pub values: Vec<Vec<f64>>,
    pub noise: Option<NoiseMeta>,
}

impl TimeSeries {
    pub fn new(times: Vec<f64>, values: Vec<Vec<f64>>) -> Result<Self> {
        if times.len() != values.len() || times.is_empty() {
            return Err(contract("times and values must be non-empty and of equal length"));
        }
        if times.len() >= 2 {
            let dt = times[1] - times[0];
            let uniform = times.windows(2).all(|w| w[1] > w[0] && ((w[1] - w[0]) - dt).abs() <= 1e-9 * dt.abs());
            if !uniform {
                return Err(contract("times must be strictly increasing with uniform spacing"));
            }
        }
        let n = values[0].len();
        if values.iter().any(|v| v.len() != n) {
            return Err(contract("every time slice must have the same size"));
        }
        Ok(Self { times, values, noise: None })
    }

    pub fn from_slices(times: Vec<f64>, slices: &[DVector<f64>]) -> Result<Self> {
        Self::new(times, slices.iter().map(|v| v.iter().copied().collect()).collect())
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    /// Values of spatial dof `i` over time.
    pub fn component(&self, i: usize) -> Vec<f64> {
        self.values.iter().map(|v| v[i]).collect()
    }

    fn slices(&self) -> Vec<DVector<f64>> {
        self.values.iter().map(|v| DVector::from_column_slice(v)).collect()
    }
}

/// Adds independent Gaussian noise to every sample.
pub fn add_noise(series: &TimeSeries, mean: f64, variance: f64, seed: u64) -> Result<TimeSeries> {
    if !(variance >= 0.0) || !mean.is_finite() {
        return Err(contract("noise variance must be non-negative and the mean finite"));
    }
    let normal = Normal::new(mean, variance.sqrt()).map_err(|e| contract(e.to_string()))?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = series.clone();
    for v in out.values.iter_mut().flat_map(|s| s.iter_mut()) {
        *v += normal.sample(&mut rng);
    }
    out.noise = Some(NoiseMeta { mean, variance, seed });
    Ok(out)
}

/// max |pred − truth| / max |truth| over all samples.
pub fn max_relative_error(pred: &TimeSeries, truth: &TimeSeries) -> Result<f64> {
    if pred.len() != truth.len() {
        return Err(contract("series lengths differ"));
    }
    let (mut num, mut den) = (0.0_f64, 0.0_f64);
    for (a, b) in pred.values.iter().zip(&truth.values) {
        for (x, y) in a.iter().zip(b) {
            num = num.max((x - y).abs());
            den = den.max(y.abs());
        }
    }
    Ok(if den > 0.0 { num / den } else { num })
}

pub fn max_abs_error(pred: &TimeSeries, truth: &TimeSeries) -> Result<f64> {
    if pred.len() != truth.len() {
        return Err(contract("series lengths differ"));
    }
    Ok(pred
        .values
        .iter()
        .zip(&truth.values)
        .flat_map(|(a, b)| a.iter().zip(b).map(|(x, y)| (x - y).abs()))
        .fold(0.0, f64::max))
}

/// Subgradient of |x|, zero when |x| is within the rounding error `tol`.
fn sign0(x: f64, tol: f64) -> f64 {
    if x > tol {
        1.0
    } else if x < -tol {
        -1.0
    } else {
        0.0
    }
}

const ROUNDING: f64 = 64.0 * f64::EPSILON;

fn check_observed(sys: &SpaceTimeSystem, obs: &TimeSeries) -> Result<Vec<DVector<f64>>> {
    if obs.len() != sys.n_time || obs.values[0].len() != sys.n_space {
        return Err(contract(format!(
            "observed series is {}×{}, system expects {}×{}",
            obs.len(),
            obs.values[0].len(),
            sys.n_time,
            sys.n_space
        )));
    }
    Ok(obs.slices())
}

/// Teacher-forced L1 loss Σ_t |u^{t+1}_obs − ARNN(f^t, u^t_obs, u^{t−1}_obs)|₁
/// over interior rows, and its gradient with respect to every coefficient.
pub fn teacher_forced_loss(sys: &SpaceTimeSystem, obs: &TimeSeries) -> Result<(f64, Vec<f64>)> {
    let u = check_observed(sys, obs)?;
    if u.len() < 3 {
        return Err(contract("at least three observed time slices are required"));
    }
    let b = sys.blocks();
    let cinv = sys.inverse(&b.c, "C")?;
    let np = sys.coeffs.len();
    let mut loss = 0.0;
    let mut grad = vec![0.0; np];
    for t in 1..sys.n_time - 1 {
        let pred = &cinv * (&sys.forces[t] - &b.a * &u[t - 1] - &b.b * &u[t]);
        let r = &u[t + 1] - &pred;
        loss += r.iter().map(|v| v.abs()).sum::<f64>();
        let scale =
            cinv.abs() * (sys.forces[t].abs() + b.a.abs() * u[t - 1].abs() + b.b.abs() * u[t].abs()) + u[t + 1].abs();
        let sg = DVector::from_fn(r.len(), |i, _| sign0(r[i], ROUNDING * scale[i]));
        // dL/dpred = −sign(r); dpred/dθ = −C⁻¹[A_θ u^{t−1} + B_θ u^t + C_θ pred].
        let w = cinv.transpose() * sg;
        for (i, g) in grad.iter_mut().enumerate() {
            let d = sys.term(i);
            *g += w.dot(&(&d.a * &u[t - 1] + &d.b * &u[t] + &d.c * &pred));
        }
    }
    Ok((loss, grad))
}

/// L1 misfit of a free-running rollout from the system's own initial state
/// against every observed slice after the first, with forward sensitivities.
pub fn rollout_loss(sys: &SpaceTimeSystem, obs: &TimeSeries) -> Result<(f64, Vec<f64>)> {
    let o = check_observed(sys, obs)?;
    let b = sys.blocks();
    let cinv = sys.inverse(&b.c, "C")?;
    let c0inv = sys.inverse(&b.c0, "velocity-row")?;
    let np = sys.coeffs.len();
    let n = sys.n_space;
    let u0 = sys.u0.clone();
    let u1 = &c0inv * (sys.velocity_rhs(&b) - &b.b0 * &u0);
    let mut s_prev: Vec<DVector<f64>> = vec![DVector::zeros(n); np];
    let mut s_curr: Vec<DVector<f64>> = (0..np)
        .map(|i| {
            let d = sys.term(i);
            &c0inv * (&d.vel * &sys.v0 - &d.b0 * &u0 - &d.c0 * &u1)
        })
        .collect();
    let mut loss = 0.0;
    let mut grad = vec![0.0; np];
    let mut accumulate = |u: &DVector<f64>, s: &[DVector<f64>], target: &DVector<f64>, loss: &mut f64| {
        let sg = DVector::from_fn(u.len(), |i, _| sign0(u[i] - target[i], ROUNDING * (u[i].abs() + target[i].abs())));
        *loss += (u - target).iter().map(|v| v.abs()).sum::<f64>();
        for (g, si) in grad.iter_mut().zip(s) {
            *g += sg.dot(si);
        }
    };
    accumulate(&u1, &s_curr, &o[1], &mut loss);
    let (mut u_prev, mut u_curr) = (u0, u1);
    for t in 1..sys.n_time - 1 {
        let u_next = &cinv * (&sys.forces[t] - &b.a * &u_prev - &b.b * &u_curr);
        let s_next: Vec<DVector<f64>> = (0..np)
            .map(|i| {
                let d = sys.term(i);
                -(&cinv * (&b.a * &s_prev[i] + &b.b * &s_curr[i] + &d.a * &u_prev + &d.b * &u_curr + &d.c * &u_next))
            })
            .collect();
        accumulate(&u_next, &s_next, &o[t + 1], &mut loss);
        u_prev = u_curr;
        u_curr = u_next;
        s_prev = s_curr;
        s_curr = s_next;
    }
    Ok((loss, grad))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum IdentifyMode {
    TeacherForced,
    Rollout,
}

impl IdentifyMode {
    pub fn loss(self, sys: &SpaceTimeSystem, obs: &TimeSeries) -> Result<(f64, Vec<f64>)> {
        match self {
            IdentifyMode::TeacherForced => teacher_forced_loss(sys, obs),
            IdentifyMode::Rollout => rollout_loss(sys, obs),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IdentifyConfig {
    /// Coefficient names to train; the rest keep the template's values.
    pub trainable: Vec<String>,
    /// Starting values of the trainable coefficients (template values when empty).
    pub init: Vec<f64>,
    pub train: TrainConfig,
    pub mode: IdentifyMode,
    /// One run per seed; the lowest final loss wins.
    pub seeds: Vec<u64>,
    /// Runs after the first start from `init · exp(U[−j, j])` per coefficient.
    pub init_jitter: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IdentificationRun {
    pub names: Vec<String>,
    /// All coefficients of the system after training.
    pub coeffs: Vec<f64>,
    pub trainable: Vec<String>,
    pub mode: IdentifyMode,
    pub seed: u64,
    pub final_loss: f64,
    /// Loss and trainable coefficient values (not logarithms) per epoch.
    pub history: TrainingHistory,
}

impl IdentificationRun {
    pub fn coeff(&self, name: &str) -> Option<f64> {
        self.names.iter().position(|n| n == name).map(|i| self.coeffs[i])
    }

    /// |recovered − truth| / |truth| per trainable coefficient.
    pub fn relative_errors(&self, truth: &SpaceTimeSystem) -> Vec<(String, f64)> {
        self.trainable
            .iter()
            .filter_map(|n| {
                let t = truth.coeff(n)?;
                Some((n.clone(), (self.coeff(n)? - t).abs() / t.abs()))
            })
            .collect()
    }

    /// Fraction of epochs after the first `skip` share whose loss rose above the previous epoch's.
    pub fn loss_increase_fraction(&self, skip: f64) -> f64 {
        let l = &self.history.loss;
        let start = ((l.len() as f64) * skip).ceil() as usize;
        if l.len() < start + 2 {
            return 0.0;
        }
        let ups = l[start..].windows(2).filter(|w| w[1] > w[0]).count();
        ups as f64 / (l.len() - start - 1) as f64
    }
}

fn trainable_indices(sys: &SpaceTimeSystem, names: &[String]) -> Result<Vec<usize>> {
    if names.is_empty() {
        return Err(contract("at least one trainable coefficient is required"));
    }
    names
        .iter()
        .map(|n| {
            sys.names
                .iter()
                .position(|m| m == n)
                .ok_or_else(|| contract(format!("unknown coefficient `{n}`; expected one of {:?}", sys.names)))
        })
        .collect()
}

/// One Adam run from a single start.
pub fn identify_once(
    template: &SpaceTimeSystem,
    observed: &TimeSeries,
    cfg: &IdentifyConfig,
    seed: u64,
    jitter: f64,
) -> Result<IdentificationRun> {
    let idx = trainable_indices(template, &cfg.trainable)?;
    let init: Vec<f64> = if cfg.init.is_empty() {
        idx.iter().map(|&i| template.coeffs[i]).collect()
    } else if cfg.init.len() == idx.len() {
        cfg.init.clone()
    } else {
        return Err(contract("one initial value per trainable coefficient is required"));
    };
    if init.iter().any(|v| !(*v > 0.0)) {
        return Err(contract("trainable coefficients are optimised in log space and must start positive"));
    }
    check_observed(template, observed)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let logs: Vec<f64> =
        init.iter().map(|v| v.ln() + if jitter > 0.0 { rng.random_range(-jitter..jitter) } else { 0.0 }).collect();
    let mut params = ParamStore::new(seed);
    let id = params.add("log_coeffs", logs, true)?;
    let coeffs_of = |logs: &[f64]| {
        let mut c = template.coeffs.clone();
        for (k, &i) in idx.iter().enumerate() {
            c[i] = logs[k].exp();
        }
        c
    };
    let mut history = run_adam(&mut params, &cfg.train, |p| {
        let c = coeffs_of(p.value(id));
        let sys = template.with_coeffs(&c)?;
        let (loss, g) = cfg.mode.loss(&sys, observed)?;
        let glog: Vec<f64> = idx.iter().map(|&i| g[i] * c[i]).collect();
        p.set_grad(id, &glog)?;
        Ok(loss)
    })?;
    for snap in &mut history.params {
        for v in snap.iter_mut() {
            *v = v.exp();
        }
    }
    let coeffs = coeffs_of(params.value(id));
    let (final_loss, _) = cfg.mode.loss(&template.with_coeffs(&coeffs)?, observed)?;
    if !final_loss.is_finite() {
        return Err(Error::Divergence { epoch: history.epochs(), detail: "non-finite final loss".into() });
    }
    Ok(IdentificationRun {
        names: template.names.clone(),
        coeffs,
        trainable: cfg.trainable.clone(),
        mode: cfg.mode,
        seed,
        final_loss,
        history,
    })
}

/// Multi-start identification; returns the run with the lowest final loss.
pub fn identify(template: &SpaceTimeSystem, observed: &TimeSeries, cfg: &IdentifyConfig) -> Result<IdentificationRun> {
    if cfg.seeds.is_empty() {
        return Err(contract("at least one seed is required"));
    }
    let mut best: Option<IdentificationRun> = None;
    for (k, &seed) in cfg.seeds.iter().enumerate() {
        let jitter = if k == 0 { 0.0 } else { cfg.init_jitter };
        let run = identify_once(template, observed, cfg, seed, jitter)?;
        if best.as_ref().is_none_or(|b| run.final_loss < b.final_loss) {
            best = Some(run);
        }
    }
    Ok(best.expect("at least one run"))
}

/// Direct space-time solve of the oscillator under new initial and loading conditions.
pub fn predict_new_conditions(
    coeffs: [f64; 3],
    ic: (f64, f64),
    forcing: Forcing,
    t_end: f64,
    n_elem: usize,
) -> Result<TimeSeries> {
    let p = SmdProblem { m: coeffs[0], c: coeffs[1], k: coeffs[2], forcing, u0: ic.0, v0: ic.1, t_end, n_elem };
    let sys = assemble_smd(&p)?;
    TimeSeries::from_slices(sys.times(), &sys.solve_direct()?)
}

/// Damping ratio from the logarithmic decrement between the first two maxima of a free response.
pub fn damping_ratio_from_response(u: &[f64]) -> Option<f64> {
    let peaks: Vec<f64> = (1..u.len().saturating_sub(1))
        .filter(|&i| u[i] > u[i - 1] && u[i] >= u[i + 1] && u[i] > 0.0)
        .map(|i| {
            // Parabolic refinement of the sampled maximum.
            let (a, b, c) = (u[i - 1], u[i], u[i + 1]);
            let denom = a - 2.0 * b + c;
            if denom == 0.0 {
                b
            } else {
                b - 0.125 * (a - c).powi(2) / denom
            }
        })
        .take(2)
        .collect();
    if peaks.len() < 2 {
        return None;
    }
    let delta = (peaks[0] / peaks[1]).ln();
    Some(delta / (4.0 * std::f64::consts::PI.powi(2) + delta * delta).sqrt())
}
