//! Oscillator identification study: clean and noisy recovery, prediction
//! under new conditions, and stepper/gradient consistency.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use super::bar::{assemble_bar, BarProblem, BarSupport};
use super::forcing::Forcing;
use super::identify::{
    add_noise, identify, max_abs_error, max_relative_error, predict_new_conditions, IdentificationRun, IdentifyConfig,
    IdentifyMode, TimeSeries,
};
use super::smd::{assemble_smd, SmdProblem};
use super::system::SpaceTimeSystem;
use crate::error::{contract, Result};
use crate::optim::{finite_diff_gradcheck, ParamStore, TrainConfig};

/// Initial state and load of one prediction case.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ValidationCase {
    pub name: String,
    pub u0: f64,
    pub v0: f64,
    pub forcing: Forcing,
}

/// Systems the identification study runs on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StudyProblem {
    Smd,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StfemStudyConfig {
    pub problem: StudyProblem,
    pub m: f64,
    pub c: f64,
    pub k: f64,
    pub forcing: Forcing,
    pub u0: f64,
    pub v0: f64,
    pub t_end: f64,
    pub clean_elements: usize,
    pub noisy_elements: usize,
    pub noise_mean: f64,
    pub noise_variance: f64,
    pub noise_seed: u64,
    /// Extra noise levels identified on the noisy mesh and reported only.
    pub noise_sweep: Vec<f64>,
    pub trainable: Vec<String>,
    pub init: Vec<f64>,
    pub seeds: Vec<u64>,
    pub init_jitter: f64,
    pub epochs: usize,
    pub lr: f64,
    pub lr_final: f64,
    pub clean_mode: IdentifyMode,
    pub noisy_mode: IdentifyMode,
    pub validation: Vec<ValidationCase>,
    pub gradcheck_step: f64,
}

impl Default for StfemStudyConfig {
    fn default() -> Self {
        let r = SmdProblem::reference(150);
        Self {
            problem: StudyProblem::Smd,
            m: r.m,
            c: r.c,
            k: r.k,
            forcing: r.forcing,
            u0: r.u0,
            v0: r.v0,
            t_end: r.t_end,
            clean_elements: 150,
            noisy_elements: 50,
            noise_mean: 0.0,
            noise_variance: 1e-3,
            noise_seed: 0,
            noise_sweep: vec![1e-4, 1e-2],
            trainable: vec!["m".into(), "c".into(), "k".into()],
            init: vec![0.5, 5.0, 50.0],
            seeds: vec![0, 1, 2],
            init_jitter: 0.3,
            epochs: 20_000,
            lr: 1e-2,
            lr_final: 1e-4,
            clean_mode: IdentifyMode::TeacherForced,
            noisy_mode: IdentifyMode::Rollout,
            validation: vec![
                ValidationCase { name: "rest_slow_sine".into(), u0: 0.0, v0: 0.0, forcing: Forcing::sine(10.0, PI) },
                ValidationCase {
                    name: "reversed_fast_sine".into(),
                    u0: -1.0,
                    v0: 2.0,
                    forcing: Forcing::sine(10.0, 4.0 * PI),
                },
                ValidationCase { name: "step_load".into(), u0: 0.5, v0: 0.0, forcing: Forcing::constant(10.0) },
            ],
            gradcheck_step: 1e-6,
        }
    }
}

impl StfemStudyConfig {
    pub fn problem(&self, n_elem: usize) -> SmdProblem {
        SmdProblem {
            m: self.m,
            c: self.c,
            k: self.k,
            forcing: self.forcing,
            u0: self.u0,
            v0: self.v0,
            t_end: self.t_end,
            n_elem,
        }
    }

    pub fn truth(&self) -> [f64; 3] {
        [self.m, self.c, self.k]
    }

    fn identify_config(&self, mode: IdentifyMode) -> IdentifyConfig {
        IdentifyConfig {
            trainable: self.trainable.clone(),
            init: self.init.clone(),
            train: TrainConfig::new(self.epochs, self.lr).with_decay(self.lr_final),
            mode,
            seeds: self.seeds.clone(),
            init_jitter: self.init_jitter,
        }
    }
}

/// Identified model against the true model on one new case.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValidationResult {
    pub name: String,
    pub n_elem: usize,
    pub predicted: TimeSeries,
    pub truth: TimeSeries,
    pub max_rel: f64,
    pub max_abs: f64,
}

impl ValidationResult {
    /// CSV with columns `t,u_pred,u_true`.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("t,u_pred,u_true\n");
        for (i, t) in self.truth.times.iter().enumerate() {
            s.push_str(&format!("{t:e},{:e},{:e}\n", self.predicted.values[i][0], self.truth.values[i][0]));
        }
        s
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Identification {
    pub n_elem: usize,
    pub noise_variance: f64,
    pub run: IdentificationRun,
    pub relative_errors: Vec<(String, f64)>,
    pub max_relative_error: f64,
    /// Share of epochs past the first 10% whose loss rose.
    pub loss_increase_fraction: f64,
}

impl Identification {
    /// Recovered (m, c, k).
    pub fn coeffs(&self) -> [f64; 3] {
        [self.run.coeffs[0], self.run.coeffs[1], self.run.coeffs[2]]
    }

    /// CSV with columns `epoch,loss` followed by one column per trainable coefficient.
    pub fn history_csv(&self) -> String {
        self.run.history.to_csv(&self.run.trainable)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConsistencyReport {
    /// Max over systems of max_t |stepped − direct| / max |direct|.
    pub ar_vs_direct: f64,
    /// Worst single-step defect relative to the slice magnitude.
    pub single_step: f64,
    /// Worst finite-difference relative error over problems and loss modes.
    pub gradcheck: f64,
}

/// Identification of (m, c, k) on the `n_elem` mesh at the given noise variance.
pub fn run_identification(
    cfg: &StfemStudyConfig,
    n_elem: usize,
    variance: f64,
    mode: IdentifyMode,
) -> Result<Identification> {
    let truth_problem = cfg.problem(n_elem);
    let truth = assemble_smd(&truth_problem)?;
    let clean = TimeSeries::from_slices(truth.times(), &truth.solve_direct()?)?;
    let observed = if variance > 0.0 { add_noise(&clean, cfg.noise_mean, variance, cfg.noise_seed)? } else { clean };
    let start = match cfg.init.as_slice() {
        [m, c, k] => [*m, *c, *k],
        _ => truth_problem.coeffs(),
    };
    let template = assemble_smd(&truth_problem.with_coeffs(start))?;
    let run = identify(&template, &observed, &cfg.identify_config(mode))?;
    let relative_errors = run.relative_errors(&truth);
    let max_relative_error = relative_errors.iter().map(|(_, e)| *e).fold(0.0, f64::max);
    let loss_increase_fraction = run.loss_increase_fraction(0.1);
    Ok(Identification {
        n_elem,
        noise_variance: variance,
        run,
        relative_errors,
        max_relative_error,
        loss_increase_fraction,
    })
}

/// Solves every validation case with the given and the true coefficients.
pub fn validate(cfg: &StfemStudyConfig, coeffs: [f64; 3], n_elem: usize) -> Result<Vec<ValidationResult>> {
    cfg.validation
        .iter()
        .map(|case| {
            let ic = (case.u0, case.v0);
            let predicted = predict_new_conditions(coeffs, ic, case.forcing, cfg.t_end, n_elem)?;
            let truth = predict_new_conditions(cfg.truth(), ic, case.forcing, cfg.t_end, n_elem)?;
            Ok(ValidationResult {
                name: case.name.clone(),
                n_elem,
                max_rel: max_relative_error(&predicted, &truth)?,
                max_abs: max_abs_error(&predicted, &truth)?,
                predicted,
                truth,
            })
        })
        .collect()
}

fn max_rel(a: &[nalgebra::DVector<f64>], b: &[nalgebra::DVector<f64>]) -> f64 {
    let scale = b.iter().map(|v| v.amax()).fold(0.0, f64::max);
    a.iter().zip(b).map(|(x, y)| (x - y).amax()).fold(0.0, f64::max) / scale
}

fn gradcheck(sys: &SpaceTimeSystem, obs: &TimeSeries, start: &[f64], h: f64) -> Result<f64> {
    let mut worst = 0.0_f64;
    for mode in [IdentifyMode::TeacherForced, IdentifyMode::Rollout] {
        let mut params = ParamStore::new(0);
        let id = params.add("theta", start.to_vec(), true)?;
        let (_, g) = mode.loss(&sys.with_coeffs(start)?, obs)?;
        params.set_grad(id, &g)?;
        let err = finite_diff_gradcheck(
            |ps| sys.with_coeffs(ps.value(id)).and_then(|s| mode.loss(&s, obs)).map_or(f64::NAN, |(l, _)| l),
            &params,
            h,
        )?;
        worst = worst.max(err);
    }
    Ok(worst)
}

/// Iterated stepping against the direct solve and gradient checks, on the
/// oscillator and on a clamped bar.
pub fn consistency(cfg: &StfemStudyConfig) -> Result<ConsistencyReport> {
    let smd = assemble_smd(&cfg.problem(cfg.clean_elements))?;
    let n_nodes = 8;
    let bar = assemble_bar(&BarProblem {
        e: 2.0,
        a_cs: 1.5,
        rho: 0.8,
        length: 1.0,
        n_nodes,
        n_time: 40,
        t_end: 0.5,
        support: BarSupport::ClampedFree,
        tip_force: Forcing::sine(1.0, 3.0),
        u0: (0..n_nodes).map(|i| 0.01 * i as f64).collect(),
        v0: vec![0.05; n_nodes],
    })?;
    let (mut ar_vs_direct, mut single_step) = (0.0_f64, 0.0_f64);
    let mut observed = Vec::new();
    for sys in [&smd, &bar] {
        let direct = sys.solve_direct()?;
        ar_vs_direct = ar_vs_direct.max(max_rel(&sys.step_from(&direct[0], &direct[1])?, &direct));
        ar_vs_direct = ar_vs_direct.max(max_rel(&sys.rollout()?, &direct));
        for t in 1..sys.n_time - 1 {
            let u = sys.ar_step(&direct[t - 1], &direct[t], &sys.forces[t])?;
            single_step = single_step.max((&u - &direct[t + 1]).amax() / direct[t + 1].amax().max(1e-12));
        }
        observed.push(TimeSeries::from_slices(sys.times(), &direct)?);
    }
    if cfg.gradcheck_step <= 0.0 {
        return Err(contract("gradcheck_step must be positive"));
    }
    let smd_obs = add_noise(&observed[0], 0.0, 1e-4, 3)?;
    let bar_obs = add_noise(&observed[1], 0.0, 1e-8, 4)?;
    let start: Vec<f64> = smd.coeffs.iter().zip([0.8, 1.2, 0.9]).map(|(v, f)| v * f).collect();
    let g1 = gradcheck(&smd, &smd_obs, &start, cfg.gradcheck_step)?;
    let g2 = gradcheck(&bar, &bar_obs, &[2.3, 0.7], cfg.gradcheck_step * 0.1)?;
    Ok(ConsistencyReport { ar_vs_direct, single_step, gradcheck: g1.max(g2) })
}
