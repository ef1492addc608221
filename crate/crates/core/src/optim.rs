//! Parameter storage, Adam, losses and finite-difference gradient checking.
//!
//! Every learnable network in the crate keeps its weights in a [`ParamStore`]
//! and supplies closed-form gradients; there is no tape.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{contract, Error, Result};

/// Handle to one named entry of a [`ParamStore`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct ParamId(usize);

#[derive(Debug, Clone)]
struct Entry {
    name: String,
    value: Vec<f64>,
    grad: Vec<f64>,
    grad_set: bool,
    trainable: bool,
}

/// Flat, ordered collection of named parameter vectors with gradient slots.
#[derive(Debug, Clone)]
pub struct ParamStore {
    entries: Vec<Entry>,
    rng_seed: u64,
    rng: ChaCha8Rng,
}

impl ParamStore {
    pub fn new(rng_seed: u64) -> Self {
        Self { entries: Vec::new(), rng_seed, rng: ChaCha8Rng::seed_from_u64(rng_seed) }
    }

    pub fn rng_seed(&self) -> u64 {
        self.rng_seed
    }

    pub fn add(&mut self, name: &str, value: Vec<f64>, trainable: bool) -> Result<ParamId> {
        if self.entries.iter().any(|e| e.name == name) {
            return Err(contract(format!("duplicate parameter name `{name}`")));
        }
        let n = value.len();
        self.entries.push(Entry { name: name.to_string(), value, grad: vec![0.0; n], grad_set: false, trainable });
        Ok(ParamId(self.entries.len() - 1))
    }

    /// Adds a trainable entry drawn uniformly from [-scale, scale] using the
    /// store's seeded generator.
    pub fn add_uniform(&mut self, name: &str, len: usize, scale: f64) -> Result<ParamId> {
        let value = (0..len).map(|_| self.rng.random_range(-scale..=scale)).collect();
        self.add(name, value, true)
    }

    /// Default initialisation: uniform in [-0.5, 0.5].
    pub fn add_random(&mut self, name: &str, len: usize) -> Result<ParamId> {
        self.add_uniform(name, len, 0.5)
    }

    pub fn id(&self, name: &str) -> Option<ParamId> {
        self.entries.iter().position(|e| e.name == name).map(ParamId)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn ids(&self) -> impl Iterator<Item = ParamId> {
        (0..self.entries.len()).map(ParamId)
    }

    pub fn name(&self, id: ParamId) -> &str {
        &self.entries[id.0].name
    }

    pub fn value(&self, id: ParamId) -> &[f64] {
        &self.entries[id.0].value
    }

    pub fn value_mut(&mut self, id: ParamId) -> &mut [f64] {
        &mut self.entries[id.0].value
    }

    pub fn grad(&self, id: ParamId) -> &[f64] {
        &self.entries[id.0].grad
    }

    pub fn is_trainable(&self, id: ParamId) -> bool {
        self.entries[id.0].trainable
    }

    pub fn set_trainable(&mut self, id: ParamId, trainable: bool) {
        self.entries[id.0].trainable = trainable;
    }

    pub fn set_grad(&mut self, id: ParamId, grad: &[f64]) -> Result<()> {
        let e = &mut self.entries[id.0];
        if grad.len() != e.value.len() {
            return Err(contract(format!(
                "gradient for `{}` has length {}, expected {}",
                e.name,
                grad.len(),
                e.value.len()
            )));
        }
        e.grad.copy_from_slice(grad);
        e.grad_set = true;
        Ok(())
    }

    /// Zeroes all gradients and marks them as populated; callers then accumulate
    /// with [`ParamStore::grad_mut`].
    pub fn zero_grads(&mut self) {
        for e in &mut self.entries {
            e.grad.iter_mut().for_each(|g| *g = 0.0);
            e.grad_set = true;
        }
    }

    pub fn grad_mut(&mut self, id: ParamId) -> &mut [f64] {
        let e = &mut self.entries[id.0];
        e.grad_set = true;
        &mut e.grad
    }

    pub fn clear_grads(&mut self) {
        for e in &mut self.entries {
            e.grad_set = false;
        }
    }

    /// Total number of trainable scalars.
    pub fn n_trainable(&self) -> usize {
        self.entries.iter().filter(|e| e.trainable).map(|e| e.value.len()).sum()
    }
}

/// Adam hyperparameters and moment estimates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdamState {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub step_count: u64,
    #[serde(skip)]
    first_moment: Vec<Vec<f64>>,
    #[serde(skip)]
    second_moment: Vec<Vec<f64>>,
}

impl Default for AdamState {
    fn default() -> Self {
        Self::new(1e-2)
    }
}

impl AdamState {
    pub fn new(lr: f64) -> Self {
        Self {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            step_count: 0,
            first_moment: Vec::new(),
            second_moment: Vec::new(),
        }
    }

    pub fn second_moment(&self) -> &[Vec<f64>] {
        &self.second_moment
    }
}

/// One bias-corrected Adam update of every trainable entry.
pub fn adam_step(params: &mut ParamStore, state: &mut AdamState) -> Result<()> {
    if state.first_moment.len() != params.entries.len() {
        state.first_moment = params.entries.iter().map(|e| vec![0.0; e.value.len()]).collect();
        state.second_moment = state.first_moment.clone();
    }
    for e in &params.entries {
        if e.trainable && !e.grad_set {
            return Err(contract(format!("gradient of `{}` not populated", e.name)));
        }
    }
    state.step_count += 1;
    let t = state.step_count as i32;
    let bc1 = 1.0 - state.beta1.powi(t);
    let bc2 = 1.0 - state.beta2.powi(t);
    for (k, e) in params.entries.iter_mut().enumerate() {
        if !e.trainable {
            continue;
        }
        let m = &mut state.first_moment[k];
        let v = &mut state.second_moment[k];
        for i in 0..e.value.len() {
            let g = e.grad[i];
            m[i] = state.beta1 * m[i] + (1.0 - state.beta1) * g;
            v[i] = state.beta2 * v[i] + (1.0 - state.beta2) * g * g;
            if g == 0.0 && m[i] == 0.0 {
                continue;
            }
            let mhat = m[i] / bc1;
            let vhat = v[i] / bc2;
            e.value[i] -= state.lr * mhat / (vhat.sqrt() + state.eps);
        }
    }
    Ok(())
}

fn check_lengths(pred: &[f64], target: &[f64]) -> Result<()> {
    if pred.len() != target.len() {
        return Err(contract(format!("prediction length {} != target length {}", pred.len(), target.len())));
    }
    if pred.is_empty() {
        return Err(contract("empty prediction"));
    }
    Ok(())
}

/// Mean of squared differences.
pub fn mse_loss(pred: &[f64], target: &[f64]) -> Result<f64> {
    check_lengths(pred, target)?;
    let s: f64 = pred.iter().zip(target).map(|(p, t)| (p - t) * (p - t)).sum();
    Ok(s / pred.len() as f64)
}

/// Sum of absolute differences.
pub fn l1_loss(pred: &[f64], target: &[f64]) -> Result<f64> {
    check_lengths(pred, target)?;
    Ok(pred.iter().zip(target).map(|(p, t)| (p - t).abs()).sum())
}

/// Central-difference check of the gradients stored in `params`.
///
/// Returns the largest deviation over all trainable scalars, relative to the
/// finite-difference value, or absolute when the analytic gradient is below
/// 1e-8 in magnitude.
pub fn finite_diff_gradcheck<F>(loss_fn: F, params: &ParamStore, h: f64) -> Result<f64>
where
    F: Fn(&ParamStore) -> f64,
{
    if h <= 0.0 {
        return Err(contract("finite-difference step must be positive"));
    }
    let mut probe = params.clone();
    let mut worst = 0.0_f64;
    for id in params.ids() {
        if !params.is_trainable(id) {
            continue;
        }
        if !params.entries[id.0].grad_set {
            return Err(contract(format!("gradient of `{}` not populated", params.name(id))));
        }
        for i in 0..params.value(id).len() {
            let x0 = params.value(id)[i];
            probe.value_mut(id)[i] = x0 + h;
            let fp = loss_fn(&probe);
            probe.value_mut(id)[i] = x0 - h;
            let fm = loss_fn(&probe);
            probe.value_mut(id)[i] = x0;
            if !fp.is_finite() || !fm.is_finite() {
                return Err(Error::NonFinite { param: params.name(id).to_string(), index: i });
            }
            let fd = (fp - fm) / (2.0 * h);
            let an = params.grad(id)[i];
            let err = if an.abs() < 1e-8 { (fd - an).abs() } else { (fd - an).abs() / fd.abs().max(1e-8) };
            worst = worst.max(err);
        }
    }
    Ok(worst)
}

/// Stops training when the loss improved by less than `min_improvement` over
/// the last `window` epochs.
#[derive(Debug, Clone)]
pub struct EarlyStop {
    pub window: usize,
    pub min_improvement: f64,
    history: Vec<f64>,
}

impl Default for EarlyStop {
    fn default() -> Self {
        Self { window: 100, min_improvement: 1e-12, history: Vec::new() }
    }
}

impl EarlyStop {
    /// Records the loss of the current epoch; returns true when training should stop.
    pub fn update(&mut self, loss: f64) -> bool {
        self.history.push(loss);
        let n = self.history.len();
        if n <= self.window {
            return false;
        }
        let best_then = self.history[..n - self.window].iter().cloned().fold(f64::INFINITY, f64::min);
        let best_now = self.history[n - self.window..].iter().cloned().fold(f64::INFINITY, f64::min);
        best_then - best_now < self.min_improvement
    }
}

/// Geometric learning-rate decay from `lr` to `lr_final` over `epochs`.
pub fn geometric_lr(lr: f64, lr_final: f64, epoch: usize, epochs: usize) -> f64 {
    if epochs <= 1 || lr_final <= 0.0 || lr_final >= lr {
        return lr;
    }
    let frac = epoch as f64 / (epochs - 1) as f64;
    lr * (lr_final / lr).powf(frac)
}

/// Epoch budget and learning-rate schedule of one training run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub epochs: usize,
    pub lr: f64,
    /// Learning rate reached at the last epoch by geometric decay; `lr_final >= lr` disables decay.
    pub lr_final: f64,
    pub early_stop: bool,
    /// Keep a per-epoch copy of every trainable scalar in the history.
    pub record_params: bool,
}

impl TrainConfig {
    pub fn new(epochs: usize, lr: f64) -> Self {
        Self { epochs, lr, lr_final: lr, early_stop: true, record_params: true }
    }

    pub fn with_decay(mut self, lr_final: f64) -> Self {
        self.lr_final = lr_final;
        self
    }
}

/// Full-batch Adam loop. `objective` must fill the gradients of every
/// trainable entry and return the loss at the current parameters; the
/// history records that loss before each update.
pub fn run_adam<F>(params: &mut ParamStore, cfg: &TrainConfig, mut objective: F) -> Result<TrainingHistory>
where
    F: FnMut(&mut ParamStore) -> Result<f64>,
{
    if cfg.epochs == 0 {
        return Err(contract("epoch budget must be positive"));
    }
    let mut state = AdamState::new(cfg.lr);
    let mut history = TrainingHistory::default();
    let mut stopper = EarlyStop::default();
    for epoch in 0..cfg.epochs {
        params.clear_grads();
        let loss = objective(params)?;
        if !loss.is_finite() {
            return Err(Error::Divergence {
                epoch,
                detail: format!("loss became {loss}; last finite loss {:?}", history.loss.last()),
            });
        }
        let snapshot = if cfg.record_params { flatten_trainable(params) } else { Vec::new() };
        history.push(loss, snapshot);
        if cfg.early_stop && stopper.update(loss) {
            break;
        }
        state.lr = geometric_lr(cfg.lr, cfg.lr_final, epoch, cfg.epochs);
        adam_step(params, &mut state)?;
    }
    Ok(history)
}

/// Concatenated values of all trainable entries, in insertion order.
pub fn flatten_trainable(params: &ParamStore) -> Vec<f64> {
    params.entries.iter().filter(|e| e.trainable).flat_map(|e| e.value.iter().copied()).collect()
}

/// Per-epoch record of a training run.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainingHistory {
    pub loss: Vec<f64>,
    pub params: Vec<Vec<f64>>,
}

impl TrainingHistory {
    pub fn push(&mut self, loss: f64, params: Vec<f64>) {
        self.loss.push(loss);
        self.params.push(params);
    }

    pub fn epochs(&self) -> usize {
        self.loss.len()
    }

    pub fn initial_loss(&self) -> f64 {
        self.loss.first().copied().unwrap_or(f64::NAN)
    }

    pub fn final_loss(&self) -> f64 {
        self.loss.last().copied().unwrap_or(f64::NAN)
    }

    /// CSV with columns `epoch,loss` followed by one column per recorded parameter.
    pub fn to_csv(&self, param_names: &[String]) -> String {
        let mut out = String::from("epoch,loss");
        for n in param_names {
            out.push(',');
            out.push_str(n);
        }
        out.push('\n');
        for (e, loss) in self.loss.iter().enumerate() {
            out.push_str(&format!("{e},{loss:e}"));
            if let Some(p) = self.params.get(e) {
                for v in p {
                    out.push_str(&format!(",{v:e}"));
                }
            }
            out.push('\n');
        }
        out
    }

    /// Final loss below initial and no epoch-to-epoch jump above `factor`.
    pub fn is_well_behaved(&self, factor: f64) -> bool {
        self.final_loss() < self.initial_loss()
            && self.loss.windows(2).all(|w| w[1] <= factor * w[0].max(f64::MIN_POSITIVE))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn mse_examples() {
        assert_eq!(mse_loss(&[1.0, 2.0], &[1.0, 2.0]).unwrap(), 0.0);
        assert_eq!(mse_loss(&[0.0], &[2.0]).unwrap(), 4.0);
        assert_eq!(mse_loss(&[1.0, 3.0], &[0.0, 0.0]).unwrap(), 5.0);
        assert!(matches!(mse_loss(&[1.0], &[1.0, 2.0]), Err(Error::Contract(_))));
    }

    #[test]
    fn l1_examples() {
        assert_eq!(l1_loss(&[1.0], &[1.0]).unwrap(), 0.0);
        assert_eq!(l1_loss(&[1.0, -1.0], &[0.0, 0.0]).unwrap(), 2.0);
        assert_eq!(l1_loss(&[3.0, 1.0], &[1.0, 2.0]).unwrap(), 3.0);
        assert!(l1_loss(&[1.0, 2.0], &[1.0]).is_err());
    }

    #[test]
    fn adam_zero_gradient_is_bit_identical() {
        let mut p = ParamStore::new(3);
        let id = p.add_random("w", 5).unwrap();
        let before = p.value(id).to_vec();
        p.zero_grads();
        let mut st = AdamState::default();
        for _ in 0..10 {
            adam_step(&mut p, &mut st).unwrap();
        }
        assert_eq!(p.value(id), &before[..]);
        assert_eq!(st.step_count, 10);
    }

    #[test]
    fn adam_first_step_moves_by_lr() {
        let mut p = ParamStore::new(0);
        let id = p.add("theta", vec![0.0], true).unwrap();
        p.set_grad(id, &[1.0]).unwrap();
        let mut st = AdamState::new(0.1);
        adam_step(&mut p, &mut st).unwrap();
        // mhat = 1, vhat = 1, step = lr / (1 + eps)
        let expected = -0.1 / (1.0 + 1e-8);
        assert!((p.value(id)[0] - expected).abs() < 1e-15);
    }

    #[test]
    fn adam_respects_trainable_flag() {
        let mut p = ParamStore::new(0);
        let a = p.add("a", vec![1.0], true).unwrap();
        let b = p.add("b", vec![1.0], false).unwrap();
        p.set_grad(a, &[1.0]).unwrap();
        p.set_grad(b, &[1.0]).unwrap();
        let mut st = AdamState::new(0.1);
        adam_step(&mut p, &mut st).unwrap();
        assert!(p.value(a)[0] < 1.0);
        assert_eq!(p.value(b)[0], 1.0);
    }

    #[test]
    fn adam_requires_gradients() {
        let mut p = ParamStore::new(0);
        p.add("a", vec![1.0], true).unwrap();
        let mut st = AdamState::default();
        assert!(matches!(adam_step(&mut p, &mut st), Err(Error::Contract(_))));
    }

    #[test]
    fn duplicate_names_rejected() {
        let mut p = ParamStore::new(0);
        p.add("a", vec![1.0], true).unwrap();
        assert!(p.add("a", vec![2.0], true).is_err());
    }

    #[test]
    fn gradcheck_examples() {
        let mut p = ParamStore::new(0);
        let id = p.add("theta", vec![3.0], true).unwrap();
        let loss = |s: &ParamStore| s.value(s.id("theta").unwrap())[0].powi(2);
        p.set_grad(id, &[6.0]).unwrap();
        assert!(finite_diff_gradcheck(loss, &p, 1e-5).unwrap() < 1e-6);

        p.set_grad(id, &[7.0]).unwrap();
        let err = finite_diff_gradcheck(loss, &p, 1e-5).unwrap();
        assert!((err - 1.0 / 6.0).abs() < 1e-6);

        p.set_grad(id, &[0.0]).unwrap();
        assert_eq!(finite_diff_gradcheck(|_| 4.0, &p, 1e-5).unwrap(), 0.0);
    }

    #[test]
    fn gradcheck_reports_non_finite() {
        let mut p = ParamStore::new(0);
        let id = p.add("x", vec![0.0], true).unwrap();
        p.set_grad(id, &[0.0]).unwrap();
        let err = finite_diff_gradcheck(|s| 1.0 / s.value(ParamId(0))[0].abs().min(0.0), &p, 1e-3);
        assert!(matches!(err, Err(Error::NonFinite { ref param, .. }) if param == "x"));
    }

    #[test]
    fn seeded_initialisation_is_deterministic() {
        let mut a = ParamStore::new(11);
        let mut b = ParamStore::new(11);
        let ia = a.add_random("w", 8).unwrap();
        let ib = b.add_random("w", 8).unwrap();
        assert_eq!(a.value(ia), b.value(ib));
        assert!(a.value(ia).iter().all(|v| v.abs() <= 0.5));
    }

    #[test]
    fn early_stop_triggers_on_plateau() {
        let mut es = EarlyStop { window: 5, min_improvement: 1e-12, history: Vec::new() };
        for i in 0..20 {
            assert!(!es.update(1.0 / (i + 1) as f64));
        }
        let mut stopped = false;
        for _ in 0..10 {
            stopped |= es.update(0.001);
        }
        assert!(stopped);
    }

    proptest! {
        #[test]
        fn losses_nonnegative_and_zero_iff_equal(
            v in proptest::collection::vec(-1e3f64..1e3, 1..20),
            d in proptest::collection::vec(-1.0f64..1.0, 1..20),
        ) {
            let n = v.len().min(d.len());
            let a = &v[..n];
            let b: Vec<f64> = a.iter().zip(&d[..n]).map(|(x, e)| x + e).collect();
            let mse = mse_loss(a, &b).unwrap();
            let l1 = l1_loss(a, &b).unwrap();
            prop_assert!(mse >= 0.0 && l1 >= 0.0);
            let same = a.iter().zip(&b).all(|(x, y)| x == y);
            prop_assert_eq!(mse == 0.0, same);
            prop_assert_eq!(l1 == 0.0, same);
            prop_assert_eq!(mse_loss(a, a).unwrap(), 0.0);
        }

        #[test]
        fn adam_keeps_second_moment_nonnegative(g in proptest::collection::vec(-10.0f64..10.0, 1..6)) {
            let mut p = ParamStore::new(1);
            let id = p.add("w", vec![0.0; g.len()], true).unwrap();
            let mut st = AdamState::default();
            for k in 0..3 {
                let gk: Vec<f64> = g.iter().map(|x| x * (k as f64 - 1.0)).collect();
                p.set_grad(id, &gk).unwrap();
                adam_step(&mut p, &mut st).unwrap();
            }
            prop_assert!(st.second_moment().iter().flatten().all(|v| *v >= 0.0));
        }
    }
}
