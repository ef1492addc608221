//! Quadrature rules with trainable nodes and weights.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{contract, Error, Result};
use crate::optim::{mse_loss, run_adam, ParamStore, TrainConfig, TrainingHistory};

/// Nodes are kept this far inside the open interval (−1, 1).
const NODE_MARGIN: f64 = 1e-9;

/// `F(a) = Σ_i c_i Σ_m a_m x_i^m`, trained so that `F(a) = ∫_{-1}^{1} Σ_m a_m x^m dx`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuadratureNet {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
    pub poly_degree: usize,
}

impl QuadratureNet {
    /// Net with `n_points` nodes trained on polynomials of degree `2n − 1`.
    pub fn new(n_points: usize) -> Result<Self> {
        if n_points == 0 {
            return Err(contract("at least one quadrature point is required"));
        }
        Self::with_degree(n_points, 2 * n_points - 1)
    }

    pub fn with_degree(n_points: usize, poly_degree: usize) -> Result<Self> {
        if n_points == 0 {
            return Err(contract("at least one quadrature point is required"));
        }
        Ok(Self { nodes: vec![0.0; n_points], weights: vec![0.0; n_points], poly_degree })
    }

    pub fn n_points(&self) -> usize {
        self.nodes.len()
    }

    /// Forward map for one coefficient vector.
    pub fn forward(&self, coeffs: &[f64]) -> f64 {
        self.nodes.iter().zip(&self.weights).map(|(&x, c)| c * horner(coeffs, x)).sum()
    }

    /// Nodes and weights ordered by node position.
    pub fn sorted(&self) -> (Vec<f64>, Vec<f64>) {
        let mut idx: Vec<usize> = (0..self.n_points()).collect();
        idx.sort_by(|&a, &b| self.nodes[a].total_cmp(&self.nodes[b]));
        (idx.iter().map(|&i| self.nodes[i]).collect(), idx.iter().map(|&i| self.weights[i]).collect())
    }
}

fn horner(coeffs: &[f64], x: f64) -> f64 {
    coeffs.iter().rev().fold(0.0, |acc, a| acc * x + a)
}

fn horner_derivative(coeffs: &[f64], x: f64) -> f64 {
    coeffs.iter().enumerate().skip(1).rev().fold(0.0, |acc, (m, a)| acc * x + m as f64 * a)
}

/// Exact integral over [−1, 1] of `Σ_m a_m x^m`.
fn exact_integral(coeffs: &[f64]) -> f64 {
    coeffs.iter().enumerate().filter(|(m, _)| m % 2 == 0).map(|(m, a)| 2.0 * a / (m + 1) as f64).sum()
}

#[derive(Debug, Clone)]
pub struct QuadratureFit {
    pub net: QuadratureNet,
    pub history: TrainingHistory,
    pub samples: Vec<Vec<f64>>,
}

fn clamp_node(x: f64) -> f64 {
    x.clamp(-1.0 + NODE_MARGIN, 1.0 - NODE_MARGIN)
}

/// Loss and analytic gradients of the quadrature net on the given samples.
fn loss_and_grad(nodes: &[f64], weights: &[f64], samples: &[Vec<f64>]) -> Result<(f64, Vec<f64>, Vec<f64>)> {
    let n = samples.len() as f64;
    let mut gx = vec![0.0; nodes.len()];
    let mut gc = vec![0.0; nodes.len()];
    let mut preds = Vec::with_capacity(samples.len());
    let mut targets = Vec::with_capacity(samples.len());
    for a in samples {
        let pred: f64 = nodes.iter().zip(weights).map(|(&x, c)| c * horner(a, x)).sum();
        let target = exact_integral(a);
        let r = 2.0 * (pred - target) / n;
        for i in 0..nodes.len() {
            gc[i] += r * horner(a, nodes[i]);
            gx[i] += r * weights[i] * horner_derivative(a, nodes[i]);
        }
        preds.push(pred);
        targets.push(target);
    }
    Ok((mse_loss(&preds, &targets)?, gx, gc))
}

/// Fits nodes and weights to exact integrals of random polynomials.
///
/// Coefficients are drawn uniformly in [−1, 1] from a generator seeded with
/// `seed`. Nodes start evenly spread over (−1, 1) with a small seeded jitter
/// and weights start at `2/n`; nodes are clamped into the open interval after
/// every update.
pub fn train_quadrature(net: &QuadratureNet, n_samples: usize, cfg: &TrainConfig, seed: u64) -> Result<QuadratureFit> {
    let n = net.n_points();
    if net.poly_degree + 1 < 2 * n {
        return Err(Error::UnderDetermined(format!(
            "degree-{} training polynomials do not determine a {n}-point rule (need degree {})",
            net.poly_degree,
            2 * n - 1
        )));
    }
    if n_samples == 0 {
        return Err(Error::Empty("quadrature training samples".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let samples: Vec<Vec<f64>> =
        (0..n_samples).map(|_| (0..=net.poly_degree).map(|_| rng.random_range(-1.0..=1.0)).collect()).collect();
    let jitter = 0.1 / n as f64;
    let init_nodes: Vec<f64> = (0..n)
        .map(|i| {
            let x = -1.0 + (2 * i + 1) as f64 / n as f64;
            clamp_node(x + rng.random_range(-jitter..=jitter))
        })
        .collect();

    let mut params = ParamStore::new(seed);
    let xs = params.add("nodes", init_nodes, true)?;
    let cs = params.add("weights", vec![2.0 / n as f64; n], true)?;
    let history = run_adam(&mut params, cfg, |p| {
        for x in p.value_mut(xs) {
            *x = clamp_node(*x);
        }
        let (loss, gx, gc) = loss_and_grad(p.value(xs), p.value(cs), &samples)?;
        p.set_grad(xs, &gx)?;
        p.set_grad(cs, &gc)?;
        Ok(loss)
    })?;
    let mut trained = net.clone();
    trained.nodes = params.value(xs).iter().map(|&x| clamp_node(x)).collect();
    trained.weights = params.value(cs).to_vec();
    Ok(QuadratureFit { net: trained, history, samples })
}

/// Gauss-Legendre nodes (ascending) and weights by Newton iteration on P_n.
pub fn gauss_oracle(n: usize) -> Result<(Vec<f64>, Vec<f64>)> {
    if !(1..=8).contains(&n) {
        return Err(contract(format!("Gauss-Legendre oracle supports 1 ≤ n ≤ 8, got {n}")));
    }
    Ok(gauss_legendre(n))
}

/// Gauss-Legendre rule of any order `n ≥ 1` (ascending nodes).
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    assert!(n >= 1, "Gauss-Legendre rule needs at least one point");
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    for i in 0..n {
        let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        for _ in 0..100 {
            let (p, d) = legendre(n, x);
            let dx = p / d;
            x -= dx;
            if dx.abs() < 1e-15 {
                break;
            }
        }
        let dp = legendre(n, x).1;
        nodes[n - 1 - i] = x;
        weights[n - 1 - i] = 2.0 / ((1.0 - x * x) * dp * dp);
    }
    (nodes, weights)
}

/// (P_n(x), P_n'(x)) by the three-term recurrence.
fn legendre(n: usize, x: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = x;
    if n == 0 {
        return (1.0, 0.0);
    }
    for k in 2..=n {
        let p2 = ((2 * k - 1) as f64 * x * p1 - (k - 1) as f64 * p0) / k as f64;
        p0 = p1;
        p1 = p2;
    }
    let d = n as f64 * (x * p1 - p0) / (x * x - 1.0);
    (p1, d)
}

/// `∫_a^b g(x) dx` by mapping the net's rule from [−1, 1].
pub fn integrate_interval(net: &QuadratureNet, g: impl Fn(f64) -> f64, a: f64, b: f64) -> Result<f64> {
    if !(b > a) {
        return Err(contract("upper limit must exceed lower limit"));
    }
    let half = 0.5 * (b - a);
    let mid = 0.5 * (a + b);
    Ok(half * net.nodes.iter().zip(&net.weights).map(|(&x, c)| c * g(half * x + mid)).sum::<f64>())
}
