//! Periodic Green operator, interaction tensor and the clusterwise
//! Lippmann-Schwinger system.

use nalgebra::{DMatrix, DVector};
use rustfft::num_complex::Complex;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use super::domain::MicroDomain;
use super::kmeans::ClusterPartition;
use crate::error::{contract, Error, Result};

/// Applies Γ⁰ to each field: multiplier 1/C⁰ on every nonzero frequency, 0 on the mean.
pub fn apply_green(fields: &[Vec<f64>], c0: f64) -> Result<Vec<Vec<f64>>> {
    if !(c0 > 0.0) {
        return Err(contract(format!("reference stiffness must be positive, got {c0}")));
    }
    let Some(n) = fields.first().map(Vec::len) else { return Ok(Vec::new()) };
    let mut planner = FftPlanner::<f64>::new();
    let fwd = planner.plan_fft_forward(n);
    let inv = planner.plan_fft_inverse(n);
    let mut out = Vec::with_capacity(fields.len());
    for f in fields {
        if f.len() != n {
            return Err(contract("all fields must share the grid"));
        }
        let mut buf: Vec<Complex<f64>> = f.iter().map(|&v| Complex::new(v, 0.0)).collect();
        fwd.process(&mut buf);
        buf[0] = Complex::new(0.0, 0.0);
        let scale = 1.0 / (c0 * n as f64);
        for z in buf.iter_mut().skip(1) {
            *z *= scale;
        }
        inv.process(&mut buf);
        out.push(buf.iter().map(|z| z.re).collect());
    }
    Ok(out)
}

/// D^IJ: cluster-I average of Γ⁰ applied to the indicator of cluster J.
#[derive(Debug, Clone, PartialEq)]
pub struct InteractionTensor {
    pub d: DMatrix<f64>,
    pub reference_stiffness: f64,
}

impl InteractionTensor {
    /// max_I |Σ_J D^IJ w| for a uniform polarization w.
    pub fn constant_defect(&self, w: f64) -> f64 {
        (&self.d * DVector::from_element(self.d.ncols(), w)).amax()
    }
}

pub fn interaction_tensor(partition: &ClusterPartition, c0: f64) -> Result<InteractionTensor> {
    let k = partition.k;
    let n = partition.labels.len();
    let indicators: Vec<Vec<f64>> =
        (0..k).map(|j| partition.labels.iter().map(|&l| if l == j { 1.0 } else { 0.0 }).collect()).collect();
    let responses = apply_green(&indicators, c0)?;
    let counts = partition.counts();
    let mut d = DMatrix::zeros(k, k);
    for (j, r) in responses.iter().enumerate() {
        for i in 0..n {
            d[(partition.labels[i], j)] += r[i];
        }
    }
    for (i, &c) in counts.iter().enumerate() {
        d.row_mut(i).scale_mut(1.0 / c as f64);
    }
    Ok(InteractionTensor { d, reference_stiffness: c0 })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScaMethod {
    Direct,
    /// Fixed-point sweeps, replaced by the direct solve if they do not converge.
    FixedPoint {
        max_iter: usize,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScaSolution {
    /// Cluster strains Δε^I.
    pub strains: Vec<f64>,
    /// Far-field strain Δε⁰.
    pub far_field: f64,
    /// Relative residual of the clustered equation.
    pub residual: f64,
    pub iterations: usize,
    /// True when a requested fixed point diverged and the direct solve was used.
    pub fell_back: bool,
}

fn residual(t: &InteractionTensor, c: &[f64], eps: &DVector<f64>, far: f64) -> f64 {
    let pol = DVector::from_iterator(c.len(), c.iter().zip(eps.iter()).map(|(ci, e)| (ci - t.reference_stiffness) * e));
    let r = eps + &t.d * pol - DVector::from_element(c.len(), far);
    r.amax() / eps.amax().max(f64::MIN_POSITIVE)
}

/// Solves Δε^I + Σ_J D^IJ (C^J − C⁰) Δε^J = Δε⁰ with Σ c^I Δε^I = ε̄.
pub fn sca_solve(
    partition: &ClusterPartition,
    tensor: &InteractionTensor,
    strain: f64,
    method: ScaMethod,
) -> Result<ScaSolution> {
    let k = partition.k;
    if tensor.d.nrows() != k {
        return Err(contract("interaction tensor and partition sizes differ"));
    }
    let c = &partition.stiffness;
    let c0 = tensor.reference_stiffness;
    let mut fell_back = false;
    if let ScaMethod::FixedPoint { max_iter } = method {
        // Σ_I c^I D^IJ = 0, so the far-field strain of every sweep is ε̄.
        let mut eps = DVector::from_element(k, strain);
        for it in 1..=max_iter {
            let pol = DVector::from_iterator(k, c.iter().zip(eps.iter()).map(|(ci, e)| (ci - c0) * e));
            let next = DVector::from_element(k, strain) - &tensor.d * pol;
            let change = (&next - &eps).amax() / next.amax().max(f64::MIN_POSITIVE);
            eps = next;
            if !change.is_finite() {
                break;
            }
            if change < 1e-12 {
                let residual = residual(tensor, c, &eps, strain);
                if residual < 1e-10 {
                    return Ok(ScaSolution {
                        strains: eps.iter().copied().collect(),
                        far_field: strain,
                        residual,
                        iterations: it,
                        fell_back,
                    });
                }
            }
        }
        fell_back = true;
    }
    let mut m = DMatrix::zeros(k + 1, k + 1);
    let mut rhs = DVector::zeros(k + 1);
    for i in 0..k {
        for j in 0..k {
            m[(i, j)] = tensor.d[(i, j)] * (c[j] - c0);
        }
        m[(i, i)] += 1.0;
        m[(i, k)] = -1.0;
        m[(k, i)] = partition.fractions[i];
    }
    rhs[k] = strain;
    let x = m.lu().solve(&rhs).ok_or_else(|| Error::Singular("clustered Lippmann-Schwinger system".into()))?;
    let eps = x.rows(0, k).into_owned();
    let residual = residual(tensor, c, &eps, x[k]);
    Ok(ScaSolution { strains: eps.iter().copied().collect(), far_field: x[k], residual, iterations: 1, fell_back })
}

/// Cluster averages of the exact pointwise strain under applied strain ε̄.
pub fn analytic_cluster_strain(domain: &MicroDomain, partition: &ClusterPartition, strain: f64) -> Vec<f64> {
    partition.cluster_average(&domain.exact_strain(strain))
}

/// ‖a − b‖₂ / ‖b‖₂.
pub fn relative_l2(a: &[f64], b: &[f64]) -> f64 {
    let num: f64 = a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum();
    let den: f64 = b.iter().map(|y| y * y).sum();
    (num / den).sqrt()
}
