//! Radial point interpolation on a nodal patch.
//!
//! The radial basis is the compactly supported cubic spline
//! φ(z) = 2/3 − 4z² + 4z³ (z ≤ ½), 4/3 − 4z + 4z² − 4z³/3 (z ≤ 1), 0 otherwise,
//! with z = r / (a·h). Monomials are evaluated in coordinates centred on the
//! patch node and scaled by the grid spacing.

use std::collections::HashMap;
use std::sync::Arc;

use nalgebra::DMatrix;

use super::mesh::Mesh;
use crate::error::{Error, Result};
use crate::linalg::condition_number;

/// Moment-matrix condition number that triggers ridge regularisation.
pub const RIDGE_CONDITION: f64 = 1e10;
/// Moment-matrix condition number above which a patch is rejected.
pub const MAX_CONDITION: f64 = 1e12;

/// Kernel value and `(dφ/dr)/r` at distance `r` for support radius `c`.
fn kernel(r: f64, c: f64) -> (f64, f64) {
    let z = r / c;
    if z <= 0.5 {
        (2.0 / 3.0 - 4.0 * z * z + 4.0 * z * z * z, (-8.0 + 12.0 * z) / (c * c))
    } else if z <= 1.0 {
        let v = 4.0 / 3.0 - 4.0 * z + 4.0 * z * z - 4.0 / 3.0 * z * z * z;
        (v, (-4.0 + 8.0 * z - 4.0 * z * z) / (c * r))
    } else {
        (0.0, 0.0)
    }
}

/// Exponent pairs of all monomials of total degree ≤ p (`dim == 1` uses x only).
pub fn monomial_exponents(dim: usize, p: usize) -> Vec<(u32, u32)> {
    let mut out = Vec::new();
    for k in 0..=p as u32 {
        if dim == 1 {
            out.push((k, 0));
        } else {
            for i in (0..=k).rev() {
                out.push((i, k - i));
            }
        }
    }
    out
}

fn powi(x: f64, k: u32) -> f64 {
    x.powi(k as i32)
}

/// Shape matrix shared by all patches with the same geometry signature.
#[derive(Debug)]
struct RpimShape {
    /// Row k holds the coefficients of W_k against `[φ_1..φ_n, monomials]`.
    coeffs: Vec<f64>,
    width: usize,
    condition: f64,
    regularized: bool,
}

/// Interpolants `W_j` of one nodal patch.
#[derive(Debug, Clone)]
pub struct ConvPatchFunction {
    pub center: usize,
    pub support: Vec<usize>,
    pub a: f64,
    /// Reproducing order actually used (lowered on truncated patches).
    pub p: usize,
    dim: usize,
    center_coord: [f64; 2],
    support_coords: Vec<[f64; 2]>,
    scale: [f64; 2],
    radius: f64,
    exponents: Vec<(u32, u32)>,
    shape: Arc<RpimShape>,
}

impl ConvPatchFunction {
    pub fn condition(&self) -> f64 {
        self.shape.condition
    }

    pub fn regularized(&self) -> bool {
        self.shape.regularized
    }

    pub fn len(&self) -> usize {
        self.support.len()
    }

    pub fn is_empty(&self) -> bool {
        self.support.is_empty()
    }

    /// Writes `W_j(x)`, `∂W_j/∂x`, `∂W_j/∂y` for every support node.
    pub fn eval_into(&self, x: [f64; 2], w: &mut [f64], wx: &mut [f64], wy: &mut [f64]) {
        let n = self.support.len();
        let width = self.shape.width;
        let mut v = vec![0.0; width];
        let mut vx = vec![0.0; width];
        let mut vy = vec![0.0; width];
        for (j, xj) in self.support_coords.iter().enumerate() {
            let dx = x[0] - xj[0];
            let dy = x[1] - xj[1];
            let r = (dx * dx + dy * dy).sqrt();
            let (phi, dphi_over_r) = kernel(r, self.radius);
            v[j] = phi;
            vx[j] = dphi_over_r * dx;
            vy[j] = dphi_over_r * dy;
        }
        let u = (x[0] - self.center_coord[0]) / self.scale[0];
        let t = if self.dim == 1 { 0.0 } else { (x[1] - self.center_coord[1]) / self.scale[1] };
        for (k, &(i, j)) in self.exponents.iter().enumerate() {
            v[n + k] = powi(u, i) * powi(t, j);
            vx[n + k] = if i > 0 { i as f64 * powi(u, i - 1) * powi(t, j) / self.scale[0] } else { 0.0 };
            vy[n + k] = if j > 0 { j as f64 * powi(u, i) * powi(t, j - 1) / self.scale[1] } else { 0.0 };
        }
        for k in 0..n {
            let row = &self.shape.coeffs[k * width..(k + 1) * width];
            let (mut a, mut b, mut c) = (0.0, 0.0, 0.0);
            for l in 0..width {
                a += row[l] * v[l];
                b += row[l] * vx[l];
                c += row[l] * vy[l];
            }
            w[k] = a;
            wx[k] = b;
            wy[k] = c;
        }
    }

    /// Convenience wrapper returning `(W, ∂W/∂x, ∂W/∂y)`.
    pub fn eval(&self, x: [f64; 2]) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
        let n = self.support.len();
        let (mut w, mut wx, mut wy) = (vec![0.0; n], vec![0.0; n], vec![0.0; n]);
        self.eval_into(x, &mut w, &mut wx, &mut wy);
        (w, wx, wy)
    }
}

/// Local polynomial order and the rounded, scaled node offsets from the patch centre.
type PatchKey = (usize, Vec<(i64, i64)>);

/// Builder that shares shape matrices between patches of identical geometry.
#[derive(Debug, Default)]
pub struct RpimCache {
    shapes: HashMap<PatchKey, Arc<RpimShape>>,
}

impl RpimCache {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn distinct_patches(&self) -> usize {
        self.shapes.len()
    }
}

/// Highest order a patch with these node positions supports.
fn supported_order(mesh: &Mesh, support: &[usize]) -> usize {
    let mut is: Vec<usize> = Vec::new();
    let mut js: Vec<usize> = Vec::new();
    for &n in support {
        let [i, j] = mesh.structured_index(n).unwrap_or([n, 0]);
        is.push(i);
        js.push(j);
    }
    is.sort_unstable();
    is.dedup();
    js.sort_unstable();
    js.dedup();
    if mesh.dim() == 1 {
        is.len() - 1
    } else {
        (is.len() - 1).min(js.len() - 1)
    }
}

/// Builds the patch interpolants of node `center` over `support` by solving
/// the moment system `[[R, P], [Pᵀ, 0]]`.
pub fn rpim_patch_function(
    mesh: &Mesh,
    center: usize,
    support: &[usize],
    s: usize,
    a: f64,
    p: usize,
    cache: &mut RpimCache,
) -> Result<ConvPatchFunction> {
    let dim = mesh.dim();
    let p_local = p.min(supported_order(mesh, support));
    let exponents = monomial_exponents(dim, p_local);
    let n = support.len();
    let m = exponents.len();
    if n < m {
        return Err(Error::UnderDetermined(format!(
            "patch of node {center} has {n} nodes but order {p_local} needs {m}"
        )));
    }
    let [hx, hy] = mesh.spacing();
    let scale = [hx, if dim == 1 { 1.0 } else { hy }];
    let h = if dim == 1 { hx } else { 0.5 * (hx + hy) };
    let radius = a * h;
    let xc = mesh.nodes()[center];
    let coords: Vec<[f64; 2]> = support.iter().map(|&j| mesh.nodes()[j]).collect();
    let signature: Vec<(i64, i64)> = coords
        .iter()
        .map(|c| (((c[0] - xc[0]) / scale[0] * 1e10).round() as i64, ((c[1] - xc[1]) / scale[1] * 1e10).round() as i64))
        .collect();
    let key = (p_local, signature);
    let shape = match cache.shapes.get(&key) {
        Some(s) => s.clone(),
        None => {
            let built = Arc::new(build_shape(&coords, xc, scale, radius, &exponents, (a, s, p))?);
            cache.shapes.insert(key, built.clone());
            built
        }
    };
    Ok(ConvPatchFunction {
        center,
        support: support.to_vec(),
        a,
        p: p_local,
        dim,
        center_coord: xc,
        support_coords: coords,
        scale,
        radius,
        exponents,
        shape,
    })
}

fn build_shape(
    coords: &[[f64; 2]],
    xc: [f64; 2],
    scale: [f64; 2],
    radius: f64,
    exponents: &[(u32, u32)],
    (a, s, p): (f64, usize, usize),
) -> Result<RpimShape> {
    let n = coords.len();
    let m = exponents.len();
    let width = n + m;
    let mut g = DMatrix::<f64>::zeros(width, width);
    for i in 0..n {
        for j in 0..n {
            let dx = coords[i][0] - coords[j][0];
            let dy = coords[i][1] - coords[j][1];
            g[(i, j)] = kernel((dx * dx + dy * dy).sqrt(), radius).0;
        }
        let u = (coords[i][0] - xc[0]) / scale[0];
        let t = (coords[i][1] - xc[1]) / scale[1];
        for (k, &(ei, ej)) in exponents.iter().enumerate() {
            let val = powi(u, ei) * powi(t, ej);
            g[(i, n + k)] = val;
            g[(n + k, i)] = val;
        }
    }
    let mut condition = condition_number(&g);
    if !(condition <= MAX_CONDITION) {
        return Err(Error::IllConditioned { a, s, p, cond: condition });
    }
    let regularized = condition > RIDGE_CONDITION;
    if regularized {
        let ridge = 1e-12 * (0..n).map(|i| g[(i, i)]).sum::<f64>();
        for i in 0..n {
            g[(i, i)] += ridge;
        }
        condition = condition_number(&g);
    }
    let mut rhs = DMatrix::<f64>::zeros(width, n);
    for i in 0..n {
        rhs[(i, i)] = 1.0;
    }
    let lu = g.lu();
    let sol = lu.solve(&rhs).ok_or(Error::IllConditioned { a, s, p, cond: f64::INFINITY })?;
    // sol is G⁻¹ restricted to the first n columns; W = solᵀ v.
    let mut coeffs = vec![0.0; n * width];
    for k in 0..n {
        for l in 0..width {
            coeffs[k * width + l] = sol[(l, k)];
        }
    }
    let shape = RpimShape { coeffs, width, condition, regularized };
    if regularized {
        verify_delta(&shape, coords, xc, scale, radius, exponents).map_err(|_| Error::IllConditioned {
            a,
            s,
            p,
            cond: condition,
        })?;
    }
    Ok(shape)
}

fn verify_delta(
    shape: &RpimShape,
    coords: &[[f64; 2]],
    xc: [f64; 2],
    scale: [f64; 2],
    radius: f64,
    exponents: &[(u32, u32)],
) -> std::result::Result<(), ()> {
    let n = coords.len();
    for (l, xl) in coords.iter().enumerate() {
        let mut v = vec![0.0; shape.width];
        for (j, xj) in coords.iter().enumerate() {
            v[j] = kernel(((xl[0] - xj[0]).powi(2) + (xl[1] - xj[1]).powi(2)).sqrt(), radius).0;
        }
        let u = (xl[0] - xc[0]) / scale[0];
        let t = (xl[1] - xc[1]) / scale[1];
        for (k, &(i, j)) in exponents.iter().enumerate() {
            v[n + k] = powi(u, i) * powi(t, j);
        }
        for k in 0..n {
            let w: f64 = shape.coeffs[k * shape.width..(k + 1) * shape.width].iter().zip(&v).map(|(a, b)| a * b).sum();
            let target = if k == l { 1.0 } else { 0.0 };
            if (w - target).abs() > 1e-8 {
                return Err(());
            }
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::chidenn::topology::build_patch_topology;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn patch(mesh: &Mesh, node: usize, s: usize, a: f64, p: usize) -> ConvPatchFunction {
        let topo = build_patch_topology(mesh, s).unwrap();
        let mut cache = RpimCache::new();
        rpim_patch_function(mesh, node, &topo.node_patches[node], s, a, p, &mut cache).unwrap()
    }

    #[test]
    fn kernel_is_continuous_at_branch_points() {
        let c = 2.0;
        for z in [0.5, 1.0] {
            let lo = kernel(z * c - 1e-12, c).0;
            let hi = kernel(z * c + 1e-12, c).0;
            assert!((lo - hi).abs() < 1e-10);
        }
        assert_eq!(kernel(2.5, 2.0).0, 0.0);
    }

    #[test]
    fn kronecker_delta_and_reproduction_in_1d() {
        let mesh = Mesh::interval(0.0, 10.0, 10).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        for p in 1..=3 {
            let f = patch(&mesh, 5, 3, 30.0, p);
            for (l, &node) in f.support.iter().enumerate() {
                let (w, _, _) = f.eval(mesh.nodes()[node]);
                for (k, wk) in w.iter().enumerate() {
                    assert!((wk - if k == l { 1.0 } else { 0.0 }).abs() < 1e-8);
                }
            }
            for _ in 0..10 {
                let x = rng.random_range(2.0..8.0);
                let (w, wx, _) = f.eval([x, 0.0]);
                for deg in 0..=p as i32 {
                    let q: f64 = f.support.iter().zip(&w).map(|(&j, w)| w * mesh.nodes()[j][0].powi(deg)).sum();
                    assert!((q - x.powi(deg)).abs() < 1e-8 * x.powi(deg).max(1.0), "p={p} deg={deg}");
                    let dq: f64 = f.support.iter().zip(&wx).map(|(&j, w)| w * mesh.nodes()[j][0].powi(deg)).sum();
                    let exact = if deg == 0 { 0.0 } else { deg as f64 * x.powi(deg - 1) };
                    assert!((dq - exact).abs() < 1e-7 * exact.abs().max(1.0));
                }
            }
        }
    }

    #[test]
    fn two_dimensional_patch_reproduces_cubics() {
        let mesh = Mesh::rectangle([0.0, 0.0], [1.0, 1.0], 8, 8).unwrap();
        let f = patch(&mesh, 4 * 9 + 4, 3, 30.0, 3);
        assert_eq!(f.len(), 49);
        assert!(f.condition() < MAX_CONDITION);
        let x = [0.43, 0.61];
        let (w, wx, wy) = f.eval(x);
        for (i, j) in monomial_exponents(2, 3) {
            let q = |p: [f64; 2]| p[0].powi(i as i32) * p[1].powi(j as i32);
            let approx: f64 = f.support.iter().zip(&w).map(|(&n, w)| w * q(mesh.nodes()[n])).sum();
            assert!((approx - q(x)).abs() < 1e-8);
            let gx: f64 = f.support.iter().zip(&wx).map(|(&n, w)| w * q(mesh.nodes()[n])).sum();
            let gy: f64 = f.support.iter().zip(&wy).map(|(&n, w)| w * q(mesh.nodes()[n])).sum();
            let ex = if i > 0 { i as f64 * x[0].powi(i as i32 - 1) * x[1].powi(j as i32) } else { 0.0 };
            let ey = if j > 0 { j as f64 * x[0].powi(i as i32) * x[1].powi(j as i32 - 1) } else { 0.0 };
            assert!((gx - ex).abs() < 1e-6 && (gy - ey).abs() < 1e-6);
        }
    }

    #[test]
    fn truncated_patch_lowers_order() {
        let mesh = Mesh::interval(0.0, 1.0, 2).unwrap();
        let f = patch(&mesh, 0, 3, 30.0, 3);
        assert_eq!(f.support, vec![0, 1, 2]);
        assert_eq!(f.p, 2);
    }

    #[test]
    fn interior_patches_share_a_shape_matrix() {
        let mesh = Mesh::rectangle([0.0, 0.0], [1.0, 1.0], 10, 10).unwrap();
        let topo = build_patch_topology(&mesh, 2).unwrap();
        let mut cache = RpimCache::new();
        for n in [5 * 11 + 5, 5 * 11 + 6, 6 * 11 + 5] {
            rpim_patch_function(&mesh, n, &topo.node_patches[n], 2, 30.0, 2, &mut cache).unwrap();
        }
        assert_eq!(cache.distinct_patches(), 1);
    }

    #[test]
    fn huge_dilation_is_rejected_as_ill_conditioned() {
        let mesh = Mesh::rectangle([0.0, 0.0], [1.0, 1.0], 8, 8).unwrap();
        let topo = build_patch_topology(&mesh, 3).unwrap();
        let mut cache = RpimCache::new();
        let n = 4 * 9 + 4;
        let err = rpim_patch_function(&mesh, n, &topo.node_patches[n], 3, 1e6, 3, &mut cache).unwrap_err();
        assert!(matches!(err, Error::IllConditioned { s: 3, p: 3, .. }), "{err:?}");
    }
}
