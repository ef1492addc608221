//! Element interpolants composed from linear shape functions and patch
//! interpolants: Ñ_k(ξ) = Σ_i N_i(ξ) W^{i}_k(x(ξ)).

use super::mesh::Mesh;
use super::rpim::{rpim_patch_function, ConvPatchFunction, RpimCache};
use super::topology::{build_patch_topology, PatchTopology};
use crate::error::{contract, Result};

/// Values and physical gradients of an element's basis at one point.
#[derive(Debug, Clone, Default)]
pub struct ElementBasis {
    pub dofs: Vec<usize>,
    pub n: Vec<f64>,
    pub dndx: Vec<f64>,
    pub dndy: Vec<f64>,
    pub x: [f64; 2],
    pub det_j: f64,
}

impl ElementBasis {
    /// `Σ_k N_k u_k` and its gradient.
    pub fn interpolate(&self, u: &[f64]) -> (f64, [f64; 2]) {
        let mut v = 0.0;
        let mut g = [0.0; 2];
        for (k, &d) in self.dofs.iter().enumerate() {
            v += self.n[k] * u[d];
            g[0] += self.dndx[k] * u[d];
            g[1] += self.dndy[k] * u[d];
        }
        (v, g)
    }
}

/// A finite-element discretisation that can evaluate its element bases.
pub trait Discretization {
    fn dim(&self) -> usize;
    fn n_dofs(&self) -> usize;
    fn n_elements(&self) -> usize;
    /// Degrees of freedom carrying the homogeneous Dirichlet condition.
    fn boundary_dofs(&self) -> Vec<usize>;
    /// Degrees of freedom with support on element `e`, in the order used by [`Discretization::eval`].
    fn element_dofs(&self, e: usize) -> &[usize];
    /// Basis at natural coordinates `(ξ, η)` of element `e`.
    fn eval(&self, e: usize, xi: f64, eta: f64, out: &mut ElementBasis) -> Result<()>;
}

/// Convolution-enhanced interpolation space on a linear mesh.
#[derive(Debug, Clone)]
pub struct ChidennSpace {
    pub mesh: Mesh,
    pub topology: PatchTopology,
    pub a: f64,
    pub p: usize,
    /// One entry per node; `None` when `s == 0` (patch functions are the identity).
    patches: Vec<Option<ConvPatchFunction>>,
    /// For each element and each of its nodes, positions of that node's
    /// patch support inside the element's dof list.
    local_maps: Vec<Vec<Vec<usize>>>,
    /// Nodes whose patch could not carry order `p`.
    pub lowered_nodes: Vec<(usize, usize)>,
    pub distinct_patches: usize,
    pub max_condition: f64,
    pub regularized_patches: usize,
}

impl ChidennSpace {
    /// Builds all patch functions. `s = 0` gives plain linear finite elements
    /// for any `p`; otherwise `s ≥ p` is required.
    pub fn new(mesh: Mesh, s: usize, a: f64, p: usize) -> Result<Self> {
        if s > 0 && s < p {
            return Err(contract(format!("patch size s = {s} must be at least p = {p}")));
        }
        if s > 0 && !(a > 0.0) {
            return Err(contract("dilation must be positive"));
        }
        let topology = build_patch_topology(&mesh, s)?;
        let mut cache = RpimCache::new();
        let mut patches = Vec::with_capacity(mesh.n_nodes());
        let mut lowered_nodes = Vec::new();
        let mut max_condition: f64 = 0.0;
        let mut regularized_patches = 0;
        for node in 0..mesh.n_nodes() {
            if s == 0 {
                patches.push(None);
                continue;
            }
            let f = rpim_patch_function(&mesh, node, &topology.node_patches[node], s, a, p, &mut cache)?;
            if f.p < p {
                lowered_nodes.push((node, f.p));
            }
            max_condition = max_condition.max(f.condition());
            if f.regularized() {
                regularized_patches += 1;
            }
            patches.push(Some(f));
        }
        let local_maps = mesh
            .elements()
            .iter()
            .enumerate()
            .map(|(e, conn)| {
                let dofs = &topology.element_patches[e];
                conn.iter()
                    .map(|&i| {
                        topology.node_patches[i]
                            .iter()
                            .map(|k| dofs.binary_search(k).expect("node patch inside element patch"))
                            .collect()
                    })
                    .collect()
            })
            .collect();
        Ok(Self {
            mesh,
            topology,
            a,
            p,
            patches,
            local_maps,
            lowered_nodes,
            distinct_patches: cache.distinct_patches(),
            max_condition,
            regularized_patches,
        })
    }

    pub fn s(&self) -> usize {
        self.topology.s
    }

    pub fn patch(&self, node: usize) -> Option<&ConvPatchFunction> {
        self.patches.get(node).and_then(|p| p.as_ref())
    }
}

impl Discretization for ChidennSpace {
    fn dim(&self) -> usize {
        self.mesh.dim()
    }

    fn n_dofs(&self) -> usize {
        self.mesh.n_nodes()
    }

    fn n_elements(&self) -> usize {
        self.mesh.n_elements()
    }

    fn boundary_dofs(&self) -> Vec<usize> {
        self.mesh.boundary_nodes()
    }

    fn element_dofs(&self, e: usize) -> &[usize] {
        &self.topology.element_patches[e]
    }

    fn eval(&self, e: usize, xi: f64, eta: f64, out: &mut ElementBasis) -> Result<()> {
        combine_into(self, e, xi, eta, out)
    }
}

/// Composed interpolants of element `e` at natural coordinates `(ξ, η)`.
pub fn combine_interpolants(space: &ChidennSpace, e: usize, xi: f64, eta: f64) -> Result<ElementBasis> {
    let mut out = ElementBasis::default();
    combine_into(space, e, xi, eta, &mut out)?;
    Ok(out)
}

fn combine_into(space: &ChidennSpace, e: usize, xi: f64, eta: f64, out: &mut ElementBasis) -> Result<()> {
    let mesh = &space.mesh;
    if e >= mesh.n_elements() {
        return Err(crate::error::Error::Index(format!("element {e} out of range")));
    }
    let (n, dxi, deta) = mesh.shape(xi, eta);
    let j = mesh.jacobian(e, xi, eta);
    let (dndx, dndy): (Vec<f64>, Vec<f64>) = if mesh.dim() == 1 {
        (dxi.iter().map(|d| d / j[4]).collect(), vec![0.0; n.len()])
    } else {
        // Inverse of [[x_ξ, x_η], [y_ξ, y_η]] applied to natural derivatives.
        let inv = [j[3] / j[4], -j[2] / j[4], -j[1] / j[4], j[0] / j[4]];
        (
            dxi.iter().zip(&deta).map(|(a, b)| inv[0] * a + inv[1] * b).collect(),
            dxi.iter().zip(&deta).map(|(a, b)| inv[2] * a + inv[3] * b).collect(),
        )
    };
    let x = mesh.map(e, xi, eta);
    let dofs = &space.topology.element_patches[e];
    let m = dofs.len();
    out.dofs.clear();
    out.dofs.extend_from_slice(dofs);
    out.n.clear();
    out.n.resize(m, 0.0);
    out.dndx.clear();
    out.dndx.resize(m, 0.0);
    out.dndy.clear();
    out.dndy.resize(m, 0.0);
    out.x = x;
    out.det_j = j[4];
    let conn = &mesh.elements()[e];
    let mut w = Vec::new();
    let mut wx = Vec::new();
    let mut wy = Vec::new();
    for (loc, &node) in conn.iter().enumerate() {
        match &space.patches[node] {
            None if space.s() == 0 => {
                let pos = dofs.binary_search(&node).expect("element node in its patch");
                out.n[pos] += n[loc];
                out.dndx[pos] += dndx[loc];
                out.dndy[pos] += dndy[loc];
            }
            None => return Err(contract(format!("missing patch function for node {node}"))),
            Some(f) => {
                let len = f.len();
                w.resize(len, 0.0);
                wx.resize(len, 0.0);
                wy.resize(len, 0.0);
                f.eval_into(x, &mut w, &mut wx, &mut wy);
                for (jj, &pos) in space.local_maps[e][loc].iter().enumerate() {
                    out.n[pos] += n[loc] * w[jj];
                    out.dndx[pos] += dndx[loc] * w[jj] + n[loc] * wx[jj];
                    out.dndy[pos] += dndy[loc] * w[jj] + n[loc] * wy[jj];
                }
            }
        }
    }
    Ok(())
}
