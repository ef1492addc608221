//! Graph kernel network on cluster centroids.
//!
//! v⁰ = lift(a), v^{t+1}(x) = σ(W v^t(x) + mean_{y∈N(x)} K(x, y, C(x), C(y)) v^t(y)),
//! output = project(v^L). W and the kernel network are shared by all layers.
//! Square matrices (W and each kernel value) are stored column-major.

use serde::{Deserialize, Serialize};

use super::dataset::GraphSample;
use crate::error::{contract, Result};
use crate::optim::{ParamId, ParamStore};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    Softplus,
    Identity,
}

impl Activation {
    fn value(self, z: f64) -> f64 {
        match self {
            Activation::Softplus => {
                if z > 30.0 {
                    z
                } else {
                    z.exp().ln_1p()
                }
            }
            Activation::Identity => z,
        }
    }

    fn slope(self, z: f64) -> f64 {
        match self {
            Activation::Softplus => 1.0 / (1.0 + (-z).exp()),
            Activation::Identity => 1.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Neighborhood {
    /// Centroids within the radius, self included; sparse nodes fall back to nearest per side.
    Radius,
    /// Self plus the nearest `per_side` centroids on each side.
    NearestPerSide,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GknConfig {
    pub width: usize,
    pub layers: usize,
    pub kernel_hidden: usize,
    pub radius: f64,
    pub neighborhood: Neighborhood,
    /// Radius neighborhoods smaller than this use the nearest-per-side rule.
    pub min_members: usize,
    pub per_side: usize,
    /// Coordinates are divided by this before entering the network.
    pub length_scale: f64,
    pub activation: Activation,
}

impl Default for GknConfig {
    fn default() -> Self {
        Self {
            width: 16,
            layers: 6,
            kernel_hidden: 32,
            radius: 2.0,
            neighborhood: Neighborhood::Radius,
            min_members: 3,
            per_side: 2,
            length_scale: 10.0,
            activation: Activation::Softplus,
        }
    }
}

const N_ATTR: usize = 3;

/// Dot product with four independent partial sums so the loop vectorizes.
fn dot(a: &[f64], b: &[f64]) -> f64 {
    let mut acc = [0.0; 4];
    let ca = a.chunks_exact(4);
    let cb = b.chunks_exact(4);
    let tail: f64 = ca.remainder().iter().zip(cb.remainder()).map(|(x, y)| x * y).sum();
    for (x, y) in ca.zip(cb) {
        for l in 0..4 {
            acc[l] += x[l] * y[l];
        }
    }
    acc[0] + acc[1] + acc[2] + acc[3] + tail
}

/// y += alpha·x.
fn axpy(y: &mut [f64], alpha: f64, x: &[f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}
const N_EDGE: usize = 4;

#[derive(Debug, Clone, Copy)]
struct Ids {
    lift_w: ParamId,
    lift_b: ParamId,
    k_w1: ParamId,
    k_b1: ParamId,
    k_w2: ParamId,
    k_b2: ParamId,
    w: ParamId,
    proj_w: ParamId,
    proj_b: ParamId,
}

#[derive(Debug, Clone)]
pub struct GraphKernelNet {
    pub config: GknConfig,
    pub params: ParamStore,
    ids: Ids,
}

/// Neighbor lists and edge features of one set of centroids.
#[derive(Debug, Clone)]
pub struct Graph {
    pub x: Vec<f64>,
    pub stiffness: Vec<f64>,
    pub neighbors: Vec<Vec<usize>>,
    /// (i, j) per edge in node-major order.
    edges: Vec<(usize, usize)>,
    /// First edge of node i.
    offsets: Vec<usize>,
}

impl Graph {
    pub fn n_edges(&self) -> usize {
        self.edges.len()
    }
}

struct KernelCache {
    pre: Vec<f64>,
    hid: Vec<f64>,
    k: Vec<f64>,
}

/// Latent states of every layer: v[t] and pre-activations z[t], node-major.
#[derive(Debug, Clone)]
pub struct ForwardTrace {
    pub v: Vec<Vec<f64>>,
    pub z: Vec<Vec<f64>>,
    pub output: Vec<f64>,
}

/// Accumulated gradients, one slot per parameter entry.
struct Grads {
    lift_w: Vec<f64>,
    lift_b: Vec<f64>,
    k_w1: Vec<f64>,
    k_b1: Vec<f64>,
    k_w2: Vec<f64>,
    k_b2: Vec<f64>,
    w: Vec<f64>,
    proj_w: Vec<f64>,
    proj_b: Vec<f64>,
}

fn nearest_per_side(x: &[f64], i: usize, per_side: usize) -> Vec<usize> {
    let mut left: Vec<usize> = (0..x.len()).filter(|&j| j != i && (x[j], j) < (x[i], i)).collect();
    let mut right: Vec<usize> = (0..x.len()).filter(|&j| j != i && (x[j], j) > (x[i], i)).collect();
    left.sort_by(|&a, &b| (x[i] - x[a]).total_cmp(&(x[i] - x[b])).then(a.cmp(&b)));
    right.sort_by(|&a, &b| (x[a] - x[i]).total_cmp(&(x[b] - x[i])).then(a.cmp(&b)));
    let mut n = vec![i];
    n.extend(left.into_iter().take(per_side));
    n.extend(right.into_iter().take(per_side));
    n.sort_unstable();
    n
}

impl GraphKernelNet {
    pub fn new(config: GknConfig, seed: u64) -> Result<Self> {
        if config.width == 0 || config.layers == 0 || config.kernel_hidden == 0 {
            return Err(contract("width, layers and kernel_hidden must be positive"));
        }
        if !(config.radius >= 0.0 && config.length_scale > 0.0) {
            return Err(contract("radius must be non-negative and length_scale positive"));
        }
        let d = config.width;
        let h = config.kernel_hidden;
        let mut p = ParamStore::new(seed);
        let ids = Ids {
            lift_w: p.add_uniform("lift_w", d * N_ATTR, 1.0)?,
            lift_b: p.add_uniform("lift_b", d, 0.5)?,
            k_w1: p.add_uniform("kernel_w1", h * N_EDGE, 1.0)?,
            k_b1: p.add_uniform("kernel_b1", h, 0.5)?,
            k_w2: p.add_uniform("kernel_w2", d * d * h, (3.0 / (h * d) as f64).sqrt())?,
            k_b2: p.add("kernel_b2", vec![0.0; d * d], true)?,
            w: p.add_uniform("w", d * d, (3.0 / d as f64).sqrt())?,
            proj_w: p.add("proj_w", vec![0.0; d], true)?,
            proj_b: p.add("proj_b", vec![0.0], true)?,
        };
        Ok(Self { config, params: p, ids })
    }

    pub fn width(&self) -> usize {
        self.config.width
    }

    pub fn n_parameters(&self) -> usize {
        self.params.n_trainable()
    }

    pub fn neighborhoods(&self, x: &[f64]) -> Vec<Vec<usize>> {
        let c = &self.config;
        (0..x.len())
            .map(|i| match c.neighborhood {
                Neighborhood::NearestPerSide => nearest_per_side(x, i, c.per_side),
                Neighborhood::Radius => {
                    let n: Vec<usize> = (0..x.len()).filter(|&j| j == i || (x[j] - x[i]).abs() <= c.radius).collect();
                    if n.len() < c.min_members {
                        nearest_per_side(x, i, c.per_side)
                    } else {
                        n
                    }
                }
            })
            .collect()
    }

    pub fn graph(&self, x: &[f64], stiffness: &[f64]) -> Result<Graph> {
        if x.len() != stiffness.len() || x.is_empty() {
            return Err(contract("a graph needs one stiffness per centroid"));
        }
        let neighbors = self.neighborhoods(x);
        let mut edges = Vec::new();
        let mut offsets = Vec::with_capacity(x.len() + 1);
        for (i, n) in neighbors.iter().enumerate() {
            offsets.push(edges.len());
            edges.extend(n.iter().map(|&j| (i, j)));
        }
        offsets.push(edges.len());
        Ok(Graph { x: x.to_vec(), stiffness: stiffness.to_vec(), neighbors, edges, offsets })
    }

    fn edge_features(&self, g: &Graph, e: usize) -> [f64; N_EDGE] {
        let (i, j) = g.edges[e];
        let s = self.config.length_scale;
        [g.x[i] / s, g.x[j] / s, g.stiffness[i], g.stiffness[j]]
    }

    fn kernels(&self, g: &Graph) -> KernelCache {
        let d2 = self.config.width * self.config.width;
        let h = self.config.kernel_hidden;
        let w1 = self.params.value(self.ids.k_w1);
        let b1 = self.params.value(self.ids.k_b1);
        let w2 = self.params.value(self.ids.k_w2);
        let b2 = self.params.value(self.ids.k_b2);
        let ne = g.n_edges();
        let mut pre = vec![0.0; ne * h];
        let mut hid = vec![0.0; ne * h];
        let mut k = vec![0.0; ne * d2];
        for e in 0..ne {
            let f = self.edge_features(g, e);
            for q in 0..h {
                let mut s = b1[q];
                for r in 0..N_EDGE {
                    s += w1[q * N_EDGE + r] * f[r];
                }
                pre[e * h + q] = s;
                hid[e * h + q] = Activation::Softplus.value(s);
            }
            let he = &hid[e * h..(e + 1) * h];
            for (m, km) in k[e * d2..(e + 1) * d2].iter_mut().enumerate() {
                *km = b2[m] + dot(&w2[m * h..(m + 1) * h], he);
            }
        }
        KernelCache { pre, hid, k }
    }

    fn attributes(&self, g: &Graph, strain: f64, i: usize) -> [f64; N_ATTR] {
        [g.x[i] / self.config.length_scale, g.stiffness[i], strain]
    }

    /// Mean-kernel term (1/|N(x)|) Σ_y K(x, y) v(y) for node-major latent states `v`.
    pub fn aggregate(&self, g: &Graph, v: &[f64]) -> Vec<f64> {
        let kc = self.kernels(g);
        self.aggregate_cached(g, &kc, v)
    }

    fn aggregate_cached(&self, g: &Graph, kc: &KernelCache, v: &[f64]) -> Vec<f64> {
        let d = self.config.width;
        let n = g.x.len();
        let mut out = vec![0.0; n * d];
        for i in 0..n {
            let inv = 1.0 / (g.offsets[i + 1] - g.offsets[i]) as f64;
            let oi = &mut out[i * d..(i + 1) * d];
            for e in g.offsets[i]..g.offsets[i + 1] {
                let j = g.edges[e].1;
                let ke = &kc.k[e * d * d..(e + 1) * d * d];
                let vj = &v[j * d..(j + 1) * d];
                for b in 0..d {
                    axpy(oi, inv * vj[b], &ke[b * d..(b + 1) * d]);
                }
            }
        }
        out
    }

    fn forward_cached(&self, g: &Graph, kc: &KernelCache, strain: f64) -> ForwardTrace {
        let d = self.config.width;
        let n = g.x.len();
        let act = self.config.activation;
        let lw = self.params.value(self.ids.lift_w);
        let lb = self.params.value(self.ids.lift_b);
        let w = self.params.value(self.ids.w);
        let mut v0 = vec![0.0; n * d];
        for i in 0..n {
            let a = self.attributes(g, strain, i);
            for r in 0..d {
                v0[i * d + r] = lb[r] + (0..N_ATTR).map(|c| lw[r * N_ATTR + c] * a[c]).sum::<f64>();
            }
        }
        let mut vs = vec![v0];
        let mut zs = Vec::with_capacity(self.config.layers);
        for _ in 0..self.config.layers {
            let v = vs.last().expect("lifted state");
            let mut z = self.aggregate_cached(g, kc, v);
            for i in 0..n {
                let vi = &v[i * d..(i + 1) * d];
                let zi = &mut z[i * d..(i + 1) * d];
                for b in 0..d {
                    axpy(zi, vi[b], &w[b * d..(b + 1) * d]);
                }
            }
            vs.push(z.iter().map(|&s| act.value(s)).collect());
            zs.push(z);
        }
        let pw = self.params.value(self.ids.proj_w);
        let pb = self.params.value(self.ids.proj_b)[0];
        let last = vs.last().expect("final state");
        let output = (0..n).map(|i| pb + dot(pw, &last[i * d..(i + 1) * d])).collect();
        ForwardTrace { v: vs, z: zs, output }
    }

    pub fn trace(&self, sample: &GraphSample) -> Result<ForwardTrace> {
        let g = self.graph(&sample.x, &sample.stiffness)?;
        let kc = self.kernels(&g);
        Ok(self.forward_cached(&g, &kc, sample.strain))
    }

    /// Predicted cluster strains.
    pub fn forward(&self, sample: &GraphSample) -> Result<Vec<f64>> {
        Ok(self.trace(sample)?.output)
    }

    fn zero_grads(&self) -> Grads {
        let z = |id| vec![0.0; self.params.value(id).len()];
        Grads {
            lift_w: z(self.ids.lift_w),
            lift_b: z(self.ids.lift_b),
            k_w1: z(self.ids.k_w1),
            k_b1: z(self.ids.k_b1),
            k_w2: z(self.ids.k_w2),
            k_b2: z(self.ids.k_b2),
            w: z(self.ids.w),
            proj_w: z(self.ids.proj_w),
            proj_b: z(self.ids.proj_b),
        }
    }

    /// Reverse pass of one sample; kernel gradients accumulate per edge in `dk`.
    fn backward(
        &self,
        g: &Graph,
        kc: &KernelCache,
        tr: &ForwardTrace,
        strain: f64,
        dy: &[f64],
        gr: &mut Grads,
        dk: &mut [f64],
    ) {
        let d = self.config.width;
        let n = g.x.len();
        let act = self.config.activation;
        let w = self.params.value(self.ids.w);
        let pw = self.params.value(self.ids.proj_w);
        let last = tr.v.last().expect("final state");
        let mut gv = vec![0.0; n * d];
        for i in 0..n {
            gr.proj_b[0] += dy[i];
            for a in 0..d {
                gr.proj_w[a] += dy[i] * last[i * d + a];
                gv[i * d + a] = dy[i] * pw[a];
            }
        }
        for t in (0..self.config.layers).rev() {
            let v = &tr.v[t];
            let gz: Vec<f64> = gv.iter().zip(&tr.z[t]).map(|(g, z)| g * act.slope(*z)).collect();
            let mut next = vec![0.0; n * d];
            for i in 0..n {
                let gzi = &gz[i * d..(i + 1) * d];
                let vi = &v[i * d..(i + 1) * d];
                for b in 0..d {
                    axpy(&mut gr.w[b * d..(b + 1) * d], vi[b], gzi);
                    next[i * d + b] += dot(&w[b * d..(b + 1) * d], gzi);
                }
                let inv = 1.0 / (g.offsets[i + 1] - g.offsets[i]) as f64;
                for e in g.offsets[i]..g.offsets[i + 1] {
                    let j = g.edges[e].1;
                    let vj = &v[j * d..(j + 1) * d];
                    let ke = &kc.k[e * d * d..(e + 1) * d * d];
                    let dke = &mut dk[e * d * d..(e + 1) * d * d];
                    for b in 0..d {
                        axpy(&mut dke[b * d..(b + 1) * d], inv * vj[b], gzi);
                        next[j * d + b] += inv * dot(&ke[b * d..(b + 1) * d], gzi);
                    }
                }
            }
            gv = next;
        }
        for i in 0..n {
            let a = self.attributes(g, strain, i);
            for r in 0..d {
                let gr_i = gv[i * d + r];
                gr.lift_b[r] += gr_i;
                for c in 0..N_ATTR {
                    gr.lift_w[r * N_ATTR + c] += gr_i * a[c];
                }
            }
        }
    }

    fn kernel_backward(&self, g: &Graph, kc: &KernelCache, dk: &[f64], gr: &mut Grads) {
        let d2 = self.config.width * self.config.width;
        let h = self.config.kernel_hidden;
        let w2 = self.params.value(self.ids.k_w2);
        let mut dh = vec![0.0; h];
        for e in 0..g.n_edges() {
            let dke = &dk[e * d2..(e + 1) * d2];
            if dke.iter().all(|v| *v == 0.0) {
                continue;
            }
            let he = &kc.hid[e * h..(e + 1) * h];
            dh.iter_mut().for_each(|v| *v = 0.0);
            for (m, &gm) in dke.iter().enumerate() {
                if gm == 0.0 {
                    continue;
                }
                gr.k_b2[m] += gm;
                axpy(&mut gr.k_w2[m * h..(m + 1) * h], gm, he);
                axpy(&mut dh, gm, &w2[m * h..(m + 1) * h]);
            }
            let f = self.edge_features(g, e);
            for q in 0..h {
                let dp = dh[q] * Activation::Softplus.slope(kc.pre[e * h + q]);
                gr.k_b1[q] += dp;
                for r in 0..N_EDGE {
                    gr.k_w1[q * N_EDGE + r] += dp * f[r];
                }
            }
        }
    }

    fn store_grads(&mut self, gr: Grads) -> Result<()> {
        let i = self.ids;
        for (id, g) in [
            (i.lift_w, gr.lift_w),
            (i.lift_b, gr.lift_b),
            (i.k_w1, gr.k_w1),
            (i.k_b1, gr.k_b1),
            (i.k_w2, gr.k_w2),
            (i.k_b2, gr.k_b2),
            (i.w, gr.w),
            (i.proj_w, gr.proj_w),
            (i.proj_b, gr.proj_b),
        ] {
            self.params.set_grad(id, &g)?;
        }
        Ok(())
    }

    /// Mean NMSE over a prepared set; with `grad`, also stores its gradient in `params`.
    pub fn nmse(&mut self, set: &PreparedSet, grad: bool) -> Result<f64> {
        if set.samples.is_empty() {
            return Err(contract("empty sample set"));
        }
        let scale = 1.0 / set.samples.len() as f64;
        let mut total = 0.0;
        let mut gr = self.zero_grads();
        for (gi, g) in set.graphs.iter().enumerate() {
            let members: Vec<&GraphSample> =
                set.samples.iter().zip(&set.graph_of).filter(|(_, &k)| k == gi).map(|(s, _)| s).collect();
            if members.is_empty() {
                continue;
            }
            let kc = self.kernels(g);
            let mut dk = if grad { vec![0.0; kc.k.len()] } else { Vec::new() };
            for s in members {
                let tr = self.forward_cached(g, &kc, s.strain);
                let den: f64 = s.target.iter().map(|t| t * t).sum();
                let num: f64 = tr.output.iter().zip(&s.target).map(|(y, t)| (y - t) * (y - t)).sum();
                total += scale * num / den;
                if grad {
                    let dy: Vec<f64> =
                        tr.output.iter().zip(&s.target).map(|(y, t)| 2.0 * scale * (y - t) / den).collect();
                    self.backward(g, &kc, &tr, s.strain, &dy, &mut gr, &mut dk);
                }
            }
            if grad {
                self.kernel_backward(g, &kc, &dk, &mut gr);
            }
        }
        if grad {
            self.store_grads(gr)?;
        }
        Ok(total)
    }

    pub fn prepare(&self, samples: &[GraphSample]) -> Result<PreparedSet> {
        let mut graphs: Vec<Graph> = Vec::new();
        let mut graph_of = Vec::with_capacity(samples.len());
        for s in samples {
            if s.target.len() != s.x.len() {
                return Err(contract("one target per node is required"));
            }
            let idx = match graphs.iter().position(|g| g.x == s.x && g.stiffness == s.stiffness) {
                Some(i) => i,
                None => {
                    graphs.push(self.graph(&s.x, &s.stiffness)?);
                    graphs.len() - 1
                }
            };
            graph_of.push(idx);
        }
        Ok(PreparedSet { samples: samples.to_vec(), graphs, graph_of })
    }
}

/// Samples with their neighborhood graphs built once; samples sharing centroids share a graph.
#[derive(Debug, Clone)]
pub struct PreparedSet {
    pub samples: Vec<GraphSample>,
    graphs: Vec<Graph>,
    graph_of: Vec<usize>,
}

impl PreparedSet {
    pub fn n_edges(&self) -> usize {
        self.graphs.iter().map(Graph::n_edges).sum()
    }
}

/// Per-sample NMSE Σ(y − t)² / Σt².
pub fn sample_nmse(pred: &[f64], target: &[f64]) -> f64 {
    let num: f64 = pred.iter().zip(target).map(|(y, t)| (y - t) * (y - t)).sum();
    num / target.iter().map(|t| t * t).sum::<f64>()
}
