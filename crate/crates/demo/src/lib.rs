//! Browser bindings: learned quadrature, C-HiDeNN shape functions and the
//! space-time FEM response of a spring-mass-damper. Each op returns JSON.

use dldc_core::calculus::{gauss_oracle, train_quadrature, QuadratureNet};
use dldc_core::chidenn::{combine_interpolants, ChidennSpace, Mesh};
use dldc_core::optim::TrainConfig;
use dldc_core::stfem::{assemble_smd, Forcing, SmdProblem};
use dldc_core::Result;
use serde_json::{json, Value};
use wasm_bindgen::prelude::*;

/// Trains an `n`-point quadrature net and pairs it with the Gauss-Legendre rule.
pub fn quadrature(n: usize, epochs: usize, seed: u64) -> Result<Value> {
    let net = QuadratureNet::new(n)?;
    let cfg = TrainConfig::new(epochs, 0.005).with_decay(1e-5);
    let fit = train_quadrature(&net, 64, &cfg, seed)?;
    let (nodes, weights) = fit.net.sorted();
    let (gauss_nodes, gauss_weights) = gauss_oracle(n)?;
    let stride = (fit.history.loss.len() / 200).max(1);
    let loss: Vec<f64> = fit.history.loss.iter().step_by(stride).copied().collect();
    Ok(json!({
        "nodes": nodes,
        "weights": weights,
        "gauss_nodes": gauss_nodes,
        "gauss_weights": gauss_weights,
        "loss": loss,
        "loss_stride": stride,
    }))
}

/// Samples the C-HiDeNN shape function of `node` on a uniform 1-D mesh of
/// (0, 10), next to the linear hat function of the same node.
pub fn shape_function(n_elem: usize, s: usize, a: f64, p: usize, node: usize, per_element: usize) -> Result<Value> {
    let mesh = Mesh::interval(0.0, 10.0, n_elem)?;
    let hat_mesh = mesh.clone();
    let space = ChidennSpace::new(mesh, s, a, p)?;
    let (mut x, mut chidenn, mut hat) = (Vec::new(), Vec::new(), Vec::new());
    let per_element = per_element.max(2);
    for e in 0..n_elem {
        let conn = &hat_mesh.elements()[e];
        for j in 0..per_element {
            if e > 0 && j == 0 {
                continue;
            }
            let xi = -1.0 + 2.0 * j as f64 / (per_element - 1) as f64;
            let basis = combine_interpolants(&space, e, xi, 0.0)?;
            x.push(basis.x[0]);
            chidenn.push(basis.dofs.iter().position(|&d| d == node).map_or(0.0, |k| basis.n[k]));
            let (n, _, _) = hat_mesh.shape(xi, 0.0);
            hat.push(conn.iter().position(|&d| d == node).map_or(0.0, |k| n[k]));
        }
    }
    Ok(json!({ "x": x, "chidenn": chidenn, "linear": hat, "node_x": hat_mesh.nodes().get(node).map(|c| c[0]) }))
}

/// Displacement of m ü + c u̇ + k u = f0 sin(ωt) from the space-time FEM solve.
#[allow(clippy::too_many_arguments)]
pub fn smd(m: f64, c: f64, k: f64, f0: f64, omega: f64, u0: f64, v0: f64, t_end: f64, n_elem: usize) -> Result<Value> {
    let problem = SmdProblem { m, c, k, forcing: Forcing::sine(f0, omega), u0, v0, t_end, n_elem };
    let system = assemble_smd(&problem)?;
    let u: Vec<f64> = system.solve_direct()?.iter().map(|v| v[0]).collect();
    Ok(json!({ "t": system.times(), "u": u }))
}

fn to_js(r: Result<Value>) -> std::result::Result<String, JsError> {
    r.map(|v| v.to_string()).map_err(|e| JsError::new(&e.to_string()))
}

#[wasm_bindgen]
pub fn quadrature_demo(n: usize, epochs: usize, seed: u32) -> std::result::Result<String, JsError> {
    to_js(quadrature(n, epochs, seed as u64))
}

#[wasm_bindgen]
pub fn shape_function_demo(
    n_elem: usize,
    s: usize,
    a: f64,
    p: usize,
    node: usize,
) -> std::result::Result<String, JsError> {
    to_js(shape_function(n_elem, s, a, p, node, 41))
}

#[wasm_bindgen]
#[allow(clippy::too_many_arguments)]
pub fn smd_demo(
    m: f64,
    c: f64,
    k: f64,
    f0: f64,
    omega: f64,
    u0: f64,
    v0: f64,
    t_end: f64,
    n_elem: usize,
) -> std::result::Result<String, JsError> {
    to_js(smd(m, c, k, f0, omega, u0, v0, t_end, n_elem))
}
