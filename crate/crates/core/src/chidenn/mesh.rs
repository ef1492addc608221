//! Linear meshes in one and two dimensions.

use crate::error::{contract, Error, Result};

/// Node counts of a structured grid; node `(i, j)` has id `j * nx + i`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Grid {
    pub nx: usize,
    pub ny: usize,
}

/// Two-node segments (dim 1) or counter-clockwise four-node quads (dim 2).
/// One-dimensional nodes carry `y = 0`.
#[derive(Debug, Clone)]
pub struct Mesh {
    dim: usize,
    nodes: Vec<[f64; 2]>,
    elements: Vec<Vec<usize>>,
    grid: Option<Grid>,
}

impl Mesh {
    /// Validates connectivity and element orientation.
    pub fn new(dim: usize, nodes: Vec<[f64; 2]>, elements: Vec<Vec<usize>>, grid: Option<Grid>) -> Result<Self> {
        if dim != 1 && dim != 2 {
            return Err(contract(format!("mesh dimension must be 1 or 2, got {dim}")));
        }
        let per = if dim == 1 { 2 } else { 4 };
        for (e, conn) in elements.iter().enumerate() {
            if conn.len() != per {
                return Err(contract(format!("element {e} has {} nodes, expected {per}", conn.len())));
            }
            if let Some(&bad) = conn.iter().find(|&&n| n >= nodes.len()) {
                return Err(Error::Index(format!("element {e} references node {bad}")));
            }
        }
        if let Some(g) = grid {
            if g.nx * g.ny != nodes.len() {
                return Err(contract("grid node counts do not match the node list"));
            }
        }
        let mesh = Self { dim, nodes, elements, grid };
        let pts = [-1.0 / 3f64.sqrt(), 1.0 / 3f64.sqrt(), -1.0, 1.0];
        for e in 0..mesh.elements.len() {
            for &xi in &pts {
                for &eta in if dim == 1 { &pts[..1] } else { &pts[..] } {
                    let det = mesh.jacobian(e, xi, eta)[4];
                    if !(det > 0.0) {
                        return Err(contract(format!(
                            "element {e} has non-positive Jacobian {det:.3e} at ({xi}, {eta})"
                        )));
                    }
                }
            }
        }
        Ok(mesh)
    }

    /// `ne` equal segments on [x0, x1].
    pub fn interval(x0: f64, x1: f64, ne: usize) -> Result<Self> {
        if ne == 0 || !(x1 > x0) {
            return Err(contract("interval mesh needs ne ≥ 1 and x1 > x0"));
        }
        let h = (x1 - x0) / ne as f64;
        let nodes = (0..=ne).map(|i| [x0 + i as f64 * h, 0.0]).collect();
        let elements = (0..ne).map(|e| vec![e, e + 1]).collect();
        Self::new(1, nodes, elements, Some(Grid { nx: ne + 1, ny: 1 }))
    }

    /// `nex × ney` equal quads on the rectangle `lo`–`hi`.
    pub fn rectangle(lo: [f64; 2], hi: [f64; 2], nex: usize, ney: usize) -> Result<Self> {
        if nex == 0 || ney == 0 || !(hi[0] > lo[0]) || !(hi[1] > lo[1]) {
            return Err(contract("rectangle mesh needs positive element counts and extent"));
        }
        let (nx, ny) = (nex + 1, ney + 1);
        let hx = (hi[0] - lo[0]) / nex as f64;
        let hy = (hi[1] - lo[1]) / ney as f64;
        let mut nodes = Vec::with_capacity(nx * ny);
        for j in 0..ny {
            for i in 0..nx {
                nodes.push([lo[0] + i as f64 * hx, lo[1] + j as f64 * hy]);
            }
        }
        let mut elements = Vec::with_capacity(nex * ney);
        for j in 0..ney {
            for i in 0..nex {
                let n0 = j * nx + i;
                elements.push(vec![n0, n0 + 1, n0 + 1 + nx, n0 + nx]);
            }
        }
        Self::new(2, nodes, elements, Some(Grid { nx, ny }))
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn nodes(&self) -> &[[f64; 2]] {
        &self.nodes
    }

    pub fn n_nodes(&self) -> usize {
        self.nodes.len()
    }

    pub fn elements(&self) -> &[Vec<usize>] {
        &self.elements
    }

    pub fn n_elements(&self) -> usize {
        self.elements.len()
    }

    pub fn grid(&self) -> Option<Grid> {
        self.grid
    }

    /// Grid index `(i, j)` of a node on a structured mesh.
    pub fn structured_index(&self, node: usize) -> Option<[usize; 2]> {
        self.grid.map(|g| [node % g.nx, node / g.nx])
    }

    /// Bilinear (or linear) shape functions at natural coordinates and their
    /// natural derivatives `(N, dN/dξ, dN/dη)`.
    pub fn shape(&self, xi: f64, eta: f64) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
        if self.dim == 1 {
            (vec![0.5 * (1.0 - xi), 0.5 * (1.0 + xi)], vec![-0.5, 0.5], vec![0.0, 0.0])
        } else {
            let s = [(-1.0, -1.0), (1.0, -1.0), (1.0, 1.0), (-1.0, 1.0)];
            let n = s.iter().map(|(a, b)| 0.25 * (1.0 + a * xi) * (1.0 + b * eta)).collect();
            let dxi = s.iter().map(|(a, b)| 0.25 * a * (1.0 + b * eta)).collect();
            let deta = s.iter().map(|(a, b)| 0.25 * (1.0 + a * xi) * b).collect();
            (n, dxi, deta)
        }
    }

    /// `[dx/dξ, dx/dη, dy/dξ, dy/dη, det]`; in 1-D `det = dx/dξ`.
    pub fn jacobian(&self, e: usize, xi: f64, eta: f64) -> [f64; 5] {
        let (_, dxi, deta) = self.shape(xi, eta);
        let conn = &self.elements[e];
        let mut j = [0.0; 4];
        for (k, &n) in conn.iter().enumerate() {
            let [x, y] = self.nodes[n];
            j[0] += dxi[k] * x;
            j[1] += deta[k] * x;
            j[2] += dxi[k] * y;
            j[3] += deta[k] * y;
        }
        let det = if self.dim == 1 { j[0] } else { j[0] * j[3] - j[1] * j[2] };
        [j[0], j[1], j[2], j[3], det]
    }

    /// Physical coordinates of natural point `(ξ, η)` in element `e`.
    pub fn map(&self, e: usize, xi: f64, eta: f64) -> [f64; 2] {
        let (n, _, _) = self.shape(xi, eta);
        let mut p = [0.0; 2];
        for (k, &node) in self.elements[e].iter().enumerate() {
            p[0] += n[k] * self.nodes[node][0];
            p[1] += n[k] * self.nodes[node][1];
        }
        p
    }

    /// Nodes on the boundary of the bounding box.
    pub fn boundary_nodes(&self) -> Vec<usize> {
        let (mut lo, mut hi) = ([f64::INFINITY; 2], [f64::NEG_INFINITY; 2]);
        for p in &self.nodes {
            for d in 0..2 {
                lo[d] = lo[d].min(p[d]);
                hi[d] = hi[d].max(p[d]);
            }
        }
        let tol = 1e-12 * (hi[0] - lo[0]).abs().max(1.0);
        (0..self.nodes.len())
            .filter(|&n| {
                let p = self.nodes[n];
                (0..self.dim).any(|d| (p[d] - lo[d]).abs() < tol || (p[d] - hi[d]).abs() < tol)
            })
            .collect()
    }

    /// Element size along each axis (structured meshes use the first element).
    pub fn spacing(&self) -> [f64; 2] {
        let conn = &self.elements[0];
        let a = self.nodes[conn[0]];
        let b = self.nodes[conn[1]];
        if self.dim == 1 {
            [(b[0] - a[0]).abs(), 0.0]
        } else {
            let d = self.nodes[conn[3]];
            [(b[0] - a[0]).abs(), (d[1] - a[1]).abs()]
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rectangle_layout() {
        let m = Mesh::rectangle([0.0, 0.0], [2.0, 1.0], 4, 2).unwrap();
        assert_eq!(m.n_nodes(), 15);
        assert_eq!(m.n_elements(), 8);
        assert_eq!(m.structured_index(7), Some([2, 1]));
        assert_eq!(m.boundary_nodes().len(), 12);
        let j = m.jacobian(0, 0.2, -0.3);
        assert!((j[4] - 0.25 * 0.25).abs() < 1e-15);
        assert_eq!(m.map(0, 1.0, 1.0), [0.5, 0.5]);
    }

    #[test]
    fn structured_index_is_bijective() {
        let m = Mesh::rectangle([0.0, 0.0], [1.0, 1.0], 3, 5).unwrap();
        let mut seen = std::collections::HashSet::new();
        for n in 0..m.n_nodes() {
            assert!(seen.insert(m.structured_index(n).unwrap()));
        }
        assert_eq!(seen.len(), 24);
    }

    #[test]
    fn inverted_element_rejected() {
        let nodes = vec![[0.0, 0.0], [1.0, 0.0], [1.0, 1.0], [0.0, 1.0]];
        assert!(Mesh::new(2, nodes.clone(), vec![vec![0, 3, 2, 1]], None).is_err());
        assert!(Mesh::new(2, nodes, vec![vec![0, 1, 2, 3]], None).is_ok());
        assert!(Mesh::new(1, vec![[1.0, 0.0], [0.0, 0.0]], vec![vec![0, 1]], None).is_err());
    }

    #[test]
    fn interval_boundary() {
        let m = Mesh::interval(0.0, 1.0, 4).unwrap();
        assert_eq!(m.boundary_nodes(), vec![0, 4]);
        assert_eq!(m.spacing()[0], 0.25);
    }
}
