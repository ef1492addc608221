//! Tensor-product Lagrange elements of order p on a uniform rectangle grid.

use super::space::{Discretization, ElementBasis};
use crate::error::{contract, Error, Result};

#[derive(Debug, Clone)]
pub struct LagrangeSpace {
    pub p: usize,
    lo: [f64; 2],
    h: [f64; 2],
    nex: usize,
    ney: usize,
    /// Global dofs per direction.
    gx: usize,
    gy: usize,
    element_dofs: Vec<Vec<usize>>,
}

/// Values and derivatives of the 1-D equispaced Lagrange basis on [−1, 1].
fn lagrange_1d(p: usize, xi: f64) -> (Vec<f64>, Vec<f64>) {
    let nodes: Vec<f64> = (0..=p).map(|a| -1.0 + 2.0 * a as f64 / p as f64).collect();
    let mut l = vec![0.0; p + 1];
    let mut dl = vec![0.0; p + 1];
    for a in 0..=p {
        let mut v = 1.0;
        let mut d = 0.0;
        for b in (0..=p).filter(|&b| b != a) {
            let denom = nodes[a] - nodes[b];
            let term = (xi - nodes[b]) / denom;
            d = d * term + v / denom;
            v *= term;
        }
        l[a] = v;
        dl[a] = d;
    }
    (l, dl)
}

impl LagrangeSpace {
    pub fn rectangle(lo: [f64; 2], hi: [f64; 2], nex: usize, ney: usize, p: usize) -> Result<Self> {
        if p == 0 || nex == 0 || ney == 0 || !(hi[0] > lo[0]) || !(hi[1] > lo[1]) {
            return Err(contract("Lagrange space needs p ≥ 1, positive element counts and extent"));
        }
        let gx = p * nex + 1;
        let gy = p * ney + 1;
        let mut element_dofs = Vec::with_capacity(nex * ney);
        for ej in 0..ney {
            for ei in 0..nex {
                let mut d = Vec::with_capacity((p + 1) * (p + 1));
                for b in 0..=p {
                    for a in 0..=p {
                        d.push((p * ej + b) * gx + p * ei + a);
                    }
                }
                element_dofs.push(d);
            }
        }
        let h = [(hi[0] - lo[0]) / nex as f64, (hi[1] - lo[1]) / ney as f64];
        Ok(Self { p, lo, h, nex, ney, gx, gy, element_dofs })
    }

    /// Coordinates of a global dof.
    pub fn dof_coord(&self, d: usize) -> [f64; 2] {
        let (i, j) = (d % self.gx, d / self.gx);
        [self.lo[0] + i as f64 * self.h[0] / self.p as f64, self.lo[1] + j as f64 * self.h[1] / self.p as f64]
    }
}

impl Discretization for LagrangeSpace {
    fn dim(&self) -> usize {
        2
    }

    fn n_dofs(&self) -> usize {
        self.gx * self.gy
    }

    fn n_elements(&self) -> usize {
        self.nex * self.ney
    }

    fn boundary_dofs(&self) -> Vec<usize> {
        (0..self.n_dofs())
            .filter(|&d| {
                let (i, j) = (d % self.gx, d / self.gx);
                i == 0 || j == 0 || i == self.gx - 1 || j == self.gy - 1
            })
            .collect()
    }

    fn element_dofs(&self, e: usize) -> &[usize] {
        &self.element_dofs[e]
    }

    fn eval(&self, e: usize, xi: f64, eta: f64, out: &mut ElementBasis) -> Result<()> {
        if e >= self.n_elements() {
            return Err(Error::Index(format!("element {e} out of range")));
        }
        let (ei, ej) = (e % self.nex, e / self.nex);
        let (lx, dlx) = lagrange_1d(self.p, xi);
        let (ly, dly) = lagrange_1d(self.p, eta);
        let (jx, jy) = (0.5 * self.h[0], 0.5 * self.h[1]);
        let m = (self.p + 1) * (self.p + 1);
        out.dofs.clear();
        out.dofs.extend_from_slice(&self.element_dofs[e]);
        out.n.resize(m, 0.0);
        out.dndx.resize(m, 0.0);
        out.dndy.resize(m, 0.0);
        for b in 0..=self.p {
            for a in 0..=self.p {
                let k = b * (self.p + 1) + a;
                out.n[k] = lx[a] * ly[b];
                out.dndx[k] = dlx[a] * ly[b] / jx;
                out.dndy[k] = lx[a] * dly[b] / jy;
            }
        }
        out.x = [
            self.lo[0] + (ei as f64 + 0.5 * (xi + 1.0)) * self.h[0],
            self.lo[1] + (ej as f64 + 0.5 * (eta + 1.0)) * self.h[1],
        ];
        out.det_j = jx * jy;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn basis_is_nodal_and_sums_to_one() {
        for p in 1..=3 {
            let (l, dl) = lagrange_1d(p, 0.3);
            assert!((l.iter().sum::<f64>() - 1.0).abs() < 1e-14);
            assert!(dl.iter().sum::<f64>().abs() < 1e-12);
            for a in 0..=p {
                let x = -1.0 + 2.0 * a as f64 / p as f64;
                let (l, _) = lagrange_1d(p, x);
                for (b, v) in l.iter().enumerate() {
                    assert!((v - if a == b { 1.0 } else { 0.0 }).abs() < 1e-14);
                }
            }
        }
    }

    #[test]
    fn derivative_matches_finite_difference() {
        let h = 1e-6;
        let (_, dl) = lagrange_1d(3, 0.2);
        let (lp, _) = lagrange_1d(3, 0.2 + h);
        let (lm, _) = lagrange_1d(3, 0.2 - h);
        for a in 0..4 {
            assert!((dl[a] - (lp[a] - lm[a]) / (2.0 * h)).abs() < 1e-8);
        }
    }

    #[test]
    fn dof_layout() {
        let s = LagrangeSpace::rectangle([0.0, 0.0], [2.0, 2.0], 2, 2, 2).unwrap();
        assert_eq!(s.n_dofs(), 25);
        assert_eq!(s.boundary_dofs().len(), 16);
        assert_eq!(s.dof_coord(s.element_dofs(3)[8]), [2.0, 2.0]);
        let mut b = ElementBasis::default();
        s.eval(3, 1.0, 1.0, &mut b).unwrap();
        assert_eq!(b.x, [2.0, 2.0]);
    }
}
