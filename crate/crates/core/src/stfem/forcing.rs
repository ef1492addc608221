//! Harmonic loads f(t) = f0·sin(ωt + φ) and their exact element integrals.

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Forcing {
    pub f0: f64,
    pub omega: f64,
    #[serde(default)]
    pub phase: f64,
}

impl Forcing {
    pub fn sine(f0: f64, omega: f64) -> Self {
        Self { f0, omega, phase: 0.0 }
    }

    /// Time-invariant load of magnitude `f0`.
    pub fn constant(f0: f64) -> Self {
        Self { f0, omega: 0.0, phase: std::f64::consts::FRAC_PI_2 }
    }

    pub fn none() -> Self {
        Self { f0: 0.0, omega: 0.0, phase: 0.0 }
    }

    pub fn value(&self, t: f64) -> f64 {
        self.f0 * (self.omega * t + self.phase).sin()
    }

    /// `[∫ N0 f dt, ∫ N1 f dt]` over `[t0, t1]` with linear shape functions
    /// N0 = (t1 − t)/Δt and N1 = (t − t0)/Δt, integrated in closed form.
    pub fn element_vector(&self, t0: f64, t1: f64) -> [f64; 2] {
        let dt = t1 - t0;
        if self.f0 == 0.0 {
            return [0.0, 0.0];
        }
        let (i1, jt) = if self.omega == 0.0 {
            let s = self.phase.sin();
            (s * dt, s * 0.5 * (t1 * t1 - t0 * t0))
        } else {
            let w = self.omega;
            let arg = |t: f64| w * t + self.phase;
            let prim = |t: f64| -t * arg(t).cos() / w + arg(t).sin() / (w * w);
            ((arg(t0).cos() - arg(t1).cos()) / w, prim(t1) - prim(t0))
        };
        [self.f0 / dt * (t1 * i1 - jt), self.f0 / dt * (jt - t0 * i1)]
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::calculus::gauss_legendre;

    fn quad(f: &Forcing, t0: f64, t1: f64) -> [f64; 2] {
        let (x, w) = gauss_legendre(8);
        let dt = t1 - t0;
        let mut out = [0.0; 2];
        for (xi, wi) in x.iter().zip(&w) {
            let t = t0 + 0.5 * (xi + 1.0) * dt;
            let v = f.value(t) * wi * 0.5 * dt;
            out[0] += v * (t1 - t) / dt;
            out[1] += v * (t - t0) / dt;
        }
        out
    }

    #[test]
    fn closed_form_matches_gauss_quadrature() {
        for f in [
            Forcing::sine(10.0, 2.0 * std::f64::consts::PI),
            Forcing::constant(3.0),
            Forcing { f0: 2.0, omega: 0.7, phase: 0.4 },
        ] {
            for (t0, t1) in [(0.0, 0.02), (1.3, 1.35), (2.0, 2.5)] {
                let a = f.element_vector(t0, t1);
                let b = quad(&f, t0, t1);
                assert!((a[0] - b[0]).abs() < 1e-12 && (a[1] - b[1]).abs() < 1e-12, "{a:?} {b:?}");
            }
        }
    }

    #[test]
    fn full_period_integrates_to_zero() {
        let f = Forcing::sine(1.0, 2.0 * std::f64::consts::PI);
        let v = f.element_vector(0.0, 1.0);
        assert!((v[0] + v[1]).abs() < 1e-14);
    }
}
