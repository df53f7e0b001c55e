//! Trigonometric polynomials with closed-form complex Hessians, used for
//! manufactured solutions and perturbations.

use super::{ScalarField, TorusGrid};
use crate::herm::HermMat;
use num_complex::Complex64;
use std::f64::consts::PI;

/// `amp · cos(Σ_a κ_a x_a + phase)` with `κ_a = 2π k_a / L_a`.
#[derive(Clone, Debug, PartialEq)]
pub struct TrigTerm {
    pub amp: f64,
    pub k: [i32; 4],
    pub phase: f64,
}

#[derive(Clone, Debug, PartialEq, Default)]
pub struct TrigSeries {
    pub terms: Vec<TrigTerm>,
}

impl TrigSeries {
    pub fn new() -> Self {
        Self::default()
    }

    /// Adds `amp · cos(2π k·x/L + phase)`.
    pub fn term(mut self, amp: f64, k: [i32; 4], phase: f64) -> Self {
        self.terms.push(TrigTerm { amp, k, phase });
        self
    }

    fn kappa(g: &TorusGrid, t: &TrigTerm) -> [f64; 4] {
        let mut w = [0.0; 4];
        for a in 0..g.dims() {
            w[a] = 2.0 * PI * t.k[a] as f64 / g.periods()[a];
        }
        w
    }

    fn arg(g: &TorusGrid, t: &TrigTerm, x: &[f64; 4]) -> f64 {
        let w = Self::kappa(g, t);
        (0..g.dims()).map(|a| w[a] * x[a]).sum::<f64>() + t.phase
    }

    pub fn value(&self, g: &TorusGrid, x: &[f64; 4]) -> f64 {
        self.terms.iter().map(|t| t.amp * Self::arg(g, t, x).cos()).sum()
    }

    /// Exact `∂²/∂z_j∂z̄_k` at a point.
    pub fn hessian(&self, g: &TorusGrid, x: &[f64; 4]) -> HermMat {
        let mut out = HermMat::ZERO;
        for t in &self.terms {
            let w = Self::kappa(g, t);
            let c = -t.amp * Self::arg(g, t, x).cos();
            // ∂_a∂_b of amp·cos(θ) is −amp·κ_aκ_b·cos(θ).
            let entry = |j: usize, k: usize| -> Complex64 {
                let (xj, yj, xk, yk) = (w[2 * j], w[2 * j + 1], w[2 * k], w[2 * k + 1]);
                Complex64::new(xj * xk + yj * yk, xj * yk - yj * xk) * (0.25 * c)
            };
            let h = if g.n() == 1 {
                HermMat { d0: entry(0, 0).re, ..HermMat::ZERO }
            } else {
                HermMat::new(entry(0, 0).re, entry(1, 1).re, entry(0, 1))
            };
            out = out + h;
        }
        out
    }

    pub fn sample(&self, g: TorusGrid) -> ScalarField {
        ScalarField::from_fn(g, |x| self.value(&g, x))
    }

    /// Exact `dd^c` sampled at the grid nodes.
    pub fn sample_hessian(&self, g: TorusGrid) -> Vec<HermMat> {
        (0..g.len()).map(|i| self.hessian(&g, &g.position(i))).collect()
    }

    /// Same terms with every amplitude multiplied by `s`.
    pub fn scaled(&self, s: f64) -> TrigSeries {
        TrigSeries { terms: self.terms.iter().map(|t| TrigTerm { amp: s * t.amp, ..t.clone() }).collect() }
    }

    /// Exact `dd^c` for the discrete operator: each mode's symbol replaced
    /// by its central-difference counterpart.
    pub fn discrete_hessian(&self, g: &TorusGrid, x: &[f64; 4]) -> HermMat {
        let mut out = HermMat::ZERO;
        for t in &self.terms {
            let w = Self::kappa(g, t);
            let c = -t.amp * Self::arg(g, t, x).cos();
            let s = |a: usize| (w[a] * g.h(a)).sin() / g.h(a);
            let s2 = |a: usize| 2.0 * (0.5 * w[a] * g.h(a)).sin() / g.h(a);
            let diag = |j: usize| s2(2 * j).powi(2) + s2(2 * j + 1).powi(2);
            let h = if g.n() == 1 {
                HermMat { d0: 0.25 * c * diag(0), ..HermMat::ZERO }
            } else {
                HermMat::new(
                    0.25 * c * diag(0),
                    0.25 * c * diag(1),
                    Complex64::new(s(0) * s(2) + s(1) * s(3), s(0) * s(3) - s(1) * s(2)) * (0.25 * c),
                )
            };
            out = out + h;
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::complex_hessian;

    #[test]
    fn discrete_symbol_matches_finite_differences() {
        let g = TorusGrid::new(2, 16).unwrap();
        let s = TrigSeries::new().term(0.3, [1, 0, 1, 2], 0.4).term(-0.2, [0, 2, 1, -1], 1.1);
        let fd = complex_hessian(&s.sample(g));
        for i in (0..g.len()).step_by(97) {
            let e = s.discrete_hessian(&g, &g.position(i));
            assert!((fd.at(i) - e).max_abs_entry() < 1e-10);
        }
    }

    #[test]
    fn analytic_hessian_is_the_continuum_limit() {
        let g = TorusGrid::new(2, 64).unwrap();
        let s = TrigSeries::new().term(0.3, [1, 0, 1, 2], 0.4);
        let x = g.position(12345);
        let diff = (s.hessian(&g, &x) - s.discrete_hessian(&g, &x)).max_abs_entry();
        assert!(diff < 0.05 && diff > 0.0);
    }
}
