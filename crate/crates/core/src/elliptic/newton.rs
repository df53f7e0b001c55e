//! Newton-Krylov solver for `rhs(p, t) − β(p − b) − c = 0`.
//!
//! `rhs` is the flow right-hand side from `ma_ops`. With `β = 0` this is the
//! static equation `log det_+(ω + dd^c p) = log μ + F(p) + c`; with
//! `β = 1/dt` and `b = φ_old` it is one backward Euler step. The constant
//! `c` is an unknown only in the gauge case (`F' ≡ 0`, `β = 0`), where the
//! mean of `p` is prescribed instead.
//!
//! Linear systems use Jacobi row scaling and a constant-coefficient FFT
//! preconditioner built from the row-scaled mean of `(ω + dd^c p)^{-1}`.

use super::krylov::{bicgstab, norm};
use crate::grid::{fft_forward, fft_inverse, for_each_node_mut, hessian_node, wavenumbers, TorusGrid};
use crate::herm::HermMat;
use crate::ma_ops::{RhsContext, RhsStats};
use num_complex::Complex64;
use std::cell::RefCell;

#[derive(Clone, Copy, Debug)]
pub(crate) struct NewtonOptions {
    /// Target for `sup |residual|`.
    pub tol: f64,
    pub max_iter: usize,
    pub krylov_max: usize,
}

#[derive(Clone, Debug)]
pub(crate) struct NewtonOutcome {
    pub phi: Vec<f64>,
    pub constant: f64,
    pub residual: f64,
    pub iterations: usize,
    pub krylov_iterations: usize,
    pub converged: bool,
}

pub(crate) struct Equation<'c, 'a> {
    pub ctx: &'c RhsContext<'a>,
    pub t: f64,
    pub beta: f64,
    pub anchor: Option<&'c [f64]>,
    /// Prescribed mean in the gauge case.
    pub gauge: Option<f64>,
}

impl Equation<'_, '_> {
    fn residual(&self, p: &[f64], c: f64, out: &mut [f64]) -> RhsStats {
        let stats = self.ctx.eval(p, self.t, out);
        if self.beta != 0.0 || c != 0.0 {
            let b = self.anchor;
            let beta = self.beta;
            out.iter_mut().enumerate().for_each(|(i, o)| {
                let shift = match b {
                    Some(b) => beta * (p[i] - b[i]),
                    None => 0.0,
                };
                *o -= shift + c;
            });
        }
        stats
    }

    /// `∂F/∂r` at each node, central difference for tabulated forcing.
    fn forcing_slope(&self, p: &[f64]) -> Vec<f64> {
        let f = &self.ctx.problem.forcing;
        if let Some(a) = f.alpha() {
            return vec![a; p.len()];
        }
        p.iter()
            .enumerate()
            .map(|(i, &r)| {
                let d = 1e-6 * (1.0 + r.abs());
                (f.eval(self.t, i, r + d) - f.eval(self.t, i, r - d)) / (2.0 * d)
            })
            .collect()
    }
}

/// Linearization data at the current iterate.
struct Linearization {
    /// `(ω + dd^c p)^{-1}` where the determinant floor is inactive, else 0.
    minv: Vec<HermMat>,
    /// Zeroth-order coefficient `F' + β`.
    zeroth: Vec<f64>,
    /// Row scaling.
    rho: Vec<f64>,
}

fn linearize(eq: &Equation<'_, '_>, p: &[f64]) -> Linearization {
    let ctx = eq.ctx;
    let g = *ctx.problem.grid();
    let n = ctx.n;
    let sl = ctx.slice(eq.t);
    let cw = g.center_weights();
    let wd = if n == 1 { HermMat::scalar(1, cw[0]) } else { HermMat::diag(cw[0], cw[1]) };
    let mut zeroth = eq.forcing_slope(p);
    zeroth.iter_mut().for_each(|z| *z += eq.beta);
    let mut minv = vec![HermMat::ZERO; p.len()];
    for_each_node_mut(&g, &mut minv, |i, c, out| {
        let m = ctx.omega(&sl, i) + hessian_node(p, i, &ctx.st.offsets(c), &ctx.st);
        if m.det_plus(n) > ctx.det_floor {
            *out = m.inverse(n);
        }
    });
    let rho = if eq.gauge.is_some() {
        vec![1.0; p.len()]
    } else {
        minv.iter()
            .zip(&zeroth)
            .map(|(mi, z)| {
                let d = mi.trace_product(&wd, n) + z;
                if d > 0.0 {
                    1.0 / d
                } else {
                    1.0
                }
            })
            .collect()
    };
    Linearization { minv, zeroth, rho }
}

/// FFT-diagonal approximation `S(k) = tr(Ā Ĥ(k)) − c̄`.
struct Preconditioner {
    grid: TorusGrid,
    inv_symbol: Vec<f64>,
    buf: RefCell<Vec<Complex64>>,
}

impl Preconditioner {
    fn new(grid: TorusGrid, lin: &Linearization) -> Self {
        let n = grid.n();
        let len = grid.len() as f64;
        let mut abar = HermMat::ZERO;
        let mut cbar = 0.0;
        for ((mi, z), r) in lin.minv.iter().zip(&lin.zeroth).zip(&lin.rho) {
            abar = abar + *r * *mi;
            cbar += r * z;
        }
        abar = (1.0 / len) * abar;
        cbar /= len;
        let d = grid.dims();
        let s2: Vec<Vec<f64>> = (0..d)
            .map(|a| {
                let h = grid.h(a);
                wavenumbers(&grid, a).iter().map(|k| (2.0 * (0.5 * k * h).sin() / h).powi(2)).collect()
            })
            .collect();
        let s1: Vec<Vec<f64>> = (0..d)
            .map(|a| {
                let h = grid.h(a);
                wavenumbers(&grid, a).iter().map(|k| (k * h).sin() / h).collect()
            })
            .collect();
        let mut inv_symbol = vec![0.0; grid.len()];
        for_each_node_mut(&grid, &mut inv_symbol, |_, c, out| {
            let hk = if n == 1 {
                HermMat::scalar(1, -0.25 * (s2[0][c[0]] + s2[1][c[1]]))
            } else {
                let (a, b, e, f) = (s1[0][c[0]], s1[1][c[1]], s1[2][c[2]], s1[3][c[3]]);
                HermMat::new(
                    -0.25 * (s2[0][c[0]] + s2[1][c[1]]),
                    -0.25 * (s2[2][c[2]] + s2[3][c[3]]),
                    Complex64::new(a * e + b * f, a * f - b * e) * -0.25,
                )
            };
            let s = abar.trace_product(&hk, n) - cbar;
            *out = if s != 0.0 { 1.0 / s } else { 0.0 };
        });
        Preconditioner { grid, inv_symbol, buf: RefCell::new(vec![Complex64::new(0.0, 0.0); grid.len()]) }
    }

    /// `out = S^{-1} y` on the first `len` entries; the zero mode is left 0
    /// when `S(0) = 0`.
    fn apply(&self, y: &[f64], out: &mut [f64]) {
        let mut buf = self.buf.borrow_mut();
        for (b, &v) in buf.iter_mut().zip(y) {
            *b = Complex64::new(v, 0.0);
        }
        fft_forward(&self.grid, &mut buf);
        for (b, s) in buf.iter_mut().zip(&self.inv_symbol) {
            *b *= *s;
        }
        fft_inverse(&self.grid, &mut buf);
        for (o, b) in out.iter_mut().zip(buf.iter()) {
            *o = b.re;
        }
    }
}

fn jacobian_apply(eq: &Equation<'_, '_>, lin: &Linearization, e: &[f64], out: &mut [f64]) {
    let ctx = eq.ctx;
    let g = *ctx.problem.grid();
    let n = ctx.n;
    let len = g.len();
    let (head, tail) = out.split_at_mut(len);
    for_each_node_mut(&g, head, |i, c, slot| {
        let h = hessian_node(e, i, &ctx.st.offsets(c), &ctx.st);
        *slot = lin.rho[i] * (lin.minv[i].trace_product(&h, n) - lin.zeroth[i] * e[i]);
    });
    if eq.gauge.is_some() {
        let dc = e[len];
        head.iter_mut().for_each(|v| *v -= dc);
        tail[0] = e[..len].iter().sum::<f64>() / len as f64;
    }
}

fn sup(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |a, x| a.max(x.abs()))
}

pub(crate) fn newton_solve(eq: &Equation<'_, '_>, init: Vec<f64>, opts: &NewtonOptions) -> NewtonOutcome {
    let ctx = eq.ctx;
    let g = *ctx.problem.grid();
    let len = g.len();
    let gauge = eq.gauge;
    let aug = len + gauge.is_some() as usize;
    let mut p = init;
    if let Some(m) = gauge {
        let shift = m - p.iter().sum::<f64>() / len as f64;
        p.iter_mut().for_each(|v| *v += shift);
    }
    let mut res = vec![0.0; len];
    let mut c = 0.0;
    let mut stats = eq.residual(&p, 0.0, &mut res);
    if gauge.is_some() {
        c = res.iter().sum::<f64>() / len as f64;
        res.iter_mut().for_each(|r| *r -= c);
    }
    let mut krylov_total = 0;
    let mut trial = vec![0.0; len];
    let mut trial_res = vec![0.0; len];
    for it in 0..opts.max_iter {
        let r_sup = sup(&res);
        if r_sup <= opts.tol && stats.bad_node.is_none() {
            return NewtonOutcome {
                phi: p,
                constant: c,
                residual: r_sup,
                iterations: it,
                krylov_iterations: krylov_total,
                converged: true,
            };
        }
        let lin = linearize(eq, &p);
        let pc = Preconditioner::new(g, &lin);
        let mut b = vec![0.0; aug];
        for i in 0..len {
            b[i] = -lin.rho[i] * res[i];
        }
        if let Some(m) = gauge {
            b[len] = m - p.iter().sum::<f64>() / len as f64;
        }
        let apply = |x: &[f64], y: &mut [f64]| jacobian_apply(eq, &lin, x, y);
        let precond = |y: &[f64], z: &mut [f64]| {
            pc.apply(&y[..len], &mut z[..len]);
            if gauge.is_some() {
                let mean_y = y[..len].iter().sum::<f64>() / len as f64;
                let mean_z = z[..len].iter().sum::<f64>() / len as f64;
                z[..len].iter_mut().for_each(|v| *v += y[len] - mean_z);
                z[len] = -mean_y;
            }
        };
        let eta = (0.5 * r_sup).clamp(1e-8, 1e-2);
        let mut delta = vec![0.0; aug];
        let info = bicgstab(&apply, &precond, &b, &mut delta, eta, opts.krylov_max);
        krylov_total += info.iterations;

        let merit = norm(&res);
        let mut lambda = 1.0;
        let mut accepted = false;
        while lambda >= 1.0 / 1024.0 {
            for i in 0..len {
                trial[i] = p[i] + lambda * delta[i];
            }
            let tc = if gauge.is_some() { c + lambda * delta[len] } else { 0.0 };
            let st = eq.residual(&trial, tc, &mut trial_res);
            let ok_pd = gauge.is_none() || st.min_eig > 0.0;
            if ok_pd && st.bad_node.is_none() && norm(&trial_res) <= (1.0 - 1e-4 * lambda) * merit {
                std::mem::swap(&mut p, &mut trial);
                std::mem::swap(&mut res, &mut trial_res);
                c = tc;
                stats = st;
                accepted = true;
                break;
            }
            lambda *= 0.5;
        }
        if !accepted {
            let r_sup = sup(&res);
            return NewtonOutcome {
                phi: p,
                constant: c,
                residual: r_sup,
                iterations: it + 1,
                krylov_iterations: krylov_total,
                converged: r_sup <= opts.tol,
            };
        }
    }
    let r_sup = sup(&res);
    NewtonOutcome {
        phi: p,
        constant: c,
        residual: r_sup,
        iterations: opts.max_iter,
        krylov_iterations: krylov_total,
        converged: r_sup <= opts.tol,
    }
}

/// One backward Euler step for `n = 1` in exponential form,
///
/// `G(p) = ω + ¼Δ_h p − max(μ, floor)·exp(F(p) + (p − b)/w) = 0`.
///
/// `G` is concave with an M-matrix Jacobian, so undamped Newton converges
/// monotonically from any start. This avoids the kink of
/// `log max(det, floor)` that stalls [`newton_solve`] where `μ = 0`.
/// Returns `None` when `F` is not linear or the iteration fails; the caller
/// checks the result against the clipped equation.
pub(crate) fn exp_form_step(
    ctx: &RhsContext<'_>,
    b: &[f64],
    t: f64,
    w: f64,
    tol: f64,
    max_iter: usize,
) -> Option<Vec<f64>> {
    let alpha = ctx.problem.forcing.alpha()?;
    if ctx.n != 1 || !(alpha + 1.0 / w > 0.0) {
        return None;
    }
    let g = *ctx.problem.grid();
    let len = g.len();
    let sl = ctx.slice(t);
    let mut p = b.to_vec();
    let mut res = vec![0.0; len];
    let mut diag = vec![0.0; len];
    let mut delta = vec![0.0; len];
    let lap_symbol: Vec<Vec<f64>> = (0..2)
        .map(|a| {
            let h = g.h(a);
            wavenumbers(&g, a).iter().map(|k| -0.25 * (2.0 * (0.5 * k * h).sin() / h).powi(2)).collect()
        })
        .collect();
    for _ in 0..max_iter {
        // res = G(p), diag = ∂G/∂p_i from the exponential.
        let mut defect = 0.0f64;
        for_each_node_mut(&g, &mut res, |i, c, slot| {
            let m = ctx.omega(&sl, i) + hessian_node(&p, i, &ctx.st.offsets(c), &ctx.st);
            let e = ctx.log_mu(&sl, i).0 + ctx.problem.forcing.eval(t, i, p[i]) + (p[i] - b[i]) / w;
            *slot = m.d0 - e.exp();
        });
        for i in 0..len {
            let e = ctx.log_mu(&sl, i).0 + ctx.problem.forcing.eval(t, i, p[i]) + (p[i] - b[i]) / w;
            let ex = e.exp();
            if !ex.is_finite() {
                return None;
            }
            diag[i] = ex * (alpha + 1.0 / w);
            defect = defect.max((res[i] / ex).abs());
        }
        if defect * w.min(1.0) <= tol {
            return Some(p);
        }
        let dbar = diag.iter().sum::<f64>() / len as f64;
        let inv: Vec<f64> = (0..len)
            .map(|i| {
                let c = g.coords(i);
                1.0 / (lap_symbol[0][c[0]] + lap_symbol[1][c[1]] - dbar)
            })
            .collect();
        let buf = RefCell::new(vec![Complex64::new(0.0, 0.0); len]);
        let precond = |y: &[f64], z: &mut [f64]| {
            let mut buf = buf.borrow_mut();
            for (s, &v) in buf.iter_mut().zip(y) {
                *s = Complex64::new(v, 0.0);
            }
            fft_forward(&g, &mut buf);
            for (s, k) in buf.iter_mut().zip(&inv) {
                *s *= *k;
            }
            fft_inverse(&g, &mut buf);
            for (o, s) in z.iter_mut().zip(buf.iter()) {
                *o = s.re;
            }
        };
        let apply = |x: &[f64], y: &mut [f64]| {
            for_each_node_mut(&g, y, |i, c, slot| {
                *slot = hessian_node(x, i, &ctx.st.offsets(c), &ctx.st).d0 - diag[i] * x[i];
            });
        };
        let rhs: Vec<f64> = res.iter().map(|r| -r).collect();
        delta.iter_mut().for_each(|d| *d = 0.0);
        bicgstab(&apply, &precond, &rhs, &mut delta, 1e-12, 400);
        let step = sup(&delta);
        p.iter_mut().zip(&delta).for_each(|(v, d)| *v += d);
        if !step.is_finite() {
            return None;
        }
        if step <= tol {
            return Some(p);
        }
    }
    None
}
