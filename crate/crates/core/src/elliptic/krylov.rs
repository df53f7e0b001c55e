//! Right-preconditioned BiCGSTAB with deterministic reductions.

use rayon::prelude::*;

const CHUNK: usize = 4096;

/// Dot product summed chunk by chunk in a fixed order, so results do not
/// depend on the thread count.
pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    let parts: Vec<f64> = a
        .par_chunks(CHUNK)
        .zip(b.par_chunks(CHUNK))
        .map(|(x, y)| x.iter().zip(y).map(|(p, q)| p * q).sum::<f64>())
        .collect();
    parts.iter().sum()
}

pub(crate) fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// Outcome of a linear solve.
#[derive(Clone, Copy, Debug)]
pub(crate) struct KrylovInfo {
    pub iterations: usize,
}

/// Solves `A x = b` from `x = 0` to relative residual `tol`, applying the
/// preconditioner on the right.
pub(crate) fn bicgstab(
    apply: &dyn Fn(&[f64], &mut [f64]),
    precond: &dyn Fn(&[f64], &mut [f64]),
    b: &[f64],
    x: &mut [f64],
    tol: f64,
    max_iter: usize,
) -> KrylovInfo {
    let len = b.len();
    x.iter_mut().for_each(|v| *v = 0.0);
    let bnorm = norm(b);
    if bnorm == 0.0 {
        return KrylovInfo { iterations: 0 };
    }
    let mut r = b.to_vec();
    let r0 = b.to_vec();
    let mut p = vec![0.0; len];
    let mut v = vec![0.0; len];
    let mut y = vec![0.0; len];
    let mut z = vec![0.0; len];
    let mut tv = vec![0.0; len];
    let (mut rho, mut alpha, mut omega) = (1.0, 1.0, 1.0);
    for it in 1..=max_iter {
        let rho_new = dot(&r0, &r);
        if rho_new == 0.0 || !rho_new.is_finite() {
            return KrylovInfo { iterations: it - 1 };
        }
        let beta = (rho_new / rho) * (alpha / omega);
        rho = rho_new;
        p.par_iter_mut()
            .zip(r.par_iter().zip(v.par_iter()))
            .for_each(|(pi, (ri, vi))| *pi = ri + beta * (*pi - omega * vi));
        precond(&p, &mut y);
        apply(&y, &mut v);
        let denom = dot(&r0, &v);
        if denom == 0.0 || !denom.is_finite() {
            return KrylovInfo { iterations: it };
        }
        alpha = rho / denom;
        // r becomes s = r − αv.
        r.par_iter_mut().zip(v.par_iter()).for_each(|(ri, vi)| *ri -= alpha * vi);
        let snorm = norm(&r);
        if snorm <= tol * bnorm {
            x.par_iter_mut().zip(y.par_iter()).for_each(|(xi, yi)| *xi += alpha * yi);
            return KrylovInfo { iterations: it };
        }
        precond(&r, &mut z);
        apply(&z, &mut tv);
        let tt = dot(&tv, &tv);
        omega = if tt > 0.0 { dot(&tv, &r) / tt } else { 0.0 };
        x.par_iter_mut().zip(y.par_iter().zip(z.par_iter())).for_each(|(xi, (yi, zi))| *xi += alpha * yi + omega * zi);
        r.par_iter_mut().zip(tv.par_iter()).for_each(|(ri, ti)| *ri -= omega * ti);
        let rel = norm(&r) / bnorm;
        if rel <= tol || omega == 0.0 {
            return KrylovInfo { iterations: it };
        }
    }
    KrylovInfo { iterations: max_iter }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn solves_small_nonsymmetric_system() {
        // Tridiagonal with unequal off-diagonals.
        let n = 50;
        let apply = |x: &[f64], y: &mut [f64]| {
            for i in 0..n {
                let l = if i > 0 { x[i - 1] } else { 0.0 };
                let r = if i + 1 < n { x[i + 1] } else { 0.0 };
                y[i] = 4.0 * x[i] - 1.5 * l - 0.5 * r;
            }
        };
        let id = |x: &[f64], y: &mut [f64]| y.copy_from_slice(x);
        let b: Vec<f64> = (0..n).map(|i| (i as f64).sin()).collect();
        let mut x = vec![0.0; n];
        let info = bicgstab(&apply, &id, &b, &mut x, 1e-12, 200);
        let mut ax = vec![0.0; n];
        apply(&x, &mut ax);
        let err = ax.iter().zip(&b).map(|(p, q)| (p - q).abs()).fold(0.0, f64::max);
        assert!(err < 1e-10, "{info:?}");
    }
}
