use super::{for_each_node_mut, HermitianField, Offsets, ScalarField, Stencil, TorusGrid};
use crate::herm::HermMat;
use num_complex::Complex64;

#[inline(always)]
fn at(v: &[f64], i: usize, off: isize) -> f64 {
    v[(i as isize + off) as usize]
}

/// Central second difference along axis `a`.
#[inline(always)]
pub(crate) fn second_diff(v: &[f64], i: usize, o: &Offsets, st: &Stencil, a: usize) -> f64 {
    (at(v, i, o.up[a]) - 2.0 * v[i] + at(v, i, o.dn[a])) / st.h2[a]
}

/// Central mixed difference along axes `a ≠ b`.
#[inline(always)]
pub(crate) fn mixed_diff(v: &[f64], i: usize, o: &Offsets, st: &Stencil, a: usize, b: usize) -> f64 {
    (at(v, i, o.up[a] + o.up[b]) - at(v, i, o.up[a] + o.dn[b]) - at(v, i, o.dn[a] + o.up[b])
        + at(v, i, o.dn[a] + o.dn[b]))
        / st.hh4[a][b]
}

/// Discrete `∂²/∂z_j∂z̄_k` at one node.
#[inline(always)]
pub(crate) fn hessian_node(v: &[f64], i: usize, o: &Offsets, st: &Stencil) -> HermMat {
    if st.n == 1 {
        let lap = second_diff(v, i, o, st, 0) + second_diff(v, i, o, st, 1);
        return HermMat { d0: 0.25 * lap, ..HermMat::ZERO };
    }
    let d00 = second_diff(v, i, o, st, 0);
    let d11 = second_diff(v, i, o, st, 1);
    let d22 = second_diff(v, i, o, st, 2);
    let d33 = second_diff(v, i, o, st, 3);
    let d02 = mixed_diff(v, i, o, st, 0, 2);
    let d13 = mixed_diff(v, i, o, st, 1, 3);
    let d03 = mixed_diff(v, i, o, st, 0, 3);
    let d12 = mixed_diff(v, i, o, st, 1, 2);
    HermMat {
        d0: 0.25 * (d00 + d11),
        d1: 0.25 * (d22 + d33),
        off: Complex64::new(0.25 * (d02 + d13), 0.25 * (d03 - d12)),
    }
}

/// Discrete complex Hessian `dd^c φ` by second-order central differences.
pub fn complex_hessian(phi: &ScalarField) -> HermitianField {
    let g = *phi.grid();
    let st = g.stencil();
    let v = phi.values();
    let mut mats = vec![HermMat::ZERO; g.len()];
    for_each_node_mut(&g, &mut mats, |i, c, out| {
        *out = hessian_node(v, i, &st.offsets(c), &st);
    });
    HermitianField::from_mats(g, mats).expect("length matches grid")
}

/// Complex Hessian at a single node.
pub fn hessian_at(phi: &ScalarField, idx: usize) -> HermMat {
    let g = phi.grid();
    let st = g.stencil();
    hessian_node(phi.values(), idx, &st.offsets(&g.coords(idx)), &st)
}

/// Standard `(2·2n+1)`-point discrete Laplacian.
pub fn laplacian(phi: &ScalarField) -> ScalarField {
    let g: TorusGrid = *phi.grid();
    let st = g.stencil();
    let v = phi.values();
    let mut out = vec![0.0; g.len()];
    for_each_node_mut(&g, &mut out, |i, c, slot| {
        let o = st.offsets(c);
        let mut s = second_diff(v, i, &o, &st, 0);
        for a in 1..st.d {
            s += second_diff(v, i, &o, &st, a);
        }
        *slot = s;
    });
    ScalarField::from_raw(g, out)
}
