//! Periodic grids on the real 2n-torus, scalar and Hermitian fields, and the
//! finite-difference operators built on them.
//!
//! Real axes are ordered `[x1, y1, x2, y2]` (so `z_j = x_j + i y_j`), storage
//! is row-major with the last axis fastest, and every axis wraps.

mod field;
mod hessian;
mod io;
mod spectral;
pub mod trig;

pub use field::{mean, sup_norm_diff, HermitianField, ScalarField};
pub(crate) use hessian::hessian_node;
pub use hessian::{complex_hessian, hessian_at, laplacian};
pub use io::{
    read_snapshot, read_trajectory, write_field_csv, write_snapshot, write_trajectory, SnapshotStats, Trajectory,
    TrajectoryMeta,
};
pub use spectral::{fft_forward, fft_inverse, mollify, wavenumbers};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum GridError {
    #[error("unsupported complex dimension {0} (expected 1 or 2)")]
    Dimension(usize),
    #[error("nodes per axis must be even and at least 8, got {0}")]
    Resolution(usize),
    #[error("periods must be positive and finite, one per real axis ({expected}), got {got:?}")]
    Periods { expected: usize, got: Vec<f64> },
    #[error("fields live on different grids")]
    Mismatch,
    #[error("expected {expected} values, got {got}")]
    Length { expected: usize, got: usize },
    #[error("non-finite value {value} at node {node}")]
    NonFinite { node: usize, value: f64 },
    #[error("bandwidth must be non-negative, got {0}")]
    NegativeBandwidth(f64),
    #[error("snapshot format: {0}")]
    Format(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Uniform periodic grid with `m` nodes on each of the `2n` real axes.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TorusGrid {
    n: usize,
    m: usize,
    periods: [f64; 4],
}

impl TorusGrid {
    /// Unit periods on every axis.
    pub fn new(n: usize, m: usize) -> Result<Self, GridError> {
        Self::with_periods(n, m, &vec![1.0; 2 * n.min(2)])
    }

    pub fn with_periods(n: usize, m: usize, periods: &[f64]) -> Result<Self, GridError> {
        if n != 1 && n != 2 {
            return Err(GridError::Dimension(n));
        }
        if m < 8 || m % 2 != 0 {
            return Err(GridError::Resolution(m));
        }
        if periods.len() != 2 * n || periods.iter().any(|p| !(p.is_finite() && *p > 0.0)) {
            return Err(GridError::Periods { expected: 2 * n, got: periods.to_vec() });
        }
        let mut p = [0.0; 4];
        p[..2 * n].copy_from_slice(periods);
        Ok(TorusGrid { n, m, periods: p })
    }

    /// Complex dimension.
    pub fn n(&self) -> usize {
        self.n
    }

    /// Nodes per real axis.
    pub fn m(&self) -> usize {
        self.m
    }

    /// Number of real axes, `2n`.
    pub fn dims(&self) -> usize {
        2 * self.n
    }

    pub fn periods(&self) -> &[f64] {
        &self.periods[..self.dims()]
    }

    pub fn len(&self) -> usize {
        self.m.pow(self.dims() as u32)
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Spacing on axis `a`.
    pub fn h(&self, a: usize) -> f64 {
        self.periods[a] / self.m as f64
    }

    /// Largest spacing over all axes.
    pub fn h_max(&self) -> f64 {
        (0..self.dims()).map(|a| self.h(a)).fold(0.0, f64::max)
    }

    pub fn stride(&self, a: usize) -> usize {
        self.m.pow((self.dims() - 1 - a) as u32)
    }

    pub fn coords(&self, mut idx: usize) -> [usize; 4] {
        let mut c = [0usize; 4];
        for a in (0..self.dims()).rev() {
            c[a] = idx % self.m;
            idx /= self.m;
        }
        c
    }

    /// Index of the node with the given coordinates, each taken modulo `m`.
    pub fn index(&self, coords: &[i64]) -> usize {
        let m = self.m as i64;
        coords[..self.dims()].iter().fold(0usize, |acc, &c| acc * self.m + c.rem_euclid(m) as usize)
    }

    /// Physical position of a node.
    pub fn position(&self, idx: usize) -> [f64; 4] {
        let c = self.coords(idx);
        let mut x = [0.0; 4];
        for a in 0..self.dims() {
            x[a] = c[a] as f64 * self.h(a);
        }
        x
    }

    /// Index of the node shifted by `shift` nodes per axis.
    pub fn shifted(&self, idx: usize, shift: &[i64]) -> usize {
        let c = self.coords(idx);
        let mut s = [0i64; 4];
        for a in 0..self.dims() {
            s[a] = c[a] as i64 + shift[a];
        }
        self.index(&s)
    }

    /// Center-value sensitivity of the discrete Hessian: how much the
    /// smallest eigenvalue of `dd^c φ` moves per unit change of `φ` at the
    /// node itself, `max_j ¼(2/h_{x_j}² + 2/h_{y_j}²)`.
    pub fn center_weight(&self) -> f64 {
        (0..self.n).map(|j| 0.5 * (1.0 / self.h(2 * j).powi(2) + 1.0 / self.h(2 * j + 1).powi(2))).fold(0.0, f64::max)
    }

    /// Per-complex-direction center weights `½(1/h_x² + 1/h_y²)`.
    pub fn center_weights(&self) -> [f64; 2] {
        let mut w = [0.0; 2];
        for (j, wj) in w.iter_mut().enumerate().take(self.n) {
            *wj = 0.5 * (1.0 / self.h(2 * j).powi(2) + 1.0 / self.h(2 * j + 1).powi(2));
        }
        w
    }

    pub(crate) fn stencil(&self) -> Stencil {
        Stencil::new(self)
    }
}

/// Precomputed neighbor offsets and difference weights.
#[derive(Clone, Copy, Debug)]
pub(crate) struct Stencil {
    pub n: usize,
    pub d: usize,
    pub m: usize,
    pub stride: [isize; 4],
    pub h2: [f64; 4],
    pub hh4: [[f64; 4]; 4],
}

/// Signed offsets from a node to its forward and backward neighbor on each
/// axis, with periodic wrap already applied.
#[derive(Clone, Copy, Debug)]
pub(crate) struct Offsets {
    pub up: [isize; 4],
    pub dn: [isize; 4],
}

impl Stencil {
    fn new(g: &TorusGrid) -> Self {
        let d = g.dims();
        let mut stride = [0isize; 4];
        let mut h2 = [0.0; 4];
        let mut hh4 = [[0.0; 4]; 4];
        for a in 0..d {
            stride[a] = g.stride(a) as isize;
            h2[a] = g.h(a) * g.h(a);
            for b in 0..d {
                hh4[a][b] = 4.0 * g.h(a) * g.h(b);
            }
        }
        Stencil { n: g.n, d, m: g.m, stride, h2, hh4 }
    }

    #[inline]
    pub fn offsets(&self, c: &[usize; 4]) -> Offsets {
        let mut up = [0isize; 4];
        let mut dn = [0isize; 4];
        let last = (self.m - 1) as isize;
        for a in 0..self.d {
            let s = self.stride[a];
            up[a] = if c[a] + 1 == self.m { -last * s } else { s };
            dn[a] = if c[a] == 0 { last * s } else { -s };
        }
        Offsets { up, dn }
    }
}

/// Applies `f(idx, coords, out)` to every node, row by row along the last
/// axis. Rows run in parallel; each output slot depends only on its node.
pub(crate) fn for_each_node_mut<T, F>(g: &TorusGrid, out: &mut [T], f: F)
where
    T: Send,
    F: Fn(usize, &[usize; 4], &mut T) + Sync,
{
    use rayon::prelude::*;
    let m = g.m;
    let d = g.dims();
    out.par_chunks_mut(m).enumerate().for_each(|(row, chunk)| {
        let mut c = [0usize; 4];
        let mut r = row;
        for a in (0..d - 1).rev() {
            c[a] = r % m;
            r /= m;
        }
        let base = row * m;
        for (k, slot) in chunk.iter_mut().enumerate() {
            c[d - 1] = k;
            f(base + k, &c, slot);
        }
    });
}

/// Like [`for_each_node_mut`] but also folds a per-row accumulator; the
/// accumulators come back in row order so callers can combine them
/// deterministically.
pub(crate) fn for_each_row_reduce<T, S, F>(g: &TorusGrid, out: &mut [T], f: F) -> Vec<S>
where
    T: Send,
    S: Default + Send,
    F: Fn(usize, &[usize; 4], &mut T, &mut S) + Sync,
{
    use rayon::prelude::*;
    let m = g.m;
    let d = g.dims();
    out.par_chunks_mut(m)
        .enumerate()
        .map(|(row, chunk)| {
            let mut c = [0usize; 4];
            let mut r = row;
            for a in (0..d - 1).rev() {
                c[a] = r % m;
                r /= m;
            }
            let base = row * m;
            let mut acc = S::default();
            for (k, slot) in chunk.iter_mut().enumerate() {
                c[d - 1] = k;
                f(base + k, &c, slot, &mut acc);
            }
            acc
        })
        .collect()
}
