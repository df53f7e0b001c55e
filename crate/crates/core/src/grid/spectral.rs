//! Multi-dimensional periodic FFTs and Gaussian mollification.

use super::{GridError, ScalarField, TorusGrid};
use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};
use std::f64::consts::PI;
use std::sync::Arc;

fn plans(m: usize) -> (Arc<dyn Fft<f64>>, Arc<dyn Fft<f64>>) {
    let mut planner = FftPlanner::new();
    (planner.plan_fft_forward(m), planner.plan_fft_inverse(m))
}

fn transform(g: &TorusGrid, data: &mut [Complex64], fft: &Arc<dyn Fft<f64>>) {
    let m = g.m();
    let d = g.dims();
    let n = g.len();
    let mut scratch = vec![Complex64::new(0.0, 0.0); fft.get_inplace_scratch_len()];
    // Last axis: lines are contiguous.
    fft.process_with_scratch(data, &mut scratch);
    let mut buf = Vec::new();
    for a in 0..d - 1 {
        let s = g.stride(a);
        let block = m * s;
        buf.resize(block, Complex64::new(0.0, 0.0));
        for o in (0..n).step_by(block) {
            for k in 0..m {
                for q in 0..s {
                    buf[q * m + k] = data[o + k * s + q];
                }
            }
            fft.process_with_scratch(&mut buf, &mut scratch);
            for k in 0..m {
                for q in 0..s {
                    data[o + k * s + q] = buf[q * m + k];
                }
            }
        }
    }
}

/// Unnormalized forward DFT over all axes.
pub fn fft_forward(g: &TorusGrid, data: &mut [Complex64]) {
    let (f, _) = plans(g.m());
    transform(g, data, &f);
}

/// Inverse DFT over all axes, normalized so that it inverts [`fft_forward`].
pub fn fft_inverse(g: &TorusGrid, data: &mut [Complex64]) {
    let (_, inv) = plans(g.m());
    transform(g, data, &inv);
    let s = 1.0 / g.len() as f64;
    for z in data.iter_mut() {
        *z *= s;
    }
}

/// Angular wavenumbers `2πk/L` on axis `a` in FFT order, `k ∈ [−m/2, m/2)`.
pub fn wavenumbers(g: &TorusGrid, a: usize) -> Vec<f64> {
    let m = g.m() as i64;
    let l = g.periods()[a];
    (0..m)
        .map(|k| {
            let k = if k < m / 2 { k } else { k - m };
            2.0 * PI * k as f64 / l
        })
        .collect()
}

/// Fourier multiplier of the sampled periodic Gaussian of standard deviation
/// `sigma` on one axis, normalized to unit mass.
///
/// By Poisson summation the DFT of the sampled kernel is the aliased sum
/// `Σ_l exp(−σ²(κ + 2πlm/L)²/2)`. Using it instead of the bare continuous
/// multiplier keeps the real-space kernel non-negative at every bandwidth.
fn axis_multiplier(g: &TorusGrid, a: usize, sigma: f64) -> Vec<f64> {
    let m = g.m();
    let l = g.periods()[a];
    let h = g.h(a);
    let kappa = wavenumbers(g, a);
    // Below this the kernel's first off-center sample underflows.
    if h * h / (2.0 * sigma * sigma) > 700.0 {
        return vec![1.0; m];
    }
    let shift = 2.0 * PI * m as f64 / l;
    let reach = (12.0 / (sigma * shift)).ceil() as i64 + 2;
    let aliased = |k: f64| -> f64 {
        (-reach..=reach)
            .map(|j| {
                let w = k + j as f64 * shift;
                (-0.5 * sigma * sigma * w * w).exp()
            })
            .sum()
    };
    let z = aliased(0.0);
    kappa.iter().map(|&k| aliased(k) / z).collect()
}

/// Periodic heat-kernel smoothing with variance `bandwidth²` on every axis.
pub fn mollify(a: &ScalarField, bandwidth: f64) -> Result<ScalarField, GridError> {
    if !(bandwidth >= 0.0) {
        return Err(GridError::NegativeBandwidth(bandwidth));
    }
    if bandwidth == 0.0 {
        return Ok(a.clone());
    }
    let g = *a.grid();
    let d = g.dims();
    let mult: Vec<Vec<f64>> = (0..d).map(|ax| axis_multiplier(&g, ax, bandwidth)).collect();
    let mut data: Vec<Complex64> = a.values().iter().map(|&v| Complex64::new(v, 0.0)).collect();
    fft_forward(&g, &mut data);
    for (i, z) in data.iter_mut().enumerate() {
        let c = g.coords(i);
        let mut w = 1.0;
        for ax in 0..d {
            w *= mult[ax][c[ax]];
        }
        *z *= w;
    }
    fft_inverse(&g, &mut data);
    ScalarField::from_values(g, data.iter().map(|z| z.re).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{mean, sup_norm_diff};

    #[test]
    fn fft_roundtrip_in_four_dimensions() {
        let g = TorusGrid::new(2, 8).unwrap();
        let orig: Vec<Complex64> = (0..g.len()).map(|i| Complex64::new((i as f64 * 0.37).sin(), 0.0)).collect();
        let mut data = orig.clone();
        fft_forward(&g, &mut data);
        fft_inverse(&g, &mut data);
        for (a, b) in orig.iter().zip(&data) {
            assert!((a - b).norm() < 1e-13);
        }
    }

    #[test]
    fn fft_of_single_mode_is_a_spike() {
        let g = TorusGrid::new(2, 8).unwrap();
        let mut data: Vec<Complex64> = (0..g.len())
            .map(|i| {
                let x = g.position(i);
                Complex64::new(0.0, 2.0 * PI * x[2]).exp()
            })
            .collect();
        fft_forward(&g, &mut data);
        let spike = g.index(&[0, 0, 1, 0]);
        for (i, z) in data.iter().enumerate() {
            let expect = if i == spike { g.len() as f64 } else { 0.0 };
            assert!((z.re - expect).abs() < 1e-9 && z.im.abs() < 1e-9);
        }
    }

    #[test]
    fn mollify_identity_constant_and_negative() {
        let g = TorusGrid::new(1, 32).unwrap();
        let a = ScalarField::from_fn(g, |x| (x[0] * 7.0).sin() + x[1]);
        assert_eq!(mollify(&a, 0.0).unwrap(), a);
        let c = ScalarField::constant(g, 2.5);
        assert!(sup_norm_diff(&mollify(&c, 0.07).unwrap(), &c).unwrap() < 1e-12);
        assert!(matches!(mollify(&a, -1.0), Err(GridError::NegativeBandwidth(_))));
    }

    #[test]
    fn mollify_matches_fourier_multiplier() {
        let g = TorusGrid::new(1, 256).unwrap();
        let a = ScalarField::from_fn(g, |x| (2.0 * PI * x[0]).cos());
        for sigma in [0.01, 0.05, 0.1, 0.2] {
            let out = mollify(&a, sigma).unwrap();
            let expect = a.scale((-2.0 * PI * PI * sigma * sigma).exp());
            assert!(sup_norm_diff(&out, &expect).unwrap() < 1e-6);
            assert!((mean(&out) - mean(&a)).abs() < 1e-12);
        }
    }

    #[test]
    fn tiny_bandwidth_is_numerically_identity() {
        let g = TorusGrid::new(1, 16).unwrap();
        let a = ScalarField::from_fn(g, |x| (5.0 * x[0]).sin());
        let out = mollify(&a, 1e-9).unwrap();
        assert!(sup_norm_diff(&out, &a).unwrap() < 1e-14);
    }
}
