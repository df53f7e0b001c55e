//! Scalar profiles used by the long-time bounds of the normalized flow.
//!
//! `h` solves `h' = n e^t log(1 − e^{−t})`, `h(0) = 0`; in closed form
//! `h(t) = n{(e^t − 1) log(e^t − 1) − t e^t}`, evaluated here as
//! `n{−t + (e^t − 1)·log(−expm1(−t))}` to avoid cancellation.
//!
//! `h2` is the matching upper profile, `h2' = n e^t log(1 + e^{−t})`,
//! `h2(0) = 0`.

use super::ParabolicError;
use std::f64::consts::LN_2;

pub fn h_profile(t: f64, n: usize) -> f64 {
    if t <= 0.0 {
        return 0.0;
    }
    n as f64 * (-t + t.exp_m1() * (-(-t).exp_m1()).ln())
}

pub fn h_derivative(t: f64, n: usize) -> f64 {
    n as f64 * t.exp() * (-(-t).exp_m1()).ln()
}

/// `n(e^t log(1 + e^{−t}) + log(1 + e^t) − 2 log 2)`.
pub fn h2_profile(t: f64, n: usize) -> f64 {
    let e = (-t).exp();
    n as f64 * (t.exp() * e.ln_1p() + t + e.ln_1p() - 2.0 * LN_2)
}

pub fn h2_derivative(t: f64, n: usize) -> f64 {
    n as f64 * t.exp() * (-t).exp().ln_1p()
}

/// `|h'(t) − n e^t log(1 − e^{−t})|` with `h'` from a central difference.
pub fn h_ode_residual(t: f64, n: usize) -> Result<f64, ParabolicError> {
    if !(t > 0.0 && t.is_finite()) {
        return Err(ParabolicError::HProfile(format!("residual needs t > 0, got {t}")));
    }
    let d = (1e-5 * (1.0 + t)).min(0.25 * t);
    let fd = (h_profile(t + d, n) - h_profile(t - d, n)) / (2.0 * d);
    Ok((fd - h_derivative(t, n)).abs())
}

#[cfg(test)]
mod tests {
    use super::*;

    /// `∫_0^t f` with `s = u²`, which removes the log singularity at 0.
    fn quad(t: f64, f: impl Fn(f64) -> f64) -> f64 {
        fn simpson(
            g: &dyn Fn(f64) -> f64,
            a: f64,
            b: f64,
            fa: f64,
            fm: f64,
            fb: f64,
            whole: f64,
            tol: f64,
            depth: u32,
        ) -> f64 {
            let m = 0.5 * (a + b);
            let (lm, rm) = (0.5 * (a + m), 0.5 * (m + b));
            let (flm, frm) = (g(lm), g(rm));
            let left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
            let right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
            if depth == 0 || (left + right - whole).abs() <= 15.0 * tol {
                return left + right + (left + right - whole) / 15.0;
            }
            simpson(g, a, m, fa, flm, fm, left, tol / 2.0, depth - 1)
                + simpson(g, m, b, fm, frm, fb, right, tol / 2.0, depth - 1)
        }
        let g = |u: f64| if u == 0.0 { 0.0 } else { 2.0 * u * f(u * u) };
        let b = t.sqrt();
        let (fa, fm, fb) = (g(0.0), g(0.5 * b), g(b));
        simpson(&g, 0.0, b, fa, fm, fb, b / 6.0 * (fa + 4.0 * fm + fb), 1e-12, 50)
    }

    #[test]
    fn log_two_value() {
        assert!((h_profile(2f64.ln(), 1) + 2.0 * LN_2).abs() < 1e-14);
        let q = quad(2f64.ln(), |s| h_derivative(s, 1));
        assert!((q + 2.0 * LN_2).abs() < 1e-8, "{q}");
    }

    #[test]
    fn closed_form_matches_quadrature() {
        for k in 0..=20 {
            let t = 0.1 + k as f64 * (9.9 / 20.0);
            for n in [1, 2] {
                let q = quad(t, |s| h_derivative(s, n));
                assert!((q - h_profile(t, n)).abs() < 1e-8 * (1.0 + q.abs()), "t={t} n={n}");
            }
        }
    }

    #[test]
    fn small_time_limit_and_growth() {
        assert!(h_profile(1e-12, 1).abs() < 1e-9);
        for t in [5.0, 10.0, 25.0, 50.0] {
            assert!(h_profile(t, 2).abs() / t <= 4.0);
        }
        assert!(h_ode_residual(1.0, 1).unwrap() < 1e-8);
        assert!(h_ode_residual(0.0, 1).is_err());
    }

    #[test]
    fn upper_profile() {
        assert!(h2_profile(0.0, 1).abs() < 1e-15);
        for t in [0.3, 1.0, 4.0] {
            let q = quad(t, |s| h2_derivative(s, 2));
            assert!((q - h2_profile(t, 2)).abs() < 1e-8);
        }
    }
}
