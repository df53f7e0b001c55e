//! Small Hermitian matrices (n = 1 or 2) with closed-form spectra.
//!
//! Storage is the upper triangle: two real diagonal entries and one complex
//! off-diagonal entry. The (2,1) entry is implied as the conjugate of `off`,
//! so every value of this type is exactly Hermitian. For n = 1 only `d0` is
//! meaningful and the other fields stay zero.

use num_complex::Complex64;
use std::ops::{Add, Mul, Sub};

#[derive(Clone, Copy, Debug, PartialEq, Default)]
pub struct HermMat {
    pub d0: f64,
    pub d1: f64,
    pub off: Complex64,
}

impl HermMat {
    pub const ZERO: HermMat = HermMat { d0: 0.0, d1: 0.0, off: Complex64 { re: 0.0, im: 0.0 } };

    /// `s·I` in dimension `n`.
    pub fn scalar(n: usize, s: f64) -> Self {
        if n == 1 {
            HermMat { d0: s, ..Self::ZERO }
        } else {
            HermMat { d0: s, d1: s, ..Self::ZERO }
        }
    }

    pub fn identity(n: usize) -> Self {
        Self::scalar(n, 1.0)
    }

    pub fn diag(d0: f64, d1: f64) -> Self {
        HermMat { d0, d1, ..Self::ZERO }
    }

    pub fn new(d0: f64, d1: f64, off: Complex64) -> Self {
        HermMat { d0, d1, off }
    }

    /// Builds from `n*n` row-major complex entries given as `(re, im)`.
    /// Fails unless the entries are Hermitian to within `1e-12`.
    pub fn from_row_major(n: usize, entries: &[(f64, f64)]) -> Result<Self, String> {
        match n {
            1 => {
                if entries.len() != 1 {
                    return Err(format!("expected 1 entry for n=1, got {}", entries.len()));
                }
                let (re, im) = entries[0];
                if im.abs() > 1e-12 {
                    return Err("diagonal entry must be real".into());
                }
                Ok(HermMat { d0: re, ..Self::ZERO })
            }
            2 => {
                if entries.len() != 4 {
                    return Err(format!("expected 4 entries for n=2, got {}", entries.len()));
                }
                let [a, c, cc, b] = [entries[0], entries[1], entries[2], entries[3]];
                if a.1.abs() > 1e-12 || b.1.abs() > 1e-12 {
                    return Err("diagonal entries must be real".into());
                }
                if (c.0 - cc.0).abs() > 1e-12 || (c.1 + cc.1).abs() > 1e-12 {
                    return Err("matrix is not Hermitian".into());
                }
                Ok(HermMat::new(a.0, b.0, Complex64::new(c.0, c.1)))
            }
            _ => Err(format!("unsupported dimension {n}")),
        }
    }

    /// Row-major entries as `(re, im)` pairs.
    pub fn to_row_major(&self, n: usize) -> Vec<(f64, f64)> {
        if n == 1 {
            vec![(self.d0, 0.0)]
        } else {
            vec![(self.d0, 0.0), (self.off.re, self.off.im), (self.off.re, -self.off.im), (self.d1, 0.0)]
        }
    }

    pub fn trace(&self, n: usize) -> f64 {
        if n == 1 {
            self.d0
        } else {
            self.d0 + self.d1
        }
    }

    pub fn det(&self, n: usize) -> f64 {
        if n == 1 {
            self.d0
        } else {
            self.d0 * self.d1 - self.off.norm_sqr()
        }
    }

    /// Eigenvalues `(min, max)`.
    ///
    /// The small eigenvalue is recovered as `det / λ_max` when `λ_max > 0`,
    /// which keeps relative accuracy near the degenerate boundary.
    #[inline]
    pub fn eigenvalues(&self, n: usize) -> (f64, f64) {
        if n == 1 {
            return (self.d0, self.d0);
        }
        let mid = 0.5 * (self.d0 + self.d1);
        let half = 0.5 * (self.d0 - self.d1);
        let r = (half * half + self.off.norm_sqr()).sqrt();
        let hi = mid + r;
        let lo = if hi > 0.0 && mid > 0.0 { self.det(n) / hi } else { mid - r };
        (lo, hi)
    }

    #[inline]
    pub fn min_eigenvalue(&self, n: usize) -> f64 {
        self.eigenvalues(n).0
    }

    /// Product of the clamped eigenvalues, `∏ max(λ_i, 0)`.
    #[inline]
    pub fn det_plus(&self, n: usize) -> f64 {
        if n == 1 {
            return self.d0.max(0.0);
        }
        let (lo, _) = self.eigenvalues(n);
        if lo > 0.0 {
            self.det(n).max(0.0)
        } else {
            0.0
        }
    }

    /// Inverse of a nonsingular matrix.
    pub fn inverse(&self, n: usize) -> HermMat {
        if n == 1 {
            return HermMat { d0: 1.0 / self.d0, ..Self::ZERO };
        }
        let det = self.det(n);
        HermMat::new(self.d1 / det, self.d0 / det, -self.off / det)
    }

    /// `tr(self · other)` for Hermitian operands.
    #[inline]
    pub fn trace_product(&self, other: &HermMat, n: usize) -> f64 {
        if n == 1 {
            return self.d0 * other.d0;
        }
        self.d0 * other.d0 + self.d1 * other.d1 + 2.0 * (self.off * other.off.conj()).re
    }

    /// Extreme generalized eigenvalues of `self` relative to a positive
    /// definite `base`, i.e. the spectrum of `base^{-1/2} self base^{-1/2}`.
    pub fn generalized_eigenvalues(&self, base: &HermMat, n: usize) -> (f64, f64) {
        if n == 1 {
            let r = self.d0 / base.d0;
            return (r, r);
        }
        // Roots of det(self - λ base) = 0: a λ² - b λ + c = 0.
        let a = base.det(n);
        let b = self.d0 * base.d1 + self.d1 * base.d0 - 2.0 * (self.off * base.off.conj()).re;
        let c = self.det(n);
        let mid = 0.5 * b / a;
        let disc = (mid * mid - c / a).max(0.0).sqrt();
        (mid - disc, mid + disc)
    }

    pub fn max_abs_entry(&self) -> f64 {
        self.d0.abs().max(self.d1.abs()).max(self.off.norm())
    }

    /// Conjugation `U self U*` by a 2×2 unitary given by its rows.
    pub fn conjugate_by(&self, u: [[Complex64; 2]; 2]) -> HermMat {
        let m = [[Complex64::new(self.d0, 0.0), self.off], [self.off.conj(), Complex64::new(self.d1, 0.0)]];
        let mut um = [[Complex64::new(0.0, 0.0); 2]; 2];
        for i in 0..2 {
            for j in 0..2 {
                um[i][j] = u[i][0] * m[0][j] + u[i][1] * m[1][j];
            }
        }
        let mut out = [[Complex64::new(0.0, 0.0); 2]; 2];
        for i in 0..2 {
            for j in 0..2 {
                out[i][j] = um[i][0] * u[j][0].conj() + um[i][1] * u[j][1].conj();
            }
        }
        HermMat::new(out[0][0].re, out[1][1].re, out[0][1])
    }
}

impl Add for HermMat {
    type Output = HermMat;
    #[inline]
    fn add(self, o: HermMat) -> HermMat {
        HermMat::new(self.d0 + o.d0, self.d1 + o.d1, self.off + o.off)
    }
}

impl Sub for HermMat {
    type Output = HermMat;
    #[inline]
    fn sub(self, o: HermMat) -> HermMat {
        HermMat::new(self.d0 - o.d0, self.d1 - o.d1, self.off - o.off)
    }
}

impl Mul<HermMat> for f64 {
    type Output = HermMat;
    #[inline]
    fn mul(self, m: HermMat) -> HermMat {
        HermMat::new(self * m.d0, self * m.d1, m.off * self)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn eigenvalues_of_diagonal() {
        let m = HermMat::diag(2.0, -1.0);
        assert_eq!(m.eigenvalues(2), (-1.0, 2.0));
        assert_eq!(m.det_plus(2), 0.0);
        assert_eq!(HermMat::diag(2.0, 3.0).det_plus(2), 6.0);
    }

    #[test]
    fn row_major_roundtrip() {
        let m = HermMat::new(2.0, 1.0, Complex64::new(0.3, -0.2));
        let back = HermMat::from_row_major(2, &m.to_row_major(2)).unwrap();
        assert_eq!(m, back);
        assert!(HermMat::from_row_major(2, &[(1.0, 0.0), (0.5, 0.0), (0.4, 0.0), (1.0, 0.0)]).is_err());
    }

    #[test]
    fn inverse_and_trace_product() {
        let m = HermMat::new(3.0, 2.0, Complex64::new(0.5, 0.7));
        let inv = m.inverse(2);
        assert!((inv.trace_product(&m, 2) - 2.0).abs() < 1e-14);
    }

    #[test]
    fn generalized_spectrum_against_scaling() {
        let base = HermMat::new(2.0, 1.0, Complex64::new(0.2, 0.1));
        let (lo, hi) = (1.5 * base).generalized_eigenvalues(&base, 2);
        assert!((lo - 1.5).abs() < 1e-12 && (hi - 1.5).abs() < 1e-12);
    }
}
