use super::{for_each_node_mut, GridError, TorusGrid};
use crate::herm::HermMat;

/// One finite real value per grid node.
#[derive(Clone, Debug, PartialEq)]
pub struct ScalarField {
    grid: TorusGrid,
    values: Vec<f64>,
}

impl ScalarField {
    /// Takes ownership of `values`, rejecting wrong lengths and non-finite
    /// entries.
    pub fn from_values(grid: TorusGrid, values: Vec<f64>) -> Result<Self, GridError> {
        if values.len() != grid.len() {
            return Err(GridError::Length { expected: grid.len(), got: values.len() });
        }
        if let Some((node, &value)) = values.iter().enumerate().find(|(_, v)| !v.is_finite()) {
            return Err(GridError::NonFinite { node, value });
        }
        Ok(ScalarField { grid, values })
    }

    /// Unchecked constructor for values produced by operations whose
    /// finiteness the caller has already established.
    pub(crate) fn from_raw(grid: TorusGrid, values: Vec<f64>) -> Self {
        debug_assert_eq!(values.len(), grid.len());
        ScalarField { grid, values }
    }

    pub fn constant(grid: TorusGrid, c: f64) -> Self {
        assert!(c.is_finite(), "constant field value must be finite");
        ScalarField { grid, values: vec![c; grid.len()] }
    }

    pub fn zeros(grid: TorusGrid) -> Self {
        Self::constant(grid, 0.0)
    }

    /// Samples `f` at node positions. Panics if `f` returns a non-finite
    /// value; use [`ScalarField::try_from_fn`] for fallible sampling.
    pub fn from_fn(grid: TorusGrid, f: impl Fn(&[f64; 4]) -> f64 + Sync) -> Self {
        Self::try_from_fn(grid, f).expect("sampled field must be finite")
    }

    pub fn try_from_fn(grid: TorusGrid, f: impl Fn(&[f64; 4]) -> f64 + Sync) -> Result<Self, GridError> {
        let mut values = vec![0.0; grid.len()];
        let h: Vec<f64> = (0..grid.dims()).map(|a| grid.h(a)).collect();
        for_each_node_mut(&grid, &mut values, |_, c, v| {
            let mut x = [0.0; 4];
            for a in 0..h.len() {
                x[a] = c[a] as f64 * h[a];
            }
            *v = f(&x);
        });
        Self::from_values(grid, values)
    }

    pub fn grid(&self) -> &TorusGrid {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn max(&self) -> f64 {
        self.values.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn min(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn sup_norm(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    /// Node-wise `f(self)`; panics on a non-finite result.
    pub fn map(&self, f: impl Fn(f64) -> f64) -> ScalarField {
        let values: Vec<f64> = self.values.iter().map(|&v| f(v)).collect();
        ScalarField::from_values(self.grid, values).expect("map produced a non-finite value")
    }

    /// Node-wise `f(self, other)`; panics on grid mismatch or non-finite result.
    pub fn zip_map(&self, other: &ScalarField, f: impl Fn(f64, f64) -> f64) -> ScalarField {
        assert_eq!(self.grid, other.grid, "fields live on different grids");
        let values: Vec<f64> = self.values.iter().zip(&other.values).map(|(&a, &b)| f(a, b)).collect();
        ScalarField::from_values(self.grid, values).expect("zip_map produced a non-finite value")
    }

    pub fn add_scalar(&self, c: f64) -> ScalarField {
        self.map(|v| v + c)
    }

    pub fn scale(&self, c: f64) -> ScalarField {
        self.map(|v| c * v)
    }

    pub fn add(&self, other: &ScalarField) -> ScalarField {
        self.zip_map(other, |a, b| a + b)
    }

    pub fn sub(&self, other: &ScalarField) -> ScalarField {
        self.zip_map(other, |a, b| a - b)
    }

    /// Cyclic shift by `shift` nodes per axis: `out[i + shift] = self[i]`.
    pub fn shifted(&self, shift: &[i64]) -> ScalarField {
        let mut values = vec![0.0; self.len()];
        for (i, &v) in self.values.iter().enumerate() {
            values[self.grid.shifted(i, shift)] = v;
        }
        ScalarField::from_raw(self.grid, values)
    }
}

/// One Hermitian matrix per node.
#[derive(Clone, Debug, PartialEq)]
pub struct HermitianField {
    grid: TorusGrid,
    mats: Vec<HermMat>,
}

impl HermitianField {
    pub fn from_mats(grid: TorusGrid, mats: Vec<HermMat>) -> Result<Self, GridError> {
        if mats.len() != grid.len() {
            return Err(GridError::Length { expected: grid.len(), got: mats.len() });
        }
        Ok(HermitianField { grid, mats })
    }

    pub fn constant(grid: TorusGrid, a: HermMat) -> Self {
        HermitianField { grid, mats: vec![a; grid.len()] }
    }

    pub fn zeros(grid: TorusGrid) -> Self {
        Self::constant(grid, HermMat::ZERO)
    }

    pub fn grid(&self) -> &TorusGrid {
        &self.grid
    }

    pub fn mats(&self) -> &[HermMat] {
        &self.mats
    }

    pub fn at(&self, idx: usize) -> HermMat {
        self.mats[idx]
    }

    pub fn add(&self, other: &HermitianField) -> HermitianField {
        assert_eq!(self.grid, other.grid, "fields live on different grids");
        let mats = self.mats.iter().zip(&other.mats).map(|(&a, &b)| a + b).collect();
        HermitianField { grid: self.grid, mats }
    }

    pub fn add_const(&self, a: HermMat) -> HermitianField {
        HermitianField { grid: self.grid, mats: self.mats.iter().map(|&m| m + a).collect() }
    }

    pub fn scale(&self, c: f64) -> HermitianField {
        HermitianField { grid: self.grid, mats: self.mats.iter().map(|&m| c * m).collect() }
    }

    /// Node-wise minimum eigenvalue.
    pub fn min_eigenvalues(&self) -> ScalarField {
        let n = self.grid.n();
        ScalarField::from_raw(self.grid, self.mats.iter().map(|m| m.min_eigenvalue(n)).collect())
    }

    /// Largest entry-wise deviation from `other`.
    pub fn max_abs_diff(&self, other: &HermitianField) -> f64 {
        self.mats.iter().zip(&other.mats).fold(0.0, |acc, (&a, &b)| acc.max((a - b).max_abs_entry()))
    }

    pub fn mean(&self) -> HermMat {
        let s = self.mats.iter().fold(HermMat::ZERO, |acc, &m| acc + m);
        (1.0 / self.mats.len() as f64) * s
    }
}

/// `max_i |a_i − b_i|`.
pub fn sup_norm_diff(a: &ScalarField, b: &ScalarField) -> Result<f64, GridError> {
    if a.grid != b.grid {
        return Err(GridError::Mismatch);
    }
    Ok(a.values.iter().zip(&b.values).fold(0.0, |m, (x, y)| m.max((x - y).abs())))
}

/// Grid average, i.e. uniform quadrature over the torus normalized to
/// unit volume.
pub fn mean(a: &ScalarField) -> f64 {
    a.values.iter().sum::<f64>() / a.values.len() as f64
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn g128() -> TorusGrid {
        TorusGrid::new(1, 128).unwrap()
    }

    #[test]
    fn sup_norm_diff_examples() {
        let g = g128();
        let a = ScalarField::from_fn(g, |x| (2.0 * PI * x[0]).cos());
        assert_eq!(sup_norm_diff(&a, &a).unwrap(), 0.0);
        let one = ScalarField::constant(g, 1.0);
        let zero = ScalarField::zeros(g);
        assert_eq!(sup_norm_diff(&one, &zero).unwrap(), 1.0);
        assert!((sup_norm_diff(&a, &zero).unwrap() - 1.0).abs() < 1e-12);
        let other = ScalarField::zeros(TorusGrid::new(1, 64).unwrap());
        assert!(matches!(sup_norm_diff(&a, &other), Err(GridError::Mismatch)));
    }

    #[test]
    fn mean_examples() {
        let g = g128();
        assert!((mean(&ScalarField::constant(g, 3.25)) - 3.25).abs() < 1e-15);
        let c = ScalarField::from_fn(g, |x| (2.0 * PI * x[0]).cos());
        assert!(mean(&c).abs() < 1e-12);
        // Trapezoid sums of cos(4πx) vanish exactly for m > 2, so the mean of
        // cos² = ½ + ½cos(4πx) is ½.
        let c2 = ScalarField::from_fn(g, |x| (2.0 * PI * x[0]).cos().powi(2));
        assert!((mean(&c2) - 0.5).abs() < 1e-12);
    }

    #[test]
    fn rejects_non_finite() {
        let g = TorusGrid::new(1, 8).unwrap();
        let mut v = vec![0.0; 64];
        v[5] = f64::NAN;
        assert!(matches!(ScalarField::from_values(g, v), Err(GridError::NonFinite { node: 5, .. })));
    }
}
