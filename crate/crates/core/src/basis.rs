//! The orthonormal basis adapted to the block structure.
//!
//! Column 0 is `n^{-1/2} u`, column 1 is `m`; columns `2..=fn_count` span the
//! inhibitory coordinates orthogonally to their all-ones vector, and the
//! remaining columns do the same for the excitatory block. The in-block
//! columns come from a Householder reflector that maps the first in-block
//! coordinate vector onto the normalized in-block ones vector; its other
//! columns are then orthonormal and orthogonal to that ones vector.

use std::collections::HashMap;
use std::sync::{Arc, Mutex};

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::matrix::ConstrainedMatrix;
use crate::params::{derive_mu, ModelParams};

#[derive(Debug, Clone, PartialEq)]
pub struct OrthonormalBasis {
    columns: DMatrix<f64>,
    fn_count: usize,
}

impl OrthonormalBasis {
    pub fn columns(&self) -> &DMatrix<f64> {
        &self.columns
    }

    pub fn n(&self) -> usize {
        self.columns.nrows()
    }

    pub fn fn_count(&self) -> usize {
        self.fn_count
    }

    fn check(&self, len: usize) -> Result<()> {
        if len != self.n() {
            return Err(Error::DimensionMismatch {
                expected: self.n(),
                found: len,
            });
        }
        Ok(())
    }

    /// Largest entry of `U^T U - I`.
    pub fn orthonormality_defect(&self) -> f64 {
        let g = self.columns.transpose() * &self.columns;
        let n = self.n();
        (g - DMatrix::identity(n, n)).amax()
    }
}

/// Writes the Householder completion of a block of size `k` starting at
/// row `offset` into columns `col..col + k - 1`.
fn block_columns(u: &mut DMatrix<f64>, offset: usize, k: usize, col: usize) {
    if k < 2 {
        return;
    }
    let r = 1.0 / (k as f64).sqrt();
    // v = e_1 - r * ones, H = I - v v^T / (1 - r)
    let mut v = vec![-r; k];
    v[0] += 1.0;
    let denom = 1.0 - r;
    for c in 1..k {
        for row in 0..k {
            let delta = if row == c { 1.0 } else { 0.0 };
            u[(offset + row, col + c - 1)] = delta - v[row] * v[c] / denom;
        }
    }
}

pub fn build_basis(p: &ModelParams) -> Result<OrthonormalBasis> {
    build_basis_for(p.n, p.fn_count())
}

pub fn build_basis_for(n: usize, fn_count: usize) -> Result<OrthonormalBasis> {
    let (mu_i, mu_e) = derive_mu(n, fn_count)?;
    let mut u = DMatrix::zeros(n, n);
    let inv = 1.0 / (n as f64).sqrt();
    u.column_mut(0).fill(inv);
    for i in 0..n {
        u[(i, 1)] = inv * if i < fn_count { mu_i } else { mu_e };
    }
    block_columns(&mut u, 0, fn_count, 2);
    block_columns(&mut u, fn_count, n - fn_count, fn_count + 1);
    Ok(OrthonormalBasis {
        columns: u,
        fn_count,
    })
}

/// `y_i = (x, u_i)`.
pub fn to_tilde(basis: &OrthonormalBasis, x: &[f64]) -> Result<Vec<f64>> {
    basis.check(x.len())?;
    let y = basis.columns.tr_mul(&DVector::from_column_slice(x));
    Ok(y.as_slice().to_vec())
}

/// Inverse of [`to_tilde`]: `x = U y`.
pub fn from_tilde(basis: &OrthonormalBasis, y: &[f64]) -> Result<Vec<f64>> {
    basis.check(y.len())?;
    let x = &basis.columns * DVector::from_column_slice(y);
    Ok(x.as_slice().to_vec())
}

/// `W~ = U^T W U`.
pub fn conjugate_matrix(basis: &OrthonormalBasis, w: &ConstrainedMatrix) -> Result<DMatrix<f64>> {
    basis.check(w.n())?;
    Ok(basis.columns.tr_mul(w.entries()) * &basis.columns)
}

/// Shares bases between trials; a basis depends only on `(n, fn_count)`.
#[derive(Debug, Default)]
pub struct BasisCache {
    inner: Mutex<HashMap<(usize, usize), Arc<OrthonormalBasis>>>,
}

impl BasisCache {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn get(&self, p: &ModelParams) -> Result<Arc<OrthonormalBasis>> {
        let key = (p.n, p.fn_count());
        let mut map = self.inner.lock().expect("basis cache poisoned");
        if let Some(b) = map.get(&key) {
            return Ok(Arc::clone(b));
        }
        let b = Arc::new(build_basis_for(key.0, key.1)?);
        map.insert(key, Arc::clone(&b));
        Ok(b)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::matrix::sample_projection;
    use crate::rng::TrialSeed;
    use proptest::prelude::*;
    use std::f64::consts::FRAC_1_SQRT_2;

    #[test]
    fn two_dimensional_basis() {
        let b = build_basis_for(2, 1).unwrap();
        let want = DMatrix::from_row_slice(2, 2, &[FRAC_1_SQRT_2, -FRAC_1_SQRT_2, FRAC_1_SQRT_2, FRAC_1_SQRT_2]);
        assert!((b.columns() - want).amax() < 1e-15);
    }

    #[test]
    fn four_dimensional_basis_supports() {
        let b = build_basis_for(4, 2).unwrap();
        let u = b.columns();
        for i in 0..4 {
            assert!((u[(i, 0)] - 0.5).abs() < 1e-15);
            assert!((u[(i, 1)] - if i < 2 { -0.5 } else { 0.5 }).abs() < 1e-15);
        }
        assert!(u[(2, 2)] == 0.0 && u[(3, 2)] == 0.0);
        assert!(u[(0, 3)] == 0.0 && u[(1, 3)] == 0.0);
        assert!((u[(0, 2)] + u[(1, 2)]).abs() < 1e-15);
        assert!((u[(2, 3)] + u[(3, 3)]).abs() < 1e-15);
        assert!(b.orthonormality_defect() < 1e-14);
    }

    #[test]
    fn large_basis_is_orthonormal() {
        let b = build_basis_for(500, 150).unwrap();
        assert!(b.orthonormality_defect() < 1e-10);
        assert!(build_basis_for(10, 0).is_err());
        assert!(build_basis_for(10, 10).is_err());
    }

    #[test]
    fn tilde_examples() {
        let b = build_basis_for(9, 4).unwrap();
        let y = to_tilde(&b, &[1.0; 9]).unwrap();
        assert!((y[0] - 3.0).abs() < 1e-14);
        assert!(y[1..].iter().all(|v| v.abs() < 1e-14));
        let m = b.columns().column(1).iter().copied().collect::<Vec<_>>();
        let y = to_tilde(&b, &m).unwrap();
        assert!((y[1] - 1.0).abs() < 1e-14);
        assert!(y.iter().enumerate().all(|(i, v)| i == 1 || v.abs() < 1e-14));
        assert!(to_tilde(&b, &[1.0; 8]).is_err());
    }

    #[test]
    fn conjugation_examples() {
        let p = ModelParams::new(12, 0.4, 2.0, 1.0, 0.0, 0.0).unwrap();
        let b = build_basis(&p).unwrap();
        let zero = ConstrainedMatrix::from_entries(DMatrix::zeros(12, 12), p, crate::matrix::SamplingRoute::Projection).unwrap();
        assert_eq!(conjugate_matrix(&b, &zero).unwrap().amax(), 0.0);
        let w = sample_projection(&p, TrialSeed::new(2, 2));
        let wt = conjugate_matrix(&b, &w).unwrap();
        assert!(wt.column(0).amax() < 1e-12);
    }

    #[test]
    fn cache_returns_shared_instances() {
        let cache = BasisCache::new();
        let p = ModelParams::new(20, 0.5, 1.0, 2.0, 0.0, 0.0).unwrap();
        let a = cache.get(&p).unwrap();
        let b = cache.get(&ModelParams::new(20, 0.5, 3.0, 0.1, 1.0, 1.0).unwrap()).unwrap();
        assert!(Arc::ptr_eq(&a, &b));
    }

    proptest! {
        #[test]
        fn tilde_round_trip_and_isometry(xs in proptest::collection::vec(-10.0f64..10.0, 23)) {
            let b = build_basis_for(23, 7).unwrap();
            let y = to_tilde(&b, &xs).unwrap();
            let nx: f64 = xs.iter().map(|v| v * v).sum::<f64>().sqrt();
            let ny: f64 = y.iter().map(|v| v * v).sum::<f64>().sqrt();
            prop_assert!((nx - ny).abs() <= 1e-10 * nx.max(1.0));
            let back = from_tilde(&b, &y).unwrap();
            for (a, c) in xs.iter().zip(&back) {
                prop_assert!((a - c).abs() <= 1e-10);
            }
        }
    }
}
