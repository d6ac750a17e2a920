//! Small dense linear-algebra helpers on top of nalgebra.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Absolute tolerance for the symmetry check on covariance matrices.
pub const SYMMETRY_TOL: f64 = 1e-10;
/// Pivots below this fraction of the largest diagonal entry are rejected.
pub const PIVOT_RATIO: f64 = 1e-12;

/// Lower-triangular Cholesky factor of a symmetric positive-definite matrix.
///
/// Near-singular inputs are rejected rather than regularised.
#[derive(Debug, Clone)]
pub struct SpdFactor {
    lower: DMatrix<f64>,
}

impl SpdFactor {
    pub fn new(m: &DMatrix<f64>) -> Result<Self> {
        let n = m.nrows();
        if m.ncols() != n {
            return Err(Error::Factorization(format!("matrix is {}x{}, not square", n, m.ncols())));
        }
        for i in 0..n {
            for j in 0..i {
                if (m[(i, j)] - m[(j, i)]).abs() > SYMMETRY_TOL {
                    return Err(Error::Factorization(format!(
                        "matrix not symmetric at ({i}, {j})"
                    )));
                }
            }
        }
        let max_diag = (0..n).map(|i| m[(i, i)]).fold(0.0_f64, f64::max);
        if !(max_diag > 0.0) {
            return Err(Error::Factorization("non-positive diagonal".into()));
        }
        let chol = m
            .clone()
            .cholesky()
            .ok_or_else(|| Error::Factorization("matrix is not positive definite".into()))?;
        let lower = chol.unpack();
        for i in 0..n {
            let pivot = lower[(i, i)] * lower[(i, i)];
            if !(pivot >= PIVOT_RATIO * max_diag) {
                return Err(Error::Factorization(format!(
                    "near-singular pivot {pivot:e} at index {i}"
                )));
            }
        }
        Ok(SpdFactor { lower })
    }

    pub fn dim(&self) -> usize {
        self.lower.nrows()
    }

    pub fn lower(&self) -> &DMatrix<f64> {
        &self.lower
    }

    /// `L z` written into `out`.
    pub fn mul_lower(&self, z: &[f64], out: &mut [f64]) {
        let n = self.dim();
        for i in 0..n {
            let mut acc = 0.0;
            for j in 0..=i {
                acc += self.lower[(i, j)] * z[j];
            }
            out[i] = acc;
        }
    }

    /// `x^T A^{-1} x` via a forward solve with the Cholesky factor.
    pub fn inv_quad_form(&self, x: &[f64]) -> f64 {
        let n = self.dim();
        let mut w = vec![0.0; n];
        for i in 0..n {
            let mut acc = x[i];
            for j in 0..i {
                acc -= self.lower[(i, j)] * w[j];
            }
            w[i] = acc / self.lower[(i, i)];
        }
        w.iter().map(|v| v * v).sum()
    }

    /// `A^{-1} B` by Cholesky solves.
    pub fn solve_matrix(&self, b: &DMatrix<f64>) -> DMatrix<f64> {
        let chol = nalgebra::Cholesky::pack_dirty(self.lower.clone());
        chol.solve(b)
    }

    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        let chol = nalgebra::Cholesky::pack_dirty(self.lower.clone());
        chol.solve(&DVector::from_column_slice(b)).as_slice().to_vec()
    }
}

/// `tr(A^{-1} B)` without forming an explicit inverse.
pub fn trace_inv_times(a: &SpdFactor, b: &DMatrix<f64>) -> f64 {
    a.solve_matrix(b).trace()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quad_form_matches_explicit_inverse() {
        let a = DMatrix::from_row_slice(3, 3, &[4.0, 1.0, 0.5, 1.0, 3.0, 0.2, 0.5, 0.2, 2.0]);
        let f = SpdFactor::new(&a).unwrap();
        let x = [1.0, -2.0, 0.5];
        let inv = a.clone().try_inverse().unwrap();
        let xv = DVector::from_column_slice(&x);
        let expected = (xv.transpose() * inv * &xv)[(0, 0)];
        assert!((f.inv_quad_form(&x) - expected).abs() < 1e-12);
        assert!((trace_inv_times(&f, &a) - 3.0).abs() < 1e-12);
    }

    #[test]
    fn rejects_asymmetric_and_singular() {
        let asym = DMatrix::from_row_slice(2, 2, &[1.0, 0.5, 0.4, 1.0]);
        assert!(SpdFactor::new(&asym).is_err());
        let singular = DMatrix::from_row_slice(2, 2, &[1.0, 1.0, 1.0, 1.0]);
        assert!(SpdFactor::new(&singular).is_err());
        let nearly = DMatrix::from_row_slice(2, 2, &[1.0, 1.0 - 1e-14, 1.0 - 1e-14, 1.0]);
        assert!(SpdFactor::new(&nearly).is_err());
    }
}
