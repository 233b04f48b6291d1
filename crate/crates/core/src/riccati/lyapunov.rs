//! Continuous Lyapunov equation `AᵀX + XA = −C` by Kronecker vectorization.

use nalgebra::DMatrix;

use crate::error::{Error, Result};

/// Solves `AᵀX + XA = −C` for `X`.
///
/// With column-major `vec`, `vec(AᵀX + XA) = (I ⊗ Aᵀ + Aᵀ ⊗ I) vec(X)`, so the
/// equation becomes one dense `n² × n²` system solved by LU. The result is
/// symmetrized when `C` is symmetric.
pub fn solve_lyapunov(a: &DMatrix<f64>, c: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let n = a.nrows();
    if a.ncols() != n || c.nrows() != n || c.ncols() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            got: c.nrows(),
        });
    }
    let eye = DMatrix::<f64>::identity(n, n);
    let at = a.transpose();
    let kron = eye.kronecker(&at) + at.kronecker(&eye);
    let rhs = -DMatrix::from_column_slice(n * n, 1, c.as_slice());
    let sol = kron
        .lu()
        .solve(&rhs)
        .ok_or(Error::Singular("Lyapunov operator is singular"))?;
    let x = DMatrix::from_column_slice(n, n, sol.as_slice());
    if super::eig::asymmetry(c) == 0.0 {
        Ok(0.5 * (&x + x.transpose()))
    } else {
        Ok(x)
    }
}
