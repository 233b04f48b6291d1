//! Symmetric eigen-decomposition by cyclic Jacobi rotations.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

const OFF_DIAGONAL_TOL: f64 = 1e-12;
const MAX_SWEEPS: usize = 100;

/// Eigenvalues in ascending order and the matching orthonormal eigenvectors
/// (column `i` of `vectors` pairs with `values[i]`).
#[derive(Debug, Clone)]
pub struct SymEig {
    pub values: DVector<f64>,
    pub vectors: DMatrix<f64>,
}

impl SymEig {
    pub fn min(&self) -> f64 {
        self.values[0]
    }

    pub fn max(&self) -> f64 {
        self.values[self.values.len() - 1]
    }
}

/// Largest `|a_ij - a_ji|` of a square matrix.
pub fn asymmetry(a: &DMatrix<f64>) -> f64 {
    let n = a.nrows();
    let mut worst = 0.0f64;
    for i in 0..n {
        for j in (i + 1)..n {
            worst = worst.max((a[(i, j)] - a[(j, i)]).abs());
        }
    }
    worst
}

fn off_diagonal_norm(a: &DMatrix<f64>) -> f64 {
    let n = a.nrows();
    let mut sum = 0.0;
    for i in 0..n {
        for j in 0..n {
            if i != j {
                sum += a[(i, j)] * a[(i, j)];
            }
        }
    }
    sum.sqrt()
}

/// Decomposes a symmetric matrix as `A = V diag(λ) Vᵀ`.
///
/// Sweeps over all `(p, q)` pairs and annihilates each off-diagonal entry with a
/// plane rotation until the off-diagonal Frobenius norm falls below
/// `1e-12·‖A‖_F`; one extra sweep is applied after that point.
pub fn sym_eig(a: &DMatrix<f64>) -> Result<SymEig> {
    if a.nrows() != a.ncols() {
        return Err(Error::DimensionMismatch {
            expected: a.nrows(),
            got: a.ncols(),
        });
    }
    let n = a.nrows();
    let scale = a.norm().max(f64::MIN_POSITIVE);
    let asym = asymmetry(a);
    if asym > 1e-12 * scale.max(1.0) {
        return Err(Error::NotSymmetric(asym));
    }

    let mut m = a.clone();
    // enforce exact symmetry before rotating
    for i in 0..n {
        for j in (i + 1)..n {
            let avg = 0.5 * (m[(i, j)] + m[(j, i)]);
            m[(i, j)] = avg;
            m[(j, i)] = avg;
        }
    }
    let mut v = DMatrix::<f64>::identity(n, n);

    let mut polish = 1;
    for _ in 0..MAX_SWEEPS {
        if off_diagonal_norm(&m) <= OFF_DIAGONAL_TOL * scale {
            if polish == 0 {
                break;
            }
            polish -= 1;
        }
        for p in 0..n.saturating_sub(1) {
            for q in (p + 1)..n {
                let apq = m[(p, q)];
                if apq == 0.0 {
                    continue;
                }
                let theta = (m[(q, q)] - m[(p, p)]) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let mkp = m[(k, p)];
                    let mkq = m[(k, q)];
                    m[(k, p)] = c * mkp - s * mkq;
                    m[(k, q)] = s * mkp + c * mkq;
                }
                for k in 0..n {
                    let mpk = m[(p, k)];
                    let mqk = m[(q, k)];
                    m[(p, k)] = c * mpk - s * mqk;
                    m[(q, k)] = s * mpk + c * mqk;
                }
                m[(p, q)] = 0.0;
                m[(q, p)] = 0.0;
                for k in 0..n {
                    let vkp = v[(k, p)];
                    let vkq = v[(k, q)];
                    v[(k, p)] = c * vkp - s * vkq;
                    v[(k, q)] = s * vkp + c * vkq;
                }
            }
        }
    }

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| m[(i, i)].total_cmp(&m[(j, j)]));
    let values = DVector::from_iterator(n, order.iter().map(|&i| m[(i, i)]));
    let mut vectors = DMatrix::zeros(n, n);
    for (dst, &src) in order.iter().enumerate() {
        vectors.set_column(dst, &v.column(src));
    }
    Ok(SymEig { values, vectors })
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::dmatrix;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn check_pairs(a: &DMatrix<f64>, e: &SymEig) {
        let an = a.norm();
        for i in 0..a.nrows() {
            let v = e.vectors.column(i);
            let r = a * v - v * e.values[i];
            assert!(r.norm() <= 1e-10 * an.max(1.0), "pair {i}: {}", r.norm());
        }
        let vtv = e.vectors.transpose() * &e.vectors;
        assert!((vtv - DMatrix::identity(a.nrows(), a.nrows())).norm() < 1e-12);
        for w in e.values.as_slice().windows(2) {
            assert!(w[0] <= w[1]);
        }
    }

    #[test]
    fn identity() {
        let a = DMatrix::identity(2, 2);
        let e = sym_eig(&a).unwrap();
        assert_eq!(e.values.as_slice(), &[1.0, 1.0]);
        check_pairs(&a, &e);
    }

    #[test]
    fn two_by_two_closed_form() {
        let s3 = 3f64.sqrt();
        let a = dmatrix![s3, 1.0; 1.0, s3];
        let e = sym_eig(&a).unwrap();
        assert!((e.values[0] - (s3 - 1.0)).abs() < 1e-14);
        assert!((e.values[1] - (s3 + 1.0)).abs() < 1e-14);
        check_pairs(&a, &e);
    }

    #[test]
    fn diagonal() {
        let a = dmatrix![9.0, 0.0; 0.0, 4.0];
        let e = sym_eig(&a).unwrap();
        assert_eq!(e.values.as_slice(), &[4.0, 9.0]);
        check_pairs(&a, &e);
    }

    #[test]
    fn rejects_nonsymmetric() {
        let a = dmatrix![1.0, 2.0; 0.0, 1.0];
        assert!(matches!(sym_eig(&a), Err(Error::NotSymmetric(_))));
    }

    #[test]
    fn random_symmetric() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for n in 1..10 {
            let b = DMatrix::from_fn(n, n, |_, _| rng.random_range(-3.0..3.0));
            let a = &b + b.transpose();
            let e = sym_eig(&a).unwrap();
            check_pairs(&a, &e);
            let trace: f64 = e.values.iter().sum();
            assert!((trace - a.trace()).abs() < 1e-10);
        }
    }
}
