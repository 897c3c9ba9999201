//! Small dense linear-algebra helpers on top of nalgebra.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};

use crate::error::BasisError;

pub type Matrix = DMatrix<f64>;
pub type Vector = DVector<f64>;

/// Relative jitter added to the diagonal when a normal-equation matrix is not
/// numerically positive definite.
pub const JITTER: f64 = 1e-10;

/// Cholesky factor of a symmetric positive (semi-)definite system, retried with a
/// diagonal jitter when the plain factorization fails.
#[derive(Debug, Clone)]
pub struct SpdSolver {
    chol: Cholesky<f64, Dyn>,
    pub jittered: bool,
}

impl SpdSolver {
    pub fn new(a: &Matrix) -> Result<Self, BasisError> {
        if let Some(chol) = Cholesky::new(a.clone()) {
            if chol.l_dirty().diagonal().iter().all(|d| d.is_finite() && *d > 0.0) {
                return Ok(SpdSolver { chol, jittered: false });
            }
        }
        let q = a.nrows().max(1);
        let scale = (a.diagonal().iter().map(|d| d.abs()).sum::<f64>() / q as f64).max(1.0);
        let mut b = a.clone();
        for i in 0..a.nrows() {
            b[(i, i)] += JITTER * scale;
        }
        match Cholesky::new(b) {
            Some(chol) => Ok(SpdSolver { chol, jittered: true }),
            None => Err(BasisError::Singular {
                condition: condition_estimate(a),
            }),
        }
    }

    pub fn solve(&self, b: &Vector) -> Vector {
        self.chol.solve(b)
    }

    pub fn solve_matrix(&self, b: &Matrix) -> Matrix {
        self.chol.solve(b)
    }
}

/// Ratio of extreme absolute eigenvalues (infinite for singular matrices).
pub fn condition_estimate(a: &Matrix) -> f64 {
    let ev = a.clone().symmetric_eigen().eigenvalues;
    let max = ev.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let min = ev.iter().fold(f64::INFINITY, |m, v| m.min(v.abs()));
    if min == 0.0 {
        f64::INFINITY
    } else {
        max / min
    }
}

/// Numerical rank of a symmetric PSD matrix from its eigenvalues.
pub fn psd_rank(a: &Matrix) -> usize {
    if a.nrows() == 0 {
        return 0;
    }
    let ev = a.clone().symmetric_eigen().eigenvalues;
    let max = ev.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    if max == 0.0 {
        return 0;
    }
    let tol = max * 1e-10 * a.nrows() as f64;
    ev.iter().filter(|v| **v > tol).count()
}

/// Kronecker product `a ⊗ b`.
pub fn kron(a: &Matrix, b: &Matrix) -> Matrix {
    let (ra, ca) = a.shape();
    let (rb, cb) = b.shape();
    let mut out = Matrix::zeros(ra * rb, ca * cb);
    for i in 0..ra {
        for j in 0..ca {
            let aij = a[(i, j)];
            if aij == 0.0 {
                continue;
            }
            for k in 0..rb {
                for l in 0..cb {
                    out[(i * rb + k, j * cb + l)] = aij * b[(k, l)];
                }
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn solver_handles_singular_with_jitter() {
        let a = Matrix::from_row_slice(2, 2, &[1.0, 1.0, 1.0, 1.0]);
        let s = SpdSolver::new(&a).unwrap();
        assert!(s.jittered);
        let x = s.solve(&Vector::from_vec(vec![1.0, 1.0]));
        assert!(x.iter().all(|v| v.is_finite()));
    }

    #[test]
    fn kron_shape_and_values() {
        let a = Matrix::from_row_slice(1, 2, &[1.0, 2.0]);
        let b = Matrix::identity(2, 2);
        let k = kron(&a, &b);
        assert_eq!(k.shape(), (2, 4));
        assert_eq!(k[(1, 3)], 2.0);
    }

    #[test]
    fn rank_of_projection() {
        let a = Matrix::from_row_slice(3, 3, &[1.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 0.0]);
        assert_eq!(psd_rank(&a), 2);
    }
}
