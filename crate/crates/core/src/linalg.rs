//! Small dense linear-algebra helpers on top of `nalgebra`.

use alloc::vec;
use alloc::vec::Vec;

use nalgebra::{DMatrix, DVector};

use crate::{Error, Result};

/// Solves `a x = b` by LU with partial pivoting.
pub fn solve(a: DMatrix<f64>, b: &[f64]) -> Option<Vec<f64>> {
    let rhs = DVector::from_column_slice(b);
    a.lu().solve(&rhs).map(|x| x.as_slice().to_vec())
}

pub fn inverse(a: DMatrix<f64>) -> Option<DMatrix<f64>> {
    a.lu().try_inverse()
}

/// Induced infinity norm: maximum absolute row sum.
pub fn inf_norm(m: &DMatrix<f64>) -> f64 {
    (0..m.nrows())
        .map(|r| m.row(r).iter().map(|x| x.abs()).sum::<f64>())
        .fold(0.0, f64::max)
}

/// `P^{pi,inf}`: every row equals `nu`.
pub fn limit_matrix(nu: &[f64]) -> DMatrix<f64> {
    let n = nu.len();
    DMatrix::from_fn(n, n, |_, c| nu[c])
}

/// `P - 1 nu`. Its powers equal `P^t - 1 nu` for `t >= 1`, and its spectrum is
/// that of `P` with the unit eigenvalue replaced by zero.
pub fn deflate(p: &DMatrix<f64>, nu: &[f64]) -> DMatrix<f64> {
    let n = p.nrows();
    DMatrix::from_fn(n, n, |r, c| p[(r, c)] - nu[c])
}

/// Second largest eigenvalue modulus `|lambda_2(P)|` of a stochastic matrix
/// with stationary distribution `nu`, computed as the spectral radius of the
/// deflated matrix.
pub fn second_eigen_modulus(p: &DMatrix<f64>, nu: &[f64]) -> Result<f64> {
    if p.nrows() <= 1 {
        return Ok(0.0);
    }
    let schur = nalgebra::Schur::try_new(deflate(p, nu), f64::EPSILON, 200_000).ok_or(
        Error::NoConvergence {
            iterations: 200_000,
            residual: f64::NAN,
        },
    )?;
    Ok(schur
        .complex_eigenvalues()
        .iter()
        .map(|z| libm::hypot(z.re, z.im))
        .fold(0.0, f64::max))
}

/// Whether the nonnegative matrix is primitive (irreducible and aperiodic),
/// i.e. some power is entrywise positive. Wielandt's bound `(n-1)^2 + 1` on the
/// exponent is reached by repeated boolean squaring.
pub fn is_primitive(p: &DMatrix<f64>) -> bool {
    let n = p.nrows();
    if n == 0 {
        return false;
    }
    let mut m: Vec<bool> = (0..n * n).map(|k| p[(k / n, k % n)] > 0.0).collect();
    let target = (n - 1) * (n - 1) + 1;
    let mut exponent = 1usize;
    while exponent < target {
        m = bool_square(&m, n);
        exponent *= 2;
    }
    m.iter().all(|&b| b)
}

fn bool_square(m: &[bool], n: usize) -> Vec<bool> {
    let mut out = vec![false; n * n];
    for r in 0..n {
        for k in 0..n {
            if m[r * n + k] {
                for c in 0..n {
                    out[r * n + c] |= m[k * n + c];
                }
            }
        }
    }
    out
}
