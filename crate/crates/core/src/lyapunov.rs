//! Solvers for the discrete Lyapunov (Stein) equation `X = Q + A X A^T`.

use nalgebra::DMatrix;

use crate::error::{Error, Result};

/// Largest dimension solved by the dense Kronecker system.
pub const KRONECKER_MAX_DIM: usize = 40;

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize)]
#[serde(rename_all = "snake_case")]
pub enum LyapunovMethod {
    Kronecker,
    Smith,
}

/// `||X - Q - A X A^T||_F`.
pub fn lyapunov_residual(a: &DMatrix<f64>, q: &DMatrix<f64>, x: &DMatrix<f64>) -> f64 {
    (x - q - a * x * a.transpose()).norm()
}

fn check_shapes(a: &DMatrix<f64>, q: &DMatrix<f64>) -> Result<usize> {
    let n = a.nrows();
    if a.ncols() != n || q.shape() != (n, n) {
        return Err(Error::DimensionMismatch(format!(
            "Lyapunov equation needs square A and Q of equal size, got {:?} and {:?}",
            a.shape(),
            q.shape()
        )));
    }
    Ok(n)
}

/// Solve `(I - A (x) A) vec(X) = vec(Q)` directly.
pub fn solve_kronecker(a: &DMatrix<f64>, q: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let n = check_shapes(a, q)?;
    let nn = n * n;
    let system = DMatrix::<f64>::identity(nn, nn) - a.kronecker(a);
    let rhs = DMatrix::from_column_slice(nn, 1, q.as_slice());
    let lu = system.lu();
    let solution = lu.solve(&rhs).ok_or(Error::NonConvergence {
        what: "Kronecker Lyapunov solve (singular system)",
        iterations: 0,
        residual: f64::INFINITY,
    })?;
    let x = DMatrix::from_column_slice(n, n, solution.as_slice());
    Ok((&x + x.transpose()) * 0.5)
}

/// Smith doubling: `X <- X + A_k X A_k^T`, `A_k <- A_k^2`. Converges
/// quadratically when the spectral radius of `A` is below one.
pub fn solve_smith(a: &DMatrix<f64>, q: &DMatrix<f64>, tol: f64, max_iter: usize) -> Result<DMatrix<f64>> {
    check_shapes(a, q)?;
    let mut x = q.clone();
    let mut ak = a.clone();
    let scale = q.norm().max(f64::MIN_POSITIVE);
    for it in 0..max_iter {
        let increment = &ak * &x * ak.transpose();
        x += &increment;
        ak = &ak * &ak;
        if increment.norm() <= tol * scale {
            return Ok((&x + x.transpose()) * 0.5);
        }
        if !x.iter().all(|v| v.is_finite()) {
            return Err(Error::NonConvergence {
                what: "Smith iteration (diverged)",
                iterations: it + 1,
                residual: f64::INFINITY,
            });
        }
    }
    Err(Error::NonConvergence {
        what: "Smith iteration",
        iterations: max_iter,
        residual: lyapunov_residual(a, q, &x),
    })
}

/// Plain fixed-point iteration `X <- Q + A X A^T` from `X = 0`.
pub fn solve_fixed_point(
    a: &DMatrix<f64>,
    q: &DMatrix<f64>,
    tol: f64,
    max_iter: usize,
) -> Result<DMatrix<f64>> {
    check_shapes(a, q)?;
    let scale = q.norm().max(f64::MIN_POSITIVE);
    let mut x = q.clone();
    for _ in 0..max_iter {
        let next = q + a * &x * a.transpose();
        let change = (&next - &x).norm();
        x = next;
        if change <= tol * scale {
            return Ok(x);
        }
    }
    Err(Error::NonConvergence {
        what: "fixed-point Lyapunov iteration",
        iterations: max_iter,
        residual: lyapunov_residual(a, q, &x),
    })
}

/// Kronecker solve up to [`KRONECKER_MAX_DIM`], Smith doubling above.
pub fn solve_discrete_lyapunov(a: &DMatrix<f64>, q: &DMatrix<f64>) -> Result<(DMatrix<f64>, LyapunovMethod)> {
    let n = check_shapes(a, q)?;
    if n <= KRONECKER_MAX_DIM {
        Ok((solve_kronecker(a, q)?, LyapunovMethod::Kronecker))
    } else {
        Ok((solve_smith(a, q, 1e-15, 200)?, LyapunovMethod::Smith))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn stable_pair() -> (DMatrix<f64>, DMatrix<f64>) {
        let a = DMatrix::from_row_slice(3, 3, &[0.5, 0.1, 0.0, -0.2, 0.3, 0.1, 0.0, 0.2, -0.4]);
        let b = DMatrix::from_row_slice(3, 2, &[1.0, 0.0, 0.5, 1.0, -0.3, 0.2]);
        (a, &b * b.transpose())
    }

    #[test]
    fn scalar_case() {
        let a = DMatrix::from_element(1, 1, 0.5);
        let q = DMatrix::from_element(1, 1, 3.0);
        let x = solve_kronecker(&a, &q).unwrap();
        assert!((x[(0, 0)] - 4.0).abs() < 1e-14);
    }

    #[test]
    fn three_solvers_agree_on_nonsymmetric_a() {
        let (a, q) = stable_pair();
        let k = solve_kronecker(&a, &q).unwrap();
        let s = solve_smith(&a, &q, 1e-15, 100).unwrap();
        let f = solve_fixed_point(&a, &q, 1e-15, 10_000).unwrap();
        assert!(lyapunov_residual(&a, &q, &k) < 1e-12);
        assert!((&k - &s).norm() < 1e-12);
        assert!((&k - &f).norm() < 1e-12);
    }

    #[test]
    fn unstable_input_is_reported() {
        let a = DMatrix::from_element(1, 1, 1.5);
        let q = DMatrix::from_element(1, 1, 1.0);
        assert!(solve_smith(&a, &q, 1e-15, 60).is_err());
        assert!(solve_fixed_point(&a, &q, 1e-15, 100).is_err());
    }

    #[test]
    fn shape_mismatch() {
        assert!(solve_kronecker(&DMatrix::zeros(2, 2), &DMatrix::zeros(3, 3)).is_err());
    }
}
