//! Linear solves for the interior block `(D_I - W_II) u = f`.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::kernel::NonlocalOperator;
use crate::sparse::Csr;

/// Interior sizes at or above this use conjugate gradients instead of a dense LU.
pub const DENSE_LIMIT: usize = 3000;

#[derive(Debug)]
pub(crate) enum LinearSolver {
    Dense(nalgebra::LU<f64, nalgebra::Dyn, nalgebra::Dyn>),
    /// Symmetrised system `M_I (D_I - W_II)` with its diagonal as preconditioner.
    Cg {
        matrix: Csr,
        diag: Vec<f64>,
        mu: Vec<f64>,
    },
}

impl LinearSolver {
    pub(crate) fn interior(op: &NonlocalOperator) -> Result<Self> {
        Self::interior_with_limit(op, DENSE_LIMIT)
    }

    pub(crate) fn interior_with_limit(op: &NonlocalOperator, dense_limit: usize) -> Result<Self> {
        let grid = op.grid();
        let interior = grid.interior_indices();
        let n = interior.len();
        if n == 0 {
            return Err(Error::SingularSystem);
        }
        let degree: Vec<f64> = interior.iter().map(|&x| op.weights().row_sum(x)).collect();
        if degree.iter().any(|&d| !(d > 0.0)) {
            return Err(Error::SingularSystem);
        }
        if n < dense_limit {
            let mut a = DMatrix::zeros(n, n);
            for (i, d) in degree.iter().enumerate() {
                a[(i, i)] = *d;
                for (j, w) in op.w_ii().row(i) {
                    a[(i, j)] -= w;
                }
            }
            let lu = a.lu();
            if !lu.is_invertible() {
                return Err(Error::SingularSystem);
            }
            let u = lu.u();
            let umax = u.diagonal().amax();
            if u.diagonal().iter().any(|v| v.abs() <= 1e-14 * umax) {
                return Err(Error::SingularSystem);
            }
            Ok(LinearSolver::Dense(lu))
        } else {
            let mu: Vec<f64> = interior.iter().map(|&x| grid.mu()[x]).collect();
            let rows = (0..n)
                .map(|i| {
                    let mut row: Vec<(usize, f64)> =
                        op.w_ii().row(i).map(|(j, w)| (j, -mu[i] * w)).collect();
                    let pos = row.partition_point(|&(j, _)| j < i);
                    row.insert(pos, (i, mu[i] * degree[i]));
                    row
                })
                .collect();
            let diag = (0..n).map(|i| mu[i] * degree[i]).collect();
            Ok(LinearSolver::Cg {
                matrix: Csr::from_rows(n, rows),
                diag,
                mu,
            })
        }
    }

    pub(crate) fn solve(&self, rhs: &[f64]) -> Result<Vec<f64>> {
        match self {
            LinearSolver::Dense(lu) => {
                let b = DVector::from_column_slice(rhs);
                let x = lu.solve(&b).ok_or(Error::SingularSystem)?;
                Ok(x.iter().copied().collect())
            }
            LinearSolver::Cg { matrix, diag, mu } => {
                let b: Vec<f64> = rhs.iter().zip(mu).map(|(r, m)| r * m).collect();
                pcg(matrix, diag, &b, 1e-14, 20 * b.len().max(50))
            }
        }
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Jacobi-preconditioned conjugate gradients for an SPD matrix.
pub(crate) fn pcg(
    a: &Csr,
    diag: &[f64],
    b: &[f64],
    rtol: f64,
    max_iter: usize,
) -> Result<Vec<f64>> {
    let n = b.len();
    let bnorm = dot(b, b).sqrt();
    let mut x = vec![0.0; n];
    if bnorm == 0.0 {
        return Ok(x);
    }
    let mut r = b.to_vec();
    let mut z: Vec<f64> = r.iter().zip(diag).map(|(r, d)| r / d).collect();
    let mut p = z.clone();
    let mut rz = dot(&r, &z);
    for _ in 0..max_iter {
        let ap = a.mul_vec(&p);
        let alpha = rz / dot(&p, &ap);
        for i in 0..n {
            x[i] += alpha * p[i];
            r[i] -= alpha * ap[i];
        }
        let rnorm = dot(&r, &r).sqrt();
        if rnorm <= rtol * bnorm {
            return Ok(x);
        }
        for i in 0..n {
            z[i] = r[i] / diag[i];
        }
        let rz_new = dot(&r, &z);
        let beta = rz_new / rz;
        rz = rz_new;
        for i in 0..n {
            p[i] = z[i] + beta * p[i];
        }
    }
    let resid = dot(&r, &r).sqrt() / bnorm;
    Err(Error::NoConvergence {
        iterations: max_iter,
        residual: resid,
        best: None,
    })
}

/// Dense symmetric positive definite solve, with a growing diagonal shift if
/// the factorization fails.
pub(crate) fn solve_spd_shifted(mut a: DMatrix<f64>, b: &[f64]) -> Vec<f64> {
    let n = b.len();
    let scale = (0..n)
        .map(|i| a[(i, i)].abs())
        .fold(0.0, f64::max)
        .max(1e-300);
    let mut shift = 0.0;
    loop {
        if let Some(ch) = a.clone().cholesky() {
            return ch
                .solve(&DVector::from_column_slice(b))
                .iter()
                .copied()
                .collect();
        }
        let next = if shift == 0.0 {
            1e-14 * scale
        } else {
            shift * 100.0
        };
        for i in 0..n {
            a[(i, i)] += next - shift;
        }
        shift = next;
        if shift > 1e6 * scale {
            // gradient direction as a last resort
            return b.iter().map(|v| v / scale).collect();
        }
    }
}
