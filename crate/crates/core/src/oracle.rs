//! Dense direct solves used to cross-check the iterative solvers.

use crate::error::{Error, Result};
use crate::fem::CsrMatrix;

/// Gaussian elimination with partial pivoting.
pub fn gauss_solve(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Result<Vec<f64>> {
    let n = b.len();
    if a.len() != n || a.iter().any(|r| r.len() != n) {
        return Err(Error::InvalidArgument("dense system is not square".into()));
    }
    let scale = a.iter().flatten().fold(0.0f64, |m, v| m.max(v.abs()));
    for col in 0..n {
        let pivot = (col..n)
            .max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs()))
            .expect("non-empty range");
        if a[pivot][col].abs() <= 1e-14 * scale {
            return Err(Error::InvalidArgument(format!("dense system is singular at column {col}")));
        }
        a.swap(col, pivot);
        b.swap(col, pivot);
        for row in col + 1..n {
            let factor = a[row][col] / a[col][col];
            if factor == 0.0 {
                continue;
            }
            for k in col..n {
                a[row][k] -= factor * a[col][k];
            }
            b[row] -= factor * b[col];
        }
    }
    let mut x = vec![0.0; n];
    for row in (0..n).rev() {
        let s: f64 = (row + 1..n).map(|k| a[row][k] * x[k]).sum();
        x[row] = (b[row] - s) / a[row][row];
    }
    Ok(x)
}

/// Dense counterpart of the constrained, optionally constant-deflated solve:
/// Dirichlet and zero-diagonal rows are eliminated, and a singular periodic
/// system is regularized as `K + 1·1ᵀ` after projecting the right side.
pub fn dense_solve(m: &CsrMatrix, rhs: &[f64], dirichlet: &[bool], deflate_constants: bool) -> Result<Vec<f64>> {
    let diag = m.diagonal();
    let keep: Vec<bool> = (0..m.dim()).map(|i| !dirichlet[i] && diag[i] != 0.0).collect();
    let (sub, free) = m.principal_submatrix(&keep);
    let mut a = sub.to_dense();
    let mut b: Vec<f64> = free.iter().map(|&i| rhs[i]).collect();
    if deflate_constants {
        let mean = b.iter().sum::<f64>() / b.len() as f64;
        b.iter_mut().for_each(|v| *v -= mean);
        a.iter_mut().flatten().for_each(|v| *v += 1.0);
    }
    let x = gauss_solve(a, b)?;
    let mut out = vec![0.0; m.dim()];
    for (k, &i) in free.iter().enumerate() {
        out[i] = x[k];
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn solves_with_pivoting() {
        let a = vec![vec![0.0, 2.0, 1.0], vec![1.0, 1.0, 0.0], vec![3.0, 0.0, 1.0]];
        let x = gauss_solve(a.clone(), vec![5.0, 3.0, 6.0]).unwrap();
        for (row, b) in a.iter().zip([5.0, 3.0, 6.0]) {
            let s: f64 = row.iter().zip(&x).map(|(a, x)| a * x).sum();
            assert!((s - b).abs() < 1e-14);
        }
    }

    #[test]
    fn singular_is_reported() {
        assert!(gauss_solve(vec![vec![1.0, 2.0], vec![2.0, 4.0]], vec![1.0, 2.0]).is_err());
    }
}
