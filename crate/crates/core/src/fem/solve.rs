//! Jacobi-preconditioned conjugate gradients with Dirichlet elimination and
//! null-space deflation.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fem::sparse::{dot, norm2, CsrMatrix};

#[derive(Debug, Clone, PartialEq)]
pub enum Deflation {
    None,
    Constants,
    Vectors(Vec<Vec<f64>>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LinearSolveSpec {
    pub tolerance: f64,
    /// `None` picks a limit from the system size.
    pub max_iterations: Option<usize>,
}

impl Default for LinearSolveSpec {
    fn default() -> Self {
        LinearSolveSpec { tolerance: 1e-10, max_iterations: None }
    }
}

impl LinearSolveSpec {
    pub fn with_tolerance(tolerance: f64) -> Self {
        LinearSolveSpec { tolerance, ..Self::default() }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.tolerance > 0.0 && self.tolerance < 1.0) {
            return Err(Error::InvalidArgument(format!(
                "solver tolerance must lie in (0, 1), got {}",
                self.tolerance
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Solution {
    pub x: Vec<f64>,
    pub iterations: usize,
    /// Final relative residual `‖b - Ax‖/‖b‖` of the reduced system.
    pub residual: f64,
}

/// A reduced, preconditioned system ready for repeated solves.
pub struct SpdSolver {
    n: usize,
    matrix: CsrMatrix,
    free: Vec<usize>,
    inv_diag: Vec<f64>,
    basis: Vec<Vec<f64>>,
    spec: LinearSolveSpec,
}

impl SpdSolver {
    /// Eliminates the `dirichlet` DOFs (homogeneous data) and rows with a
    /// zero diagonal, which carry no information.
    pub fn new(m: &CsrMatrix, dirichlet: &[bool], deflation: &Deflation, spec: &LinearSolveSpec) -> Result<Self> {
        spec.validate()?;
        let n = m.dim();
        if dirichlet.len() != n {
            return Err(Error::InvalidArgument("constraint mask has the wrong length".into()));
        }
        let diag = m.diagonal();
        let keep: Vec<bool> = (0..n).map(|i| !dirichlet[i] && diag[i] != 0.0).collect();
        let (matrix, free) = m.principal_submatrix(&keep);
        let inv_diag: Vec<f64> = free.iter().map(|&i| 1.0 / diag[i]).collect();
        if diag.iter().zip(&keep).any(|(d, k)| *k && *d < 0.0) {
            return Err(Error::NotPositiveDefinite);
        }
        let raw: Vec<Vec<f64>> = match deflation {
            Deflation::None => Vec::new(),
            Deflation::Constants => vec![vec![1.0; free.len()]],
            Deflation::Vectors(vs) => vs.iter().map(|v| free.iter().map(|&i| v[i]).collect()).collect(),
        };
        let mut basis: Vec<Vec<f64>> = Vec::new();
        for mut v in raw {
            for _ in 0..2 {
                for b in &basis {
                    let c = dot(&v, b);
                    v.iter_mut().zip(b).for_each(|(x, y)| *x -= c * y);
                }
            }
            let nv = norm2(&v);
            if nv > 1e-12 {
                v.iter_mut().for_each(|x| *x /= nv);
                basis.push(v);
            }
        }
        Ok(SpdSolver { n, matrix, free, inv_diag, basis, spec: spec.clone() })
    }

    pub fn reduced_dim(&self) -> usize {
        self.free.len()
    }

    fn project(&self, v: &mut [f64]) {
        for b in &self.basis {
            let c = dot(v, b);
            v.iter_mut().zip(b).for_each(|(x, y)| *x -= c * y);
        }
    }

    /// Solves with the full-length right side; constrained entries come back 0.
    pub fn solve(&self, rhs: &[f64]) -> Result<Solution> {
        let mut b: Vec<f64> = self.free.iter().map(|&i| rhs[i]).collect();
        self.project(&mut b);
        let bnorm = norm2(&b);
        let mut out = vec![0.0; self.n];
        if bnorm == 0.0 || self.free.is_empty() {
            return Ok(Solution { x: out, iterations: 0, residual: 0.0 });
        }
        let m = self.free.len();
        let max_it = self.spec.max_iterations.unwrap_or((10 * m).max(1000));
        let tol = self.spec.tolerance;
        let mut x = vec![0.0; m];
        let mut total = 0;
        let mut residual = f64::INFINITY;
        let mut ap = vec![0.0; m];
        // A few restarts guard against drift of the recursive residual.
        for _ in 0..4 {
            let mut r = b.clone();
            self.matrix.matvec(&x, &mut ap);
            r.iter_mut().zip(&ap).for_each(|(ri, a)| *ri -= a);
            self.project(&mut r);
            residual = norm2(&r) / bnorm;
            if residual <= tol {
                break;
            }
            let mut z: Vec<f64> = r.iter().zip(&self.inv_diag).map(|(a, d)| a * d).collect();
            self.project(&mut z);
            let mut p = z.clone();
            let mut rz = dot(&r, &z);
            while total < max_it {
                total += 1;
                self.matrix.matvec(&p, &mut ap);
                let pap = dot(&p, &ap);
                if !(pap > 0.0) {
                    return Err(Error::NotPositiveDefinite);
                }
                let alpha = rz / pap;
                x.iter_mut().zip(&p).for_each(|(xi, pi)| *xi += alpha * pi);
                r.iter_mut().zip(&ap).for_each(|(ri, a)| *ri -= alpha * a);
                if norm2(&r) <= tol * bnorm {
                    break;
                }
                z.iter_mut().zip(r.iter().zip(&self.inv_diag)).for_each(|(zi, (ri, d))| *zi = ri * d);
                self.project(&mut z);
                let rz_new = dot(&r, &z);
                let beta = rz_new / rz;
                rz = rz_new;
                p.iter_mut().zip(&z).for_each(|(pi, zi)| *pi = zi + beta * *pi);
            }
            if total >= max_it {
                let mut r = b.clone();
                self.matrix.matvec(&x, &mut ap);
                r.iter_mut().zip(&ap).for_each(|(ri, a)| *ri -= a);
                self.project(&mut r);
                residual = norm2(&r) / bnorm;
                if residual <= tol {
                    break;
                }
                return Err(Error::CgNoConvergence { iterations: total, residual });
            }
        }
        if residual > tol {
            return Err(Error::CgNoConvergence { iterations: total, residual });
        }
        self.project(&mut x);
        for (k, &i) in self.free.iter().enumerate() {
            out[i] = x[k];
        }
        Ok(Solution { x: out, iterations: total, residual })
    }
}

/// One-shot solve of `M x = rhs` with homogeneous Dirichlet rows eliminated.
pub fn solve_spd(
    m: &CsrMatrix,
    rhs: &[f64],
    spec: &LinearSolveSpec,
    deflation: &Deflation,
    dirichlet: &[bool],
) -> Result<Solution> {
    SpdSolver::new(m, dirichlet, deflation, spec)?.solve(rhs)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn laplace_1d_periodic(n: usize) -> CsrMatrix {
        let rows = (0..n).map(|i| vec![(i + n - 1) % n, i, (i + 1) % n]).collect();
        let mut m = CsrMatrix::with_pattern(rows, true);
        for i in 0..n {
            m.add(i, i, 2.0);
            m.add(i, (i + 1) % n, -1.0);
            m.add((i + 1) % n, i, -1.0);
        }
        m
    }

    #[test]
    fn diagonal_system() {
        let mut m = CsrMatrix::identity(4);
        m.add(2, 2, 3.0);
        let s = solve_spd(&m, &[1.0, 0.0, 4.0, 0.0], &LinearSolveSpec::default(), &Deflation::None, &[false; 4])
            .unwrap();
        assert_eq!(s.x, vec![1.0, 0.0, 1.0, 0.0]);
    }

    #[test]
    fn deflated_periodic_system_has_zero_mean() {
        let m = laplace_1d_periodic(50);
        let rhs: Vec<f64> = (0..50).map(|i| (i as f64 * 0.3).sin() + 0.7).collect();
        let s = solve_spd(&m, &rhs, &LinearSolveSpec::default(), &Deflation::Constants, &[false; 50]).unwrap();
        assert!(s.x.iter().sum::<f64>().abs() < 1e-10);
        let mut b = rhs.clone();
        let mean = b.iter().sum::<f64>() / 50.0;
        b.iter_mut().for_each(|v| *v -= mean);
        let r: Vec<f64> = m.mul(&s.x).iter().zip(&b).map(|(a, b)| a - b).collect();
        assert!(norm2(&r) <= 1e-10 * norm2(&b) * 10.0);
    }

    #[test]
    fn dirichlet_entries_are_zero() {
        let m = laplace_1d_periodic(10);
        let mut mask = vec![false; 10];
        mask[0] = true;
        let s = solve_spd(&m, &vec![1.0; 10], &LinearSolveSpec::default(), &Deflation::None, &mask).unwrap();
        assert_eq!(s.x[0], 0.0);
        assert!(s.x[5] > 0.0);
    }

    #[test]
    fn indefinite_is_detected() {
        let m = CsrMatrix::from_dense(&[vec![1.0, 0.0], vec![0.0, -1.0]]);
        let r = solve_spd(&m, &[1.0, 1.0], &LinearSolveSpec::default(), &Deflation::None, &[false; 2]);
        assert!(matches!(r, Err(Error::NotPositiveDefinite)));
    }
}
