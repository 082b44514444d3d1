//! Smallest generalized eigenpairs `S x = λ M x` by blocked (shifted) inverse
//! iteration with M-orthonormalization and Rayleigh-Ritz.

use nalgebra::{DMatrix, SymmetricEigen};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::fem::solve::{Deflation, LinearSolveSpec, SpdSolver};
use crate::fem::sparse::{dot, norm2, CsrMatrix};

#[derive(Debug, Clone, PartialEq)]
pub struct EigenSpec {
    /// Relative change of the eigenvalues between sweeps.
    pub tolerance: f64,
    pub max_iterations: usize,
    /// Bound on `‖Sx - λMx‖ / (|λ|·‖Mx‖)`.
    pub residual_tolerance: f64,
    /// Iterate with `S - σM`; `σ` must stay below the smallest eigenvalue.
    pub shift: f64,
    /// Extra block vectors beyond the requested count.
    pub guard: usize,
    pub inner: LinearSolveSpec,
}

impl Default for EigenSpec {
    fn default() -> Self {
        EigenSpec {
            tolerance: 1e-10,
            max_iterations: 500,
            residual_tolerance: 1e-8,
            shift: 0.0,
            guard: 2,
            inner: LinearSolveSpec::with_tolerance(1e-10),
        }
    }
}

#[derive(Debug, Clone)]
pub struct Eigenpair {
    pub value: f64,
    /// Full-length, M-normalized, zero at constrained DOFs.
    pub vector: Vec<f64>,
    pub residual: f64,
}

pub fn smallest_eigenpairs(
    s: &CsrMatrix,
    m: &CsrMatrix,
    k: usize,
    dirichlet: &[bool],
    spec: &EigenSpec,
) -> Result<Vec<Eigenpair>> {
    let n = s.dim();
    if k == 0 || m.dim() != n || dirichlet.len() != n {
        return Err(Error::InvalidArgument("eigenproblem dimensions do not match".into()));
    }
    let keep: Vec<bool> = dirichlet.iter().map(|d| !d).collect();
    let (sr, free) = s.principal_submatrix(&keep);
    let (mr, _) = m.principal_submatrix(&keep);
    let dim = free.len();
    if k > dim {
        return Err(Error::InvalidArgument(format!("asked for {k} eigenpairs of a {dim}-dimensional problem")));
    }
    let block = (k + spec.guard).min(dim);
    let shifted = if spec.shift == 0.0 { sr.clone() } else { sr.axpy_same_pattern(-spec.shift, &mr) };
    let solver = SpdSolver::new(&shifted, &vec![false; dim], &Deflation::None, &spec.inner)?;

    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed);
    let mut x: Vec<Vec<f64>> = (0..block)
        .map(|_| (0..dim).map(|_| rng.random::<f64>() - 0.5).collect())
        .collect();
    let mut previous: Option<Vec<f64>> = None;
    let mut last_residual = f64::INFINITY;

    for iteration in 1..=spec.max_iterations {
        let y: Vec<Vec<f64>> = x
            .par_iter()
            .map(|xi| solver.solve(&mr.mul(xi)).map(|s| s.x))
            .collect::<Result<_>>()?;
        let y = m_orthonormalize(y, &mr);
        if y.len() < k {
            return Err(Error::EigenIterationDivergence { iterations: iteration, residual: f64::NAN });
        }
        let sy: Vec<Vec<f64>> = y.par_iter().map(|v| sr.mul(v)).collect();
        let b = y.len();
        let mut small = DMatrix::<f64>::zeros(b, b);
        for i in 0..b {
            for j in 0..=i {
                let v = 0.5 * (dot(&y[i], &sy[j]) + dot(&y[j], &sy[i]));
                small[(i, j)] = v;
                small[(j, i)] = v;
            }
        }
        let eig = SymmetricEigen::new(small);
        let mut order: Vec<usize> = (0..b).collect();
        order.sort_by(|&a, &c| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[c]));
        let values: Vec<f64> = order.iter().map(|&c| eig.eigenvalues[c]).collect();
        x = order
            .iter()
            .map(|&c| {
                let mut v = vec![0.0; dim];
                for i in 0..b {
                    let coef = eig.eigenvectors[(i, c)];
                    v.iter_mut().zip(&y[i]).for_each(|(a, yi)| *a += coef * yi);
                }
                v
            })
            .collect();
        let converged_values = previous.as_ref().is_some_and(|p| {
            (0..k).all(|j| (values[j] - p[j]).abs() <= spec.tolerance * values[j].abs().max(1e-300))
        });
        previous = Some(values.clone());
        if converged_values {
            let residuals: Vec<f64> = (0..k).map(|j| relative_residual(&sr, &mr, &x[j], values[j])).collect();
            last_residual = residuals.iter().copied().fold(0.0, f64::max);
            if last_residual <= spec.residual_tolerance {
                return Ok((0..k)
                    .map(|j| {
                        let mut v = vec![0.0; n];
                        for (a, &i) in free.iter().enumerate() {
                            v[i] = x[j][a];
                        }
                        Eigenpair { value: values[j], vector: v, residual: residuals[j] }
                    })
                    .collect());
            }
        }
    }
    Err(Error::EigenIterationDivergence { iterations: spec.max_iterations, residual: last_residual })
}

fn relative_residual(s: &CsrMatrix, m: &CsrMatrix, x: &[f64], lambda: f64) -> f64 {
    let sx = s.mul(x);
    let mx = m.mul(x);
    let r: Vec<f64> = sx.iter().zip(&mx).map(|(a, b)| a - lambda * b).collect();
    let scale = lambda.abs().max(1e-300) * norm2(&mx);
    norm2(&r) / scale
}

/// Modified Gram-Schmidt in the M inner product, run twice; nearly dependent
/// vectors are dropped.
fn m_orthonormalize(mut vs: Vec<Vec<f64>>, m: &CsrMatrix) -> Vec<Vec<f64>> {
    let mut out: Vec<Vec<f64>> = Vec::with_capacity(vs.len());
    let mut mout: Vec<Vec<f64>> = Vec::with_capacity(vs.len());
    for v in vs.iter_mut() {
        let initial = dot(v, &m.mul(v)).sqrt();
        for _ in 0..2 {
            for (q, mq) in out.iter().zip(&mout) {
                let c = dot(v, mq);
                v.iter_mut().zip(q).for_each(|(a, b)| *a -= c * b);
            }
        }
        let mv = m.mul(v);
        let nrm = dot(v, &mv).sqrt();
        if nrm > 1e-10 * initial && nrm > 0.0 {
            let q: Vec<f64> = v.iter().map(|a| a / nrm).collect();
            let mq: Vec<f64> = mv.iter().map(|a| a / nrm).collect();
            out.push(q);
            mout.push(mq);
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fem::assembly::{assemble_weighted_mass, assemble_weighted_stiffness, DofMap};
    use crate::fem::coefficient::IDENTITY;
    use crate::mesh::triangulate_solid;
    use std::f64::consts::PI;

    #[test]
    fn dirichlet_laplace_square() {
        let mesh = triangulate_solid([1.0, 1.0], 32).unwrap();
        let d = DofMap::identity(mesh.vertex_count());
        let s = assemble_weighted_stiffness(&mesh, &d, &|_| IDENTITY, None, 0);
        let m = assemble_weighted_mass(&mesh, &d, None, 0);
        let pairs = smallest_eigenpairs(&s, &m, 3, &mesh.outer_vertices(), &EigenSpec::default()).unwrap();
        assert!((pairs[0].value / (2.0 * PI * PI) - 1.0).abs() < 0.02);
        assert!((pairs[1].value - pairs[2].value).abs() / pairs[1].value < 1e-6);
        assert!((pairs[1].value / (5.0 * PI * PI) - 1.0).abs() < 0.05);
        assert!(pairs.windows(2).all(|w| w[0].value <= w[1].value));
    }

    #[test]
    fn equal_matrices_give_unit_eigenvalues() {
        let mesh = triangulate_solid([1.0, 1.0], 4).unwrap();
        let d = DofMap::identity(mesh.vertex_count());
        let m = assemble_weighted_mass(&mesh, &d, None, 0);
        let pairs = smallest_eigenpairs(&m, &m, 2, &vec![false; d.count], &EigenSpec::default()).unwrap();
        for p in pairs {
            assert!((p.value - 1.0).abs() < 1e-12);
        }
    }
}
