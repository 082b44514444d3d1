//! The degenerate ε-problem, the homogenized problem and the Dirichlet spectra.

use serde::{Deserialize, Serialize};

use crate::cell_problem::HomogenizedTensor;
use crate::error::{Error, Result};
use crate::fem::{
    assemble_load, assemble_load_qp, assemble_weighted_mass, assemble_weighted_stiffness, field_norm,
    recover_gradient, smallest_eigenpairs, solve_spd, CoefficientField, Deflation, DofMap, EigenSpec, Field,
    LinearSolveSpec, Load,
};
use crate::geometry::{build_cell_geometry, build_perforated_domain, Point};
use crate::mesh::{tile_domain_mesh, triangulate_cell, Mesh};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RhsForm {
    WeightedSource,
    DivForm,
}

/// Right side of the degenerate problem: `φ_ε f` or `div(φ_ε f) + F`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RhsSpec {
    pub form: RhsForm,
    pub f: Field,
    #[serde(default = "zero_field", rename = "big_f")]
    pub big_f: Field,
}

fn zero_field() -> Field {
    Field::Zero
}

impl RhsSpec {
    pub fn source(f: Field) -> Self {
        RhsSpec { form: RhsForm::WeightedSource, f, big_f: Field::Zero }
    }

    pub fn div_form(f: Field, big_f: Field) -> Self {
        RhsSpec { form: RhsForm::DivForm, f, big_f }
    }

    pub fn load(&self) -> Load<'_> {
        match self.form {
            RhsForm::WeightedSource => Load::WeightedSource { f: &self.f },
            RhsForm::DivForm => Load::DivForm { f: &self.f, big_f: &self.big_f },
        }
    }

    pub fn is_zero(&self) -> bool {
        self.f.is_zero() && (self.form == RhsForm::WeightedSource || self.big_f.is_zero())
    }
}

#[derive(Debug, Clone)]
pub struct EpsSolution {
    pub u: Vec<f64>,
    pub epsilon: f64,
    pub form: RhsForm,
    /// `∫ φ_ε² |∇u_ε|²`.
    pub energy: f64,
    /// `‖φ_ε∇u_ε‖₂ / (‖f‖₂ + ‖F‖₂)`.
    pub energy_constant: f64,
    pub iterations: usize,
    pub residual: f64,
}

/// Stiffness of the degenerate operator on a domain mesh, Dirichlet mask on
/// `∂Ω` only.
pub fn eps_system(
    mesh: &Mesh,
    a: &CoefficientField,
    eps: f64,
    phi_eps: &[f64],
) -> (crate::fem::CsrMatrix, Vec<bool>) {
    let dofs = DofMap::identity(mesh.vertex_count());
    let k = assemble_weighted_stiffness(mesh, &dofs, &|x| a.at_physical(x, eps), Some(phi_eps), 2);
    (k, mesh.outer_vertices())
}

pub fn solve_eps_problem(
    mesh: &Mesh,
    a: &CoefficientField,
    eps: f64,
    phi_eps: &[f64],
    rhs: &RhsSpec,
    spec: &LinearSolveSpec,
) -> Result<EpsSolution> {
    let dofs = DofMap::identity(mesh.vertex_count());
    let (k, dirichlet) = eps_system(mesh, a, eps, phi_eps);
    let b = assemble_load(mesh, &dofs, rhs.load(), Some(phi_eps))?;
    let sol = solve_spd(&k, &b, spec, &Deflation::None, &dirichlet)?;
    let grad = crate::fem::weighted_norm(mesh, &sol.x, Some(phi_eps), 2.0, true);
    let data = field_norm(mesh, &rhs.f, 2.0)
        + if rhs.form == RhsForm::DivForm { field_norm(mesh, &rhs.big_f, 2.0) } else { 0.0 };
    Ok(EpsSolution {
        u: sol.x,
        epsilon: eps,
        form: rhs.form,
        energy: grad * grad,
        energy_constant: if data > 0.0 { grad / data } else { 0.0 },
        iterations: sol.iterations,
        residual: sol.residual,
    })
}

#[derive(Debug, Clone)]
pub struct HomogenizedSolution {
    pub u0: Vec<f64>,
    pub recovered_gradient: Vec<[f64; 2]>,
    pub iterations: usize,
    pub residual: f64,
}

/// Solid mesh of `Ω` whose grid matches tilings at `n` squares per cell.
pub fn solid_mesh(omega_units: [usize; 2], n_cells: usize, n: usize) -> Result<Mesh> {
    let empty = build_cell_geometry(Vec::new(), 0.25)?;
    let cell_mesh = triangulate_cell(&empty, n)?;
    let spec = build_perforated_domain(empty, omega_units, n_cells)?;
    let mut m = tile_domain_mesh(&cell_mesh, &spec)?;
    m.kind = crate::mesh::MeshKind::Solid;
    m.lineage = None;
    Ok(m)
}

/// Stiffness of `-div(Â∇·)` with the symmetric part of `Â`.
fn homogenized_stiffness(mesh: &Mesh, tensor: &HomogenizedTensor) -> crate::fem::CsrMatrix {
    let a = tensor.symmetric();
    assemble_weighted_stiffness(mesh, &DofMap::identity(mesh.vertex_count()), &|_| a, None, 0)
}

/// Solves `-div(Â∇u₀) = F` with `u₀ = 0` on `∂Ω`; `F` is sampled at the
/// quadrature points.
pub fn solve_homogenized(
    mesh: &Mesh,
    tensor: &HomogenizedTensor,
    big_f: &(dyn Fn(Point) -> f64 + Sync),
    spec: &LinearSolveSpec,
) -> Result<HomogenizedSolution> {
    let dofs = DofMap::identity(mesh.vertex_count());
    let k = homogenized_stiffness(mesh, tensor);
    let b = assemble_load_qp(mesh, &dofs, |_, _, x| (big_f(x), [0.0, 0.0]));
    let sol = solve_spd(&k, &b, spec, &Deflation::None, &mesh.outer_vertices())?;
    let recovered_gradient = recover_gradient(mesh, &sol.x, None);
    Ok(HomogenizedSolution { u0: sol.x, recovered_gradient, iterations: sol.iterations, residual: sol.residual })
}

/// `k` smallest Dirichlet eigenvalues of `-div(A_ε∇)` on `Ω_ε`, constrained
/// on the outer boundary and on every hole boundary.
pub fn dirichlet_spectrum_eps(
    mesh: &Mesh,
    a: &CoefficientField,
    eps: f64,
    k: usize,
    shift: f64,
) -> Result<Vec<f64>> {
    let dofs = DofMap::identity(mesh.vertex_count());
    let s = assemble_weighted_stiffness(mesh, &dofs, &|x| a.at_physical(x, eps), None, 0);
    let m = assemble_weighted_mass(mesh, &dofs, None, 0);
    let spec = EigenSpec { shift, ..EigenSpec::default() };
    let pairs = smallest_eigenpairs(&s, &m, k, &mesh.all_boundary_vertices(), &spec)?;
    Ok(pairs.into_iter().map(|p| p.value).collect())
}

/// `k` smallest eigenvalues of `-div(Â∇w) = μ a₀ w`, `w = 0` on `∂Ω`.
pub fn homogenized_spectrum(mesh: &Mesh, tensor: &HomogenizedTensor, k: usize) -> Result<Vec<f64>> {
    if !(tensor.a0 > 0.0) {
        return Err(Error::InvalidArgument("a0 must be positive".into()));
    }
    let dofs = DofMap::identity(mesh.vertex_count());
    let s = homogenized_stiffness(mesh, tensor);
    let m = assemble_weighted_mass(mesh, &dofs, None, 0).scaled(tensor.a0);
    let pairs = smallest_eigenpairs(&s, &m, k, &mesh.outer_vertices(), &EigenSpec::default())?;
    Ok(pairs.into_iter().map(|p| p.value).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fem::Mat2;
    use crate::mesh::triangulate_solid;
    use std::f64::consts::PI;

    fn identity_tensor() -> HomogenizedTensor {
        let i: Mat2 = [[1.0, 0.0], [0.0, 1.0]];
        HomogenizedTensor { a_hat: i, a0: 1.0, energy_form: i, discrepancy: 0.0 }
    }

    #[test]
    fn manufactured_homogenized_solution() {
        let spec = LinearSolveSpec::default();
        let mut errs = Vec::new();
        for n in [32, 64] {
            let mesh = triangulate_solid([1.0, 1.0], n).unwrap();
            let f = |x: Point| 2.0 * PI * PI * (PI * x[0]).sin() * (PI * x[1]).sin();
            let s = solve_homogenized(&mesh, &identity_tensor(), &f, &spec).unwrap();
            let err = mesh
                .vertices
                .iter()
                .zip(&s.u0)
                .map(|(p, u)| (u - (PI * p[0]).sin() * (PI * p[1]).sin()).abs())
                .fold(0.0, f64::max);
            errs.push(err);
        }
        assert!(errs[0] < 3e-3);
        assert!(errs[0] / errs[1] > 3.0, "{errs:?}");
    }

    #[test]
    fn zero_data_gives_zero() {
        let mesh = triangulate_solid([1.0, 1.0], 8).unwrap();
        let s = solve_homogenized(&mesh, &identity_tensor(), &|_| 0.0, &LinearSolveSpec::default()).unwrap();
        assert!(s.u0.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn homogenized_spectrum_is_scale_invariant() {
        let mesh = solid_mesh([1, 1], 2, 16).unwrap();
        let t = identity_tensor();
        let mu = homogenized_spectrum(&mesh, &t, 1).unwrap();
        assert!((mu[0] / (2.0 * PI * PI) - 1.0).abs() < 0.01);
        let t4 = HomogenizedTensor { a_hat: [[4.0, 0.0], [0.0, 4.0]], a0: 4.0, ..t };
        let mu4 = homogenized_spectrum(&mesh, &t4, 1).unwrap();
        assert!((mu4[0] - mu[0]).abs() / mu[0] < 1e-9);
    }
}
