//! First-order correctors, the homogenized tensor and flux correctors.

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::fem::{
    assemble_load_qp, assemble_weighted_mass, assemble_weighted_stiffness, integrate, recover_gradient,
    CoefficientField, CsrMatrix, Deflation, DofMap, Element, LinearSolveSpec, Mat2, SpdSolver,
};
use crate::fem::sparse::dot;
use crate::geometry::CellGeometry;
use crate::mesh::{triangulate_cell, triangulate_full_cell, Mesh, Region};
use crate::weight::{distance_weight, ground_state_weight, WeightField, WeightMode};

#[derive(Debug, Clone)]
pub struct CorrectorSet {
    pub chi: [Vec<f64>; 2],
    pub mean_values: [f64; 2],
    pub iterations: [usize; 2],
    pub residuals: [f64; 2],
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct HomogenizedTensor {
    pub a_hat: Mat2,
    pub a0: f64,
    /// `∫ φ² A∇(y_j + χ_j)·∇(y_i + χ_i)`.
    pub energy_form: Mat2,
    pub discrepancy: f64,
}

impl HomogenizedTensor {
    pub fn asymmetry(&self) -> f64 {
        (self.a_hat[0][1] - self.a_hat[1][0]).abs()
    }

    pub fn min_eigenvalue(&self) -> f64 {
        let a = self.symmetric();
        crate::fem::coefficient::min_eigenvalue(a)
    }

    /// `(Â + Âᵀ)/2`.
    pub fn symmetric(&self) -> Mat2 {
        let off = 0.5 * (self.a_hat[0][1] + self.a_hat[1][0]);
        [[self.a_hat[0][0], off], [off, self.a_hat[1][1]]]
    }

    pub fn norm(&self) -> f64 {
        self.a_hat.iter().flatten().map(|v| v * v).sum::<f64>().sqrt()
    }
}

fn weight_sq_at_qp(phi: &[f64], tri: &[usize; 3], q: usize) -> f64 {
    let [a, b] = crate::fem::assembly::EDGES[q];
    (0.5 * (phi[tri[a]] + phi[tri[b]])).powi(2)
}

/// The periodic weighted system shared by both correctors.
pub struct CorrectorSystem {
    pub dofs: DofMap,
    pub matrix: CsrMatrix,
    pub rhs: [Vec<f64>; 2],
}

pub fn corrector_system(mesh: &Mesh, a: &CoefficientField, w: &WeightField) -> Result<CorrectorSystem> {
    if w.nodal_values.len() != mesh.vertex_count() {
        return Err(Error::MeshLineageMismatch("weight does not belong to this mesh".into()));
    }
    let phi = &w.nodal_values;
    let dofs = DofMap::periodic(mesh);
    let matrix = assemble_weighted_stiffness(mesh, &dofs, &|y| a.at(y), Some(phi), 2);
    let rhs = [0, 1].map(|j| {
        assemble_load_qp(mesh, &dofs, |t, q, y| {
            let w2 = weight_sq_at_qp(phi, &mesh.triangles[t], q);
            let ay = a.at(y);
            (0.0, [w2 * ay[0][j], w2 * ay[1][j]])
        })
    });
    Ok(CorrectorSystem { dofs, matrix, rhs })
}

/// Solves `-div(φ²A∇χ_j) = div(φ²A e_j)` with periodic conditions and
/// recentres each corrector to zero unweighted mean.
pub fn solve_correctors(
    mesh: &Mesh,
    a: &CoefficientField,
    w: &WeightField,
    spec: &LinearSolveSpec,
) -> Result<CorrectorSet> {
    let sys = corrector_system(mesh, a, w)?;
    let solver = SpdSolver::new(&sys.matrix, &vec![false; sys.dofs.count], &Deflation::Constants, spec)?;
    let sols: Vec<_> = sys.rhs.par_iter().map(|b| solver.solve(b)).collect::<Result<_>>()?;
    let area = mesh.total_area();
    let mut chi: [Vec<f64>; 2] = [Vec::new(), Vec::new()];
    let mut means = [0.0; 2];
    for j in 0..2 {
        let mut c = sys.dofs.expand(&sols[j].x);
        let mean = integrate(mesh, &c) / area;
        c.iter_mut().for_each(|v| *v -= mean);
        means[j] = integrate(mesh, &c) / area;
        if means[j].abs() > 1e-12 {
            return Err(Error::MeanNotZero { i: j, j, mean: means[j] });
        }
        chi[j] = c;
    }
    Ok(CorrectorSet {
        chi,
        mean_values: means,
        iterations: [sols[0].iterations, sols[1].iterations],
        residuals: [sols[0].residual, sols[1].residual],
    })
}

/// Corrector gradient on each triangle.
fn corrector_gradients(mesh: &Mesh, chi: &[Vec<f64>; 2]) -> Vec<[[f64; 2]; 2]> {
    (0..mesh.triangle_count())
        .map(|t| {
            let e = Element::of(mesh, t);
            let tri = mesh.triangles[t];
            [0, 1].map(|j| e.gradient(tri.map(|v| chi[j][v])))
        })
        .collect()
}

pub fn homogenized_matrix(
    mesh: &Mesh,
    a: &CoefficientField,
    w: &WeightField,
    correctors: &CorrectorSet,
) -> HomogenizedTensor {
    let phi = &w.nodal_values;
    let grads = corrector_gradients(mesh, &correctors.chi);
    let mut a_hat = [[0.0; 2]; 2];
    let mut energy = [[0.0; 2]; 2];
    let mut a0 = 0.0;
    for (t, tri) in mesh.triangles.iter().enumerate() {
        let e = Element::of(mesh, t);
        for q in 0..3 {
            let w2 = weight_sq_at_qp(phi, tri, q);
            let s = e.area / 3.0 * w2;
            a0 += s;
            let aq = a.at(e.midpoints[q]);
            // Columns: ∇(y_j + χ_j).
            let u = [0, 1].map(|j| {
                let mut g = grads[t][j];
                g[j] += 1.0;
                g
            });
            for i in 0..2 {
                for j in 0..2 {
                    let flux = crate::fem::coefficient::apply(&aq, u[j]);
                    a_hat[i][j] += s * flux[i];
                    energy[i][j] += s * (flux[0] * u[i][0] + flux[1] * u[i][1]);
                }
            }
        }
    }
    let discrepancy = (0..2)
        .flat_map(|i| (0..2).map(move |j| (i, j)))
        .map(|(i, j)| (a_hat[i][j] - energy[i][j]).abs())
        .fold(0.0, f64::max);
    HomogenizedTensor { a_hat, a0, energy_form: energy, discrepancy }
}

#[derive(Debug, Clone)]
pub struct FluxCorrectors {
    /// Full-cell mesh (holes meshed).
    pub mesh: Mesh,
    /// Potentials `f_ij` with `Δf_ij = b_ij`.
    pub potentials: [[Vec<f64>; 2]; 2],
    /// `Φ_kij`, indexed `[k][i][j]`, nodal.
    pub phi: [[[Vec<f64>; 2]; 2]; 2],
    /// Load vectors `∫ b_ij ψ`, over periodic DOFs.
    pub b_load: [[Vec<f64>; 2]; 2],
    pub b_integral: [[f64; 2]; 2],
    pub dofs: DofMap,
}

impl FluxCorrectors {
    pub fn max_antisymmetry_defect(&self) -> f64 {
        let mut worst: f64 = 0.0;
        for k in 0..2 {
            for i in 0..2 {
                for j in 0..2 {
                    for (a, b) in self.phi[k][i][j].iter().zip(&self.phi[i][k][j]) {
                        worst = worst.max((a + b).abs());
                    }
                }
            }
        }
        worst
    }

    /// `max_m |∫Φ_kij ∂_kψ_m + ∫b_ij ψ_m| / ‖ψ_m‖_{L²}` over hat functions,
    /// maximised over `i, j`.
    pub fn weak_divergence_residual(&self) -> f64 {
        let mass = assemble_weighted_mass(&self.mesh, &self.dofs, None, 0);
        let norms: Vec<f64> = mass.diagonal().iter().map(|d| d.sqrt()).collect();
        let mut worst: f64 = 0.0;
        for i in 0..2 {
            for j in 0..2 {
                let mut r = self.b_load[i][j].clone();
                for (t, tri) in self.mesh.triangles.iter().enumerate() {
                    let e = Element::of(&self.mesh, t);
                    // Φ is P1: its element average is the vertex mean.
                    let avg = [0, 1].map(|k| tri.iter().map(|&v| self.phi[k][i][j][v]).sum::<f64>() / 3.0);
                    for (a, &v) in tri.iter().enumerate() {
                        let g = e.grads[a];
                        r[self.dofs.map[v]] += e.area * (avg[0] * g[0] + avg[1] * g[1]);
                    }
                }
                for (rm, nm) in r.iter().zip(&norms) {
                    worst = worst.max(rm.abs() / nm);
                }
            }
        }
        worst
    }
}

/// Builds `Φ_kij = ∂_k f_ij - ∂_i f_kj` from periodic potentials `Δf_ij = b_ij`,
/// with the weight extended by zero into the holes.
pub fn flux_correctors(
    cell: &CellGeometry,
    cell_mesh: &Mesh,
    a: &CoefficientField,
    w: &WeightField,
    correctors: &CorrectorSet,
    tensor: &HomogenizedTensor,
    spec: &LinearSolveSpec,
) -> Result<FluxCorrectors> {
    let full = triangulate_full_cell(cell.holes(), cell_mesh.grid[0])?;
    // The perforated part of the full mesh repeats the cell mesh triangle by
    // triangle; recover the vertex correspondence from it.
    let outside: Vec<usize> =
        (0..full.triangle_count()).filter(|&t| full.regions[t] == Region::Perforated).collect();
    if outside.len() != cell_mesh.triangle_count() {
        return Err(Error::MeshLineageMismatch("full-cell mesh does not extend the cell mesh".into()));
    }
    let mut cell_vertex = vec![usize::MAX; full.vertex_count()];
    for (k, &t) in outside.iter().enumerate() {
        for (a, &v) in full.triangles[t].iter().enumerate() {
            let cv = cell_mesh.triangles[k][a];
            if full.vertices[v] != cell_mesh.vertices[cv] {
                return Err(Error::MeshLineageMismatch("full-cell mesh vertices differ".into()));
            }
            cell_vertex[v] = cv;
        }
    }
    let phi_full: Vec<f64> = cell_vertex
        .iter()
        .map(|&cv| if cv == usize::MAX { 0.0 } else { w.nodal_values[cv] })
        .collect();
    let chi_full: [Vec<f64>; 2] = [0, 1].map(|j| {
        cell_vertex.iter().map(|&cv| if cv == usize::MAX { 0.0 } else { correctors.chi[j][cv] }).collect()
    });
    let grads = corrector_gradients(&full, &chi_full);

    let dofs = DofMap::periodic(&full);
    let b_load: [[Vec<f64>; 2]; 2] = [0, 1].map(|i| {
        [0, 1].map(|j| {
            assemble_load_qp(&full, &dofs, |t, q, y| {
                let hat = tensor.a_hat[i][j];
                if full.regions[t] != Region::Perforated {
                    return (hat, [0.0, 0.0]);
                }
                let w2 = weight_sq_at_qp(&phi_full, &full.triangles[t], q);
                let aq = a.at(y);
                let mut g = grads[t][j];
                g[j] += 1.0;
                let flux = crate::fem::coefficient::apply(&aq, g);
                (hat - w2 * flux[i], [0.0, 0.0])
            })
        })
    });
    let mut b_integral = [[0.0; 2]; 2];
    for i in 0..2 {
        for j in 0..2 {
            b_integral[i][j] = b_load[i][j].iter().sum();
            if b_integral[i][j].abs() > 1e-8 {
                return Err(Error::MeanNotZero { i, j, mean: b_integral[i][j] });
            }
        }
    }

    let laplace = assemble_weighted_stiffness(&full, &dofs, &|_| crate::fem::IDENTITY, None, 0);
    let solver = SpdSolver::new(&laplace, &vec![false; dofs.count], &Deflation::Constants, spec)?;
    let pairs = [(0, 0), (0, 1), (1, 0), (1, 1)];
    let solved: Vec<Vec<f64>> = pairs
        .par_iter()
        .map(|&(i, j)| {
            // Weak form of Δf = b: ∫∇f·∇ψ = -∫bψ.
            let rhs: Vec<f64> = b_load[i][j].iter().map(|v| -v).collect();
            solver.solve(&rhs).map(|s| {
                let mut f = dofs.expand(&s.x);
                let mean = integrate(&full, &f) / full.total_area();
                f.iter_mut().for_each(|v| *v -= mean);
                f
            })
        })
        .collect::<Result<_>>()?;
    let mut it = solved.into_iter();
    let potentials: [[Vec<f64>; 2]; 2] = [
        [it.next().expect("four potentials"), it.next().expect("four potentials")],
        [it.next().expect("four potentials"), it.next().expect("four potentials")],
    ];
    let classes = full.periodic_classes();
    let grad_f: [[Vec<[f64; 2]>; 2]; 2] =
        [0, 1].map(|i| [0, 1].map(|j| recover_gradient(&full, &potentials[i][j], Some(&classes))));
    let phi: [[[Vec<f64>; 2]; 2]; 2] = [0, 1].map(|k| {
        [0, 1].map(|i| {
            [0, 1].map(|j| {
                (0..full.vertex_count()).map(|v| grad_f[i][j][v][k] - grad_f[k][j][v][i]).collect()
            })
        })
    });
    Ok(FluxCorrectors { mesh: full, potentials, phi, b_load, b_integral, dofs })
}

/// Everything computed on the reference cell.
#[derive(Debug, Clone)]
pub struct CellSolution {
    pub mesh: Mesh,
    pub weight: WeightField,
    pub correctors: CorrectorSet,
    pub tensor: HomogenizedTensor,
}

pub fn build_weight(cell: &CellGeometry, mesh: &Mesh, a: &CoefficientField, mode: WeightMode) -> Result<WeightField> {
    match mode {
        WeightMode::DistanceType => distance_weight(cell, mesh),
        WeightMode::GroundState => ground_state_weight(cell, mesh, a),
    }
}

/// Mesh, weight, correctors and `Â` at resolution `n`.
pub fn solve_cell(
    cell: &CellGeometry,
    n: usize,
    a: &CoefficientField,
    mode: WeightMode,
    floor: f64,
    spec: &LinearSolveSpec,
) -> Result<CellSolution> {
    let mesh = triangulate_cell(cell, n)?;
    let weight = build_weight(cell, &mesh, a, mode)?.with_floor(floor);
    let correctors = solve_correctors(&mesh, a, &weight, spec)?;
    let tensor = homogenized_matrix(&mesh, a, &weight, &correctors);
    Ok(CellSolution { mesh, weight, correctors, tensor })
}

/// Second-order Bloch coefficient of the discrete ground-state eigenvalue,
/// `λ_h(θ) = λ̄_h + θᵀBθ + O(|θ|⁴)`, for quasi-periodic P1 functions
/// `u_v = e^{iθ·y_v} w_v` with `w` periodic.
///
/// As `h → 0` this tends to `Â/a₀` of the ground-state weight; at fixed `h`
/// it is the tensor the tiled discrete spectrum actually homogenizes to.
pub fn bloch_tensor(mesh: &Mesh, a: &CoefficientField, w: &WeightField, spec: &LinearSolveSpec) -> Result<Mat2> {
    let lambda = w
        .lambda_bar
        .ok_or_else(|| Error::InvalidArgument("the Bloch tensor needs a ground-state weight".into()))?;
    let nv = mesh.vertex_count();
    let ident = DofMap::identity(nv);
    let s = assemble_weighted_stiffness(mesh, &ident, &|y| a.at(y), None, 0);
    let m = assemble_weighted_mass(mesh, &ident, None, 0);
    let l = s.axpy_same_pattern(-lambda, &m);
    let phi = &w.nodal_values;
    let norm = m.bilinear(phi, phi);
    let dofs = DofMap::periodic(mesh);
    let on_hole: Vec<bool> = mesh.hole_vertex.iter().map(Option::is_some).collect();
    let dirichlet = dofs.mark(&on_hole);

    let mut second = [[0.0; 2]; 2];
    let mut g = [vec![0.0; dofs.count], vec![0.0; dofs.count]];
    for v in 0..nv {
        for (c, lv) in l.row(v) {
            let d = [mesh.vertices[c][0] - mesh.vertices[v][0], mesh.vertices[c][1] - mesh.vertices[v][1]];
            for j in 0..2 {
                g[j][dofs.map[v]] += lv * d[j] * phi[c];
                for k in 0..2 {
                    second[j][k] += lv * d[j] * d[k] * phi[v] * phi[c];
                }
            }
        }
    }
    for gj in g.iter_mut() {
        for (x, &fixed) in gj.iter_mut().zip(&dirichlet) {
            if fixed {
                *x = 0.0;
            }
        }
    }
    let sp = assemble_weighted_stiffness(mesh, &dofs, &|y| a.at(y), None, 0);
    let mp = assemble_weighted_mass(mesh, &dofs, None, 0);
    let l0 = sp.axpy_same_pattern(-lambda, &mp);
    let ground = dofs.restrict(phi);
    let solver = SpdSolver::new(&l0, &dirichlet, &Deflation::Vectors(vec![ground]), spec)?;
    let x = [solver.solve(&g[0])?.x, solver.solve(&g[1])?.x];
    let mut b = [[0.0; 2]; 2];
    for j in 0..2 {
        for k in 0..2 {
            let coupling = 0.5 * (dot(&g[j], &x[k]) + dot(&g[k], &x[j]));
            b[j][k] = (-0.5 * second[j][k] - coupling) / norm;
        }
    }
    Ok(b)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{build_cell_geometry, HoleSpec};

    fn disk() -> CellGeometry {
        build_cell_geometry(vec![HoleSpec::disk(0, [0.0, 0.0], 0.25)], 0.2).unwrap()
    }

    #[test]
    fn trivial_cell() {
        let cell = build_cell_geometry(vec![], 0.2).unwrap();
        let mesh = triangulate_cell(&cell, 4).unwrap();
        let w = WeightField::constant(mesh.vertex_count(), 1.0);
        let a = CoefficientField::identity();
        let spec = LinearSolveSpec::default();
        let c = solve_correctors(&mesh, &a, &w, &spec).unwrap();
        assert!(c.chi.iter().flatten().all(|v| v.abs() < 1e-14));
        let t = homogenized_matrix(&mesh, &a, &w, &c);
        assert!((t.a_hat[0][0] - 1.0).abs() < 1e-14 && t.a_hat[0][1].abs() < 1e-14);
        assert!((t.a0 - 1.0).abs() < 1e-14);
        let f = flux_correctors(&cell, &mesh, &a, &w, &c, &t, &spec).unwrap();
        assert!(f.phi.iter().flatten().flatten().flatten().all(|v| v.abs() < 1e-12));
    }

    #[test]
    fn disk_corrector_symmetry() {
        let s = solve_cell(&disk(), 16, &CoefficientField::identity(), WeightMode::DistanceType, 0.0, &LinearSolveSpec::default())
            .unwrap();
        let key = |p: [f64; 2]| ((p[0] * 1e9).round() as i64, (p[1] * 1e9).round() as i64);
        let index: std::collections::HashMap<_, _> =
            s.mesh.vertices.iter().enumerate().map(|(v, &p)| (key(p), v)).collect();
        for (v, &p) in s.mesh.vertices.iter().enumerate() {
            if p[0].abs() == 0.5 {
                continue;
            }
            let mx = index[&key([-p[0], p[1]])];
            let my = index[&key([p[0], -p[1]])];
            assert!((s.correctors.chi[0][v] + s.correctors.chi[0][mx]).abs() < 1e-8);
            assert!((s.correctors.chi[0][v] - s.correctors.chi[0][my]).abs() < 1e-8);
        }
        let t = s.tensor;
        assert!(t.a_hat[0][1].abs() < 1e-8);
        assert!((t.a_hat[0][0] - t.a_hat[1][1]).abs() < 1e-8);
        assert!(t.discrepancy < 1e-8);
        assert!(t.a_hat[0][0] > 0.0 && t.a_hat[0][0] < t.a0);
    }

    #[test]
    fn flux_correctors_antisymmetric_and_balanced() {
        let a = CoefficientField::identity();
        let spec = LinearSolveSpec::default();
        let s = solve_cell(&disk(), 16, &a, WeightMode::DistanceType, 0.0, &spec).unwrap();
        let f = flux_correctors(&disk(), &s.mesh, &a, &s.weight, &s.correctors, &s.tensor, &spec).unwrap();
        assert_eq!(f.max_antisymmetry_defect(), 0.0);
        assert!(f.b_integral.iter().flatten().all(|v| v.abs() < 1e-8));
        assert!(f.weak_divergence_residual().is_finite());
    }
}
