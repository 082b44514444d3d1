//! P1 assembly with the three-point edge-midpoint rule.

use crate::error::{Error, Result};
use crate::fem::coefficient::{apply, Mat2};
use crate::fem::fields::Field;
use crate::fem::sparse::CsrMatrix;
use crate::geometry::Point;
use crate::mesh::Mesh;

/// Local vertex pairs whose midpoints form the quadrature points.
pub const EDGES: [[usize; 2]; 3] = [[0, 1], [1, 2], [2, 0]];

/// Numbering of degrees of freedom; several vertices may share one DOF.
#[derive(Debug, Clone, PartialEq)]
pub struct DofMap {
    pub map: Vec<usize>,
    pub count: usize,
}

impl DofMap {
    pub fn identity(n: usize) -> Self {
        DofMap { map: (0..n).collect(), count: n }
    }

    /// Folds periodic vertex classes into single DOFs.
    pub fn periodic(mesh: &Mesh) -> Self {
        let classes = mesh.periodic_classes();
        let mut index = vec![usize::MAX; classes.len()];
        let mut count = 0;
        let mut map = vec![0; classes.len()];
        for v in 0..classes.len() {
            let c = classes[v];
            if index[c] == usize::MAX {
                index[c] = count;
                count += 1;
            }
            map[v] = index[c];
        }
        DofMap { map, count }
    }

    pub fn expand(&self, dofs: &[f64]) -> Vec<f64> {
        self.map.iter().map(|&d| dofs[d]).collect()
    }

    /// One vertex per DOF, the first in vertex order.
    pub fn restrict(&self, nodal: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.count];
        let mut seen = vec![false; self.count];
        for (v, &d) in self.map.iter().enumerate() {
            if !seen[d] {
                out[d] = nodal[v];
                seen[d] = true;
            }
        }
        out
    }

    /// True for DOFs with at least one marked vertex.
    pub fn mark(&self, vertices: &[bool]) -> Vec<bool> {
        let mut out = vec![false; self.count];
        for (v, &d) in self.map.iter().enumerate() {
            if vertices[v] {
                out[d] = true;
            }
        }
        out
    }
}

/// Per-triangle geometric data.
#[derive(Debug, Clone, Copy)]
pub struct Element {
    pub area: f64,
    pub grads: [[f64; 2]; 3],
    pub midpoints: [Point; 3],
    pub centroid: Point,
}

impl Element {
    pub fn new(p: [Point; 3]) -> Self {
        let area = crate::mesh::signed_area(p);
        let d = 2.0 * area;
        let grads = [
            [(p[1][1] - p[2][1]) / d, (p[2][0] - p[1][0]) / d],
            [(p[2][1] - p[0][1]) / d, (p[0][0] - p[2][0]) / d],
            [(p[0][1] - p[1][1]) / d, (p[1][0] - p[0][0]) / d],
        ];
        let midpoints = EDGES.map(|[a, b]| [(p[a][0] + p[b][0]) / 2.0, (p[a][1] + p[b][1]) / 2.0]);
        let centroid = [(p[0][0] + p[1][0] + p[2][0]) / 3.0, (p[0][1] + p[1][1] + p[2][1]) / 3.0];
        Element { area, grads, midpoints, centroid }
    }

    pub fn of(mesh: &Mesh, t: usize) -> Self {
        Element::new(mesh.corners(t))
    }

    /// Value of the local basis function `a` at quadrature point `q`.
    pub fn basis_at(a: usize, q: usize) -> f64 {
        if EDGES[q].contains(&a) {
            0.5
        } else {
            0.0
        }
    }

    /// Gradient of a nodal field restricted to this element.
    pub fn gradient(&self, values: [f64; 3]) -> [f64; 2] {
        let mut g = [0.0; 2];
        for a in 0..3 {
            g[0] += values[a] * self.grads[a][0];
            g[1] += values[a] * self.grads[a][1];
        }
        g
    }
}

/// Nodal weight interpolated to the quadrature points and raised to `power`.
fn weight_at_qp(w: Option<&[f64]>, tri: &[usize; 3], power: u32) -> [f64; 3] {
    match w {
        None => [1.0; 3],
        Some(w) => EDGES.map(|[a, b]| (0.5 * (w[tri[a]] + w[tri[b]])).powi(power as i32)),
    }
}

pub fn sparsity(mesh: &Mesh, dofs: &DofMap) -> CsrMatrix {
    let mut rows: Vec<Vec<usize>> = vec![Vec::new(); dofs.count];
    for tri in &mesh.triangles {
        for &a in tri {
            for &b in tri {
                rows[dofs.map[a]].push(dofs.map[b]);
            }
        }
    }
    CsrMatrix::with_pattern(rows, true)
}

/// `∫ w^power (A∇ψ_j)·∇ψ_i`. Entries `(i, j)` and `(j, i)` receive identical
/// contributions in identical order, so the result is exactly symmetric.
pub fn assemble_weighted_stiffness(
    mesh: &Mesh,
    dofs: &DofMap,
    coefficient: &dyn Fn(Point) -> Mat2,
    w: Option<&[f64]>,
    power: u32,
) -> CsrMatrix {
    let mut m = sparsity(mesh, dofs);
    for (t, tri) in mesh.triangles.iter().enumerate() {
        let e = Element::of(mesh, t);
        let wq = weight_at_qp(w, tri, power);
        let mut local = [[0.0; 3]; 3];
        for q in 0..3 {
            if wq[q] == 0.0 {
                continue;
            }
            let a_q = coefficient(e.midpoints[q]);
            let s = e.area / 3.0 * wq[q];
            for b in 0..3 {
                let ag = apply(&a_q, e.grads[b]);
                for a in 0..=b {
                    local[a][b] += s * (ag[0] * e.grads[a][0] + ag[1] * e.grads[a][1]);
                }
            }
        }
        for b in 0..3 {
            for a in 0..=b {
                let (i, j) = (dofs.map[tri[a]], dofs.map[tri[b]]);
                m.add(i, j, local[a][b]);
                if a != b {
                    m.add(j, i, local[a][b]);
                }
            }
        }
    }
    m
}

/// `∫ w^power ψ_j ψ_i`.
pub fn assemble_weighted_mass(mesh: &Mesh, dofs: &DofMap, w: Option<&[f64]>, power: u32) -> CsrMatrix {
    let mut m = sparsity(mesh, dofs);
    for (t, tri) in mesh.triangles.iter().enumerate() {
        let area = mesh.signed_area(t);
        let wq = weight_at_qp(w, tri, power);
        for b in 0..3 {
            for a in 0..=b {
                let mut v = 0.0;
                for q in 0..3 {
                    v += area / 3.0 * wq[q] * Element::basis_at(a, q) * Element::basis_at(b, q);
                }
                let (i, j) = (dofs.map[tri[a]], dofs.map[tri[b]]);
                m.add(i, j, v);
                if a != b {
                    m.add(j, i, v);
                }
            }
        }
    }
    m
}

/// Right-hand side forms of the degenerate problem.
#[derive(Debug, Clone, Copy)]
pub enum Load<'a> {
    /// `∫ w f ψ_i` with scalar `f`.
    WeightedSource { f: &'a Field },
    /// `-∫ w f·∇ψ_i + ∫ F ψ_i` with vector `f` and scalar `F`.
    DivForm { f: &'a Field, big_f: &'a Field },
}

pub fn assemble_load(mesh: &Mesh, dofs: &DofMap, load: Load<'_>, w: Option<&[f64]>) -> Result<Vec<f64>> {
    match load {
        Load::WeightedSource { f } => {
            if !f.is_scalar() {
                return Err(Error::FieldKindMismatch("weighted source needs a scalar f".into()));
            }
            Ok(assemble_load_qp(mesh, dofs, |t, q, x| {
                let wq = weight_at_qp(w, &mesh.triangles[t], 1)[q];
                (wq * f.scalar(x), [0.0, 0.0])
            }))
        }
        Load::DivForm { f, big_f } => {
            if !(f.is_vector() || matches!(f, Field::Zero)) {
                return Err(Error::FieldKindMismatch("divergence form needs a vector f".into()));
            }
            if !big_f.is_scalar() {
                return Err(Error::FieldKindMismatch("divergence form needs a scalar F".into()));
            }
            Ok(assemble_load_qp(mesh, dofs, |t, q, x| {
                let wq = weight_at_qp(w, &mesh.triangles[t], 1)[q];
                let v = f.vector(x);
                (big_f.scalar(x), [wq * v[0], wq * v[1]])
            }))
        }
    }
}

/// `∫ s ψ_i - ∫ v·∇ψ_i` where `(s, v) = integrand(t, q, x_q)`.
pub fn assemble_load_qp(
    mesh: &Mesh,
    dofs: &DofMap,
    integrand: impl Fn(usize, usize, Point) -> (f64, [f64; 2]),
) -> Vec<f64> {
    let mut rhs = vec![0.0; dofs.count];
    for (t, tri) in mesh.triangles.iter().enumerate() {
        let e = Element::of(mesh, t);
        for q in 0..3 {
            let (s, v) = integrand(t, q, e.midpoints[q]);
            if s == 0.0 && v == [0.0, 0.0] {
                continue;
            }
            for a in 0..3 {
                let g = e.grads[a];
                rhs[dofs.map[tri[a]]] +=
                    e.area / 3.0 * (s * Element::basis_at(a, q) - (v[0] * g[0] + v[1] * g[1]));
            }
        }
    }
    rhs
}

/// `∫ψ_i` per DOF.
pub fn basis_integrals(mesh: &Mesh, dofs: &DofMap) -> Vec<f64> {
    let mut out = vec![0.0; dofs.count];
    for (t, tri) in mesh.triangles.iter().enumerate() {
        let a = mesh.signed_area(t) / 3.0;
        for &v in tri {
            out[dofs.map[v]] += a;
        }
    }
    out
}

/// `∫ u` of a nodal field.
pub fn integrate(mesh: &Mesh, u: &[f64]) -> f64 {
    (0..mesh.triangles.len())
        .map(|t| {
            let [a, b, c] = mesh.triangles[t];
            mesh.signed_area(t) * (u[a] + u[b] + u[c]) / 3.0
        })
        .sum()
}

/// Area-weighted average of element gradients at each vertex. With `classes`,
/// vertices of one periodic class share a single average.
pub fn recover_gradient(mesh: &Mesh, u: &[f64], classes: Option<&[usize]>) -> Vec<[f64; 2]> {
    let n = mesh.vertices.len();
    let class = |v: usize| classes.map_or(v, |c| c[v]);
    let mut acc = vec![[0.0; 2]; n];
    let mut weight = vec![0.0; n];
    for (t, tri) in mesh.triangles.iter().enumerate() {
        let e = Element::of(mesh, t);
        let g = e.gradient(tri.map(|v| u[v]));
        for &v in tri {
            let c = class(v);
            acc[c][0] += e.area * g[0];
            acc[c][1] += e.area * g[1];
            weight[c] += e.area;
        }
    }
    (0..n)
        .map(|v| {
            let c = class(v);
            if weight[c] > 0.0 {
                [acc[c][0] / weight[c], acc[c][1] / weight[c]]
            } else {
                [0.0, 0.0]
            }
        })
        .collect()
}

/// `‖w·u‖_p` or `‖w·∇u‖_p` on the triangles selected by `include`; `p = ∞`
/// takes the maximum over element centroids.
pub fn weighted_norm_on(
    mesh: &Mesh,
    u: &[f64],
    w: Option<&[f64]>,
    p: f64,
    gradient: bool,
    include: impl Fn(usize) -> bool,
) -> f64 {
    let mut acc = 0.0f64;
    for (t, tri) in mesh.triangles.iter().enumerate() {
        if !include(t) {
            continue;
        }
        let e = Element::of(mesh, t);
        let g = if gradient { e.gradient(tri.map(|v| u[v])) } else { [0.0; 2] };
        let value = |bary: [f64; 3]| -> f64 {
            let wv = w.map_or(1.0, |w| bary[0] * w[tri[0]] + bary[1] * w[tri[1]] + bary[2] * w[tri[2]]);
            let g_mag = if gradient {
                g[0].hypot(g[1])
            } else {
                (bary[0] * u[tri[0]] + bary[1] * u[tri[1]] + bary[2] * u[tri[2]]).abs()
            };
            (wv * g_mag).abs()
        };
        if p.is_infinite() {
            acc = acc.max(value([1.0 / 3.0; 3]));
        } else {
            for q in 0..3 {
                let bary = [0, 1, 2].map(|a| Element::basis_at(a, q));
                acc += e.area / 3.0 * value(bary).powf(p);
            }
        }
    }
    if p.is_infinite() {
        acc
    } else {
        acc.powf(1.0 / p)
    }
}

pub fn weighted_norm(mesh: &Mesh, u: &[f64], w: Option<&[f64]>, p: f64, gradient: bool) -> f64 {
    weighted_norm_on(mesh, u, w, p, gradient, |_| true)
}

/// `‖f‖_{L^p}` of an analytic field over the mesh, with the same quadrature.
pub fn field_norm(mesh: &Mesh, f: &Field, p: f64) -> f64 {
    let mut acc = 0.0f64;
    for t in 0..mesh.triangles.len() {
        let e = Element::of(mesh, t);
        if p.is_infinite() {
            for q in 0..3 {
                acc = acc.max(f.magnitude(e.midpoints[q]));
            }
        } else {
            for q in 0..3 {
                acc += e.area / 3.0 * f.magnitude(e.midpoints[q]).powf(p);
            }
        }
    }
    if p.is_infinite() {
        acc
    } else {
        acc.powf(1.0 / p)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fem::coefficient::IDENTITY;
    use crate::geometry::build_cell_geometry;
    use crate::mesh::{triangulate_cell, triangulate_solid, MeshKind};

    fn reference_triangle() -> Mesh {
        let mut m = triangulate_solid([1.0, 1.0], 2).unwrap();
        m.vertices = vec![[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]];
        m.triangles = vec![[0, 1, 2]];
        m.regions.truncate(1);
        m.kind = MeshKind::Solid;
        m
    }

    #[test]
    fn reference_element_stiffness() {
        let m = reference_triangle();
        let k = assemble_weighted_stiffness(&m, &DofMap::identity(3), &|_| IDENTITY, None, 0);
        let expected = [[1.0, -0.5, -0.5], [-0.5, 0.5, 0.0], [-0.5, 0.0, 0.5]];
        for i in 0..3 {
            for j in 0..3 {
                assert!((k.get(i, j) - expected[i][j]).abs() < 1e-15);
            }
        }
        let two = [2.0; 3];
        let k4 = assemble_weighted_stiffness(&m, &DofMap::identity(3), &|_| IDENTITY, Some(&two), 2);
        assert!((k4.get(0, 0) - 4.0).abs() < 1e-14);
    }

    #[test]
    fn reference_element_mass() {
        let m = reference_triangle();
        let mass = assemble_weighted_mass(&m, &DofMap::identity(3), None, 0);
        for i in 0..3 {
            for j in 0..3 {
                let e = if i == j { 2.0 } else { 1.0 } * 0.5 / 12.0;
                assert!((mass.get(i, j) - e).abs() < 1e-15);
            }
        }
        let three = [3.0; 3];
        let m9 = assemble_weighted_mass(&m, &DofMap::identity(3), Some(&three), 2);
        assert!((m9.get(1, 2) - 9.0 * 0.5 / 12.0).abs() < 1e-14);
        let zero = [0.0; 3];
        let m0 = assemble_weighted_mass(&m, &DofMap::identity(3), Some(&zero), 2);
        assert!(m0.to_dense().iter().flatten().all(|&v| v == 0.0));
    }

    #[test]
    fn quadrature_is_exact_for_quadratics() {
        let m = reference_triangle();
        let e = Element::of(&m, 0);
        // ∫ x² = 1/12, ∫ xy = 1/24, ∫ 1 = 1/2 on the reference triangle.
        let rule = |f: &dyn Fn(Point) -> f64| e.midpoints.iter().map(|&p| e.area / 3.0 * f(p)).sum::<f64>();
        assert!((rule(&|p| p[0] * p[0]) - 1.0 / 12.0).abs() < 1e-15);
        assert!((rule(&|p| p[0] * p[1]) - 1.0 / 24.0).abs() < 1e-15);
        assert!((rule(&|p| p[1]) - 1.0 / 6.0).abs() < 1e-15);
    }

    #[test]
    fn periodic_stiffness_annihilates_constants() {
        let cell = build_cell_geometry(vec![crate::geometry::HoleSpec::disk(0, [0.0, 0.0], 0.25)], 0.2).unwrap();
        let m = triangulate_cell(&cell, 16).unwrap();
        let dofs = DofMap::periodic(&m);
        let k = assemble_weighted_stiffness(&m, &dofs, &|_| IDENTITY, None, 0);
        assert_eq!(k.max_asymmetry(), 0.0);
        let r = k.mul(&vec![1.0; dofs.count]);
        assert!(r.iter().all(|v| v.abs() < 1e-13));
        let load = assemble_load(
            &m,
            &dofs,
            Load::DivForm { f: &Field::ConstantVector { value: [1.0, 0.0] }, big_f: &Field::Zero },
            None,
        )
        .unwrap();
        assert!(load.iter().sum::<f64>().abs() < 1e-13);
    }

    #[test]
    fn load_kinds_are_checked() {
        let m = reference_triangle();
        let d = DofMap::identity(3);
        let v = Field::ConstantVector { value: [1.0, 0.0] };
        assert!(matches!(
            assemble_load(&m, &d, Load::WeightedSource { f: &v }, None),
            Err(Error::FieldKindMismatch(_))
        ));
        let one = Field::Constant { value: 1.0 };
        let l = assemble_load(&m, &d, Load::WeightedSource { f: &one }, None).unwrap();
        assert!(l.iter().all(|x| (x - 1.0 / 6.0).abs() < 1e-15));
    }

    #[test]
    fn norms_of_linear_field() {
        let m = triangulate_solid([1.0, 1.0], 8).unwrap();
        let u: Vec<f64> = m.vertices.iter().map(|p| p[0]).collect();
        assert!((weighted_norm(&m, &u, None, 2.0, true) - 1.0).abs() < 1e-13);
        assert_eq!(weighted_norm(&m, &vec![0.0; u.len()], None, 2.0, true), 0.0);
        let w: Vec<f64> = m.vertices.iter().map(|p| p[1]).collect();
        let sup = weighted_norm(&m, &u, Some(&w), f64::INFINITY, true);
        let max_centroid = (0..m.triangle_count()).map(|t| Element::of(&m, t).centroid[1]).fold(0.0, f64::max);
        assert!((sup - max_centroid).abs() < 1e-14);
        let g = recover_gradient(&m, &u, None);
        assert!(g.iter().all(|g| (g[0] - 1.0).abs() < 1e-13 && g[1].abs() < 1e-13));
    }
}
