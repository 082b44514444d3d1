//! The degenerate weight `φ` on the punctured cell and its ε-periodic copy.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fem::{
    assemble_weighted_mass, assemble_weighted_stiffness, smallest_eigenpairs, CoefficientField, DofMap, EigenSpec,
};
use crate::geometry::{to_cell_coords, CellGeometry, Point};
use crate::mesh::{Mesh, MeshKind, PointLocator};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WeightMode {
    DistanceType,
    GroundState,
}

#[derive(Debug, Clone, PartialEq)]
pub struct WeightField {
    pub nodal_values: Vec<f64>,
    pub mode: WeightMode,
    pub lambda_bar: Option<f64>,
    pub normalized: bool,
    /// `(c, C)` with `c·dist ≤ φ ≤ C·dist` over the mesh vertices.
    pub comparability: (f64, f64),
}

impl WeightField {
    /// `φ ↦ s·φ`; the eigenvalue and mode are kept, the normalization flag is dropped.
    pub fn scaled(&self, s: f64) -> WeightField {
        WeightField {
            nodal_values: self.nodal_values.iter().map(|v| v * s).collect(),
            normalized: self.normalized && s == 1.0,
            comparability: (self.comparability.0 * s, self.comparability.1 * s),
            ..self.clone()
        }
    }

    /// Raises every nodal value to at least `floor`.
    pub fn with_floor(&self, floor: f64) -> WeightField {
        if floor <= 0.0 {
            return self.clone();
        }
        WeightField {
            nodal_values: self.nodal_values.iter().map(|v| v.max(floor)).collect(),
            ..self.clone()
        }
    }

    pub fn constant(n: usize, value: f64) -> WeightField {
        WeightField {
            nodal_values: vec![value; n],
            mode: WeightMode::DistanceType,
            lambda_bar: None,
            normalized: false,
            comparability: (0.0, f64::INFINITY),
        }
    }
}

/// Capped distance with a C¹ quadratic transition centred on the cap `c0/2`:
/// identity below `c0/4`, constant `c0/2` above `3c0/4`.
pub fn capped_distance(d: f64, c0: f64) -> f64 {
    let lo = 0.25 * c0;
    let hi = 0.75 * c0;
    if d <= lo {
        d
    } else if d >= hi {
        0.5 * c0
    } else {
        d - (d - lo).powi(2) / c0
    }
}

fn comparability(cell: &CellGeometry, mesh: &Mesh, phi: &[f64]) -> (f64, f64) {
    let mut lo = f64::INFINITY;
    let mut hi: f64 = 0.0;
    for (v, p) in mesh.vertices.iter().enumerate() {
        let d = cell.periodic_distance(*p);
        if d > 1e-12 && d.is_finite() && mesh.hole_vertex[v].is_none() {
            let r = phi[v] / d;
            lo = lo.min(r);
            hi = hi.max(r);
        }
    }
    if lo.is_infinite() {
        (0.0, f64::INFINITY)
    } else {
        (lo, hi)
    }
}

fn check_mesh(mesh: &Mesh) -> Result<()> {
    if !matches!(mesh.kind, MeshKind::Cell) {
        return Err(Error::MeshLineageMismatch("weights live on punctured-cell meshes".into()));
    }
    Ok(())
}

pub fn distance_weight(cell: &CellGeometry, mesh: &Mesh) -> Result<WeightField> {
    check_mesh(mesh)?;
    let c0 = cell.c0();
    let nodal: Vec<f64> = mesh
        .vertices
        .iter()
        .enumerate()
        .map(|(v, p)| {
            if mesh.hole_vertex[v].is_some() {
                0.0
            } else {
                capped_distance(cell.periodic_distance(*p), c0)
            }
        })
        .collect();
    let nodal = symmetrize_periodic(mesh, nodal);
    let comparability = comparability(cell, mesh, &nodal);
    Ok(WeightField {
        nodal_values: nodal,
        mode: WeightMode::DistanceType,
        lambda_bar: None,
        normalized: false,
        comparability,
    })
}

/// Makes paired face vertices bit-identical by copying the class representative.
fn symmetrize_periodic(mesh: &Mesh, values: Vec<f64>) -> Vec<f64> {
    let classes = mesh.periodic_classes();
    (0..values.len()).map(|v| values[classes[v]]).collect()
}

/// Principal periodic-Dirichlet eigenpair of `-div(A∇)` on the punctured cell.
pub fn ground_state_weight(cell: &CellGeometry, mesh: &Mesh, a: &CoefficientField) -> Result<WeightField> {
    check_mesh(mesh)?;
    let n = mesh.vertex_count();
    if cell.is_empty() {
        let area = mesh.total_area();
        let mut w = WeightField::constant(n, 1.0 / area.sqrt());
        w.mode = WeightMode::GroundState;
        w.lambda_bar = Some(0.0);
        w.normalized = true;
        return Ok(w);
    }
    let dofs = DofMap::periodic(mesh);
    let s = assemble_weighted_stiffness(mesh, &dofs, &|y| a.at(y), None, 0);
    let m = assemble_weighted_mass(mesh, &dofs, None, 0);
    let on_hole: Vec<bool> = mesh.hole_vertex.iter().map(Option::is_some).collect();
    let dirichlet = dofs.mark(&on_hole);
    let pair = smallest_eigenpairs(&s, &m, 1, &dirichlet, &EigenSpec::default())?.remove(0);
    let total: f64 = pair.vector.iter().sum();
    let sign = if total < 0.0 { -1.0 } else { 1.0 };
    let nodal: Vec<f64> = dofs.expand(&pair.vector).iter().map(|v| sign * v).collect();
    let comparability = comparability(cell, mesh, &nodal);
    Ok(WeightField {
        nodal_values: nodal,
        mode: WeightMode::GroundState,
        lambda_bar: Some(pair.value),
        normalized: true,
        comparability,
    })
}

/// `φ_ε(x) = φ(x/ε)` on a tiled domain mesh, by vertex preimage.
pub fn evaluate_weight_on_domain(w: &WeightField, domain: &Mesh) -> Result<Vec<f64>> {
    let lineage = domain
        .lineage
        .as_ref()
        .ok_or_else(|| Error::MeshLineageMismatch("domain mesh was not produced by tiling".into()))?;
    if lineage.cell_vertex_count != w.nodal_values.len() {
        return Err(Error::MeshLineageMismatch(format!(
            "weight has {} values but the tiled cell mesh has {} vertices",
            w.nodal_values.len(),
            lineage.cell_vertex_count
        )));
    }
    Ok(lineage.vertex_preimage.iter().map(|&v| w.nodal_values[v]).collect())
}

/// Evaluates a nodal cell field at arbitrary points by point location,
/// extended by zero into the holes.
pub struct CellSampler<'a> {
    locator: PointLocator<'a>,
    mesh: &'a Mesh,
    values: &'a [f64],
}

impl<'a> CellSampler<'a> {
    pub fn new(mesh: &'a Mesh, values: &'a [f64]) -> Self {
        CellSampler { locator: PointLocator::new(mesh), mesh, values }
    }

    pub fn at_cell(&self, y: Point) -> f64 {
        match self.locator.locate(y) {
            Some((t, b)) => {
                let tri = self.mesh.triangles[t];
                b[0] * self.values[tri[0]] + b[1] * self.values[tri[1]] + b[2] * self.values[tri[2]]
            }
            None => 0.0,
        }
    }

    pub fn at_physical(&self, x: Point, eps: f64) -> f64 {
        self.at_cell(to_cell_coords(x, eps))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fem::{weighted_norm, IDENTITY};
    use crate::geometry::{build_cell_geometry, build_perforated_domain, HoleSpec};
    use crate::mesh::{tile_domain_mesh, triangulate_cell};

    fn disk() -> CellGeometry {
        build_cell_geometry(vec![HoleSpec::disk(0, [0.0, 0.0], 0.25)], 0.2).unwrap()
    }

    #[test]
    fn blend_is_c1() {
        let c0 = 0.2;
        let h = 1e-7;
        for d in [0.05, 0.15] {
            let left = (capped_distance(d, c0) - capped_distance(d - h, c0)) / h;
            let right = (capped_distance(d + h, c0) - capped_distance(d, c0)) / h;
            assert!((left - right).abs() < 1e-5);
        }
        assert_eq!(capped_distance(0.2, c0), 0.1);
        assert_eq!(capped_distance(f64::INFINITY, c0), 0.1);
    }

    #[test]
    fn empty_cell_weight_is_constant() {
        let cell = build_cell_geometry(vec![], 0.2).unwrap();
        let m = triangulate_cell(&cell, 4).unwrap();
        let w = distance_weight(&cell, &m).unwrap();
        assert!(w.nodal_values.iter().all(|&v| v == 0.1));
        let g = ground_state_weight(&cell, &m, &CoefficientField::identity()).unwrap();
        assert_eq!(g.lambda_bar, Some(0.0));
        assert!(g.nodal_values.iter().all(|&v| (v - 1.0).abs() < 1e-15));
    }

    #[test]
    fn distance_weight_invariants() {
        let m = triangulate_cell(&disk(), 32).unwrap();
        let w = distance_weight(&disk(), &m).unwrap();
        for (v, &phi) in w.nodal_values.iter().enumerate() {
            if m.is_hole_vertex(v) {
                assert_eq!(phi, 0.0);
            } else {
                assert!(phi > 0.0);
            }
        }
        for &(a, b) in &m.periodic_pairs {
            assert_eq!(w.nodal_values[a].to_bits(), w.nodal_values[b].to_bits());
        }
        // The cap bounds the ratio by the largest vertex distance over c0/2.
        let (c, big_c) = w.comparability;
        assert!((big_c - 1.0).abs() < 1e-12);
        let d_max = (0.5f64).sqrt() - 0.25;
        assert!((big_c / c - d_max / 0.1).abs() < 1e-9);
    }

    #[test]
    fn ground_state_is_positive_and_normalized() {
        let m = triangulate_cell(&disk(), 16).unwrap();
        let g = ground_state_weight(&disk(), &m, &CoefficientField::identity()).unwrap();
        let lambda = g.lambda_bar.unwrap();
        assert!(lambda > 0.0);
        for (v, &phi) in g.nodal_values.iter().enumerate() {
            if m.is_hole_vertex(v) {
                assert_eq!(phi, 0.0);
            } else {
                assert!(phi > 0.0, "vertex {v}: {phi}");
            }
        }
        let l2 = weighted_norm(&m, &g.nodal_values, None, 2.0, false);
        assert!((l2 - 1.0).abs() < 0.05);
        let grad = weighted_norm(&m, &g.nodal_values, None, 2.0, true);
        let dofs = DofMap::periodic(&m);
        let mass = assemble_weighted_mass(&m, &dofs, None, 0);
        let stiff = assemble_weighted_stiffness(&m, &dofs, &|_| IDENTITY, None, 0);
        let x = dofs.restrict(&g.nodal_values);
        let rq = stiff.bilinear(&x, &x) / mass.bilinear(&x, &x);
        assert!((rq - lambda).abs() / lambda < 1e-9);
        assert!((grad * grad - lambda).abs() / lambda < 1e-9);
    }

    #[test]
    fn domain_evaluation_by_preimage() {
        let cm = triangulate_cell(&disk(), 8).unwrap();
        let w = distance_weight(&disk(), &cm).unwrap();
        let spec = build_perforated_domain(disk(), [1, 1], 1).unwrap();
        let dm = tile_domain_mesh(&cm, &spec).unwrap();
        assert_eq!(evaluate_weight_on_domain(&w, &dm).unwrap(), w.nodal_values);
        let spec4 = build_perforated_domain(disk(), [1, 1], 4).unwrap();
        let dm4 = tile_domain_mesh(&cm, &spec4).unwrap();
        let phi = evaluate_weight_on_domain(&w, &dm4).unwrap();
        let zeros_on_holes = (0..dm4.vertex_count()).filter(|&v| dm4.is_hole_vertex(v)).all(|v| phi[v] == 0.0);
        assert!(zeros_on_holes);
        let bad = WeightField::constant(3, 1.0);
        assert!(matches!(evaluate_weight_on_domain(&bad, &dm4), Err(Error::MeshLineageMismatch(_))));
    }

    #[test]
    fn sampler_matches_nodes_and_vanishes_in_holes() {
        let cm = triangulate_cell(&disk(), 8).unwrap();
        let w = distance_weight(&disk(), &cm).unwrap();
        let s = CellSampler::new(&cm, &w.nodal_values);
        assert_eq!(s.at_cell([0.0, 0.0]), 0.0);
        let v = 7;
        let p = cm.vertices[v];
        assert!((s.at_cell(p) - w.nodal_values[v]).abs() < 1e-14);
        let x = [0.25 * (1.0 + 0.5 + p[0]), 0.25 * (2.0 + 0.5 + p[1])];
        assert!((s.at_physical(x, 0.25) - w.nodal_values[v]).abs() < 1e-12);
    }
}
