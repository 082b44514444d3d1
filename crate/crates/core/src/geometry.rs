//! Unit cell with holes, the macroscopic rectangle and their ε-scaled composition.
//!
//! The reference cell is `Y = (-1/2, 1/2)^2`. Holes are closed sets strictly
//! inside `Y`; the perforated domain tiles an axis-aligned rectangle
//! `(0, W) x (0, H)` with `N·W x N·H` copies of the cell scaled by `ε = 1/N`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type Point = [f64; 2];

const HALF: f64 = 0.5;

/// Shape of a single hole, in cell coordinates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum HoleShape {
    Disk { center: Point, radius: f64 },
    /// Simple polygon, vertices listed counterclockwise.
    Polygon { vertices: Vec<Point> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HoleSpec {
    pub label: usize,
    pub shape: HoleShape,
}

impl HoleSpec {
    pub fn disk(label: usize, center: Point, radius: f64) -> Self {
        HoleSpec { label, shape: HoleShape::Disk { center, radius } }
    }

    pub fn polygon(label: usize, vertices: Vec<Point>) -> Self {
        HoleSpec { label, shape: HoleShape::Polygon { vertices } }
    }

    /// Signed distance: negative inside the hole, positive outside.
    pub fn signed_distance(&self, p: Point) -> f64 {
        match &self.shape {
            HoleShape::Disk { center, radius } => {
                let dx = p[0] - center[0];
                let dy = p[1] - center[1];
                (dx * dx + dy * dy).sqrt() - radius
            }
            HoleShape::Polygon { vertices } => {
                let d = polygon_boundary_distance(vertices, p);
                if point_in_polygon(vertices, p) {
                    -d
                } else {
                    d
                }
            }
        }
    }

    /// Closest point on the hole boundary.
    pub fn project(&self, p: Point) -> Point {
        match &self.shape {
            HoleShape::Disk { center, radius } => {
                let dx = p[0] - center[0];
                let dy = p[1] - center[1];
                let rho = (dx * dx + dy * dy).sqrt();
                if rho == 0.0 {
                    return [center[0] + radius, center[1]];
                }
                [center[0] + dx * radius / rho, center[1] + dy * radius / rho]
            }
            HoleShape::Polygon { vertices } => {
                let mut best = vertices[0];
                let mut best_d = f64::INFINITY;
                for k in 0..vertices.len() {
                    let a = vertices[k];
                    let b = vertices[(k + 1) % vertices.len()];
                    let q = closest_on_segment(a, b, p);
                    let d = dist(q, p);
                    if d < best_d {
                        best_d = d;
                        best = q;
                    }
                }
                best
            }
        }
    }

    /// Point where the segment `a -> b` crosses the hole boundary, assuming
    /// the signed distance changes sign between the endpoints.
    pub fn crossing(&self, a: Point, b: Point) -> Option<Point> {
        match &self.shape {
            HoleShape::Disk { center, radius } => {
                let d = [b[0] - a[0], b[1] - a[1]];
                let f = [a[0] - center[0], a[1] - center[1]];
                let qa = d[0] * d[0] + d[1] * d[1];
                let qb = 2.0 * (f[0] * d[0] + f[1] * d[1]);
                let qc = f[0] * f[0] + f[1] * f[1] - radius * radius;
                let disc = qb * qb - 4.0 * qa * qc;
                if disc < 0.0 || qa == 0.0 {
                    return None;
                }
                let sq = disc.sqrt();
                let t1 = (-qb - sq) / (2.0 * qa);
                let t2 = (-qb + sq) / (2.0 * qa);
                let t = [t1, t2].into_iter().find(|t| (0.0..=1.0).contains(t))?;
                // Re-project so the vertex lies on the circle to rounding.
                Some(self.project([a[0] + t * d[0], a[1] + t * d[1]]))
            }
            HoleShape::Polygon { vertices } => {
                let mut best: Option<(f64, Point)> = None;
                for k in 0..vertices.len() {
                    let c = vertices[k];
                    let e = vertices[(k + 1) % vertices.len()];
                    if let Some((t, q)) = segment_intersection(a, b, c, e) {
                        if best.map_or(true, |(bt, _)| t < bt) {
                            best = Some((t, q));
                        }
                    }
                }
                best.map(|(_, q)| q)
            }
        }
    }

    pub fn area(&self) -> f64 {
        match &self.shape {
            HoleShape::Disk { radius, .. } => std::f64::consts::PI * radius * radius,
            HoleShape::Polygon { vertices } => polygon_area(vertices).abs(),
        }
    }

    /// Axis-aligned bounding box `[xmin, ymin, xmax, ymax]`.
    pub fn bbox(&self) -> [f64; 4] {
        match &self.shape {
            HoleShape::Disk { center, radius } => [
                center[0] - radius,
                center[1] - radius,
                center[0] + radius,
                center[1] + radius,
            ],
            HoleShape::Polygon { vertices } => {
                let mut b = [f64::INFINITY, f64::INFINITY, f64::NEG_INFINITY, f64::NEG_INFINITY];
                for v in vertices {
                    b[0] = b[0].min(v[0]);
                    b[1] = b[1].min(v[1]);
                    b[2] = b[2].max(v[0]);
                    b[3] = b[3].max(v[1]);
                }
                b
            }
        }
    }

    /// Disk centre or polygon vertex average.
    pub fn reference_point(&self) -> Point {
        match &self.shape {
            HoleShape::Disk { center, .. } => *center,
            HoleShape::Polygon { vertices } => {
                let n = vertices.len() as f64;
                let sx: f64 = vertices.iter().map(|v| v[0]).sum();
                let sy: f64 = vertices.iter().map(|v| v[1]).sum();
                [sx / n, sy / n]
            }
        }
    }

    /// Distance from the hole to the boundary of `Y`; negative when the hole
    /// pokes through a face.
    pub fn distance_to_cell_boundary(&self) -> f64 {
        let b = self.bbox();
        (b[0] + HALF).min(b[1] + HALF).min(HALF - b[2]).min(HALF - b[3])
    }

    /// Distance between two disjoint holes.
    pub fn distance_to(&self, other: &HoleSpec) -> f64 {
        match (&self.shape, &other.shape) {
            (
                HoleShape::Disk { center: c1, radius: r1 },
                HoleShape::Disk { center: c2, radius: r2 },
            ) => dist(*c1, *c2) - r1 - r2,
            _ => {
                // Sample the boundary of one against the signed distance of the
                // other; exact for polygon-polygon pairs, 1e-4 accurate for disks.
                let a = self.boundary_samples();
                let b = other.boundary_samples();
                let d1 = a.iter().map(|&p| other.signed_distance(p)).fold(f64::INFINITY, f64::min);
                let d2 = b.iter().map(|&p| self.signed_distance(p)).fold(f64::INFINITY, f64::min);
                d1.min(d2)
            }
        }
    }

    fn boundary_samples(&self) -> Vec<Point> {
        match &self.shape {
            HoleShape::Disk { center, radius } => (0..4096)
                .map(|k| {
                    let t = 2.0 * std::f64::consts::PI * k as f64 / 4096.0;
                    [center[0] + radius * t.cos(), center[1] + radius * t.sin()]
                })
                .collect(),
            HoleShape::Polygon { vertices } => vertices.clone(),
        }
    }

    pub fn translated(&self, offset: Point) -> HoleSpec {
        let shape = match &self.shape {
            HoleShape::Disk { center, radius } => HoleShape::Disk {
                center: [center[0] + offset[0], center[1] + offset[1]],
                radius: *radius,
            },
            HoleShape::Polygon { vertices } => HoleShape::Polygon {
                vertices: vertices.iter().map(|v| [v[0] + offset[0], v[1] + offset[1]]).collect(),
            },
        };
        HoleSpec { label: self.label, shape }
    }

    pub fn scaled(&self, factor: f64, offset: Point) -> HoleSpec {
        let shape = match &self.shape {
            HoleShape::Disk { center, radius } => HoleShape::Disk {
                center: [offset[0] + factor * center[0], offset[1] + factor * center[1]],
                radius: factor * radius,
            },
            HoleShape::Polygon { vertices } => HoleShape::Polygon {
                vertices: vertices
                    .iter()
                    .map(|v| [offset[0] + factor * v[0], offset[1] + factor * v[1]])
                    .collect(),
            },
        };
        HoleSpec { label: self.label, shape }
    }

    /// Hole grown by `delta` in every direction. Disks stay disks; polygons
    /// are offset by moving each vertex along its angle bisector.
    pub fn enlarged(&self, delta: f64) -> HoleSpec {
        let shape = match &self.shape {
            HoleShape::Disk { center, radius } => {
                HoleShape::Disk { center: *center, radius: radius + delta }
            }
            HoleShape::Polygon { vertices } => {
                let m = vertices.len();
                let out = (0..m)
                    .map(|k| {
                        let prev = vertices[(k + m - 1) % m];
                        let cur = vertices[k];
                        let next = vertices[(k + 1) % m];
                        let n1 = outward_normal(prev, cur);
                        let n2 = outward_normal(cur, next);
                        let bis = [n1[0] + n2[0], n1[1] + n2[1]];
                        let len = (bis[0] * bis[0] + bis[1] * bis[1]).sqrt();
                        let cos_half = len / 2.0;
                        let s = delta / cos_half.max(1e-12);
                        [cur[0] + bis[0] / len * s, cur[1] + bis[1] / len * s]
                    })
                    .collect();
                HoleShape::Polygon { vertices: out }
            }
        };
        HoleSpec { label: self.label, shape }
    }

    /// Disks centred at the origin are invariant under the symmetries of the square.
    pub fn is_reflection_symmetric(&self) -> bool {
        match &self.shape {
            HoleShape::Disk { center, .. } => center[0] == 0.0 && center[1] == 0.0,
            HoleShape::Polygon { .. } => false,
        }
    }
}

/// Validated unit cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellGeometry {
    holes: Vec<HoleSpec>,
    c0: f64,
}

impl CellGeometry {
    pub fn holes(&self) -> &[HoleSpec] {
        &self.holes
    }

    pub fn c0(&self) -> f64 {
        self.c0
    }

    pub fn is_empty(&self) -> bool {
        self.holes.is_empty()
    }

    pub fn hole_area(&self) -> f64 {
        self.holes.iter().map(HoleSpec::area).sum()
    }

    /// Distance from `p` to the periodic hole array `T + Z^2`.
    pub fn periodic_distance(&self, p: Point) -> f64 {
        let mut best = f64::INFINITY;
        for hole in &self.holes {
            for sx in [-1.0, 0.0, 1.0] {
                for sy in [-1.0, 0.0, 1.0] {
                    let q = [p[0] - sx, p[1] - sy];
                    best = best.min(hole.signed_distance(q).max(0.0));
                }
            }
        }
        best
    }

    /// Holes grown by `delta`, the `T'` of the extension construction.
    pub fn enlarged_holes(&self, delta: f64) -> Vec<HoleSpec> {
        self.holes.iter().map(|h| h.enlarged(delta)).collect()
    }

    /// True when every hole is a disk centred at the origin, so the cell is
    /// invariant under the reflections of the square.
    pub fn is_reflection_symmetric(&self) -> bool {
        self.holes.len() <= 1 && self.holes.iter().all(HoleSpec::is_reflection_symmetric)
    }
}

/// Validates the separation constraints and returns the cell.
pub fn build_cell_geometry(holes: Vec<HoleSpec>, c0: f64) -> Result<CellGeometry> {
    if !(c0 > 0.0 && c0.is_finite()) {
        return Err(Error::InvalidArgument(format!("c0 must be positive, got {c0}")));
    }
    for hole in &holes {
        match &hole.shape {
            HoleShape::Disk { radius, .. } if !(*radius > 0.0) => {
                return Err(Error::InvalidArgument(format!(
                    "hole {}: radius must be positive",
                    hole.label
                )))
            }
            HoleShape::Polygon { vertices } if vertices.len() < 3 => {
                return Err(Error::InvalidArgument(format!(
                    "hole {}: polygon needs at least 3 vertices",
                    hole.label
                )))
            }
            HoleShape::Polygon { vertices } if polygon_area(vertices) <= 0.0 => {
                return Err(Error::InvalidArgument(format!(
                    "hole {}: polygon must be counterclockwise",
                    hole.label
                )))
            }
            _ => {}
        }
        let r = hole.reference_point();
        if !(r[0].abs() < HALF && r[1].abs() < HALF) {
            return Err(Error::HoleOutsideCell { label: hole.label });
        }
        let d = hole.distance_to_cell_boundary();
        if d < c0 {
            return Err(Error::SeparationViolation {
                label: hole.label,
                other: None,
                distance: d,
                c0,
            });
        }
    }
    for (a, ha) in holes.iter().enumerate() {
        for hb in holes.iter().skip(a + 1) {
            let d = ha.distance_to(hb);
            if d < c0 {
                return Err(Error::SeparationViolation {
                    label: ha.label,
                    other: Some(hb.label),
                    distance: d,
                    c0,
                });
            }
        }
    }
    Ok(CellGeometry { holes, c0 })
}

/// `Ω = (0, W) x (0, H)` covered by ε-cells, with `ε = 1/N`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PerforatedDomainSpec {
    pub cell: CellGeometry,
    /// Side lengths of `Ω` in unit lengths (each an integer).
    pub omega_units: [usize; 2],
    pub n_cells: usize,
}

impl PerforatedDomainSpec {
    pub fn epsilon(&self) -> f64 {
        1.0 / self.n_cells as f64
    }

    /// Number of ε-cells along each side.
    pub fn cells(&self) -> [usize; 2] {
        [self.omega_units[0] * self.n_cells, self.omega_units[1] * self.n_cells]
    }

    pub fn width(&self) -> f64 {
        self.omega_units[0] as f64
    }

    pub fn height(&self) -> f64 {
        self.omega_units[1] as f64
    }

    pub fn area(&self) -> f64 {
        self.width() * self.height()
    }

    pub fn hole_count(&self) -> usize {
        let [cx, cy] = self.cells();
        cx * cy * self.cell.holes.len()
    }

    /// Lower-left corner of ε-cell `(i, j)`.
    pub fn cell_origin(&self, i: usize, j: usize) -> Point {
        let eps = self.epsilon();
        [i as f64 * eps, j as f64 * eps]
    }

    /// Maps a physical point to cell coordinates in `Y`.
    pub fn to_cell(&self, x: Point) -> Point {
        to_cell_coords(x, self.epsilon())
    }

    /// `dist(x, ∂Ω)` for a point inside the rectangle.
    pub fn distance_to_outer(&self, x: Point) -> f64 {
        x[0].min(self.width() - x[0]).min(x[1]).min(self.height() - x[1])
    }

    /// All holes of the tiling, scaled into physical coordinates.
    pub fn physical_holes(&self) -> Vec<HoleSpec> {
        let eps = self.epsilon();
        let [cx, cy] = self.cells();
        let mut out = Vec::with_capacity(self.hole_count());
        for j in 0..cy {
            for i in 0..cx {
                let o = self.cell_origin(i, j);
                let centre = [o[0] + 0.5 * eps, o[1] + 0.5 * eps];
                for hole in &self.cell.holes {
                    out.push(hole.scaled(eps, centre));
                }
            }
        }
        out
    }

    /// Smallest distance from any hole of the tiling to `∂Ω`.
    pub fn outer_clearance(&self) -> f64 {
        self.physical_holes()
            .iter()
            .map(|h| {
                let b = h.bbox();
                b[0].min(b[1]).min(self.width() - b[2]).min(self.height() - b[3])
            })
            .fold(f64::INFINITY, f64::min)
    }
}

/// Cell coordinates of a physical point for the lattice `εZ^2`.
pub fn to_cell_coords(x: Point, eps: f64) -> Point {
    let f = |t: f64| {
        let s = t / eps;
        s - s.floor() - 0.5
    };
    [f(x[0]), f(x[1])]
}

pub fn build_perforated_domain(
    cell: CellGeometry,
    omega_units: [usize; 2],
    n_cells: usize,
) -> Result<PerforatedDomainSpec> {
    if n_cells == 0 {
        return Err(Error::InvalidArgument("N must be at least 1".into()));
    }
    if omega_units[0] == 0 || omega_units[1] == 0 {
        return Err(Error::InvalidArgument("omega must have positive side lengths".into()));
    }
    let spec = PerforatedDomainSpec { cell, omega_units, n_cells };
    if !spec.cell.is_empty() {
        let clearance = spec.outer_clearance();
        let required = spec.cell.c0 * spec.epsilon();
        // Holes sit inside their own ε-cell, so the clearance is ε·dist(T, ∂Y).
        if clearance < required * (1.0 - 1e-12) {
            return Err(Error::GeometryViolation(format!(
                "dist(∂Ω, ∂T_ε) = {clearance} < c0·ε = {required}"
            )));
        }
        let enlarged = spec.cell.c0 / 8.0 * spec.epsilon();
        if clearance <= enlarged {
            return Err(Error::GeometryViolation(
                "enlarged holes intersect the outer boundary".into(),
            ));
        }
    }
    Ok(spec)
}

pub(crate) fn dist(a: Point, b: Point) -> f64 {
    ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2)).sqrt()
}

fn closest_on_segment(a: Point, b: Point, p: Point) -> Point {
    let d = [b[0] - a[0], b[1] - a[1]];
    let len2 = d[0] * d[0] + d[1] * d[1];
    if len2 == 0.0 {
        return a;
    }
    let t = (((p[0] - a[0]) * d[0] + (p[1] - a[1]) * d[1]) / len2).clamp(0.0, 1.0);
    [a[0] + t * d[0], a[1] + t * d[1]]
}

fn polygon_boundary_distance(vertices: &[Point], p: Point) -> f64 {
    (0..vertices.len())
        .map(|k| {
            let q = closest_on_segment(vertices[k], vertices[(k + 1) % vertices.len()], p);
            dist(p, q)
        })
        .fold(f64::INFINITY, f64::min)
}

fn point_in_polygon(vertices: &[Point], p: Point) -> bool {
    let mut inside = false;
    let m = vertices.len();
    let mut j = m - 1;
    for i in 0..m {
        let (vi, vj) = (vertices[i], vertices[j]);
        if (vi[1] > p[1]) != (vj[1] > p[1]) {
            let x = vj[0] + (p[1] - vj[1]) / (vi[1] - vj[1]) * (vi[0] - vj[0]);
            if p[0] < x {
                inside = !inside;
            }
        }
        j = i;
    }
    inside
}

pub(crate) fn polygon_area(vertices: &[Point]) -> f64 {
    let m = vertices.len();
    0.5 * (0..m)
        .map(|k| {
            let a = vertices[k];
            let b = vertices[(k + 1) % m];
            a[0] * b[1] - a[1] * b[0]
        })
        .sum::<f64>()
}

fn outward_normal(a: Point, b: Point) -> Point {
    let d = [b[0] - a[0], b[1] - a[1]];
    let len = (d[0] * d[0] + d[1] * d[1]).sqrt();
    [d[1] / len, -d[0] / len]
}

/// Intersection of segments `a-b` and `c-e`; returns the parameter along `a-b`.
fn segment_intersection(a: Point, b: Point, c: Point, e: Point) -> Option<(f64, Point)> {
    let r = [b[0] - a[0], b[1] - a[1]];
    let s = [e[0] - c[0], e[1] - c[1]];
    let denom = r[0] * s[1] - r[1] * s[0];
    if denom == 0.0 {
        return None;
    }
    let q = [c[0] - a[0], c[1] - a[1]];
    let t = (q[0] * s[1] - q[1] * s[0]) / denom;
    let u = (q[0] * r[1] - q[1] * r[0]) / denom;
    if (0.0..=1.0).contains(&t) && (0.0..=1.0).contains(&u) {
        Some((t, [a[0] + t * r[0], a[1] + t * r[1]]))
    } else {
        None
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn disk_cell() -> CellGeometry {
        build_cell_geometry(vec![HoleSpec::disk(0, [0.0, 0.0], 0.25)], 0.2).unwrap()
    }

    #[test]
    fn centred_disk_is_valid() {
        let cell = disk_cell();
        assert_eq!(cell.holes().len(), 1);
        assert!((cell.holes()[0].distance_to_cell_boundary() - 0.25).abs() < 1e-15);
    }

    #[test]
    fn empty_cell_is_valid() {
        let cell = build_cell_geometry(vec![], 0.2).unwrap();
        assert!(cell.is_empty());
        assert_eq!(cell.periodic_distance([0.1, 0.2]), f64::INFINITY);
    }

    #[test]
    fn disk_too_close_to_face() {
        let err = build_cell_geometry(vec![HoleSpec::disk(0, [0.3, 0.0], 0.25)], 0.2).unwrap_err();
        assert!(matches!(err, Error::SeparationViolation { other: None, .. }));
    }

    #[test]
    fn disk_crossing_face_is_outside() {
        let err = build_cell_geometry(vec![HoleSpec::disk(0, [0.6, 0.0], 0.05)], 0.05).unwrap_err();
        assert!(matches!(err, Error::HoleOutsideCell { .. }));
    }

    #[test]
    fn holes_too_close_to_each_other() {
        let holes = vec![HoleSpec::disk(0, [-0.12, 0.0], 0.1), HoleSpec::disk(1, [0.12, 0.0], 0.1)];
        let err = build_cell_geometry(holes, 0.1).unwrap_err();
        assert!(matches!(err, Error::SeparationViolation { other: Some(1), .. }));
    }

    #[test]
    fn polygon_hole_distances() {
        let sq = HoleSpec::polygon(0, vec![[-0.1, -0.1], [0.1, -0.1], [0.1, 0.1], [-0.1, 0.1]]);
        assert!((sq.signed_distance([0.0, 0.0]) + 0.1).abs() < 1e-15);
        assert!((sq.signed_distance([0.3, 0.0]) - 0.2).abs() < 1e-15);
        assert!((sq.area() - 0.04).abs() < 1e-15);
        let c = sq.crossing([0.0, 0.0], [0.3, 0.0]).unwrap();
        assert!((c[0] - 0.1).abs() < 1e-15);
        let cw = HoleSpec::polygon(0, vec![[-0.1, -0.1], [-0.1, 0.1], [0.1, 0.1], [0.1, -0.1]]);
        assert!(build_cell_geometry(vec![cw], 0.1).is_err());
    }

    #[test]
    fn disk_crossing_lies_on_circle() {
        let h = HoleSpec::disk(0, [0.0, 0.0], 0.25);
        let c = h.crossing([0.0, 0.0], [0.4, 0.3]).unwrap();
        assert!(h.signed_distance(c).abs() < 1e-15);
    }

    #[test]
    fn domain_counts_holes() {
        let spec = build_perforated_domain(disk_cell(), [1, 1], 4).unwrap();
        assert_eq!(spec.epsilon(), 0.25);
        assert_eq!(spec.hole_count(), 16);
        let spec = build_perforated_domain(disk_cell(), [2, 1], 3).unwrap();
        assert_eq!(spec.hole_count(), 18);
    }

    #[test]
    fn empty_cell_domain_has_no_holes() {
        let cell = build_cell_geometry(vec![], 0.2).unwrap();
        let spec = build_perforated_domain(cell, [1, 1], 8).unwrap();
        assert_eq!(spec.hole_count(), 0);
        assert!(spec.physical_holes().is_empty());
    }

    #[test]
    fn outer_clearance_is_scaled_cell_clearance() {
        let spec = build_perforated_domain(disk_cell(), [1, 1], 16).unwrap();
        assert!((spec.outer_clearance() - 0.25 / 16.0).abs() < 1e-15);
    }

    #[test]
    fn cell_coordinates_are_periodic() {
        let y = to_cell_coords([0.3, 0.55], 0.25);
        assert!((y[0] - (0.2 - 0.5)).abs() < 1e-12);
        assert!((y[1] - (0.2 - 0.5)).abs() < 1e-12);
    }

    #[test]
    fn enlarged_disk_and_square() {
        let d = HoleSpec::disk(0, [0.0, 0.0], 0.25).enlarged(0.05);
        assert!((d.area() - std::f64::consts::PI * 0.09).abs() < 1e-14);
        let sq = HoleSpec::polygon(0, vec![[-0.1, -0.1], [0.1, -0.1], [0.1, 0.1], [-0.1, 0.1]]);
        let big = sq.enlarged(0.05);
        assert!((big.area() - 0.09).abs() < 1e-14);
    }
}
