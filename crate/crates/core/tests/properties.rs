use proptest::prelude::*;

use perfhom::analysis::{cutoff, fit_loglog};
use perfhom::cell_problem::{homogenized_matrix, solve_cell, solve_correctors};
use perfhom::fem::sparse::{max_abs_diff, CsrMatrix};
use perfhom::fem::{solve_spd, CoefficientField, Deflation, LinearSolveSpec};
use perfhom::geometry::{build_cell_geometry, build_perforated_domain, to_cell_coords, HoleSpec};
use perfhom::mesh::{tile_domain_mesh, triangulate_cell};
use perfhom::oracle::gauss_solve;
use perfhom::report::format_value;
use perfhom::weight::{distance_weight, WeightMode};
use perfhom::Error;

fn config() -> ProptestConfig {
    ProptestConfig { cases: 24, ..ProptestConfig::default() }
}

proptest! {
    #![proptest_config(config())]

    #[test]
    fn cell_coordinates_are_centred(x in -5.0f64..5.0, y in -5.0f64..5.0, n in 1usize..20) {
        let eps = 1.0 / n as f64;
        let c = to_cell_coords([x, y], eps);
        prop_assert!(c.iter().all(|v| (-0.5..0.5 + 1e-12).contains(v)));
    }

    #[test]
    fn disk_validation_follows_separation(cx in -0.2f64..0.2, cy in -0.2f64..0.2, r in 0.02f64..0.3, c0 in 0.01f64..0.2) {
        let clearance = 0.5 - cx.abs().max(cy.abs()) - r;
        let result = build_cell_geometry(vec![HoleSpec::disk(0, [cx, cy], r)], c0);
        if clearance >= c0 + 1e-9 {
            prop_assert!(result.is_ok());
        } else if clearance < c0 - 1e-9 {
            let is_separation = matches!(result, Err(Error::SeparationViolation { .. }));
            prop_assert!(is_separation);
        }
    }

    #[test]
    fn cell_meshes_are_valid(r in 0.05f64..0.3, n in 4usize..14) {
        let cell = build_cell_geometry(vec![HoleSpec::disk(0, [0.0, 0.0], r)], 0.5 - r - 0.01).unwrap();
        let mesh = triangulate_cell(&cell, n).unwrap();
        prop_assert!(mesh.validate().is_ok());
        prop_assert!((0..mesh.triangle_count()).all(|t| mesh.signed_area(t) > 0.0));
        let h = 1.0 / n as f64;
        let hole = std::f64::consts::PI * r * r;
        prop_assert!((mesh.total_area() - (1.0 - hole)).abs() < 2.0 * h * h + 0.05 * h);
        for &(a, b) in &mesh.periodic_pairs {
            let d = [mesh.vertices[b][0] - mesh.vertices[a][0], mesh.vertices[b][1] - mesh.vertices[a][1]];
            let unit = (d[0].abs() - 1.0).abs() < 1e-12 && d[1].abs() < 1e-12
                || (d[1].abs() - 1.0).abs() < 1e-12 && d[0].abs() < 1e-12
                || (d[0].abs() - 1.0).abs() < 1e-12 && (d[1].abs() - 1.0).abs() < 1e-12;
            prop_assert!(unit);
        }
    }

    #[test]
    fn tiling_vertex_count(n in 4usize..10, cells in 1usize..4) {
        let cell = build_cell_geometry(vec![HoleSpec::disk(0, [0.0, 0.0], 0.25)], 0.2).unwrap();
        let mesh = triangulate_cell(&cell, n).unwrap();
        let spec = build_perforated_domain(cell, [1, 1], cells).unwrap();
        let dom = tile_domain_mesh(&mesh, &spec).unwrap();
        // Every cell contributes its vertices; shared faces are counted once.
        let face = mesh.vertices.iter().filter(|p| (p[0] + 0.5).abs() < 1e-12).count();
        let corner_free_face = face - 2;
        let expected = cells * cells * (mesh.vertex_count() - 4 * corner_free_face - 4)
            + 2 * cells * (cells + 1) * corner_free_face
            + (cells + 1) * (cells + 1);
        prop_assert_eq!(dom.vertex_count(), expected);
        prop_assert_eq!(dom.triangle_count(), cells * cells * mesh.triangle_count());
    }

    #[test]
    fn distance_weight_bounds(r in 0.05f64..0.3, n in 4usize..12) {
        let c0 = (0.5 - r - 0.01).min(0.2);
        let cell = build_cell_geometry(vec![HoleSpec::disk(0, [0.0, 0.0], r)], c0).unwrap();
        let mesh = triangulate_cell(&cell, n).unwrap();
        let w = distance_weight(&cell, &mesh).unwrap();
        for (v, &phi) in w.nodal_values.iter().enumerate() {
            prop_assert!((0.0..=c0 / 2.0 + 1e-15).contains(&phi));
            if mesh.is_hole_vertex(v) {
                prop_assert_eq!(phi, 0.0);
            }
        }
    }

    #[test]
    fn scaling_the_weight(s in 0.1f64..10.0) {
        let cell = build_cell_geometry(vec![HoleSpec::disk(0, [0.0, 0.0], 0.25)], 0.2).unwrap();
        let a = CoefficientField::identity();
        let spec = LinearSolveSpec::default();
        let sol = solve_cell(&cell, 8, &a, WeightMode::DistanceType, 0.0, &spec).unwrap();
        let w = sol.weight.scaled(s);
        let chi = solve_correctors(&sol.mesh, &a, &w, &spec).unwrap();
        let t = homogenized_matrix(&sol.mesh, &a, &w, &chi);
        for j in 0..2 {
            prop_assert!(max_abs_diff(&chi.chi[j], &sol.correctors.chi[j]) < 1e-10);
        }
        prop_assert!((t.a_hat[0][0] / (s * s * sol.tensor.a_hat[0][0]) - 1.0).abs() < 1e-9);
        prop_assert!((t.a0 / (s * s * sol.tensor.a0) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn tensor_is_positive_and_symmetric(amplitude in 0.0f64..0.9) {
        let cell = build_cell_geometry(vec![HoleSpec::disk(0, [0.0, 0.0], 0.2)], 0.2).unwrap();
        let a = CoefficientField::OscillatingScalar { amplitude };
        let sol = solve_cell(&cell, 8, &a, WeightMode::DistanceType, 0.0, &LinearSolveSpec::default()).unwrap();
        prop_assert!(sol.tensor.min_eigenvalue() > 0.0);
        prop_assert!(sol.tensor.asymmetry() < 1e-10 * sol.tensor.norm());
    }

    #[test]
    fn cg_matches_elimination(seed in any::<u64>(), n in 2usize..12) {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let b: Vec<Vec<f64>> = (0..n).map(|_| (0..n).map(|_| rng.random::<f64>() - 0.5).collect()).collect();
        let mut dense = vec![vec![0.0; n]; n];
        for i in 0..n {
            for j in 0..n {
                dense[i][j] = (0..n).map(|k| b[i][k] * b[j][k]).sum::<f64>() + if i == j { 1.0 } else { 0.0 };
            }
        }
        let rhs: Vec<f64> = (0..n).map(|_| rng.random::<f64>()).collect();
        let m = CsrMatrix::from_dense(&dense);
        prop_assert!(m.is_symmetric());
        let it = solve_spd(&m, &rhs, &LinearSolveSpec::with_tolerance(1e-13), &Deflation::None, &vec![false; n]).unwrap();
        let ex = gauss_solve(dense, rhs).unwrap();
        prop_assert!(max_abs_diff(&it.x, &ex) < 1e-10);
    }

    #[test]
    fn power_laws_are_fitted(slope in -2.0f64..2.0, scale in 0.01f64..100.0) {
        let x: [f64; 4] = [0.25, 0.125, 0.0625, 0.03125];
        let y: Vec<f64> = x.iter().map(|v| scale * v.powf(slope)).collect();
        let fit = fit_loglog(&x, &y).unwrap();
        prop_assert!((fit.slope - slope).abs() < 1e-10);
        prop_assert!(fit.residual < 1e-10);
    }

    #[test]
    fn cutoff_is_a_monotone_ramp(d1 in 0.0f64..1.0, d2 in 0.0f64..1.0, eps in 0.01f64..0.5) {
        let (lo, hi) = if d1 <= d2 { (d1, d2) } else { (d2, d1) };
        let c1 = 0.05;
        prop_assert!(cutoff(lo, c1, eps) <= cutoff(hi, c1, eps));
        prop_assert!((0.0..=1.0).contains(&cutoff(lo, c1, eps)));
        if lo < c1 * eps { prop_assert_eq!(cutoff(lo, c1, eps), 0.0); }
        if lo > 2.0 * c1 * eps { prop_assert_eq!(cutoff(lo, c1, eps), 1.0); }
    }

    #[test]
    fn csv_values_round_trip(v in -1e6f64..1e6) {
        let s = format_value(v);
        let back: f64 = s.parse().unwrap();
        prop_assert!((back - v).abs() <= 5e-12 * v.abs());
    }
}
