//! The built-in acceptance suite. Each check returns an [`Outcome`]; solver
//! errors count as failures and are reported in the detail text.

use std::fmt;
use std::path::Path;
use std::time::Instant;

use crate::analysis::{
    convergence_study, default_div_rhs, extension_probe, lipschitz_uniformity, probe_entry, spectral_study,
    summarize_probes, LadderSetup,
};
use crate::cell_problem::{
    corrector_system, flux_correctors, homogenized_matrix, solve_cell, solve_correctors, CellSolution,
};
use crate::config::ExperimentConfig;
use crate::error::Result;
use crate::fem::sparse::max_abs_diff;
use crate::fem::{
    assemble_load, assemble_weighted_stiffness, integrate, CoefficientField, DofMap, Field,
    LinearSolveSpec, IDENTITY,
};
use crate::geometry::{build_cell_geometry, build_perforated_domain, CellGeometry, HoleSpec};
use crate::mesh::{tile_domain_mesh, triangulate_cell, triangulate_solid};
use crate::oracle::dense_solve;
use crate::runner::{run_experiment, RunOptions};
use crate::solvers::{dirichlet_spectrum_eps, eps_system, solid_mesh, solve_eps_problem, solve_homogenized, RhsSpec};
use crate::weight::{evaluate_weight_on_domain, WeightField, WeightMode};

/// `â₁₁` of the disk benchmark (radius 0.25, distance weight), Richardson
/// extrapolated from n = 64 and n = 128.
pub const GOLDEN_A11: f64 = 0.00505285067;

/// Converge-only benchmark used for the determinism check.
pub const BENCHMARK_CONFIG: &str = include_str!("../../../configs/benchmark.toml");

/// Cells per unit length of the shared ladder ε = 1/4 .. 1/32.
pub const LADDER: [usize; 4] = [4, 8, 16, 32];
pub const SPECTRAL_LADDER: [usize; 3] = [4, 8, 16];
pub const PROBE_SEED: u64 = 7;
pub const PROBE_TRIALS: usize = 100;

#[derive(Debug, Clone)]
pub struct Outcome {
    pub id: usize,
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
    pub seconds: f64,
}

impl fmt::Display for Outcome {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let verdict = if self.passed { "PASS" } else { "FAIL" };
        write!(f, "[{verdict}] {:>2} {:<28} {} ({:.1} s)", self.id, self.name, self.detail, self.seconds)
    }
}

type Check = fn() -> Result<(bool, String)>;

pub const CHECKS: [(usize, &str, Check); 11] = [
    (1, "trivial-cell exactness", trivial_cell),
    (2, "tensor structure", tensor_structure),
    (3, "scaling covariance", scaling_covariance),
    (4, "dense-oracle equivalence", dense_oracle),
    (5, "convergence rate", convergence_rate),
    (6, "uniform Lipschitz", uniform_lipschitz),
    (7, "uniform W1p", uniform_w1p),
    (8, "inequality probes", inequality_probes),
    (9, "spectral asymptotics", spectral_asymptotics),
    (10, "flux-corrector identities", flux_identities),
    (11, "determinism", determinism),
];

pub fn run_check(id: usize) -> Option<Outcome> {
    let &(id, name, check) = CHECKS.iter().find(|c| c.0 == id)?;
    let start = Instant::now();
    let (passed, detail) = match check() {
        Ok(r) => r,
        Err(e) => (false, format!("error {}: {e}", e.kind())),
    };
    Some(Outcome { id, name, passed, detail, seconds: start.elapsed().as_secs_f64() })
}

pub fn run_all() -> Vec<Outcome> {
    CHECKS.iter().filter_map(|c| run_check(c.0)).collect()
}

pub fn disk_cell() -> CellGeometry {
    build_cell_geometry(vec![HoleSpec::disk(0, [0.0, 0.0], 0.25)], 0.2).expect("benchmark cell is valid")
}

fn benchmark_cell(n: usize, mode: WeightMode) -> Result<CellSolution> {
    solve_cell(&disk_cell(), n, &CoefficientField::identity(), mode, 0.0, &LinearSolveSpec::default())
}

fn max_abs(values: impl IntoIterator<Item = f64>) -> f64 {
    values.into_iter().fold(0.0, |m, v| m.max(v.abs()))
}

fn trivial_cell() -> Result<(bool, String)> {
    let start = Instant::now();
    let cell = build_cell_geometry(Vec::new(), 0.2)?;
    let mesh = triangulate_cell(&cell, 16)?;
    let a = CoefficientField::identity();
    let spec = LinearSolveSpec::default();
    let w = WeightField::constant(mesh.vertex_count(), 1.0);
    let chi = solve_correctors(&mesh, &a, &w, &spec)?;
    let t = homogenized_matrix(&mesh, &a, &w, &chi);
    let flux = flux_correctors(&cell, &mesh, &a, &w, &chi, &t, &spec)?;
    let chi_max = max_abs(chi.chi.iter().flatten().copied());
    let hat_err = max_abs((0..4).map(|k| t.a_hat[k / 2][k % 2] - IDENTITY[k / 2][k % 2]));
    let a0_err = (t.a0 - 1.0).abs();
    let phi_max = max_abs(flux.phi.iter().flatten().flatten().flatten().copied());
    let secs = start.elapsed().as_secs_f64();
    let worst = chi_max.max(hat_err).max(a0_err).max(phi_max);
    Ok((
        worst <= 1e-10 && secs < 1.0,
        format!("max|χ| {chi_max:.1e}, |Â-I| {hat_err:.1e}, |a0-1| {a0_err:.1e}, max|Φ| {phi_max:.1e}, {secs:.2} s"),
    ))
}

fn tensor_structure() -> Result<(bool, String)> {
    let start = Instant::now();
    let sol = benchmark_cell(64, WeightMode::DistanceType)?;
    let t = &sol.tensor;
    let secs = start.elapsed().as_secs_f64();
    let a = t.a_hat;
    let golden = (a[0][0] / GOLDEN_A11 - 1.0).abs();
    let ok = t.asymmetry() <= 1e-8
        && t.min_eigenvalue() > 0.0
        && a[0][1].abs() <= 1e-8
        && (a[0][0] - a[1][1]).abs() <= 1e-6
        && golden <= 0.005
        && secs < 30.0;
    Ok((
        ok,
        format!(
            "â11 {:.9} (golden {GOLDEN_A11}, off {:.3}%), |â12| {:.1e}, |â11-â22| {:.1e}, asym {:.1e}, min eig {:.3e}, {secs:.1} s",
            a[0][0],
            100.0 * golden,
            a[0][1].abs(),
            (a[0][0] - a[1][1]).abs(),
            t.asymmetry(),
            t.min_eigenvalue()
        ),
    ))
}

fn scaling_covariance() -> Result<(bool, String)> {
    let sol = benchmark_cell(16, WeightMode::DistanceType)?;
    let a = CoefficientField::identity();
    let w2 = sol.weight.scaled(2.0);
    let chi2 = solve_correctors(&sol.mesh, &a, &w2, &LinearSolveSpec::default())?;
    let t2 = homogenized_matrix(&sol.mesh, &a, &w2, &chi2);
    let chi_diff = (0..2).map(|j| max_abs_diff(&sol.correctors.chi[j], &chi2.chi[j])).fold(0.0, f64::max);
    let t = &sol.tensor;
    let hat_rel = max_abs((0..4).map(|k| t2.a_hat[k / 2][k % 2] - 4.0 * t.a_hat[k / 2][k % 2])) / (4.0 * t.norm());
    let a0_rel = (t2.a0 - 4.0 * t.a0).abs() / (4.0 * t.a0);
    Ok((
        chi_diff <= 1e-10 && hat_rel <= 1e-8 && a0_rel <= 1e-12,
        format!("max|Δχ| {chi_diff:.1e}, |Â'-4Â|/|4Â| {hat_rel:.1e}, |a0'-4a0|/4a0 {a0_rel:.1e}"),
    ))
}

/// Tolerance of the iterative side of the dense-oracle comparison.
pub const ORACLE_CG_TOLERANCE: f64 = 1e-12;

fn recentred(mesh: &crate::mesh::Mesh, mut u: Vec<f64>) -> Vec<f64> {
    let mean = integrate(mesh, &u) / mesh.total_area();
    u.iter_mut().for_each(|v| *v -= mean);
    u
}

fn dense_oracle() -> Result<(bool, String)> {
    let cell = disk_cell();
    let a = CoefficientField::identity();
    let spec = LinearSolveSpec::with_tolerance(ORACLE_CG_TOLERANCE);
    let sol = solve_cell(&cell, 8, &a, WeightMode::DistanceType, 0.0, &spec)?;
    let mut sizes = Vec::new();
    let mut worst: f64 = 0.0;

    let sys = corrector_system(&sol.mesh, &a, &sol.weight)?;
    sizes.push(sys.dofs.count);
    for j in 0..2 {
        let x = dense_solve(&sys.matrix, &sys.rhs[j], &vec![false; sys.dofs.count], true)?;
        let dense = recentred(&sol.mesh, sys.dofs.expand(&x));
        worst = worst.max(max_abs_diff(&dense, &sol.correctors.chi[j]));
    }

    let domain = build_perforated_domain(cell.clone(), [1, 1], 2)?;
    let mesh = tile_domain_mesh(&sol.mesh, &domain)?;
    let phi = evaluate_weight_on_domain(&sol.weight, &mesh)?;
    let eps = domain.epsilon();
    let rhs = RhsSpec::source(Field::SineProduct { amplitude: 1.0, modes: [1.0, 1.0] });
    let (k, outer) = eps_system(&mesh, &a, eps, &phi);
    let b = assemble_load(&mesh, &DofMap::identity(mesh.vertex_count()), rhs.load(), Some(&phi))?;
    let dense = dense_solve(&k, &b, &outer, false)?;
    let it = solve_eps_problem(&mesh, &a, eps, &phi, &rhs, &spec)?;
    sizes.push(outer.iter().filter(|o| !**o).count());
    worst = worst.max(max_abs_diff(&dense, &it.u));

    let solid = solid_mesh([1, 1], 2, 8)?;
    let f = |x: [f64; 2]| 1.0 + x[0] * x[1];
    let hom = solve_homogenized(&solid, &sol.tensor, &f, &spec)?;
    let ka = assemble_weighted_stiffness(&solid, &DofMap::identity(solid.vertex_count()), &|_| sol.tensor.symmetric(), None, 0);
    let bh = crate::fem::assemble_load_qp(&solid, &DofMap::identity(solid.vertex_count()), |_, _, x| (f(x), [0.0, 0.0]));
    let outer = solid.outer_vertices();
    let dense = dense_solve(&ka, &bh, &outer, false)?;
    sizes.push(outer.iter().filter(|o| !**o).count());
    worst = worst.max(max_abs_diff(&dense, &hom.u0));

    let flux = flux_correctors(&cell, &sol.mesh, &a, &sol.weight, &sol.correctors, &sol.tensor, &spec)?;
    let lap = assemble_weighted_stiffness(&flux.mesh, &flux.dofs, &|_| IDENTITY, None, 0);
    sizes.push(flux.dofs.count);
    for i in 0..2 {
        for j in 0..2 {
            let rhs: Vec<f64> = flux.b_load[i][j].iter().map(|v| -v).collect();
            let x = dense_solve(&lap, &rhs, &vec![false; flux.dofs.count], true)?;
            let dense = recentred(&flux.mesh, flux.dofs.expand(&x));
            worst = worst.max(max_abs_diff(&dense, &flux.potentials[i][j]));
        }
    }
    let small = sizes.iter().all(|&s| s <= 300);
    Ok((worst <= 1e-8 && small, format!("max deviation {worst:.2e} over systems of {sizes:?} unknowns")))
}

fn ladder_setup<'a>(cell: &'a CellGeometry, sol: &'a CellSolution, a: &'a CoefficientField, spec: &'a LinearSolveSpec, n_cells: &'a [usize]) -> LadderSetup<'a> {
    LadderSetup { cell, solution: sol, coefficient: a, omega_units: [1, 1], n_cells, solver: spec }
}

fn convergence_rate() -> Result<(bool, String)> {
    let start = Instant::now();
    let cell = disk_cell();
    let a = CoefficientField::identity();
    let spec = LinearSolveSpec::default();
    let sol = benchmark_cell(16, WeightMode::DistanceType)?;
    let setup = ladder_setup(&cell, &sol, &a, &spec, &LADDER);
    let report = convergence_study(&setup, &RhsSpec::source(Field::Constant { value: 1.0 }))?;
    let secs = start.elapsed().as_secs_f64();
    let grads: Vec<String> = report.entries.iter().map(|e| format!("{:.3e}", e.e_grad)).collect();
    Ok((
        report.slope_grad.slope >= 0.125 && report.corrector_improves && secs < 600.0,
        format!(
            "slope {:.3} (residual {:.3}), L2 slope {:.3}, E_grad {grads:?}, corrector improves: {}",
            report.slope_grad.slope, report.slope_grad.residual, report.slope_l2.slope, report.corrector_improves
        ),
    ))
}

fn lipschitz_case(rhs: &RhsSpec) -> Result<crate::analysis::LipschitzReport> {
    let cell = disk_cell();
    let a = CoefficientField::identity();
    let spec = LinearSolveSpec::default();
    let sol = benchmark_cell(16, WeightMode::DistanceType)?;
    let setup = ladder_setup(&cell, &sol, &a, &spec, &LADDER);
    lipschitz_uniformity(&setup, rhs, 4.0, &[2.0, 4.0])
}

fn uniform_lipschitz() -> Result<(bool, String)> {
    let r = lipschitz_case(&RhsSpec::source(Field::Constant { value: 1.0 }))?;
    let values: Vec<String> = r.entries.iter().map(|e| format!("{:.3}", e.r_inf.unwrap_or(f64::NAN))).collect();
    let v = r.r_inf_variation;
    Ok((v.is_some_and(|v| v <= 2.0), format!("R_inf {values:?}, max/min {}", fmt_opt(v))))
}

fn uniform_w1p() -> Result<(bool, String)> {
    let r = lipschitz_case(&default_div_rhs())?;
    let ok = r.r_p_variation.iter().all(|(_, v)| v.is_some_and(|v| v <= 2.0));
    let text: Vec<String> = r.r_p_variation.iter().map(|(p, v)| format!("p={p}: max/min {}", fmt_opt(*v))).collect();
    Ok((ok, text.join(", ")))
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map_or_else(|| "not applicable".to_string(), |v| format!("{v:.3}"))
}

fn inequality_probes() -> Result<(bool, String)> {
    let cell = disk_cell();
    let a = CoefficientField::identity();
    let spec = LinearSolveSpec::default();
    let sol = benchmark_cell(16, WeightMode::DistanceType)?;
    let setup = ladder_setup(&cell, &sol, &a, &spec, &LADDER);
    let entries = LADDER.iter().map(|&nc| probe_entry(&setup, nc, PROBE_TRIALS, PROBE_SEED)).collect::<Result<Vec<_>>>()?;
    let extension =
        [32, 64].iter().map(|&n| extension_probe(&cell, n, PROBE_TRIALS, PROBE_SEED)).collect::<Result<Vec<_>>>()?;
    let report = summarize_probes(entries, extension);
    let linear = report
        .extension
        .iter()
        .map(|e| (e.linear_ratio / e.analytic_linear_ratio - 1.0).abs())
        .fold(0.0, f64::max);
    let ok = report.poincare_variation <= 2.0
        && report.sobolev_variation <= 2.0
        && report.extension_variation <= 2.0
        && linear <= 0.01;
    let c_e: Vec<String> = report.extension.iter().map(|e| format!("{:.4}", e.c_e)).collect();
    Ok((
        ok,
        format!(
            "C_P variation {:.3}, Sobolev variation {:.3}, C_E {c_e:?} variation {:.3}, linear-case deviation {:.2e}",
            report.poincare_variation, report.sobolev_variation, report.extension_variation, linear
        ),
    ))
}

fn spectral_asymptotics() -> Result<(bool, String)> {
    let cell = disk_cell();
    let a = CoefficientField::identity();
    let spec = LinearSolveSpec::default();
    let sol = benchmark_cell(16, WeightMode::GroundState)?;
    let setup = ladder_setup(&cell, &sol, &a, &spec, &SPECTRAL_LADDER);
    let report = spectral_study(&setup, 1)?;
    let r1: Vec<String> = report.entries.iter().map(|e| format!("{:.3e}", e.residuals[0])).collect();
    let slope = report.slope_r1.map(|f| f.slope);
    let plain = triangulate_solid([1.0, 1.0], 32)?;
    let lambda = dirichlet_spectrum_eps(&plain, &a, 1.0, 1, 0.0)?[0];
    let two_pi2 = 2.0 * std::f64::consts::PI.powi(2);
    let no_hole = (lambda / two_pi2 - 1.0).abs();
    Ok((
        report.r1_decreasing && slope.is_some_and(|s| s >= 0.5) && no_hole <= 0.01,
        format!(
            "r1 {r1:?}, slope {}, no-hole λ1 {lambda:.4} ({:.3}% from 2π²)",
            fmt_opt(slope),
            100.0 * no_hole
        ),
    ))
}

fn flux_identities() -> Result<(bool, String)> {
    let cell = disk_cell();
    let a = CoefficientField::identity();
    let spec = LinearSolveSpec::default();
    let mut residuals = Vec::new();
    let mut defect: f64 = 0.0;
    let mut integral: f64 = 0.0;
    for n in [16, 32, 64] {
        let sol = benchmark_cell(n, WeightMode::DistanceType)?;
        let f = flux_correctors(&cell, &sol.mesh, &a, &sol.weight, &sol.correctors, &sol.tensor, &spec)?;
        defect = defect.max(f.max_antisymmetry_defect());
        integral = integral.max(max_abs(f.b_integral.iter().flatten().copied()));
        residuals.push(f.weak_divergence_residual());
    }
    let ratios: Vec<f64> = residuals.windows(2).map(|w| w[0] / w[1]).collect();
    let ok = defect == 0.0 && integral <= 1e-8 && ratios.iter().all(|&r| r >= 1.8);
    Ok((
        ok,
        format!("antisymmetry defect {defect:e}, max|∫b| {integral:.1e}, residual ratios {ratios:.3?}"),
    ))
}

fn determinism() -> Result<(bool, String)> {
    let cfg = ExperimentConfig::from_toml(BENCHMARK_CONFIG)?;
    let base = std::env::temp_dir().join(format!("perfhom-determinism-{}", std::process::id()));
    let dirs = [base.join("a"), base.join("b")];
    let mut files = Vec::new();
    for d in &dirs {
        files.push(run_experiment(cfg.clone(), d, &RunOptions::default())?.files);
    }
    let compared: Vec<&Path> = files[0]
        .iter()
        .filter(|p| p.file_name().is_some_and(|n| n != "timings.json"))
        .map(|p| p.as_path())
        .collect();
    let mut same = files[0].len() == files[1].len();
    for p in &compared {
        let name = p.file_name().expect("output files have names");
        let a = std::fs::read(p).map_err(|e| crate::Error::io(p, e))?;
        let other = dirs[1].join(name);
        let b = std::fs::read(&other).map_err(|e| crate::Error::io(&other, e))?;
        same &= a == b;
    }
    let _ = std::fs::remove_dir_all(&base);
    Ok((same, format!("{} files compared byte for byte", compared.len())))
}
