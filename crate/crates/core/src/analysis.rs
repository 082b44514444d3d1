//! ε-ladder studies: first-order approximation error, uniform Lipschitz
//! ratios and sampled inequality constants.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::cell_problem::{bloch_tensor, CellSolution, CorrectorSet, HomogenizedTensor};
use crate::error::{Error, Result};
use crate::fem::{
    assemble_weighted_mass, assemble_weighted_stiffness, field_norm, smallest_eigenpairs, solve_spd,
    weighted_norm, weighted_norm_on, CoefficientField, Deflation, DofMap, EigenSpec, Field, LinearSolveSpec,
    Mat2, IDENTITY,
};
use crate::geometry::{build_perforated_domain, CellGeometry, PerforatedDomainSpec, Point};
use crate::mesh::{tile_domain_mesh, triangulate_full_cell, triangulate_solid, Mesh, PointLocator, Region};
use crate::solvers::{homogenized_spectrum, solid_mesh, solve_eps_problem, solve_homogenized, EpsSolution, HomogenizedSolution, RhsForm, RhsSpec};
use crate::weight::{evaluate_weight_on_domain, CellSampler};

/// Least-squares line through `(log x, log y)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SlopeFit {
    pub slope: f64,
    pub intercept: f64,
    /// Root-mean-square residual in log units.
    pub residual: f64,
}

pub const SLOPE_RESIDUAL_LIMIT: f64 = 0.1;

pub fn fit_loglog(x: &[f64], y: &[f64]) -> Result<SlopeFit> {
    if x.len() != y.len() || x.len() < 2 {
        return Err(Error::SlopeUnreliable(format!("need at least two points, got {}", x.len())));
    }
    if x.iter().chain(y).any(|v| !(v.is_finite() && *v > 0.0)) {
        return Err(Error::SlopeUnreliable("log-log fit needs positive finite data".into()));
    }
    let lx: Vec<f64> = x.iter().map(|v| v.ln()).collect();
    let ly: Vec<f64> = y.iter().map(|v| v.ln()).collect();
    let n = lx.len() as f64;
    let mx = lx.iter().sum::<f64>() / n;
    let my = ly.iter().sum::<f64>() / n;
    let sxx: f64 = lx.iter().map(|a| (a - mx).powi(2)).sum();
    let sxy: f64 = lx.iter().zip(&ly).map(|(a, b)| (a - mx) * (b - my)).sum();
    if sxx == 0.0 {
        return Err(Error::SlopeUnreliable("abscissae coincide".into()));
    }
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let residual =
        (lx.iter().zip(&ly).map(|(a, b)| (b - intercept - slope * a).powi(2)).sum::<f64>() / n).sqrt();
    let fit = SlopeFit { slope, intercept, residual };
    if residual > SLOPE_RESIDUAL_LIMIT {
        return Err(Error::SlopeUnreliable(format!("log-log residual {residual:.3} exceeds {SLOPE_RESIDUAL_LIMIT}")));
    }
    Ok(fit)
}

/// Largest over smallest of a positive series.
pub fn variation(values: &[f64]) -> f64 {
    let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let min = values.iter().copied().fold(f64::INFINITY, f64::min);
    max / min
}

/// Tiled domain mesh and weight for one ε.
pub struct EpsInstance {
    pub spec: PerforatedDomainSpec,
    pub mesh: Mesh,
    pub phi: Vec<f64>,
}

impl EpsInstance {
    pub fn new(cell: &CellGeometry, sol: &CellSolution, omega_units: [usize; 2], n_cells: usize) -> Result<Self> {
        let spec = build_perforated_domain(cell.clone(), omega_units, n_cells)?;
        let mesh = tile_domain_mesh(&sol.mesh, &spec)?;
        let phi = evaluate_weight_on_domain(&sol.weight, &mesh)?;
        Ok(EpsInstance { spec, mesh, phi })
    }

    pub fn epsilon(&self) -> f64 {
        self.spec.epsilon()
    }
}

#[derive(Debug, Clone)]
pub struct FirstOrderField {
    pub w: Vec<f64>,
    /// `u₀` interpolated to the domain vertices.
    pub u0: Vec<f64>,
    pub cutoff: Vec<f64>,
    pub c1: f64,
}

/// `η_ε`: zero within `c1·ε` of `∂Ω`, one beyond `2c1·ε`, linear between.
pub fn cutoff(dist: f64, c1: f64, eps: f64) -> f64 {
    ((dist / (c1 * eps)) - 1.0).clamp(0.0, 1.0)
}

/// `w_ε = u_ε - u₀ - ε χ_ℓ(x/ε) ∂_ℓu₀ η_ε` at the vertices of the domain mesh.
pub fn first_order_approximation(
    instance: &EpsInstance,
    u_eps: &EpsSolution,
    u0: &HomogenizedSolution,
    solid: &Mesh,
    correctors: &CorrectorSet,
    c0: f64,
) -> Result<FirstOrderField> {
    let mesh = &instance.mesh;
    let lineage = mesh
        .lineage
        .as_ref()
        .ok_or_else(|| Error::MeshLineageMismatch("first-order field needs a tiled mesh".into()))?;
    if lineage.cell_vertex_count != correctors.chi[0].len() {
        return Err(Error::MeshLineageMismatch("correctors do not belong to the tiled cell mesh".into()));
    }
    let eps = instance.epsilon();
    let c1 = c0 / 4.0;
    let locator = PointLocator::new(solid);
    let n = mesh.vertex_count();
    let mut w = vec![0.0; n];
    let mut u0_dom = vec![0.0; n];
    let mut eta = vec![0.0; n];
    for v in 0..n {
        let x = mesh.vertices[v];
        let (t, b) = locator
            .locate(x)
            .ok_or_else(|| Error::MeshLineageMismatch(format!("vertex {v} lies outside the solid mesh")))?;
        let tri = solid.triangles[t];
        let interp = |f: &dyn Fn(usize) -> f64| b[0] * f(tri[0]) + b[1] * f(tri[1]) + b[2] * f(tri[2]);
        let u0v = interp(&|k| u0.u0[k]);
        let g = [interp(&|k| u0.recovered_gradient[k][0]), interp(&|k| u0.recovered_gradient[k][1])];
        let pre = lineage.vertex_preimage[v];
        let e = cutoff(instance.spec.distance_to_outer(x), c1, eps);
        let corr = if e == 0.0 { 0.0 } else { eps * (correctors.chi[0][pre] * g[0] + correctors.chi[1][pre] * g[1]) * e };
        u0_dom[v] = u0v;
        eta[v] = e;
        w[v] = u_eps.u[v] - u0v - corr;
    }
    Ok(FirstOrderField { w, u0: u0_dom, cutoff: eta, c1 })
}

#[derive(Debug, Clone, Serialize)]
pub struct ConvergenceEntry {
    pub epsilon: f64,
    /// `‖φ_ε∇w_ε‖₂`.
    pub e_grad: f64,
    /// `‖φ_ε∇(u_ε - u₀)‖₂`.
    pub e_grad_uncorrected: f64,
    /// `‖φ_ε(u_ε - u₀)‖₂`.
    pub e_l2: f64,
    pub energy: f64,
    pub energy_constant: f64,
    pub f_norm_l2: f64,
    pub vertices: usize,
    pub cg_iterations: usize,
}

#[derive(Debug, Clone, Serialize)]
pub struct ConvergenceReport {
    pub entries: Vec<ConvergenceEntry>,
    pub slope_grad: SlopeFit,
    pub slope_l2: SlopeFit,
    pub corrector_improves: bool,
    pub flags: Vec<String>,
}

/// Inputs shared by the ε-ladder studies.
#[derive(Debug, Clone)]
pub struct LadderSetup<'a> {
    pub cell: &'a CellGeometry,
    pub solution: &'a CellSolution,
    pub coefficient: &'a CoefficientField,
    pub omega_units: [usize; 2],
    pub n_cells: &'a [usize],
    pub solver: &'a LinearSolveSpec,
}

impl LadderSetup<'_> {
    fn n(&self) -> usize {
        self.solution.mesh.grid[0]
    }

    fn instance(&self, n_cells: usize) -> Result<EpsInstance> {
        EpsInstance::new(self.cell, self.solution, self.omega_units, n_cells)
    }
}

/// Full pipeline for one ε.
pub fn convergence_entry(setup: &LadderSetup<'_>, n_cells: usize, rhs: &RhsSpec) -> Result<ConvergenceEntry> {
    if rhs.form != RhsForm::WeightedSource {
        return Err(Error::InvalidArgument("the convergence study uses a weighted source".into()));
    }
    let inst = setup.instance(n_cells)?;
    let eps = inst.epsilon();
    let u_eps = solve_eps_problem(&inst.mesh, setup.coefficient, eps, &inst.phi, rhs, setup.solver)?;
    let solid = solid_mesh(setup.omega_units, n_cells, setup.n())?;
    let sampler = CellSampler::new(&setup.solution.mesh, &setup.solution.weight.nodal_values);
    let f = &rhs.f;
    let big_f = |x: Point| sampler.at_physical(x, eps) * f.scalar(x);
    let u0 = solve_homogenized(&solid, &setup.solution.tensor, &big_f, setup.solver)?;
    let first = first_order_approximation(&inst, &u_eps, &u0, &solid, &setup.solution.correctors, setup.cell.c0())?;
    let diff: Vec<f64> = u_eps.u.iter().zip(&first.u0).map(|(a, b)| a - b).collect();
    Ok(ConvergenceEntry {
        epsilon: eps,
        e_grad: weighted_norm(&inst.mesh, &first.w, Some(&inst.phi), 2.0, true),
        e_grad_uncorrected: weighted_norm(&inst.mesh, &diff, Some(&inst.phi), 2.0, true),
        e_l2: weighted_norm(&inst.mesh, &diff, Some(&inst.phi), 2.0, false),
        energy: u_eps.energy,
        energy_constant: u_eps.energy_constant,
        f_norm_l2: field_norm(&inst.mesh, f, 2.0),
        vertices: inst.mesh.vertex_count(),
        cg_iterations: u_eps.iterations,
    })
}

pub fn summarize_convergence(entries: Vec<ConvergenceEntry>, flags: Vec<String>) -> Result<ConvergenceReport> {
    let eps: Vec<f64> = entries.iter().map(|e| e.epsilon).collect();
    let grad: Vec<f64> = entries.iter().map(|e| e.e_grad).collect();
    let l2: Vec<f64> = entries.iter().map(|e| e.e_l2).collect();
    let slope_grad = fit_loglog(&eps, &grad)?;
    let slope_l2 = fit_loglog(&eps, &l2)?;
    let corrector_improves = entries.iter().all(|e| e.e_grad < e.e_grad_uncorrected);
    Ok(ConvergenceReport { entries, slope_grad, slope_l2, corrector_improves, flags })
}

pub fn convergence_study(setup: &LadderSetup<'_>, rhs: &RhsSpec) -> Result<ConvergenceReport> {
    use rayon::prelude::*;
    if setup.n_cells.len() < 3 {
        return Err(Error::InvalidArgument("a convergence study needs at least three ε values".into()));
    }
    let entries: Vec<ConvergenceEntry> =
        setup.n_cells.par_iter().map(|&nc| convergence_entry(setup, nc, rhs)).collect::<Result<_>>()?;
    let mut flags = Vec::new();
    if setup.cell.is_empty() && setup.coefficient.is_constant() {
        flags.push("NoHomogenizationContrast".to_string());
    }
    summarize_convergence(entries, flags)
}

#[derive(Debug, Clone, Serialize)]
pub struct LipschitzEntry {
    pub epsilon: f64,
    /// `‖φ_ε∇u_ε‖_∞ / ‖f‖_{L^p}`; `None` when the data vanish.
    pub r_inf: Option<f64>,
    /// `(p, ‖φ_ε∇u_ε‖_p / (‖f‖_p + ‖F‖_p))`.
    pub r_p: Vec<(f64, Option<f64>)>,
}

#[derive(Debug, Clone, Serialize)]
pub struct LipschitzReport {
    /// `"ok"`, or `"not_applicable"` when the data vanish.
    pub status: String,
    pub form: RhsForm,
    pub p_inf: f64,
    pub entries: Vec<LipschitzEntry>,
    /// `max/min` of `R_∞` over the ladder; `None` is reported as not applicable.
    pub r_inf_variation: Option<f64>,
    pub r_p_variation: Vec<(f64, Option<f64>)>,
}

pub fn lipschitz_entry(
    setup: &LadderSetup<'_>,
    n_cells: usize,
    rhs: &RhsSpec,
    p_inf: f64,
    ps: &[f64],
) -> Result<LipschitzEntry> {
    let inst = setup.instance(n_cells)?;
    let eps = inst.epsilon();
    if rhs.is_zero() {
        return Ok(LipschitzEntry { epsilon: eps, r_inf: None, r_p: ps.iter().map(|&p| (p, None)).collect() });
    }
    let u = solve_eps_problem(&inst.mesh, setup.coefficient, eps, &inst.phi, rhs, setup.solver)?;
    let ratio = |num: f64, den: f64| if den > 0.0 { Some(num / den) } else { None };
    let sup = weighted_norm(&inst.mesh, &u.u, Some(&inst.phi), f64::INFINITY, true);
    let data = |p: f64| {
        field_norm(&inst.mesh, &rhs.f, p)
            + if rhs.form == RhsForm::DivForm { field_norm(&inst.mesh, &rhs.big_f, p) } else { 0.0 }
    };
    let r_inf = ratio(sup, data(p_inf));
    let r_p = ps
        .iter()
        .map(|&p| (p, ratio(weighted_norm(&inst.mesh, &u.u, Some(&inst.phi), p, true), data(p))))
        .collect();
    Ok(LipschitzEntry { epsilon: eps, r_inf, r_p })
}

fn optional_variation(values: Vec<Option<f64>>) -> Option<f64> {
    let v: Option<Vec<f64>> = values.into_iter().collect();
    v.filter(|v| !v.is_empty() && v.iter().all(|x| *x > 0.0)).map(|v| variation(&v))
}

pub fn summarize_lipschitz(form: RhsForm, p_inf: f64, ps: &[f64], entries: Vec<LipschitzEntry>) -> LipschitzReport {
    let r_inf_variation = optional_variation(entries.iter().map(|e| e.r_inf).collect());
    let r_p_variation = ps
        .iter()
        .enumerate()
        .map(|(k, &p)| (p, optional_variation(entries.iter().map(|e| e.r_p[k].1).collect())))
        .collect();
    let applicable = entries.iter().all(|e| e.r_inf.is_some());
    let status = if applicable { "ok" } else { "not_applicable" }.to_string();
    LipschitzReport { status, form, p_inf, entries, r_inf_variation, r_p_variation }
}

pub fn lipschitz_uniformity(setup: &LadderSetup<'_>, rhs: &RhsSpec, p_inf: f64, ps: &[f64]) -> Result<LipschitzReport> {
    use rayon::prelude::*;
    let entries: Vec<LipschitzEntry> = setup
        .n_cells
        .par_iter()
        .map(|&nc| lipschitz_entry(setup, nc, rhs, p_inf, ps))
        .collect::<Result<_>>()?;
    Ok(summarize_lipschitz(rhs.form, p_inf, ps, entries))
}

/// `C_P = λ_min^{-1/2}` of the pencil (φ²-weighted stiffness, mass) with
/// Dirichlet data on `∂Ω` only.
pub fn poincare_probe(mesh: &Mesh, phi: &[f64]) -> Result<f64> {
    let dofs = DofMap::identity(mesh.vertex_count());
    let s = assemble_weighted_stiffness(mesh, &dofs, &|_| IDENTITY, Some(phi), 2);
    let m = assemble_weighted_mass(mesh, &dofs, None, 0);
    let diag = s.diagonal();
    let mask: Vec<bool> = mesh.outer_vertices().iter().zip(&diag).map(|(o, d)| *o || *d == 0.0).collect();
    let pair = smallest_eigenpairs(&s, &m, 1, &mask, &EigenSpec::default())?.remove(0);
    Ok(pair.value.powf(-0.5))
}

/// Smooth random trigonometric field with modes up to `k_max`.
struct RandomTrig {
    coef: Vec<(f64, f64, f64, f64)>,
}

impl RandomTrig {
    fn new(rng: &mut ChaCha8Rng, k_max: usize) -> Self {
        let mut coef = Vec::new();
        for k in 1..=k_max {
            for l in 1..=k_max {
                let scale = 1.0 / ((k * k + l * l) as f64);
                coef.push((k as f64, l as f64, scale * (rng.random::<f64>() - 0.5), rng.random::<f64>()));
            }
        }
        RandomTrig { coef }
    }

    /// Vanishes on the boundary of `(0, w) x (0, h)`.
    fn dirichlet(&self, x: Point, size: [f64; 2]) -> f64 {
        use std::f64::consts::PI;
        self.coef
            .iter()
            .map(|&(k, l, a, _)| a * (k * PI * x[0] / size[0]).sin() * (l * PI * x[1] / size[1]).sin())
            .sum()
    }

    /// Y-periodic.
    fn periodic(&self, y: Point) -> f64 {
        use std::f64::consts::TAU;
        self.coef
            .iter()
            .map(|&(k, l, a, phase)| a * (TAU * (k * y[0] + (l - 1.0) * y[1]) + TAU * phase).cos())
            .sum()
    }
}

pub const TRIAL_MODES: usize = 4;

/// Largest sampled `‖φ_ε u‖_∞ / ‖φ_ε∇u‖_p` over smooth random fields
/// vanishing on `∂Ω`.
pub fn sobolev_linf_probe(mesh: &Mesh, phi: &[f64], size: [f64; 2], p: f64, trials: usize, seed: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut best: f64 = 0.0;
    for _ in 0..trials {
        let field = RandomTrig::new(&mut rng, TRIAL_MODES);
        let u: Vec<f64> = mesh.vertices.iter().map(|&x| field.dirichlet(x, size)).collect();
        if let Some(r) = sobolev_ratio(mesh, phi, &u, p) {
            best = best.max(r);
        }
    }
    best
}

/// `‖φ u‖_∞ / ‖φ∇u‖_p`, or `None` when either side vanishes.
pub fn sobolev_ratio(mesh: &Mesh, phi: &[f64], u: &[f64], p: f64) -> Option<f64> {
    let num = weighted_norm(mesh, u, Some(phi), f64::INFINITY, false);
    let den = weighted_norm(mesh, u, Some(phi), p, true);
    (num > 0.0 && den > 0.0).then(|| num / den)
}

#[derive(Debug, Clone, Serialize)]
pub struct ExtensionReport {
    pub n: usize,
    pub trials: usize,
    /// Largest ratio `‖∇E f‖_{L²(Y)} / ‖∇f‖_{L²(Y'_*)}` over random trials.
    pub c_e: f64,
    /// The ratio for `f = y₁`.
    pub linear_ratio: f64,
    /// `(|Y| / |Y'_*|)^{1/2}` with the exact hole areas.
    pub analytic_linear_ratio: f64,
}

/// Harmonic extension across enlarged holes `T'` (offset `c0/4`).
pub fn extension_probe(cell: &CellGeometry, n: usize, trials: usize, seed: u64) -> Result<ExtensionReport> {
    let delta = cell.c0() / 4.0;
    let holes = cell.enlarged_holes(delta);
    let mesh = triangulate_full_cell(&holes, n)?;
    let inside: Vec<bool> = {
        let mut touches_outside = vec![false; mesh.vertex_count()];
        for (t, tri) in mesh.triangles.iter().enumerate() {
            if mesh.regions[t] == Region::Perforated {
                for &v in tri {
                    touches_outside[v] = true;
                }
            }
        }
        touches_outside.iter().map(|o| !o).collect()
    };
    let mut hole_mesh = mesh.clone();
    let keep: Vec<usize> = (0..mesh.triangle_count()).filter(|&t| mesh.regions[t] != Region::Perforated).collect();
    hole_mesh.triangles = keep.iter().map(|&t| mesh.triangles[t]).collect();
    hole_mesh.regions = keep.iter().map(|&t| mesh.regions[t]).collect();
    let dofs = DofMap::identity(mesh.vertex_count());
    let k = assemble_weighted_stiffness(&hole_mesh, &dofs, &|_| IDENTITY, None, 0);
    let fixed: Vec<bool> = inside.iter().map(|i| !i).collect();
    let spec = LinearSolveSpec::with_tolerance(1e-12);

    let ratio = |f: &[f64]| -> Result<Option<f64>> {
        let data: Vec<f64> = (0..f.len()).map(|v| if inside[v] { 0.0 } else { f[v] }).collect();
        let rhs: Vec<f64> = k.mul(&data).iter().map(|v| -v).collect();
        let sol = solve_spd(&k, &rhs, &spec, &Deflation::None, &fixed)?;
        let ext: Vec<f64> = data.iter().zip(&sol.x).map(|(a, b)| a + b).collect();
        let num = weighted_norm(&mesh, &ext, None, 2.0, true);
        let den = weighted_norm_on(&mesh, f, None, 2.0, true, |t| mesh.regions[t] == Region::Perforated);
        Ok(if den > 1e-14 { Some(num / den) } else { None })
    };

    let linear: Vec<f64> = mesh.vertices.iter().map(|p| p[0]).collect();
    let linear_ratio = ratio(&linear)?.expect("linear field has nonzero gradient");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut c_e: f64 = 0.0;
    for _ in 0..trials {
        let field = RandomTrig::new(&mut rng, TRIAL_MODES);
        let f: Vec<f64> = mesh.vertices.iter().map(|&y| field.periodic(y)).collect();
        if let Some(r) = ratio(&f)? {
            c_e = c_e.max(r);
        }
    }
    let hole_area: f64 = holes.iter().map(|h| h.area()).sum();
    Ok(ExtensionReport {
        n,
        trials,
        c_e,
        linear_ratio,
        analytic_linear_ratio: (1.0 / (1.0 - hole_area)).sqrt(),
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct ProbeEntry {
    pub epsilon: f64,
    pub poincare: f64,
    pub sobolev_ratio: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct ProbeReport {
    pub entries: Vec<ProbeEntry>,
    pub extension: Vec<ExtensionReport>,
    pub poincare_variation: f64,
    pub sobolev_variation: f64,
    pub extension_variation: f64,
}

pub fn probe_entry(setup: &LadderSetup<'_>, n_cells: usize, trials: usize, seed: u64) -> Result<ProbeEntry> {
    let inst = setup.instance(n_cells)?;
    let size = [inst.spec.width(), inst.spec.height()];
    Ok(ProbeEntry {
        epsilon: inst.epsilon(),
        poincare: poincare_probe(&inst.mesh, &inst.phi)?,
        sobolev_ratio: sobolev_linf_probe(&inst.mesh, &inst.phi, size, 4.0, trials, seed),
    })
}

pub fn summarize_probes(entries: Vec<ProbeEntry>, extension: Vec<ExtensionReport>) -> ProbeReport {
    let poincare_variation = variation(&entries.iter().map(|e| e.poincare).collect::<Vec<_>>());
    let sobolev_variation = variation(&entries.iter().map(|e| e.sobolev_ratio).collect::<Vec<_>>());
    let extension_variation = variation(&extension.iter().map(|e| e.c_e).collect::<Vec<_>>());
    ProbeReport { entries, extension, poincare_variation, sobolev_variation, extension_variation }
}

#[derive(Debug, Clone, Serialize)]
pub struct SpectralEntry {
    pub epsilon: f64,
    pub lambda: Vec<f64>,
    /// `ε⁻²λ̄`.
    pub scaled_lambda_bar: f64,
    /// `r_j = |λ_ε^j - ε⁻²λ̄ - μ₀^j|`.
    pub residuals: Vec<f64>,
}

#[derive(Debug, Clone, Serialize)]
pub struct SpectralReport {
    pub lambda_bar: f64,
    /// From `Â` and `a₀`.
    pub mu0: Vec<f64>,
    /// From the discrete Bloch tensor; the residuals are taken against these.
    pub mu0_discrete: Vec<f64>,
    pub bloch_tensor: Mat2,
    pub entries: Vec<SpectralEntry>,
    pub r1_decreasing: bool,
    pub slope_r1: Option<SlopeFit>,
}

/// Resolution per unit length of the coarser solid mesh used for `μ₀`.
pub const MU0_RESOLUTION: usize = 64;

/// `k` homogenized eigenvalues, Richardson-extrapolated from solid meshes at
/// `MU0_RESOLUTION` and twice that.
pub fn homogenized_eigenvalues(omega_units: [usize; 2], tensor: &HomogenizedTensor, k: usize) -> Result<Vec<f64>> {
    let size = [omega_units[0] as f64, omega_units[1] as f64];
    let coarse = homogenized_spectrum(&triangulate_solid(size, MU0_RESOLUTION)?, tensor, k)?;
    let fine = homogenized_spectrum(&triangulate_solid(size, 2 * MU0_RESOLUTION)?, tensor, k)?;
    Ok(fine.iter().zip(&coarse).map(|(f, c)| (4.0 * f - c) / 3.0).collect())
}

/// Needs a ground-state weight. `mu0` comes from [`homogenized_eigenvalues`].
pub fn spectral_entry(setup: &LadderSetup<'_>, n_cells: usize, mu0: &[f64]) -> Result<SpectralEntry> {
    let lambda_bar = setup
        .solution
        .weight
        .lambda_bar
        .ok_or_else(|| Error::InvalidArgument("spectral study needs a ground-state weight".into()))?;
    let inst = setup.instance(n_cells)?;
    let eps = inst.epsilon();
    let scaled = lambda_bar / (eps * eps);
    // Keeps the shifted operator positive definite while sitting close to λ_ε¹.
    let shift = scaled - 0.5 * mu0[0];
    let lambda = crate::solvers::dirichlet_spectrum_eps(&inst.mesh, setup.coefficient, eps, mu0.len(), shift)?;
    let residuals = lambda.iter().zip(mu0).map(|(l, m)| (l - scaled - m).abs()).collect();
    Ok(SpectralEntry { epsilon: eps, lambda, scaled_lambda_bar: scaled, residuals })
}

pub fn summarize_spectrum(
    lambda_bar: f64,
    mu0: Vec<f64>,
    mu0_discrete: Vec<f64>,
    bloch_tensor: Mat2,
    entries: Vec<SpectralEntry>,
) -> SpectralReport {
    let r1: Vec<f64> = entries.iter().map(|e| e.residuals[0]).collect();
    let eps: Vec<f64> = entries.iter().map(|e| e.epsilon).collect();
    let r1_decreasing = r1.windows(2).all(|w| w[1] < w[0]);
    let slope_r1 = fit_loglog(&eps, &r1).ok();
    SpectralReport { lambda_bar, mu0, mu0_discrete, bloch_tensor, entries, r1_decreasing, slope_r1 }
}

pub fn spectral_study(setup: &LadderSetup<'_>, k: usize) -> Result<SpectralReport> {
    use rayon::prelude::*;
    let (bloch, mu0, mu0_discrete) = spectral_targets(setup, k)?;
    let entries: Vec<SpectralEntry> =
        setup.n_cells.par_iter().map(|&nc| spectral_entry(setup, nc, &mu0_discrete)).collect::<Result<_>>()?;
    let lambda_bar = setup.solution.weight.lambda_bar.unwrap_or(0.0);
    Ok(summarize_spectrum(lambda_bar, mu0, mu0_discrete, bloch, entries))
}

/// Bloch tensor, `μ₀` from `Â/a₀`, and `μ₀` from the Bloch tensor.
pub fn spectral_targets(setup: &LadderSetup<'_>, k: usize) -> Result<(Mat2, Vec<f64>, Vec<f64>)> {
    let sol = setup.solution;
    let bloch = bloch_tensor(&sol.mesh, setup.coefficient, &sol.weight, setup.solver)?;
    let mu0 = homogenized_eigenvalues(setup.omega_units, &sol.tensor, k)?;
    let discrete = HomogenizedTensor { a_hat: bloch, a0: 1.0, energy_form: bloch, discrepancy: 0.0 };
    let mu0_discrete = homogenized_eigenvalues(setup.omega_units, &discrete, k)?;
    Ok((bloch, mu0, mu0_discrete))
}

pub fn default_div_rhs() -> RhsSpec {
    RhsSpec::div_form(Field::ConstantVector { value: [1.0, 0.0] }, Field::Constant { value: 1.0 })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn slope_of_power_law() {
        let x = [0.25, 0.125, 0.0625];
        let y: Vec<f64> = x.iter().map(|v: &f64| 3.0 * v.powf(0.75)).collect();
        let fit = fit_loglog(&x, &y).unwrap();
        assert!((fit.slope - 0.75).abs() < 1e-12);
        assert!((fit.intercept - 3f64.ln()).abs() < 1e-12);
        assert!(fit.residual < 1e-12);
    }

    #[test]
    fn zero_data_is_unreliable() {
        let r = fit_loglog(&[0.5, 0.25, 0.125], &[0.0, 0.0, 0.0]);
        assert!(matches!(r, Err(Error::SlopeUnreliable(_))));
        let r = fit_loglog(&[0.5, 0.25, 0.125, 0.0625], &[1.0, 0.1, 1.0, 0.1]);
        assert!(matches!(r, Err(Error::SlopeUnreliable(_))));
    }

    #[test]
    fn cutoff_ramp() {
        assert_eq!(cutoff(0.0, 0.05, 0.25), 0.0);
        assert_eq!(cutoff(0.0125, 0.05, 0.25), 0.0);
        assert!((cutoff(0.01875, 0.05, 0.25) - 0.5).abs() < 1e-12);
        assert_eq!(cutoff(0.03, 0.05, 0.25), 1.0);
    }

    #[test]
    fn variation_of_series() {
        assert_eq!(variation(&[1.0, 2.0, 1.5]), 2.0);
    }
}
