//! Executes a configured experiment and writes its outputs.

use std::path::{Path, PathBuf};
use std::time::Instant;

use rayon::prelude::*;

use crate::analysis::{
    convergence_study, extension_probe, lipschitz_uniformity, probe_entry, spectral_study, summarize_probes,
    LadderSetup,
};
use crate::cell_problem::{flux_correctors, solve_cell, CellSolution};
use crate::config::{ExperimentConfig, ExperimentKind};
use crate::error::{Error, Result};
use crate::report::{write_outputs, CellReport, LipschitzStage, RunReport, Stage, Timings, VERSION};
use crate::weight::WeightMode;

#[derive(Debug, Clone, Default)]
pub struct RunOptions {
    /// Size of the worker pool; `None` uses rayon's default.
    pub workers: Option<usize>,
    /// Overrides the configured probe seed.
    pub seed: Option<u64>,
}

pub struct RunOutcome {
    pub report: RunReport,
    pub timings: Timings,
    pub files: Vec<PathBuf>,
}

fn timed<T>(timings: &mut Timings, name: &str, f: impl FnOnce() -> Result<T>) -> Result<T> {
    let start = Instant::now();
    let out = f()?;
    timings.stages.push((name.to_string(), start.elapsed().as_secs_f64()));
    Ok(out)
}

pub fn solve_configured_cell(cfg: &ExperimentConfig, mode: WeightMode) -> Result<CellSolution> {
    let cell = cfg.cell()?;
    solve_cell(&cell, cfg.n, &cfg.coefficient, mode, cfg.weight.floor, &cfg.solver)
}

/// Runs every requested stage; nothing is written.
pub fn execute(cfg: &ExperimentConfig) -> Result<(RunReport, Timings)> {
    cfg.validate()?;
    let kind = cfg.experiment;
    let cell = cfg.cell()?;
    let mut timings = Timings::default();

    let (sol, flux) = timed(&mut timings, "cell", || {
        let sol = solve_configured_cell(cfg, cfg.weight.mode)?;
        let flux = flux_correctors(&cell, &sol.mesh, &cfg.coefficient, &sol.weight, &sol.correctors, &sol.tensor, &cfg.solver)?;
        Ok((sol, flux))
    })?;
    let cell_report = CellReport::new(&sol, Some(&flux));

    let n_cells = cfg.n_cells()?;
    let setup = LadderSetup {
        cell: &cell,
        solution: &sol,
        coefficient: &cfg.coefficient,
        omega_units: cfg.geometry.omega,
        n_cells: &n_cells,
        solver: &cfg.solver,
    };

    let convergence = if kind.runs(ExperimentKind::Converge) {
        Stage::Completed(timed(&mut timings, "convergence", || convergence_study(&setup, &cfg.rhs))?)
    } else {
        Stage::Skipped
    };

    let lipschitz = if kind.runs(ExperimentKind::Lipschitz) {
        let l = &cfg.lipschitz;
        Stage::Completed(timed(&mut timings, "lipschitz", || {
            Ok(LipschitzStage {
                primary: lipschitz_uniformity(&setup, &cfg.rhs, l.p_inf, &l.p)?,
                div_form: lipschitz_uniformity(&setup, &l.div_rhs, l.p_inf, &l.p)?,
            })
        })?)
    } else {
        Stage::Skipped
    };

    let spectrum = if kind.runs(ExperimentKind::Spectrum) {
        Stage::Completed(timed(&mut timings, "spectrum", || {
            let ground;
            let solution = if cfg.weight.mode == WeightMode::GroundState {
                &sol
            } else {
                ground = solve_configured_cell(cfg, WeightMode::GroundState)?;
                &ground
            };
            let spectral_cells = cfg.spectrum_n_cells()?;
            let s = LadderSetup { solution, n_cells: &spectral_cells, ..setup.clone() };
            spectral_study(&s, cfg.spectrum.k)
        })?)
    } else {
        Stage::Skipped
    };

    let probes = if kind.runs(ExperimentKind::Probes) {
        let p = &cfg.probes;
        Stage::Completed(timed(&mut timings, "probes", || {
            let entries =
                n_cells.par_iter().map(|&nc| probe_entry(&setup, nc, p.trials, cfg.seed)).collect::<Result<Vec<_>>>()?;
            let extension = p
                .extension_n
                .par_iter()
                .map(|&n| extension_probe(&cell, n, p.trials, cfg.seed))
                .collect::<Result<Vec<_>>>()?;
            Ok(summarize_probes(entries, extension))
        })?)
    } else {
        Stage::Skipped
    };

    let report = RunReport {
        tool_version: VERSION.to_string(),
        config: cfg.clone(),
        cell: cell_report,
        convergence,
        lipschitz,
        spectrum,
        probes,
    };
    Ok((report, timings))
}

pub fn with_pool<T: Send>(workers: Option<usize>, f: impl FnOnce() -> T + Send) -> Result<T> {
    match workers {
        None => Ok(f()),
        Some(0) => Err(Error::InvalidArgument("workers must be positive".into())),
        Some(k) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(k)
                .build()
                .map_err(|e| Error::InvalidArgument(format!("cannot start worker pool: {e}")))?;
            Ok(pool.install(f))
        }
    }
}

/// Loads, runs and writes `report.json`, the CSV series and `timings.json`
/// into `out_dir`.
pub fn run_experiment(mut cfg: ExperimentConfig, out_dir: &Path, opts: &RunOptions) -> Result<RunOutcome> {
    if let Some(seed) = opts.seed {
        cfg.seed = seed;
    }
    let (report, timings) = with_pool(opts.workers, || execute(&cfg))??;
    let files = write_outputs(&report, &timings, out_dir)?;
    Ok(RunOutcome { report, timings, files })
}

/// Output directory: explicit, then the config's, then `out`.
pub fn output_dir(cfg: &ExperimentConfig, explicit: Option<&Path>) -> PathBuf {
    explicit
        .map(Path::to_path_buf)
        .or_else(|| cfg.output.as_ref().map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("out"))
}
