//! Run reports and plot series.

use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::analysis::{ConvergenceReport, LipschitzReport, ProbeReport, SpectralReport};
use crate::cell_problem::{CellSolution, FluxCorrectors};
use crate::config::ExperimentConfig;
use crate::error::{Error, Result};
use crate::fem::Mat2;

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

/// A pipeline stage that either ran or was not requested.
#[derive(Debug, Clone, Serialize)]
#[serde(tag = "status", content = "result", rename_all = "snake_case")]
pub enum Stage<T> {
    Skipped,
    Completed(T),
}

impl<T> Stage<T> {
    pub fn completed(&self) -> Option<&T> {
        match self {
            Stage::Completed(t) => Some(t),
            Stage::Skipped => None,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct FluxReport {
    pub antisymmetry_defect: f64,
    pub weak_divergence_residual: f64,
    pub b_integral: Mat2,
}

impl FluxReport {
    pub fn new(f: &FluxCorrectors) -> Self {
        FluxReport {
            antisymmetry_defect: f.max_antisymmetry_defect(),
            weak_divergence_residual: f.weak_divergence_residual(),
            b_integral: f.b_integral,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct CellReport {
    pub n: usize,
    pub vertices: usize,
    pub triangles: usize,
    pub a_hat: Mat2,
    pub a0: f64,
    pub energy_form: Mat2,
    pub min_eigenvalue: f64,
    pub asymmetry: f64,
    pub lambda_bar: Option<f64>,
    /// Bounds `(c, C)` with `c·d ≤ φ ≤ C·d` near the holes.
    pub comparability: (f64, f64),
    pub corrector_iterations: [usize; 2],
    pub corrector_residuals: [f64; 2],
    pub corrector_means: [f64; 2],
    pub flux: Option<FluxReport>,
}

impl CellReport {
    pub fn new(sol: &CellSolution, flux: Option<&FluxCorrectors>) -> Self {
        let t = &sol.tensor;
        CellReport {
            n: sol.mesh.grid[0],
            vertices: sol.mesh.vertex_count(),
            triangles: sol.mesh.triangle_count(),
            a_hat: t.a_hat,
            a0: t.a0,
            energy_form: t.energy_form,
            min_eigenvalue: t.min_eigenvalue(),
            asymmetry: t.asymmetry(),
            lambda_bar: sol.weight.lambda_bar,
            comparability: sol.weight.comparability,
            corrector_iterations: sol.correctors.iterations,
            corrector_residuals: sol.correctors.residuals,
            corrector_means: sol.correctors.mean_values,
            flux: flux.map(FluxReport::new),
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct LipschitzStage {
    pub primary: LipschitzReport,
    pub div_form: LipschitzReport,
}

#[derive(Debug, Clone, Serialize)]
pub struct RunReport {
    pub tool_version: String,
    pub config: ExperimentConfig,
    pub cell: CellReport,
    pub convergence: Stage<ConvergenceReport>,
    pub lipschitz: Stage<LipschitzStage>,
    pub spectrum: Stage<SpectralReport>,
    pub probes: Stage<ProbeReport>,
}

/// Wall-clock seconds per stage, kept out of `report.json`.
#[derive(Debug, Clone, Default, Serialize)]
pub struct Timings {
    pub stages: Vec<(String, f64)>,
}

/// One `epsilon,value` series.
#[derive(Debug, Clone, PartialEq)]
pub struct Series {
    pub name: String,
    pub points: Vec<(f64, f64)>,
}

fn series(name: &str, points: impl IntoIterator<Item = (f64, Option<f64>)>) -> Series {
    Series { name: name.to_string(), points: points.into_iter().filter_map(|(e, v)| v.map(|v| (e, v))).collect() }
}

impl RunReport {
    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("report serializes");
        s.push('\n');
        s
    }

    /// Plot series in a fixed order; stages that did not run contribute none.
    pub fn series(&self) -> Vec<Series> {
        let mut out = Vec::new();
        if let Some(c) = self.convergence.completed() {
            let e = &c.entries;
            out.push(series("converge_grad", e.iter().map(|x| (x.epsilon, Some(x.e_grad)))));
            out.push(series("converge_grad_uncorrected", e.iter().map(|x| (x.epsilon, Some(x.e_grad_uncorrected)))));
            out.push(series("converge_l2", e.iter().map(|x| (x.epsilon, Some(x.e_l2)))));
        }
        if let Some(l) = self.lipschitz.completed() {
            for (tag, r) in [("primary", &l.primary), ("div", &l.div_form)] {
                out.push(series(&format!("lipschitz_{tag}_rinf"), r.entries.iter().map(|x| (x.epsilon, x.r_inf))));
                for (k, (p, _)) in r.r_p_variation.iter().enumerate() {
                    out.push(series(
                        &format!("lipschitz_{tag}_r{}", format_exponent(*p)),
                        r.entries.iter().map(|x| (x.epsilon, x.r_p[k].1)),
                    ));
                }
            }
        }
        if let Some(s) = self.spectrum.completed() {
            for j in 0..s.mu0.len() {
                out.push(series(&format!("spectrum_r{}", j + 1), s.entries.iter().map(|x| (x.epsilon, Some(x.residuals[j])))));
            }
        }
        if let Some(p) = self.probes.completed() {
            out.push(series("probes_poincare", p.entries.iter().map(|x| (x.epsilon, Some(x.poincare)))));
            out.push(series("probes_sobolev", p.entries.iter().map(|x| (x.epsilon, Some(x.sobolev_ratio)))));
        }
        out.retain(|s| !s.points.is_empty());
        out
    }
}

fn format_exponent(p: f64) -> String {
    if p.fract() == 0.0 {
        format!("{}", p as i64)
    } else {
        format!("{p}").replace('.', "p")
    }
}

/// Twelve significant digits.
pub fn format_value(v: f64) -> String {
    format!("{v:.11e}")
}

pub fn csv_text(s: &Series) -> String {
    let mut out = String::from("epsilon,value\n");
    for (e, v) in &s.points {
        out.push_str(&format_value(*e));
        out.push(',');
        out.push_str(&format_value(*v));
        out.push('\n');
    }
    out
}

fn write(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

/// Writes one `<series>.csv` per non-empty series and returns the paths.
pub fn emit_plot_data(report: &RunReport, out_dir: &Path) -> Result<Vec<PathBuf>> {
    std::fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    let mut paths = Vec::new();
    for s in report.series() {
        let path = out_dir.join(format!("{}.csv", s.name));
        write(&path, &csv_text(&s))?;
        paths.push(path);
    }
    Ok(paths)
}

/// `report.json`, the CSV series and `timings.json`.
pub fn write_outputs(report: &RunReport, timings: &Timings, out_dir: &Path) -> Result<Vec<PathBuf>> {
    std::fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    let report_path = out_dir.join("report.json");
    write(&report_path, &report.to_json())?;
    let mut paths = vec![report_path];
    paths.extend(emit_plot_data(report, out_dir)?);
    let timing_path = out_dir.join("timings.json");
    write(&timing_path, &serde_json::to_string_pretty(timings).expect("timings serialize"))?;
    paths.push(timing_path);
    Ok(paths)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn twelve_significant_digits() {
        assert_eq!(format_value(0.25), "2.50000000000e-1");
        assert_eq!(format_value(1.0 / 3.0), "3.33333333333e-1");
        assert_eq!(format_value(1.0 / 3.0).split('e').next().unwrap().replace('.', "").len(), 12);
    }

    #[test]
    fn csv_layout() {
        let s = Series { name: "x".into(), points: vec![(0.5, 1.0), (0.25, 2.0)] };
        let text = csv_text(&s);
        assert_eq!(text.lines().count(), 3);
        assert_eq!(text.lines().next(), Some("epsilon,value"));
    }

    #[test]
    fn missing_values_are_dropped() {
        let s = series("x", [(0.5, Some(1.0)), (0.25, None)]);
        assert_eq!(s.points, vec![(0.5, 1.0)]);
    }
}
