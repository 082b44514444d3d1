//! Experiment configuration, read from TOML.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fem::{CoefficientField, Field, LinearSolveSpec};
use crate::geometry::{build_cell_geometry, CellGeometry, HoleSpec};
use crate::solvers::{RhsForm, RhsSpec};
use crate::weight::WeightMode;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExperimentKind {
    CellOnly,
    Converge,
    Lipschitz,
    Spectrum,
    Probes,
    All,
}

impl ExperimentKind {
    pub fn runs(self, stage: ExperimentKind) -> bool {
        self == stage || self == ExperimentKind::All
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GeometryConfig {
    pub c0: f64,
    /// Side lengths of `Ω` in cell units at `ε = 1`.
    #[serde(default = "unit_omega")]
    pub omega: [usize; 2],
    #[serde(default)]
    pub holes: Vec<HoleSpec>,
}

fn unit_omega() -> [usize; 2] {
    [1, 1]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WeightConfig {
    pub mode: WeightMode,
    #[serde(default)]
    pub floor: f64,
}

impl Default for WeightConfig {
    fn default() -> Self {
        WeightConfig { mode: WeightMode::DistanceType, floor: 0.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LipschitzConfig {
    #[serde(default = "default_p_inf")]
    pub p_inf: f64,
    #[serde(default = "default_ps")]
    pub p: Vec<f64>,
    /// Divergence-form right side checked alongside the main one.
    #[serde(default = "crate::analysis::default_div_rhs")]
    pub div_rhs: RhsSpec,
}

fn default_p_inf() -> f64 {
    4.0
}

fn default_ps() -> Vec<f64> {
    vec![2.0, 4.0]
}

impl Default for LipschitzConfig {
    fn default() -> Self {
        LipschitzConfig { p_inf: default_p_inf(), p: default_ps(), div_rhs: crate::analysis::default_div_rhs() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SpectrumConfig {
    #[serde(default = "default_spectrum_eps")]
    pub epsilons: Vec<f64>,
    #[serde(default = "one")]
    pub k: usize,
}

fn default_spectrum_eps() -> Vec<f64> {
    vec![0.25, 0.125, 0.0625]
}

fn one() -> usize {
    1
}

impl Default for SpectrumConfig {
    fn default() -> Self {
        SpectrumConfig { epsilons: default_spectrum_eps(), k: 1 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProbeConfig {
    #[serde(default = "default_trials")]
    pub trials: usize,
    /// Cell resolutions of the extension refinement sweep.
    #[serde(default = "default_extension_n")]
    pub extension_n: Vec<usize>,
}

fn default_trials() -> usize {
    100
}

fn default_extension_n() -> Vec<usize> {
    vec![32, 64]
}

impl Default for ProbeConfig {
    fn default() -> Self {
        ProbeConfig { trials: default_trials(), extension_n: default_extension_n() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub experiment: ExperimentKind,
    /// Squares per cell side.
    pub n: usize,
    #[serde(default)]
    pub epsilons: Vec<f64>,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub output: Option<String>,
    pub geometry: GeometryConfig,
    #[serde(default)]
    pub weight: WeightConfig,
    #[serde(default = "CoefficientField::identity")]
    pub coefficient: CoefficientField,
    #[serde(default = "default_rhs")]
    pub rhs: RhsSpec,
    #[serde(default)]
    pub solver: LinearSolveSpec,
    #[serde(default)]
    pub lipschitz: LipschitzConfig,
    #[serde(default)]
    pub spectrum: SpectrumConfig,
    #[serde(default)]
    pub probes: ProbeConfig,
}

fn default_rhs() -> RhsSpec {
    RhsSpec::source(Field::Constant { value: 1.0 })
}

fn invalid(field: &str, reason: impl Into<String>) -> Error {
    Error::ConfigValidation { field: field.to_string(), reason: reason.into() }
}

/// `N` with `ε = 1/N`, if `ε` has that form.
pub fn cells_per_unit(eps: f64) -> Option<usize> {
    if !(eps > 0.0 && eps <= 1.0) {
        return None;
    }
    let n = (1.0 / eps).round();
    ((n * eps - 1.0).abs() < 1e-9).then_some(n as usize)
}

fn ladder(field: &str, eps: &[f64], min_len: usize) -> Result<Vec<usize>> {
    if eps.len() < min_len {
        return Err(invalid(field, format!("needs at least {min_len} values, got {}", eps.len())));
    }
    let ns = eps
        .iter()
        .map(|&e| cells_per_unit(e).ok_or_else(|| invalid(field, format!("{e} is not of the form 1/N"))))
        .collect::<Result<Vec<_>>>()?;
    if ns.windows(2).any(|w| w[1] <= w[0]) {
        return Err(invalid(field, "values must be strictly decreasing"));
    }
    Ok(ns)
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: ExperimentConfig = toml::from_str(text).map_err(|e| Error::ConfigParse(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml(&text)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn cell(&self) -> Result<CellGeometry> {
        build_cell_geometry(self.geometry.holes.clone(), self.geometry.c0)
    }

    /// Cell counts per unit length of the main ladder.
    pub fn n_cells(&self) -> Result<Vec<usize>> {
        ladder("epsilons", &self.epsilons, 0)
    }

    pub fn spectrum_n_cells(&self) -> Result<Vec<usize>> {
        ladder("spectrum.epsilons", &self.spectrum.epsilons, 0)
    }

    pub fn validate(&self) -> Result<()> {
        let kind = self.experiment;
        let min_n = if kind.runs(ExperimentKind::Converge) { 8 } else { 2 };
        if self.n < min_n {
            return Err(invalid("n", format!("must be at least {min_n}, got {}", self.n)));
        }
        if self.geometry.omega.contains(&0) {
            return Err(invalid("geometry.omega", "side lengths must be positive"));
        }
        self.cell().map_err(|e| invalid("geometry", e.to_string()))?;
        self.coefficient.validate().map_err(|e| invalid("coefficient", e.to_string()))?;
        self.solver.validate().map_err(|e| invalid("solver", e.to_string()))?;
        if !(self.weight.floor >= 0.0 && self.weight.floor.is_finite()) {
            return Err(invalid("weight.floor", "must be a finite nonnegative number"));
        }
        let needs_ladder = [ExperimentKind::Converge, ExperimentKind::Lipschitz, ExperimentKind::Probes]
            .iter()
            .any(|&s| kind.runs(s));
        let min_len = if kind.runs(ExperimentKind::Converge) { 3 } else if needs_ladder { 1 } else { 0 };
        ladder("epsilons", &self.epsilons, min_len)?;
        if kind.runs(ExperimentKind::Converge) && self.rhs.form != RhsForm::WeightedSource {
            return Err(invalid("rhs.form", "the convergence study needs a weighted source"));
        }
        check_rhs("rhs", &self.rhs)?;
        if kind.runs(ExperimentKind::Lipschitz) {
            check_rhs("lipschitz.div_rhs", &self.lipschitz.div_rhs)?;
            if !(self.lipschitz.p_inf > 2.0) {
                return Err(invalid("lipschitz.p_inf", "must exceed the dimension 2"));
            }
            if self.lipschitz.p.iter().any(|p| !(*p >= 1.0 && p.is_finite())) {
                return Err(invalid("lipschitz.p", "exponents must be finite and at least 1"));
            }
        }
        if kind.runs(ExperimentKind::Spectrum) {
            ladder("spectrum.epsilons", &self.spectrum.epsilons, 2)?;
            if self.spectrum.k == 0 {
                return Err(invalid("spectrum.k", "must be positive"));
            }
        }
        if kind.runs(ExperimentKind::Probes) {
            if self.probes.trials == 0 {
                return Err(invalid("probes.trials", "must be positive"));
            }
            if self.probes.extension_n.iter().any(|&n| n < 2) {
                return Err(invalid("probes.extension_n", "resolutions must be at least 2"));
            }
        }
        Ok(())
    }
}

fn check_rhs(field: &str, rhs: &RhsSpec) -> Result<()> {
    let vector_f = rhs.form == RhsForm::DivForm;
    if rhs.f.is_vector() != vector_f && !rhs.f.is_zero() {
        let want = if vector_f { "vector" } else { "scalar" };
        return Err(invalid(&format!("{field}.f"), format!("must be a {want} field")));
    }
    if vector_f && rhs.big_f.is_vector() {
        return Err(invalid(&format!("{field}.big_f"), "must be a scalar field"));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"
experiment = "converge"
n = 16
epsilons = [0.25, 0.125, 0.0625]

[geometry]
c0 = 0.2
holes = [{ label = 0, shape = { kind = "disk", center = [0.0, 0.0], radius = 0.25 } }]
"#;

    #[test]
    fn parses_with_defaults() {
        let cfg = ExperimentConfig::from_toml(MINIMAL).unwrap();
        assert_eq!(cfg.n_cells().unwrap(), vec![4, 8, 16]);
        assert_eq!(cfg.geometry.omega, [1, 1]);
        assert_eq!(cfg.solver.tolerance, 1e-10);
        let again = ExperimentConfig::from_toml(&cfg.to_toml()).unwrap();
        assert_eq!(again, cfg);
    }

    #[test]
    fn epsilon_must_be_reciprocal_integer() {
        let text = MINIMAL.replace("0.125", "0.3");
        match ExperimentConfig::from_toml(&text) {
            Err(Error::ConfigValidation { field, .. }) => assert_eq!(field, "epsilons"),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn coarse_converge_is_rejected() {
        let text = MINIMAL.replace("n = 16", "n = 4");
        assert!(matches!(ExperimentConfig::from_toml(&text), Err(Error::ConfigValidation { field, .. }) if field == "n"));
    }

    #[test]
    fn malformed_text_is_a_parse_error() {
        assert!(matches!(ExperimentConfig::from_toml("experiment = "), Err(Error::ConfigParse(_))));
        let text = MINIMAL.replace("experiment = \"converge\"", "experiment = \"bogus\"");
        assert!(matches!(ExperimentConfig::from_toml(&text), Err(Error::ConfigParse(_))));
    }

    #[test]
    fn reciprocal_detection() {
        assert_eq!(cells_per_unit(0.0625), Some(16));
        assert_eq!(cells_per_unit(1.0 / 3.0), Some(3));
        assert_eq!(cells_per_unit(0.3), None);
        assert_eq!(cells_per_unit(0.0), None);
    }
}
