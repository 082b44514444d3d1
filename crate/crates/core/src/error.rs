use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("hole {label} is not strictly inside the unit cell")]
    HoleOutsideCell { label: usize },

    #[error("hole {label} violates separation (distance {distance} < c0 = {c0}){}",
        other.map(|o| format!(" against hole {o}")).unwrap_or_default())]
    SeparationViolation { label: usize, other: Option<usize>, distance: f64, c0: f64 },

    #[error("geometry violation: {0}")]
    GeometryViolation(String),

    #[error("mesh generation failed: {0}")]
    MeshGenerationFailure(String),

    #[error("tiling mismatch: {0}")]
    TilingMismatch(String),

    #[error("mesh lineage mismatch: {0}")]
    MeshLineageMismatch(String),

    #[error("field kind mismatch: {0}")]
    FieldKindMismatch(String),

    #[error("conjugate gradients did not converge after {iterations} iterations (relative residual {residual:e})")]
    CgNoConvergence { iterations: usize, residual: f64 },

    #[error("matrix is not positive definite on the search space")]
    NotPositiveDefinite,

    #[error("eigen iteration did not converge after {iterations} iterations (residual {residual:e})")]
    EigenIterationDivergence { iterations: usize, residual: f64 },

    #[error("flux source has nonzero mean {mean:e} for (i, j) = ({i}, {j})")]
    MeanNotZero { i: usize, j: usize, mean: f64 },

    #[error("slope fit unreliable: {0}")]
    SlopeUnreliable(String),

    #[error("config parse error: {0}")]
    ConfigParse(String),

    #[error("config validation error in `{field}`: {reason}")]
    ConfigValidation { field: String, reason: String },

    #[error("i/o failure on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    /// Stable machine-readable name used in error records.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::InvalidArgument(_) => "InvalidArgument",
            Error::HoleOutsideCell { .. } => "HoleOutsideCell",
            Error::SeparationViolation { .. } => "SeparationViolation",
            Error::GeometryViolation(_) => "GeometryViolation",
            Error::MeshGenerationFailure(_) => "MeshGenerationFailure",
            Error::TilingMismatch(_) => "TilingMismatch",
            Error::MeshLineageMismatch(_) => "MeshLineageMismatch",
            Error::FieldKindMismatch(_) => "FieldKindMismatch",
            Error::CgNoConvergence { .. } => "CGNoConvergence",
            Error::NotPositiveDefinite => "NotPositiveDefinite",
            Error::EigenIterationDivergence { .. } => "EigenIterationDivergence",
            Error::MeanNotZero { .. } => "MeanNotZero",
            Error::SlopeUnreliable(_) => "SlopeUnreliable",
            Error::ConfigParse(_) => "ConfigParseError",
            Error::ConfigValidation { .. } => "ConfigValidationError",
            Error::Io { .. } => "IoFailure",
        }
    }

    pub(crate) fn io(path: impl AsRef<std::path::Path>, source: std::io::Error) -> Self {
        Error::Io { path: path.as_ref().display().to_string(), source }
    }
}
