use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::Point;

pub type Mat2 = [[f64; 2]; 2];

pub const IDENTITY: Mat2 = [[1.0, 0.0], [0.0, 1.0]];

/// Symmetric, uniformly elliptic, Y-periodic coefficient matrix `A(y)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum CoefficientField {
    Constant { matrix: Mat2 },
    /// `(1 + amplitude·cos(2πy₁)cos(2πy₂))·I`.
    OscillatingScalar { amplitude: f64 },
    /// `diag(1 + amplitude·sin²(πy₂), 1 + amplitude·sin²(πy₁))`.
    Laminate { amplitude: f64 },
}

impl Default for CoefficientField {
    fn default() -> Self {
        CoefficientField::Constant { matrix: IDENTITY }
    }
}

impl CoefficientField {
    pub fn identity() -> Self {
        Self::default()
    }

    pub fn constant(matrix: Mat2) -> Result<Self> {
        let c = CoefficientField::Constant { matrix };
        c.validate()?;
        Ok(c)
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            CoefficientField::Constant { matrix } => {
                if matrix[0][1] != matrix[1][0] {
                    return Err(Error::InvalidArgument("coefficient matrix must be symmetric".into()));
                }
            }
            CoefficientField::OscillatingScalar { amplitude } | CoefficientField::Laminate { amplitude } => {
                let ok = match self {
                    CoefficientField::OscillatingScalar { .. } => amplitude.abs() < 1.0,
                    _ => *amplitude > -1.0,
                };
                if !ok || !amplitude.is_finite() {
                    return Err(Error::InvalidArgument(format!(
                        "amplitude {amplitude} breaks uniform ellipticity"
                    )));
                }
            }
        }
        if !(self.ellipticity() > 0.0) {
            return Err(Error::InvalidArgument("coefficient is not uniformly elliptic".into()));
        }
        Ok(())
    }

    pub fn is_constant(&self) -> bool {
        matches!(self, CoefficientField::Constant { .. })
    }

    /// Value at cell coordinates `y` (any representative, periodic).
    pub fn at(&self, y: Point) -> Mat2 {
        match self {
            CoefficientField::Constant { matrix } => *matrix,
            CoefficientField::OscillatingScalar { amplitude } => {
                let s = 1.0 + amplitude * (2.0 * PI * y[0]).cos() * (2.0 * PI * y[1]).cos();
                [[s, 0.0], [0.0, s]]
            }
            CoefficientField::Laminate { amplitude } => {
                let a = 1.0 + amplitude * (PI * y[1]).sin().powi(2);
                let b = 1.0 + amplitude * (PI * y[0]).sin().powi(2);
                [[a, 0.0], [0.0, b]]
            }
        }
    }

    /// `A(x/ε)`; cells are centred so `x/ε - 1/2` is a representative.
    pub fn at_physical(&self, x: Point, eps: f64) -> Mat2 {
        if let CoefficientField::Constant { matrix } = self {
            return *matrix;
        }
        self.at([x[0] / eps - 0.5, x[1] / eps - 0.5])
    }

    /// Lower bound `μ` on the eigenvalues of `A`.
    pub fn ellipticity(&self) -> f64 {
        match self {
            CoefficientField::Constant { matrix } => min_eigenvalue(*matrix),
            CoefficientField::OscillatingScalar { amplitude } => 1.0 - amplitude.abs(),
            CoefficientField::Laminate { amplitude } => 1.0 + amplitude.min(0.0),
        }
    }

    /// Whether `A` is diagonal and invariant under `y₁ ↦ -y₁`, `y₂ ↦ -y₂`.
    pub fn is_reflection_symmetric(&self) -> bool {
        match self {
            CoefficientField::Constant { matrix } => matrix[0][1] == 0.0,
            _ => true,
        }
    }
}

pub fn min_eigenvalue(a: Mat2) -> f64 {
    let tr = a[0][0] + a[1][1];
    let det = a[0][0] * a[1][1] - a[0][1] * a[1][0];
    let disc = ((tr * tr / 4.0) - det).max(0.0).sqrt();
    tr / 2.0 - disc
}

pub fn apply(a: &Mat2, g: [f64; 2]) -> [f64; 2] {
    [a[0][0] * g[0] + a[0][1] * g[1], a[1][0] * g[0] + a[1][1] * g[1]]
}
