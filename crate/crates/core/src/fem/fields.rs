use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::geometry::Point;

/// Analytic right-hand-side presets, in physical coordinates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Field {
    Zero,
    Constant { value: f64 },
    /// `amplitude·sin(m₁πx₁)sin(m₂πx₂)`.
    SineProduct { amplitude: f64, modes: [f64; 2] },
    /// `height·(1 - |x - c|²/r²)²` inside the disk, zero outside.
    Bump { center: Point, radius: f64, height: f64 },
    ConstantVector { value: [f64; 2] },
}

impl Field {
    pub fn is_vector(&self) -> bool {
        matches!(self, Field::ConstantVector { .. })
    }

    /// `Zero` is both a scalar and a vector field.
    pub fn is_scalar(&self) -> bool {
        !self.is_vector()
    }

    pub fn is_zero(&self) -> bool {
        match self {
            Field::Zero => true,
            Field::Constant { value } => *value == 0.0,
            Field::SineProduct { amplitude, .. } => *amplitude == 0.0,
            Field::Bump { height, .. } => *height == 0.0,
            Field::ConstantVector { value } => value[0] == 0.0 && value[1] == 0.0,
        }
    }

    pub fn scalar(&self, x: Point) -> f64 {
        match self {
            Field::Zero | Field::ConstantVector { .. } => 0.0,
            Field::Constant { value } => *value,
            Field::SineProduct { amplitude, modes } => {
                amplitude * (modes[0] * PI * x[0]).sin() * (modes[1] * PI * x[1]).sin()
            }
            Field::Bump { center, radius, height } => {
                let r2 = ((x[0] - center[0]).powi(2) + (x[1] - center[1]).powi(2)) / (radius * radius);
                if r2 < 1.0 {
                    height * (1.0 - r2).powi(2)
                } else {
                    0.0
                }
            }
        }
    }

    pub fn vector(&self, _x: Point) -> [f64; 2] {
        match self {
            Field::ConstantVector { value } => *value,
            _ => [0.0, 0.0],
        }
    }

    /// Pointwise magnitude (`|f|` for scalars, Euclidean norm for vectors).
    pub fn magnitude(&self, x: Point) -> f64 {
        if self.is_vector() {
            let v = self.vector(x);
            v[0].hypot(v[1])
        } else {
            self.scalar(x).abs()
        }
    }
}
