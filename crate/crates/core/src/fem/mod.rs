//! Piecewise-linear finite elements: assembly, linear solves, eigenpairs and norms.

pub mod assembly;
pub mod coefficient;
pub mod eigen;
pub mod fields;
pub mod solve;
pub mod sparse;

pub use assembly::{
    assemble_load, assemble_load_qp, assemble_weighted_mass, assemble_weighted_stiffness, field_norm,
    integrate, recover_gradient, weighted_norm, weighted_norm_on, DofMap, Element, Load,
};
pub use coefficient::{CoefficientField, Mat2, IDENTITY};
pub use eigen::{smallest_eigenpairs, EigenSpec, Eigenpair};
pub use fields::Field;
pub use solve::{solve_spd, Deflation, LinearSolveSpec, Solution, SpdSolver};
pub use sparse::CsrMatrix;
