pub mod analysis;
pub mod check;
pub mod cell_problem;
pub mod config;
pub mod error;
pub mod fem;
pub mod geometry;
pub mod mesh;
pub mod oracle;
pub mod report;
pub mod runner;
pub mod solvers;
pub mod weight;

pub use error::{Error, Result};
