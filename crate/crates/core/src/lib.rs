//! Finite-volume solver for non-local scalar conservation laws on a bounded
//! interval with boundary data, together with the a-priori bound constants of
//! the scheme and runtime checks of the discrete estimates.

pub mod bounds;
pub mod config;
pub mod diagnostics;
pub mod error;
pub mod experiments;
pub mod flux;
pub mod grid;
pub mod kernel;
pub mod quadrature;
pub mod solver;

pub use bounds::{ConstantsReport, DataNorms, StabilityReport};
pub use config::{parse_config, RunConfig};
pub use diagnostics::{BoundMode, DiagnosticsRecord, Violation};
pub use error::{Error, FieldError, Result};
pub use flux::{FluxBounds, FluxModel, ValidityBox};
pub use grid::{Mesh, ProblemData, ProjectedData};
pub use kernel::{DiscreteKernel, Kernel, KernelNorms};
pub use solver::{solve, Problem, SolveOptions, SolverState, Trajectory};
