//! Finite-element minimization of elasticity-type energies with p-growth,
//! plus a diagnostics toolbox that measures the regularity quantities of the
//! minimizers: the V-potential of the strain, ball excess and its decay,
//! empirical Caccioppoli constants, autonomous comparison solves, discrete
//! singular-set flags, and a blow-up linearization experiment.

pub mod config;
pub mod diag;
pub mod error;
pub mod expr;
pub mod fem;
pub mod pipeline;
pub mod report;
pub mod snapshot;
pub mod solver;
pub mod tensor;

pub use error::{AuditError, DiagError, MeshError, ModelError, SolveError};
pub use tensor::{ElasticTensor, GrowthParams, SymMatrix, Tensor4};
