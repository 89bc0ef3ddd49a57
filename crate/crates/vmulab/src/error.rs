//! Error types shared across the crate.

use thiserror::Error;

/// Errors from constitutive-model evaluation and parameter validation.
#[derive(Error, Debug, Clone, PartialEq)]
pub enum ModelError {
    #[error("growth exponent p must be > 1, got {0}")]
    BadExponent(f64),
    #[error("mu must be >= 0, got {0}")]
    BadMu(f64),
    #[error("kappa must be >= 0, got {0}")]
    BadKappa(f64),
    #[error("spatial dimension must be 2 or 3, got {0}")]
    BadDim(usize),
    #[error("matrix entries are not symmetric at ({i},{j})")]
    NotSymmetric { i: usize, j: usize },
    #[error("fourth-order tensor violates major/minor symmetry")]
    TensorNotSymmetric,
    #[error("elastic tensor is not positive definite on symmetric matrices (min eigenvalue {0})")]
    NotPositiveDefinite(f64),
    #[error("hessian undefined: p < 2 with mu = 0 at zero strain")]
    UndefinedHessian,
    #[error("lambda = {lambda} outside admissible range ({lo}, {hi}]")]
    DomainError { lambda: f64, lo: f64, hi: f64 },
    #[error("operation requires p >= 2, got p = {0}")]
    RequiresSuperquadratic(f64),
    #[error("operation requires mu > 0")]
    RequiresPositiveMu,
    #[error("operation requires the autonomous functional (kappa = 0), got kappa = {0}")]
    RequiresAutonomous(f64),
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimMismatch { expected: usize, got: usize },
}

/// Errors from the randomized inequality audits.
#[derive(Error, Debug, Clone, PartialEq)]
pub enum AuditError {
    #[error("unsupported lemma id: {0}")]
    UnsupportedLemma(String),
    #[error("sample count must be >= 1")]
    EmptySampleSpec,
    #[error(transparent)]
    Model(#[from] ModelError),
}

/// Errors from mesh construction and mesh-bound operations.
#[derive(Error, Debug, Clone, PartialEq)]
pub enum MeshError {
    #[error("degenerate box: axis {axis} has lo {lo} >= hi {hi}")]
    BadDomain { axis: usize, lo: f64, hi: f64 },
    #[error("cells_per_axis must be >= 2, got {0}")]
    TooFewCells(usize),
    #[error("field does not live on the expected mesh")]
    MeshMismatch,
    #[error("difference-quotient step {step} is not a lattice multiple of spacing {spacing}")]
    BadStep { step: f64, spacing: f64 },
    #[error("ball (radius {radius}) violates the resolution guard: needs radius >= {min_radius} and closure inside the box")]
    BallTooSmall { radius: f64, min_radius: f64 },
    #[error("quadrature order must be >= 1, got {0}")]
    BadQuadratureOrder(usize),
}

/// Errors from energy minimization.
#[derive(Error, Debug, Clone, PartialEq)]
pub enum SolveError {
    #[error("line search stalled at iteration {iteration} (gradient norm {grad_norm:.3e}); descent direction failed")]
    LineSearchStalled { iteration: usize, grad_norm: f64 },
    #[error("no convergence within {max_iters} iterations (gradient norm {grad_norm:.3e})")]
    MaxIters { max_iters: usize, grad_norm: f64 },
    #[error("tangent tensor fails the positivity probe (rayleigh quotient {0:.3e})")]
    IndefiniteTangent(f64),
    #[error("linear solve failed: {0}")]
    LinearSolve(String),
    #[error("initial field violates the dirichlet data (dof {dof}, mismatch {mismatch:.3e})")]
    BadInitial { dof: usize, mismatch: f64 },
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Mesh(#[from] MeshError),
}

/// Errors from the diagnostics layer.
#[derive(Error, Debug, Clone, PartialEq)]
pub enum DiagError {
    #[error("need at least {needed} radii, got {got}")]
    InsufficientRadii { needed: usize, got: usize },
    #[error("all ball masses vanish; decay fit is undefined")]
    DegenerateFit,
    #[error(transparent)]
    Mesh(#[from] MeshError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Solve(#[from] SolveError),
}
