//! Energy minimization: damped Newton with line search and penalty-level
//! continuation, SPD linear solves, and the frozen-tangent / autonomous
//! comparison solvers.

pub mod comparison;
pub mod linear;
pub mod newton;

pub use comparison::{ball_energy, solve_autonomous_comparison, solve_linearized};
pub use linear::{CsrMatrix, SpdSolver};
pub use newton::{minimize, Solution, SolverOptions, Trace};
