//! Structured-mesh P1 finite elements: meshes, nodal fields, quadrature,
//! energy/gradient/Hessian assembly, and ball averages.

pub mod assembly;
pub mod field;
pub mod mesh;
pub mod problem;
pub mod quad;

pub use assembly::{
    assemble_energy, assemble_gradient, assemble_hessian, assemble_linear_system, free_norm,
    split_dirichlet, Triplets,
};
pub use field::{difference_quotient, DiscreteField};
pub use mesh::{build_mesh, InteriorFace, Mesh, MeshDescriptor};
pub use problem::{
    ball_integral, ball_mean, ball_measure, Ball, DirichletBc, ProblemSpec, QuadValue,
    BALL_GUARD_FACTOR,
};
pub use quad::{simplex_rule, QuadratureSet, SimplexRule};
