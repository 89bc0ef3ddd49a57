//! Frozen-tangent linear solves and the autonomous comparison solve on a
//! ball (minimize the pure elastic energy with the current solution as
//! boundary data outside the ball).

use super::linear::{CsrMatrix, SpdSolver};
use super::newton::{minimize, SolverOptions, Trace};
use crate::error::{ModelError, SolveError};
use crate::fem::{assembly, Ball, DirichletBc, DiscreteField, ProblemSpec};
use crate::tensor::{sym_basis_probe, Tensor4};

/// Solves the linear system sum <A e(u), e(phi)> = int <load, phi> with the
/// given Dirichlet data. The tangent must be positive on symmetric matrices
/// (probed on a fixed deterministic sample before assembling).
pub fn solve_linearized(
    spec: &ProblemSpec,
    frozen_tangent: &Tensor4,
    load: Option<&DiscreteField>,
    bc: &DirichletBc,
) -> Result<DiscreteField, SolveError> {
    let probe = sym_basis_probe(frozen_tangent);
    if probe <= 0.0 {
        return Err(SolveError::IndefiniteTangent(probe));
    }
    let (trips, mut rhs) = assembly::assemble_linear_system(spec, frozen_tangent, load, bc)?;
    let lifted = assembly::lift_dirichlet_rhs(spec, frozen_tangent, bc, &mut rhs)?;
    let csr = CsrMatrix::from_triplets(&trips);
    let correction = SpdSolver::new(csr)?.solve(&rhs)?;
    let mut out = lifted;
    for (v, c) in out.values.iter_mut().zip(correction.iter()) {
        *v += c;
    }
    Ok(out)
}

/// Minimizes the autonomous energy int f_mu(e(v)) over fields that agree
/// with `u` on every node whose star is not fully inside the ball (so the
/// correction is supported on elements whose quadrature points all lie in
/// the ball; ball means of the strain are then preserved exactly).
pub fn solve_autonomous_comparison(
    u: &DiscreteField,
    ball: &Ball,
    spec: &ProblemSpec,
    opts: &SolverOptions,
) -> Result<DiscreteField, SolveError> {
    if spec.params.mu <= 0.0 {
        return Err(SolveError::Model(ModelError::RequiresPositiveMu));
    }
    let mesh = &spec.mesh;
    let qs = spec.quadrature();
    let rule_pts = qs.rule.npoints();
    let mut frozen = vec![false; mesh.num_nodes()];
    for e in 0..mesh.num_elems() {
        let mut fully_inside = true;
        for q in 0..rule_pts {
            if !ball.contains(&qs.point(e * rule_pts + q)) {
                fully_inside = false;
                break;
            }
        }
        if !fully_inside {
            for &node in mesh.elem(e) {
                frozen[node] = true;
            }
        }
    }
    let bc = DirichletBc::freeze_nodes(
        u,
        (0..mesh.num_nodes()).filter(|&n| frozen[n]),
    );
    let auto = spec.autonomous().with_dirichlet(bc);
    let sol = minimize(&auto, u, opts, &mut Trace::none())?;
    Ok(sol.field)
}

/// The autonomous energy restricted to the ball by quadrature-point
/// inclusion.
pub fn ball_energy(
    field: &DiscreteField,
    spec: &ProblemSpec,
    ball: &Ball,
) -> Result<f64, SolveError> {
    let qs = spec.quadrature();
    let rule_pts = qs.rule.npoints();
    let params = spec.params.autonomous();
    let mut acc = 0.0;
    for e in 0..spec.mesh.num_elems() {
        let strain = field.sym_gradient(e);
        let density = crate::tensor::energy_density(&strain, &params, &spec.elastic);
        for q in 0..rule_pts {
            let idx = e * rule_pts + q;
            if ball.contains(&qs.point(idx)) {
                acc += qs.weights[idx] * density;
            }
        }
    }
    Ok(acc)
}
