//! Blow-up linearization experiment: solve the nonlinear autonomous problem
//! with boundary data A x + lambda * perturbation for a shrinking sequence
//! of lambdas, rescale, and compare against the solution of the linear
//! system with the frozen tangent at A.

use crate::error::{DiagError, ModelError};
use crate::fem::{Ball, DirichletBc, DiscreteField, ProblemSpec};
use crate::solver::{minimize, solve_linearized, SolverOptions, Trace};
use crate::tensor::{tangent, v_transform, SymMatrix};
use serde::Serialize;

#[derive(Debug, Clone, Serialize)]
pub struct LinearizationReport {
    pub lambda_sequence: Vec<f64>,
    /// Ball integral of lambda^-2 |V(lambda (e(u_lambda) - e(u_inf)))|^2.
    pub rescaled_error: Vec<f64>,
    /// Free-dof residual norm of the linearized solution in its system.
    pub linear_residual: f64,
}

pub fn linearization_experiment(
    spec: &ProblemSpec,
    base_strain: &SymMatrix,
    perturbation: &DiscreteField,
    lambda_sequence: &[f64],
    ball: &Ball,
    opts: &SolverOptions,
) -> Result<LinearizationReport, DiagError> {
    let params = &spec.params;
    if params.kappa != 0.0 {
        return Err(DiagError::Model(ModelError::RequiresAutonomous(params.kappa)));
    }
    if params.mu <= 0.0 {
        return Err(DiagError::Model(ModelError::RequiresPositiveMu));
    }
    let dim = spec.mesh.dim;
    let mut flat = vec![0.0; dim * dim];
    for i in 0..dim {
        for j in 0..dim {
            flat[i * dim + j] = base_strain.get(i, j);
        }
    }
    let base_field = DiscreteField::affine(spec.mesh.clone(), &flat);

    // linearized solution with the frozen tangent at the base strain
    let frozen = tangent(base_strain, params, &spec.elastic).map_err(ModelError::from)?;
    let bc_pert =
        DirichletBc::freeze_nodes(perturbation, spec.mesh.boundary_nodes.iter().copied());
    let spec_lin = spec.with_dirichlet(bc_pert.clone());
    let u_inf = solve_linearized(&spec_lin, &frozen, None, &bc_pert)?;

    // residual of u_inf in its own system
    let linear_residual = {
        let mut res = vec![0.0; spec.mesh.num_dofs()];
        for e in 0..spec.mesh.num_elems() {
            let s = frozen.apply(&u_inf.sym_gradient(e));
            let vol = spec.mesh.volume(e);
            for (v, &node) in spec.mesh.elem(e).iter().enumerate() {
                let bg = spec.mesh.basis_grad(e, v);
                for i in 0..dim {
                    let mut acc = 0.0;
                    for j in 0..dim {
                        acc += s.get(i, j) * bg[j];
                    }
                    res[node * dim + i] += vol * acc;
                }
            }
        }
        crate::fem::free_norm(&res, &bc_pert)
    };

    let qs = spec.quadrature();
    let mut errors = Vec::with_capacity(lambda_sequence.len());
    for &lambda in lambda_sequence {
        assert!(lambda > 0.0, "lambda sequence must be positive");
        // data A x + lambda * perturbation
        let mut combined = base_field.clone();
        for (c, p) in combined.values.iter_mut().zip(perturbation.values.iter()) {
            *c += lambda * p;
        }
        let bc = DirichletBc::freeze_nodes(&combined, spec.mesh.boundary_nodes.iter().copied());
        let staged = spec.with_dirichlet(bc);
        let sol = minimize(&staged, &combined, opts, &mut Trace::none())?;

        // u_lambda = (solution - A x) / lambda, compared to u_inf at the
        // strain level inside the ball
        let mut err = 0.0;
        for e in 0..spec.mesh.num_elems() {
            let e_sol = sol.field.sym_gradient(e);
            let e_base = base_field.sym_gradient(e);
            let e_inf = u_inf.sym_gradient(e);
            // lambda * (e(u_lambda) - e(u_inf)) = e(sol) - e(base) - lambda e(u_inf)
            let diff = e_sol - e_base - e_inf.scale(lambda);
            let density = v_transform(&diff, params).norm_sq() / (lambda * lambda);
            let rule_pts = qs.rule.npoints();
            for q in 0..rule_pts {
                let idx = e * rule_pts + q;
                if ball.contains(&qs.point(idx)) {
                    err += qs.weights[idx] * density;
                }
            }
        }
        errors.push(err);
    }

    Ok(LinearizationReport {
        lambda_sequence: lambda_sequence.to_vec(),
        rescaled_error: errors,
        linear_residual,
    })
}
