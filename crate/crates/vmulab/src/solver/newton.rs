//! Damped Newton minimization with Armijo backtracking, a Levenberg-style
//! diagonal shift fallback, and continuation in the jump-penalty level for
//! the degenerate sub-quadratic regime (p < 2, mu = 0), where the energy is
//! only C^1 and each finite penalty stage supplies a usable Newton model.

use super::linear::{CsrMatrix, SpdSolver};
use crate::error::{ModelError, SolveError};
use crate::fem::{
    assemble_energy, assemble_gradient, assemble_hessian, free_norm, DiscreteField, ProblemSpec,
};
use std::io::Write;

#[derive(Debug, Clone)]
pub struct SolverOptions {
    /// Free-dof gradient norm threshold.
    pub grad_tol: f64,
    pub max_iters: usize,
    /// Backtracking shrink factor, in (0, 1).
    pub ls_shrink: f64,
    /// Armijo sufficient-decrease constant, in (0, 0.5].
    pub ls_decrease: f64,
    /// Increasing penalty levels for the degenerate continuation; infinity
    /// means penalty off.
    pub l_schedule: Vec<f64>,
    /// Smallest diagonal shift tried when a factorization fails.
    pub hessian_shift_floor: f64,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self {
            grad_tol: 1e-10,
            max_iters: 200,
            ls_shrink: 0.5,
            ls_decrease: 1e-4,
            l_schedule: vec![1.0, 10.0, 100.0, 1000.0, f64::INFINITY],
            hessian_shift_floor: 1e-12,
        }
    }
}

impl SolverOptions {
    pub fn validate(&self) {
        assert!(self.grad_tol > 0.0);
        assert!(self.ls_shrink > 0.0 && self.ls_shrink < 1.0);
        assert!(self.ls_decrease > 0.0 && self.ls_decrease <= 0.5);
    }
}

#[derive(Debug, Clone)]
pub struct Solution {
    pub field: DiscreteField,
    pub iterations: usize,
    pub final_grad_norm: f64,
    pub energy: f64,
    pub converged: bool,
    /// (penalty level, minimized energy) along the continuation; a single
    /// entry with level = infinity for the smooth direct path.
    pub l_path_energies: Vec<(f64, f64)>,
}

/// Per-iteration trace sink (CSV rows: iteration,penalty_level,energy,
/// grad_norm,step).
pub struct Trace<'a> {
    sink: Option<&'a mut dyn Write>,
}

impl<'a> Trace<'a> {
    pub fn none() -> Self {
        Self { sink: None }
    }

    pub fn to(sink: &'a mut dyn Write) -> Self {
        Self { sink: Some(sink) }
    }

    pub fn header(&mut self) {
        if let Some(s) = self.sink.as_mut() {
            let _ = writeln!(s, "iteration,penalty_level,energy,grad_norm,step");
        }
    }

    fn row(&mut self, it: usize, level: f64, energy: f64, gnorm: f64, step: f64) {
        if let Some(s) = self.sink.as_mut() {
            let _ = writeln!(s, "{it},{level},{energy:e},{gnorm:e},{step:e}");
        }
    }
}

fn level_label(level: Option<f64>) -> f64 {
    level.unwrap_or(f64::INFINITY)
}

struct StageOutcome {
    energy: f64,
    grad_norm: f64,
    iterations: usize,
    converged: bool,
}

/// One Newton stage on a fixed spec. Mutates the field in place. The
/// iteration counter continues across stages for the trace.
fn newton_stage(
    spec: &ProblemSpec,
    field: &mut DiscreteField,
    opts: &SolverOptions,
    trace: &mut Trace,
    iter_offset: usize,
) -> Result<StageOutcome, SolveError> {
    let bc = &spec.dirichlet;
    let label = level_label(spec.penalty_level);
    let mut energy = assemble_energy(field, spec)?;
    let mut iters = 0;
    loop {
        let grad = assemble_gradient(field, spec)?;
        let gnorm = free_norm(&grad, bc);
        if gnorm <= opts.grad_tol {
            trace.row(iter_offset + iters, label, energy, gnorm, 0.0);
            return Ok(StageOutcome { energy, grad_norm: gnorm, iterations: iters, converged: true });
        }
        if iters >= opts.max_iters {
            return Err(SolveError::MaxIters { max_iters: opts.max_iters, grad_norm: gnorm });
        }

        let trips = assemble_hessian(field, spec, bc)?;
        let mut csr = CsrMatrix::from_triplets(&trips);
        let mut rhs = vec![0.0; grad.len()];
        for (dof, &c) in bc.constrained.iter().enumerate() {
            if !c {
                rhs[dof] = -grad[dof];
            }
        }
        // factor with escalating diagonal shifts until the model is SPD and
        // produces a descent direction
        let max_diag = csr.diagonal().iter().fold(0.0_f64, |m, &d| m.max(d.abs()));
        let mut shift = 0.0;
        let mut direction: Option<Vec<f64>> = None;
        for attempt in 0..14 {
            let candidate = SpdSolver::new(csr.clone()).and_then(|s| s.solve(&rhs));
            match candidate {
                Ok(d) => {
                    let slope: f64 = d.iter().zip(&grad).map(|(a, b)| a * b).sum();
                    if slope < 0.0 && d.iter().all(|v| v.is_finite()) {
                        direction = Some(d);
                        break;
                    }
                }
                Err(_) => {}
            }
            let next_shift =
                if attempt == 0 { opts.hessian_shift_floor.max(1e-10 * max_diag) } else { shift * 10.0 };
            csr.shift_diagonal(next_shift - shift);
            shift = next_shift;
        }
        let direction = direction.ok_or(SolveError::LineSearchStalled {
            iteration: iter_offset + iters,
            grad_norm: gnorm,
        })?;
        let slope: f64 = direction.iter().zip(&grad).map(|(a, b)| a * b).sum();

        // Armijo backtracking on the true energy
        let mut step = 1.0;
        let mut accepted = false;
        let mut trial = field.clone();
        for _ in 0..60 {
            for (t, (u, d)) in trial.values.iter_mut().zip(field.values.iter().zip(&direction)) {
                *t = *u + step * *d;
            }
            let e_trial = assemble_energy(&trial, spec)?;
            if e_trial <= energy + opts.ls_decrease * step * slope {
                energy = e_trial;
                accepted = true;
                break;
            }
            step *= opts.ls_shrink;
        }
        if !accepted {
            // near the minimum the predicted decrease drops below the
            // floating-point resolution of the energy and Armijo can no
            // longer certify progress; accept the full Newton step when it
            // contracts the gradient instead
            step = 1.0;
            for (t, (u, d)) in trial.values.iter_mut().zip(field.values.iter().zip(&direction)) {
                *t = *u + *d;
            }
            let trial_grad = assemble_gradient(&trial, spec)?;
            if free_norm(&trial_grad, bc) <= 0.9 * gnorm {
                energy = assemble_energy(&trial, spec)?;
                accepted = true;
            }
        }
        if !accepted {
            return Err(SolveError::LineSearchStalled {
                iteration: iter_offset + iters,
                grad_norm: gnorm,
            });
        }
        std::mem::swap(&mut field.values, &mut trial.values);
        iters += 1;
        trace.row(iter_offset + iters, label, energy, gnorm, step);
    }
}

/// Minimizes the discrete functional. For smooth problems (mu > 0 or p >= 2
/// or an explicit penalty level) this is one Newton run; in the degenerate
/// regime (p < 2, mu = 0, no penalty) the penalty-level schedule is walked
/// with warm starts and the final field is re-polished with the penalty off
/// where the Hessian is definable.
pub fn minimize(
    spec: &ProblemSpec,
    initial: &DiscreteField,
    opts: &SolverOptions,
    trace: &mut Trace,
) -> Result<Solution, SolveError> {
    opts.validate();
    let (dof, mismatch) = spec.dirichlet.max_violation(initial);
    if mismatch > 1e-9 * (1.0 + initial.max_abs()) {
        return Err(SolveError::BadInitial { dof, mismatch });
    }
    trace.header();

    let degenerate =
        spec.params.p < 2.0 && spec.params.mu == 0.0 && spec.penalty_level.is_none();
    let mut field = initial.clone();
    spec.dirichlet.apply(&mut field);

    if !degenerate {
        let out = newton_stage(spec, &mut field, opts, trace, 0)?;
        return Ok(Solution {
            field,
            iterations: out.iterations,
            final_grad_norm: out.grad_norm,
            energy: out.energy,
            converged: out.converged,
            l_path_energies: vec![(level_label(spec.penalty_level), out.energy)],
        });
    }

    // mandatory continuation: finite levels first, then the penalty-off polish
    let mut path = Vec::new();
    let mut total_iters = 0;
    let mut last_good = field.clone();
    let mut staged_any = false;
    for &level in &opts.l_schedule {
        if !level.is_finite() {
            continue;
        }
        let staged = spec.with_penalty(Some(level));
        let out = newton_stage(&staged, &mut field, opts, trace, total_iters)?;
        total_iters += out.iterations;
        // record the stage energy without the penalty term (comparable
        // across levels and bounded below by the penalty-free minimum)
        let base_energy = assemble_energy(&field, spec)?;
        path.push((level, base_energy));
        last_good = field.clone();
        staged_any = true;
    }
    if !staged_any {
        return Err(SolveError::Model(ModelError::UndefinedHessian));
    }

    // penalty-off polish; Hessian may be undefined at isolated strains, in
    // which case the last finite-level solution is reported
    match newton_stage(spec, &mut field, opts, trace, total_iters) {
        Ok(out) => {
            total_iters += out.iterations;
            path.push((f64::INFINITY, out.energy));
            Ok(Solution {
                field,
                iterations: total_iters,
                final_grad_norm: out.grad_norm,
                energy: out.energy,
                converged: out.converged,
                l_path_energies: path,
            })
        }
        Err(SolveError::Model(ModelError::UndefinedHessian))
        | Err(SolveError::LineSearchStalled { .. }) => {
            let energy = assemble_energy(&last_good, spec)?;
            let grad = assemble_gradient(&last_good, spec)?;
            let gnorm = free_norm(&grad, &spec.dirichlet);
            path.push((f64::INFINITY, energy));
            Ok(Solution {
                field: last_good,
                iterations: total_iters,
                final_grad_norm: gnorm,
                energy,
                converged: gnorm <= opts.grad_tol,
                l_path_energies: path,
            })
        }
        Err(e) => Err(e),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fem::{build_mesh, DirichletBc, DiscreteField, ProblemSpec};
    use crate::tensor::{ElasticTensor, GrowthParams};
    use std::sync::Arc;

    fn affine_dirichlet_spec(
        n: usize,
        p: f64,
        mu: f64,
        kappa: f64,
        a: [f64; 4],
    ) -> (ProblemSpec, DiscreteField) {
        let mesh = Arc::new(build_mesh(2, &[0.0, 0.0], &[1.0, 1.0], n).unwrap());
        let params = GrowthParams::new(p, mu, kappa, 2).unwrap();
        let g = DiscreteField::zeros(mesh.clone());
        let bc = DirichletBc::on_boundary(&mesh, |x| {
            vec![a[0] * x[0] + a[1] * x[1], a[2] * x[0] + a[3] * x[1]]
        });
        let spec =
            ProblemSpec::new(mesh.clone(), params, ElasticTensor::identity(2), g, bc, None, 2)
                .unwrap();
        let mut initial = DiscreteField::zeros(mesh);
        spec.dirichlet.apply(&mut initial);
        (spec, initial)
    }

    #[test]
    fn quadratic_problem_converges_in_one_step() {
        let a = [0.4, 0.1, 0.1, -0.3];
        let (spec, initial) = affine_dirichlet_spec(6, 2.0, 0.0, 0.0, a);
        let opts = SolverOptions::default();
        let sol = minimize(&spec, &initial, &opts, &mut Trace::none()).unwrap();
        assert!(sol.converged);
        assert_eq!(sol.iterations, 1, "quadratic objective needs one Newton step");
        // constant-strain minimizer: the affine interpolant itself
        let exact = DiscreteField::affine(spec.mesh.clone(), &a);
        assert!(sol.field.max_diff(&exact) < 1e-9, "err {}", sol.field.max_diff(&exact));
        // energy = |sym A|^2 / 2 * |box|
        let sym = crate::tensor::SymMatrix::symmetrize(2, &a);
        assert!((sol.energy - 0.5 * sym.norm_sq()).abs() < 1e-9);
    }

    #[test]
    fn affine_data_is_global_minimizer_for_all_p() {
        // constant-strain fields minimize the autonomous functional for any
        // p: check the solver refuses to move off the interpolant
        for (p, mu) in [(1.5, 1.0), (3.0, 0.0), (4.0, 0.5)] {
            let a = [0.2, 0.05, 0.05, -0.1];
            let (spec, _) = affine_dirichlet_spec(4, p, mu, 0.0, a);
            let exact = DiscreteField::affine(spec.mesh.clone(), &a);
            let opts = SolverOptions::default();
            let sol = minimize(&spec, &exact, &opts, &mut Trace::none()).unwrap();
            assert!(sol.converged);
            assert!(sol.field.max_diff(&exact) < 1e-8, "p={p}");
        }
    }

    #[test]
    fn energy_is_monotone_and_bounded_by_initial() {
        let (spec, initial) = affine_dirichlet_spec(6, 3.0, 1.0, 0.0, [0.5, 0.2, 0.2, -0.4]);
        let mut csv = Vec::new();
        {
            let mut trace = Trace::to(&mut csv);
            let sol = minimize(&spec, &initial, &SolverOptions::default(), &mut trace).unwrap();
            let e0 = assemble_energy(&initial, &spec).unwrap();
            assert!(sol.energy <= e0 + 1e-12);
        }
        let text = String::from_utf8(csv).unwrap();
        let energies: Vec<f64> = text
            .lines()
            .skip(1)
            .map(|l| l.split(',').nth(2).unwrap().parse().unwrap())
            .collect();
        for w in energies.windows(2) {
            assert!(w[1] <= w[0] + 1e-12 * (1.0 + w[0].abs()), "trace not monotone: {w:?}");
        }
    }

    #[test]
    fn uniqueness_probe_two_starts_agree() {
        let mesh = Arc::new(build_mesh(2, &[0.0, 0.0], &[1.0, 1.0], 8).unwrap());
        let params = GrowthParams::new(3.0, 1.0, 1.0, 2).unwrap();
        let g = DiscreteField::interpolate(mesh.clone(), |x| {
            vec![0.2 * (3.0 * x[0]).sin() * x[1], -0.1 * x[0]]
        });
        let bc = DirichletBc::on_boundary(&mesh, |x| vec![0.1 * x[0], 0.0]);
        let spec =
            ProblemSpec::new(mesh.clone(), params, ElasticTensor::identity(2), g, bc, None, 2)
                .unwrap();
        let opts = SolverOptions { grad_tol: 1e-12, ..Default::default() };
        use rand::prelude::*;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(1234);
        let mut sols = Vec::new();
        for _ in 0..2 {
            let mut init = DiscreteField::zeros(mesh.clone());
            for v in init.values.iter_mut() {
                *v = rng.random_range(-0.5..0.5);
            }
            spec.dirichlet.apply(&mut init);
            sols.push(minimize(&spec, &init, &opts, &mut Trace::none()).unwrap());
        }
        assert!(sols[0].field.max_diff(&sols[1].field) <= 1e-6);
    }

    #[test]
    fn degenerate_subquadratic_runs_continuation() {
        // p < 2, mu = 0: the continuation path must engage and the staged
        // base energies must be non-increasing and above the final one
        let mesh = Arc::new(build_mesh(2, &[0.0, 0.0], &[1.0, 1.0], 4).unwrap());
        let params = GrowthParams::new(1.5, 0.0, 1.0, 2).unwrap();
        let g = DiscreteField::interpolate(mesh.clone(), |x| {
            vec![0.3 * (2.0 * x[1]).cos(), 0.2 * x[0] * x[0]]
        });
        let bc = DirichletBc::on_boundary(&mesh, |x| vec![0.05 * x[1], 0.05 * x[0]]);
        let spec =
            ProblemSpec::new(mesh.clone(), params, ElasticTensor::identity(2), g, bc, None, 2)
                .unwrap();
        let mut init = DiscreteField::zeros(mesh);
        spec.dirichlet.apply(&mut init);
        let opts = SolverOptions { grad_tol: 1e-8, ..Default::default() };
        let sol = minimize(&spec, &init, &opts, &mut Trace::none()).unwrap();
        assert!(sol.l_path_energies.len() >= 2);
        for w in sol.l_path_energies.windows(2) {
            assert!(w[1].1 <= w[0].1 + 1e-9 * (1.0 + w[0].1.abs()), "{:?}", sol.l_path_energies);
        }
        let final_energy = sol.l_path_energies.last().unwrap().1;
        for (_, e) in &sol.l_path_energies {
            assert!(*e >= final_energy - 1e-9 * (1.0 + final_energy.abs()));
        }
    }

    #[test]
    fn bad_initial_rejected() {
        let (spec, _) = affine_dirichlet_spec(4, 2.0, 0.0, 0.0, [1.0, 0.0, 0.0, 1.0]);
        let wrong = DiscreteField::zeros(spec.mesh.clone());
        assert!(matches!(
            minimize(&spec, &wrong, &SolverOptions::default(), &mut Trace::none()),
            Err(SolveError::BadInitial { .. })
        ));
    }
}
