//! Manufactured problems: given a smooth closed-form field u*, reverse-
//! engineer the fidelity datum g so that u* solves the Euler-Lagrange
//! system exactly, enabling convergence studies against a known solution.
//!
//! The divergence of the stress is computed by 4th-order central
//! differences of the closed-form stress (step = cell size * 1e-2); the
//! pointwise inversion of kappa p |w|^(p-2) w = v is done in closed form.

use crate::error::{DiagError, ModelError};
use crate::fem::{DirichletBc, DiscreteField, Mesh, ProblemSpec};
use crate::tensor::{stress, ElasticTensor, GrowthParams, SymMatrix};
use std::sync::Arc;

/// A smooth field given in closed form with its gradient.
pub trait SmoothField {
    fn value(&self, x: &[f64]) -> [f64; 3];
    /// Row-major gradient: grad[i][j] = d u_i / d x_j.
    fn grad(&self, x: &[f64]) -> [[f64; 3]; 3];
}

/// Closure-backed implementation.
pub struct FnField<V, G>
where
    V: Fn(&[f64]) -> [f64; 3],
    G: Fn(&[f64]) -> [[f64; 3]; 3],
{
    pub value: V,
    pub grad: G,
}

impl<V, G> SmoothField for FnField<V, G>
where
    V: Fn(&[f64]) -> [f64; 3],
    G: Fn(&[f64]) -> [[f64; 3]; 3],
{
    fn value(&self, x: &[f64]) -> [f64; 3] {
        (self.value)(x)
    }
    fn grad(&self, x: &[f64]) -> [[f64; 3]; 3] {
        (self.grad)(x)
    }
}

pub struct ManufacturedProblem {
    pub spec: ProblemSpec,
    /// Nodal interpolant of the exact solution u*.
    pub exact: DiscreteField,
}

/// Pointwise closed-form stress of the exact field.
fn stress_at(
    u_star: &dyn SmoothField,
    x: &[f64],
    params: &GrowthParams,
    elastic: &ElasticTensor,
) -> SymMatrix {
    let dim = params.dim;
    let g = u_star.grad(x);
    let mut flat = vec![0.0; dim * dim];
    for i in 0..dim {
        for j in 0..dim {
            flat[i * dim + j] = g[i][j];
        }
    }
    let strain = SymMatrix::symmetrize(dim, &flat);
    stress(&strain, params, elastic)
}

/// div(stress) by 4th-order central differences of the closed-form stress.
/// Components below the finite-difference roundoff floor are snapped to
/// zero, so constant-stress fields yield an exactly vanishing divergence
/// (the fidelity inversion has infinite slope at zero for p > 2 and would
/// otherwise amplify the cancellation noise).
fn stress_divergence(
    u_star: &dyn SmoothField,
    x: &[f64],
    step: f64,
    params: &GrowthParams,
    elastic: &ElasticTensor,
) -> [f64; 3] {
    let dim = params.dim;
    let mut v = [0.0; 3];
    let mut y = [0.0; 3];
    y[..dim].copy_from_slice(&x[..dim]);
    let mut stress_scale = 0.0_f64;
    for j in 0..dim {
        let probe = |offset: f64| -> SymMatrix {
            let mut z = y;
            z[j] += offset;
            stress_at(u_star, &z[..dim], params, elastic)
        };
        let s_p2 = probe(2.0 * step);
        let s_p1 = probe(step);
        let s_m1 = probe(-step);
        let s_m2 = probe(-2.0 * step);
        for s in [&s_p2, &s_p1, &s_m1, &s_m2] {
            stress_scale = stress_scale.max(s.norm());
        }
        for i in 0..dim {
            v[i] += (-s_p2.get(i, j) + 8.0 * s_p1.get(i, j) - 8.0 * s_m1.get(i, j)
                + s_m2.get(i, j))
                / (12.0 * step);
        }
    }
    let floor = 64.0 * f64::EPSILON * stress_scale / step;
    for c in v.iter_mut() {
        if c.abs() <= floor {
            *c = 0.0;
        }
    }
    v
}

/// Inverts kappa p |w|^(p-2) w = v: w = |z|^((2-p)/(p-1)) z with
/// z = v / (kappa p) and w = 0 where z = 0.
pub fn invert_fidelity(v: &[f64], kappa: f64, p: f64, dim: usize) -> [f64; 3] {
    let kp = kappa * p;
    let mut z = [0.0; 3];
    let mut n2 = 0.0;
    for a in 0..dim {
        z[a] = v[a] / kp;
        n2 += z[a] * z[a];
    }
    if n2 == 0.0 {
        return [0.0; 3];
    }
    let factor = n2.sqrt().powf((2.0 - p) / (p - 1.0));
    let mut w = [0.0; 3];
    for a in 0..dim {
        w[a] = factor * z[a];
    }
    w
}

/// Builds the problem whose continuous minimizer is u*.
pub fn manufactured_problem(
    u_star: &dyn SmoothField,
    params: GrowthParams,
    elastic: ElasticTensor,
    mesh: Arc<Mesh>,
    quadrature_order: usize,
) -> Result<ManufacturedProblem, DiagError> {
    if params.kappa <= 0.0 {
        return Err(DiagError::Model(ModelError::BadKappa(params.kappa)));
    }
    let dim = mesh.dim;
    let step = mesh.max_spacing() * 1e-2;
    let mut g = DiscreteField::zeros(mesh.clone());
    for node in 0..mesh.num_nodes() {
        let x = mesh.node(node);
        let v = stress_divergence(u_star, &x[..dim], step, &params, &elastic);
        let w = invert_fidelity(&v[..dim], params.kappa, params.p, dim);
        let u = u_star.value(&x[..dim]);
        for a in 0..dim {
            g.values[node * dim + a] = u[a] - w[a];
        }
    }
    let bc = DirichletBc::on_boundary(&mesh, |x| u_star.value(x)[..dim].to_vec());
    let exact = DiscreteField::interpolate(mesh.clone(), |x| u_star.value(x)[..dim].to_vec());
    let spec = ProblemSpec::new(mesh, params, elastic, g, bc, None, quadrature_order)
        .map_err(DiagError::Mesh)?;
    Ok(ManufacturedProblem { spec, exact })
}

/// The standard 2D trigonometric benchmark field (sin x1 sin x2, 0).
pub fn sine_field() -> impl SmoothField {
    FnField {
        value: |x: &[f64]| [x[0].sin() * x[1].sin(), 0.0, 0.0],
        grad: |x: &[f64]| {
            let mut g = [[0.0; 3]; 3];
            g[0][0] = x[0].cos() * x[1].sin();
            g[0][1] = x[0].sin() * x[1].cos();
            g
        },
    }
}
