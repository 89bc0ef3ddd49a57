//! Energy comparison against the autonomous minimizer with the same
//! boundary values on a ball: V-distance vs energy gap, excess transfer,
//! and per-reference-matrix V-distances.

use super::excess::{excess, v_values};
use crate::error::{DiagError, ModelError};
use crate::fem::{ball_mean, Ball, DiscreteField, ProblemSpec};
use crate::solver::{ball_energy, solve_autonomous_comparison, SolverOptions};
use crate::tensor::{v_transform, SymMatrix};
use serde::Serialize;

#[derive(Debug, Clone, Serialize)]
pub struct ComparisonEntry {
    pub xi: SymMatrix,
    /// int_B |V(e(w)) - V(xi)|^2.
    pub lhs1: f64,
    /// int_B |V(e(u)) - V(xi)|^2.
    pub rhs1: f64,
    pub ratio: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct ComparisonReport {
    pub center: Vec<f64>,
    pub radius: f64,
    pub entries: Vec<ComparisonEntry>,
    /// int_B |V(e(u)) - V(e(w))|^2.
    pub lhs2: f64,
    /// Energy gap F0(u, B) - F0(w, B); nonnegative by minimality of w.
    pub gap2: f64,
    /// lhs2 / gap2 (zero when the gap vanishes).
    pub v_distance_over_gap: f64,
    pub excess_u: f64,
    pub excess_w: f64,
    pub excess_ratio: f64,
    /// Relative drift of the ball-mean strain between u and w.
    pub mean_strain_drift: f64,
}

pub fn comparison_report(
    field: &DiscreteField,
    spec: &ProblemSpec,
    ball: &Ball,
    xi_list: &[SymMatrix],
    opts: &SolverOptions,
) -> Result<ComparisonReport, DiagError> {
    if spec.params.mu <= 0.0 {
        return Err(DiagError::Model(ModelError::RequiresPositiveMu));
    }
    let w = solve_autonomous_comparison(field, ball, spec, opts)?;
    let qs = spec.quadrature();
    let params = &spec.params;

    let vu = v_values(field, params, qs);
    let vw = v_values(&w, params, qs);

    let mut lhs2 = 0.0;
    for q in 0..qs.len() {
        if ball.contains(&qs.point(q)) {
            lhs2 += qs.weights[q] * (vu[q] - vw[q]).norm_sq();
        }
    }

    let eu = ball_energy(field, spec, ball)?;
    let ew = ball_energy(&w, spec, ball)?;
    let gap2 = eu - ew;
    if gap2 < -1e-10 * (1.0 + eu.abs()) {
        return Err(DiagError::Solve(crate::error::SolveError::LinearSolve(format!(
            "comparison minimality violated: gap {gap2:e}"
        ))));
    }

    let mut entries = Vec::with_capacity(xi_list.len());
    for xi in xi_list {
        let vxi = v_transform(xi, params);
        let mut l = 0.0;
        let mut r = 0.0;
        for q in 0..qs.len() {
            if ball.contains(&qs.point(q)) {
                l += qs.weights[q] * (vw[q] - vxi).norm_sq();
                r += qs.weights[q] * (vu[q] - vxi).norm_sq();
            }
        }
        let ratio = if r > 0.0 { l / r } else { 0.0 };
        entries.push(ComparisonEntry { xi: *xi, lhs1: l, rhs1: r, ratio });
    }

    let excess_u = excess(field, params, qs, ball);
    let excess_w = excess(&w, params, qs, ball);

    let su = super::excess::strain_values(field, qs);
    let sw = super::excess::strain_values(&w, qs);
    let mu_mean = ball_mean(qs, &su, ball);
    let mw_mean = ball_mean(qs, &sw, ball);
    let drift = (mu_mean - mw_mean).norm() / mu_mean.norm().max(1e-300);

    Ok(ComparisonReport {
        center: ball.center[..spec.mesh.dim].to_vec(),
        radius: ball.radius,
        entries,
        lhs2,
        gap2,
        v_distance_over_gap: if gap2 > 0.0 { lhs2 / gap2 } else { 0.0 },
        excess_u,
        excess_w,
        excess_ratio: if excess_u > 0.0 { excess_w / excess_u } else { 0.0 },
        mean_strain_drift: drift,
    })
}
