//! Empirical Caccioppoli constants: evaluates each side of the reverse
//! Poincare inequality for V(e(u)) with unit constants and reports the
//! constant the left side actually needs. Nothing is asserted here; the
//! inequalities carry unnamed constants.

use super::excess::{grad_v_field, grad_v_squared_ball_integral, v_values};
use crate::error::{DiagError, MeshError, ModelError};
use crate::fem::{ball_mean, Ball, DiscreteField, ProblemSpec};
use crate::tensor::{lambda0, ptilde};
use serde::Serialize;

#[derive(Debug, Clone, Serialize)]
pub struct CaccioppoliReport {
    pub center: Vec<f64>,
    pub radius: f64,
    pub lambda: f64,
    /// Integral of |grad V(e(u))|^2 over the inner ball.
    pub lhs: f64,
    /// Named right-hand-side terms with unit constants.
    pub rhs_terms: Vec<(String, f64)>,
    /// lhs / sum(rhs_terms), zero when both sides vanish.
    pub empirical_c: f64,
}

/// Evaluates the Caccioppoli quotient on B_r vs B_2r at the given center.
/// For p >= 2 the admissible lambda range is [lambda0, 1]; for p < 2 any
/// lambda >= 0 is admissible.
pub fn caccioppoli_report(
    field: &DiscreteField,
    spec: &ProblemSpec,
    center: &[f64],
    r: f64,
    lambda: f64,
) -> Result<CaccioppoliReport, DiagError> {
    let params = &spec.params;
    let mesh = &spec.mesh;
    let qs = spec.quadrature();
    let inner = Ball::new(mesh, center, r).map_err(MeshError::from)?;
    let outer = Ball::new(mesh, center, 2.0 * r).map_err(MeshError::from)?;

    let gradv = grad_v_field(field, params);
    let lhs = grad_v_squared_ball_integral(field, &gradv, qs, &inner);

    let vs = v_values(field, params, qs);
    let v_mean = ball_mean(qs, &vs, &outer);
    let mut v_osc = 0.0;
    let mut v_mass = 0.0;
    for q in 0..qs.len() {
        if outer.contains(&qs.point(q)) {
            v_osc += qs.weights[q] * (vs[q] - v_mean).norm_sq();
            v_mass += qs.weights[q] * vs[q].norm_sq();
        }
    }

    let kappa = params.kappa;
    let dim = mesh.dim;
    let rule_pts = qs.rule.npoints();
    let mut terms: Vec<(String, f64)> = Vec::new();
    terms.push(("oscillation".into(), (1.0 + kappa) / (r * r) * v_osc));

    if params.p >= 2.0 {
        let l0 = lambda0(params).map_err(ModelError::from)?;
        if !(lambda >= l0 && lambda <= 1.0) {
            return Err(DiagError::Model(ModelError::DomainError {
                lambda,
                lo: l0,
                hi: 1.0,
            }));
        }
        let pt = ptilde(lambda.max(l0 + 1e-12).min(1.0), params).map_err(ModelError::from)?;
        // int over B_2r of |u-g|^ptilde + |grad(u-g)|^(lambda p)
        let mut fid = 0.0;
        for q in 0..qs.len() {
            if !outer.contains(&qs.point(q)) {
                continue;
            }
            let e = qs.elem[q];
            let bary = qs.rule.point(q % rule_pts);
            let u = field.value_at(e, bary);
            let g = spec.g.value_at(e, bary);
            let mut diff2 = 0.0;
            for a in 0..dim {
                diff2 += (u[a] - g[a]) * (u[a] - g[a]);
            }
            let gu = field.gradient(e);
            let gg = spec.g.gradient(e);
            let mut grad2 = 0.0;
            for k in 0..dim * dim {
                grad2 += (gu[k] - gg[k]) * (gu[k] - gg[k]);
            }
            fid += qs.weights[q]
                * (diff2.powf(0.5 * pt) + grad2.powf(0.5 * lambda * params.p));
        }
        terms.push((
            "fidelity".into(),
            kappa * r.powf(2.0 / (params.p - 1.0)) * fid,
        ));
    } else {
        if lambda < 0.0 {
            return Err(DiagError::Model(ModelError::DomainError {
                lambda,
                lo: 0.0,
                hi: f64::INFINITY,
            }));
        }
        let mut fid = 0.0;
        for q in 0..qs.len() {
            if !outer.contains(&qs.point(q)) {
                continue;
            }
            let e = qs.elem[q];
            let bary = qs.rule.point(q % rule_pts);
            let u = field.value_at(e, bary);
            let g = spec.g.value_at(e, bary);
            let mut diff2 = 0.0;
            for a in 0..dim {
                diff2 += (u[a] - g[a]) * (u[a] - g[a]);
            }
            fid += qs.weights[q] * diff2.powf(0.5 * params.p);
        }
        terms.push((
            "fidelity".into(),
            kappa * r.powf(lambda * params.p / (params.p - 1.0)) * fid,
        ));
        let degenerate_weight = kappa / r.powf(2.0 * lambda * params.p / (2.0 - params.p));
        terms.push(("v_mass".into(), degenerate_weight * v_mass));
        terms.push((
            "shift_floor".into(),
            degenerate_weight * params.mu.powf(0.5 * params.p) * r.powi(dim as i32),
        ));
    }

    let total: f64 = terms.iter().map(|t| t.1).sum();
    // oscillations below ~eps^2 of the V-mass are assembly roundoff; the
    // quotient of two noise terms is meaningless, so report zero there
    let noise_floor = 1e-26 * ((1.0 + kappa) / (r * r) * v_mass + 1e-300);
    let empirical_c = if total > noise_floor { lhs / total } else { 0.0 };
    Ok(CaccioppoliReport {
        center: center.to_vec(),
        radius: r,
        lambda,
        lhs,
        rhs_terms: terms,
        empirical_c,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fem::{build_mesh, DirichletBc};
    use crate::tensor::{ElasticTensor, GrowthParams};
    use std::sync::Arc;

    fn make_spec(n: usize, p: f64, mu: f64, kappa: f64) -> ProblemSpec {
        let mesh = Arc::new(build_mesh(2, &[0.0, 0.0], &[1.0, 1.0], n).unwrap());
        let params = GrowthParams::new(p, mu, kappa, 2).unwrap();
        let g = DiscreteField::interpolate(mesh.clone(), |x| {
            vec![0.1 * (3.0 * x[0]).sin(), 0.05 * x[1]]
        });
        let bc = DirichletBc::none(&mesh);
        ProblemSpec::new(mesh, params, ElasticTensor::identity(2), g, bc, None, 2).unwrap()
    }

    #[test]
    fn affine_autonomous_field_reports_zero() {
        let spec = make_spec(24, 3.0, 1.0, 0.0);
        let u = DiscreteField::affine(spec.mesh.clone(), &[0.3, 0.0, 0.0, -0.1]);
        let rep = caccioppoli_report(&u, &spec, &[0.5, 0.5], 0.2, 1.0).unwrap();
        assert!(rep.lhs < 1e-20);
        assert_eq!(rep.empirical_c, 0.0);
    }

    #[test]
    fn subquadratic_report_has_four_nonnegative_terms() {
        let spec = make_spec(24, 1.5, 1.0, 1.0);
        let u = DiscreteField::interpolate(spec.mesh.clone(), |x| {
            vec![0.2 * (2.0 * x[0]).sin() * x[1], 0.1 * x[0]]
        });
        let rep = caccioppoli_report(&u, &spec, &[0.5, 0.5], 0.2, 0.0).unwrap();
        assert_eq!(rep.rhs_terms.len(), 4);
        assert!(rep.rhs_terms.iter().all(|t| t.1 >= 0.0), "{:?}", rep.rhs_terms);
        assert!(rep.empirical_c.is_finite());
    }

    #[test]
    fn superquadratic_lambda_range_enforced() {
        let spec = make_spec(24, 3.0, 1.0, 1.0);
        let u = DiscreteField::zeros(spec.mesh.clone());
        // lambda0(p=3, n=2) = 1/(p-1) = 0.5
        assert!(caccioppoli_report(&u, &spec, &[0.5, 0.5], 0.2, 0.3).is_err());
        assert!(caccioppoli_report(&u, &spec, &[0.5, 0.5], 0.2, 1.0).is_ok());
        let spec = make_spec(24, 1.5, 1.0, 1.0);
        assert!(caccioppoli_report(&u, &spec, &[0.5, 0.5], 0.2, -0.5).is_err());
    }

    #[test]
    fn outer_ball_must_fit() {
        let spec = make_spec(24, 2.0, 0.0, 0.0);
        let u = DiscreteField::zeros(spec.mesh.clone());
        // r fits but 2r does not
        assert!(matches!(
            caccioppoli_report(&u, &spec, &[0.5, 0.5], 0.3, 1.0),
            Err(DiagError::Mesh(MeshError::BallTooSmall { .. }))
        ));
    }
}
