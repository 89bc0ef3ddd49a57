//! Excess (mean-square V-oscillation of the strain on balls), its decay
//! table across shrinking radii, power-law fits of the V-mass, and the
//! discrete gradient of the V-field.

use crate::error::{DiagError, MeshError};
use crate::fem::{ball_mean, Ball, DiscreteField, QuadratureSet};
use crate::tensor::{v_transform, GrowthParams, SymMatrix};
use serde::Serialize;

/// Per-quadrature-point strains of a P1 field (constant per element).
pub fn strain_values(field: &DiscreteField, qs: &QuadratureSet) -> Vec<SymMatrix> {
    let mut per_elem = Vec::with_capacity(field.mesh.num_elems());
    for e in 0..field.mesh.num_elems() {
        per_elem.push(field.sym_gradient(e));
    }
    qs.elem.iter().map(|&e| per_elem[e]).collect()
}

/// Per-quadrature-point V(e(u)).
pub fn v_values(field: &DiscreteField, params: &GrowthParams, qs: &QuadratureSet) -> Vec<SymMatrix> {
    let mut per_elem = Vec::with_capacity(field.mesh.num_elems());
    for e in 0..field.mesh.num_elems() {
        per_elem.push(v_transform(&field.sym_gradient(e), params));
    }
    qs.elem.iter().map(|&e| per_elem[e]).collect()
}

/// Excess on a ball: the mean of |V(e(u) - (e(u))_B)|^2.
pub fn excess(
    field: &DiscreteField,
    params: &GrowthParams,
    qs: &QuadratureSet,
    ball: &Ball,
) -> f64 {
    let strains = strain_values(field, qs);
    excess_from_strains(&strains, params, qs, ball)
}

pub(crate) fn excess_from_strains(
    strains: &[SymMatrix],
    params: &GrowthParams,
    qs: &QuadratureSet,
    ball: &Ball,
) -> f64 {
    let mean = ball_mean(qs, strains, ball);
    let mut acc = 0.0;
    let mut measure = 0.0;
    for q in 0..qs.len() {
        if ball.contains(&qs.point(q)) {
            acc += qs.weights[q] * v_transform(&(strains[q] - mean), params).norm_sq();
            measure += qs.weights[q];
        }
    }
    if measure > 0.0 {
        acc / measure
    } else {
        0.0
    }
}

/// Mean V-oscillation around the mean of V (the Campanato-type quantity of
/// the singular-set flags; differs from the excess, which recenters the
/// strain before applying V).
pub fn v_oscillation(
    field: &DiscreteField,
    params: &GrowthParams,
    qs: &QuadratureSet,
    ball: &Ball,
) -> f64 {
    let vs = v_values(field, params, qs);
    let mean = ball_mean(qs, &vs, ball);
    let mut acc = 0.0;
    let mut measure = 0.0;
    for q in 0..qs.len() {
        if ball.contains(&qs.point(q)) {
            acc += qs.weights[q] * (vs[q] - mean).norm_sq();
            measure += qs.weights[q];
        }
    }
    if measure > 0.0 {
        acc / measure
    } else {
        0.0
    }
}

/// Mean of |V(e(u)) - V((e(u))_B)|^2: dominated by the oscillation around
/// the V-mean (mean minimality), and dominating it up to a constant.
pub fn v_distance_to_v_of_mean_strain(
    field: &DiscreteField,
    params: &GrowthParams,
    qs: &QuadratureSet,
    ball: &Ball,
) -> f64 {
    let strains = strain_values(field, qs);
    let vs = v_values(field, params, qs);
    let v_of_mean = v_transform(&ball_mean(qs, &strains, ball), params);
    let mut acc = 0.0;
    let mut measure = 0.0;
    for q in 0..qs.len() {
        if ball.contains(&qs.point(q)) {
            acc += qs.weights[q] * (vs[q] - v_of_mean).norm_sq();
            measure += qs.weights[q];
        }
    }
    if measure > 0.0 {
        acc / measure
    } else {
        0.0
    }
}

/// Excess across a geometric sweep of radii with per-level contraction
/// ratios, flagged against a user decay constant.
#[derive(Debug, Clone, Serialize)]
pub struct ExcessTable {
    pub center: Vec<f64>,
    pub tau: f64,
    pub radii: Vec<f64>,
    pub excess: Vec<f64>,
    pub mean_strain: Vec<SymMatrix>,
    /// ratios[k] = excess[k+1] / excess[k].
    pub ratios: Vec<f64>,
    /// Levels whose ratio exceeds decay_constant * tau^2.
    pub flagged: Vec<bool>,
    pub decay_constant: f64,
}

pub fn excess_decay_table(
    field: &DiscreteField,
    params: &GrowthParams,
    qs: &QuadratureSet,
    center: &[f64],
    r0: f64,
    tau: f64,
    levels: usize,
    decay_constant: f64,
) -> Result<ExcessTable, DiagError> {
    assert!(tau > 0.0 && tau < 1.0, "tau must shrink the radius");
    let mesh = &field.mesh;
    let strains = strain_values(field, qs);
    let mut radii = Vec::with_capacity(levels);
    let mut exc = Vec::with_capacity(levels);
    let mut means = Vec::with_capacity(levels);
    for k in 0..levels {
        let r = r0 * tau.powi(k as i32);
        let ball = Ball::new(mesh, center, r).map_err(MeshError::from)?;
        radii.push(r);
        exc.push(excess_from_strains(&strains, params, qs, &ball));
        means.push(ball_mean(qs, &strains, &ball));
    }
    let mut ratios = Vec::new();
    let mut flagged = Vec::new();
    for k in 0..levels.saturating_sub(1) {
        let ratio = if exc[k] > 0.0 { exc[k + 1] / exc[k] } else { 0.0 };
        ratios.push(ratio);
        flagged.push(ratio > decay_constant * tau * tau);
    }
    Ok(ExcessTable {
        center: center.to_vec(),
        tau,
        radii,
        excess: exc,
        mean_strain: means,
        ratios,
        flagged,
        decay_constant,
    })
}

/// Log-log least-squares fit of the ball mass of |V(e(u))|^2.
#[derive(Debug, Clone, Serialize)]
pub struct DecayFit {
    pub center: Vec<f64>,
    pub radii: Vec<f64>,
    /// Integral of |V|^2 over each ball.
    pub mass: Vec<f64>,
    pub fitted_gamma: f64,
    /// Root-mean-square residual of the fit in log space.
    pub residual: f64,
}

pub fn decay_exponent(
    field: &DiscreteField,
    params: &GrowthParams,
    qs: &QuadratureSet,
    center: &[f64],
    radii: &[f64],
) -> Result<DecayFit, DiagError> {
    if radii.len() < 3 {
        return Err(DiagError::InsufficientRadii { needed: 3, got: radii.len() });
    }
    let mesh = &field.mesh;
    let vs = v_values(field, params, qs);
    let v2: Vec<f64> = vs.iter().map(|v| v.norm_sq()).collect();
    let mut mass = Vec::with_capacity(radii.len());
    for &r in radii {
        let ball = Ball::new(mesh, center, r).map_err(MeshError::from)?;
        let mut acc = 0.0;
        for q in 0..qs.len() {
            if ball.contains(&qs.point(q)) {
                acc += qs.weights[q] * v2[q];
            }
        }
        mass.push(acc);
    }
    let pts: Vec<(f64, f64)> = radii
        .iter()
        .zip(&mass)
        .filter(|(_, &m)| m > 0.0)
        .map(|(&r, &m)| (r.ln(), m.ln()))
        .collect();
    if pts.len() < 2 {
        return Err(DiagError::DegenerateFit);
    }
    let n = pts.len() as f64;
    let xbar = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let ybar = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = pts.iter().map(|p| (p.0 - xbar) * (p.0 - xbar)).sum();
    let sxy: f64 = pts.iter().map(|p| (p.0 - xbar) * (p.1 - ybar)).sum();
    let gamma = sxy / sxx;
    let intercept = ybar - gamma * xbar;
    let ss: f64 = pts.iter().map(|p| (p.1 - gamma * p.0 - intercept).powi(2)).sum();
    Ok(DecayFit {
        center: center.to_vec(),
        radii: radii.to_vec(),
        mass,
        fitted_gamma: gamma,
        residual: (ss / n).sqrt(),
    })
}

/// Discrete gradient magnitude of the per-element V values: face jumps
/// divided by centroid distances, lumped to nodes as
/// sqrt(dim * mean of squared directional quotients).
#[derive(Debug, Clone, Serialize)]
pub struct GradVField {
    /// Quotient per interior face (aligned with mesh.faces).
    pub face_values: Vec<f64>,
    /// Lumped gradient magnitude per node.
    pub node_values: Vec<f64>,
}

pub fn grad_v_field(field: &DiscreteField, params: &GrowthParams) -> GradVField {
    let mesh = &field.mesh;
    let dim = mesh.dim;
    let mut v_per_elem = Vec::with_capacity(mesh.num_elems());
    for e in 0..mesh.num_elems() {
        v_per_elem.push(v_transform(&field.sym_gradient(e), params));
    }
    let mut face_values = Vec::with_capacity(mesh.faces.len());
    let mut node_acc = vec![0.0; mesh.num_nodes()];
    let mut node_count = vec![0usize; mesh.num_nodes()];
    for f in &mesh.faces {
        let q = (v_per_elem[f.left] - v_per_elem[f.right]).norm() / f.centroid_dist;
        face_values.push(q);
        for &node in &f.nodes[..f.node_count] {
            node_acc[node] += q * q;
            node_count[node] += 1;
        }
    }
    let node_values = node_acc
        .iter()
        .zip(&node_count)
        .map(|(&s, &c)| if c > 0 { (dim as f64 * s / c as f64).sqrt() } else { 0.0 })
        .collect();
    GradVField { face_values, node_values }
}

/// Integral over the ball of the squared P1 interpolant of the nodal
/// |grad V| magnitudes.
pub fn grad_v_squared_ball_integral(
    field: &DiscreteField,
    gradv: &GradVField,
    qs: &QuadratureSet,
    ball: &Ball,
) -> f64 {
    let mesh = &field.mesh;
    let rule_pts = qs.rule.npoints();
    let mut acc = 0.0;
    for q in 0..qs.len() {
        if !ball.contains(&qs.point(q)) {
            continue;
        }
        let e = qs.elem[q];
        let bary = qs.rule.point(q % rule_pts);
        let mut val = 0.0;
        for (v, &node) in mesh.elem(e).iter().enumerate() {
            val += bary[v] * gradv.node_values[node];
        }
        acc += qs.weights[q] * val * val;
    }
    acc
}
