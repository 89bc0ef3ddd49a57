//! The energy density f_mu, its first two derivatives, the nonlinear
//! potential V_mu, and the second-order blow-up rescaling of f_mu around a
//! base strain.

use super::{pow_guarded, ElasticTensor, GrowthParams, SymMatrix, Tensor4};
use crate::error::ModelError;

/// f_mu(xi) = ((C xi . xi + mu)^(p/2) - mu^(p/2)) / p.
pub fn energy_density(xi: &SymMatrix, params: &GrowthParams, c: &ElasticTensor) -> f64 {
    let base = c.quad(xi) + params.mu;
    (pow_guarded(base, 0.5 * params.p) - pow_guarded(params.mu, 0.5 * params.p)) / params.p
}

/// grad f_mu(xi) = (C xi . xi + mu)^(p/2 - 1) C xi, with grad f_0(0) = 0.
pub fn stress(xi: &SymMatrix, params: &GrowthParams, c: &ElasticTensor) -> SymMatrix {
    let q = c.quad(xi);
    let base = q + params.mu;
    if base < 1e-300 {
        return SymMatrix::zeros(xi.dim());
    }
    c.apply(xi).scale(pow_guarded(base, 0.5 * params.p - 1.0))
}

/// Second derivative of f_mu:
/// (C xi . xi + mu)^(p/2 - 2) ((p - 2) C xi (x) C xi + (C xi . xi + mu) C).
///
/// Undefined exactly when p < 2, mu = 0 and xi = 0 (f_0 is only C^1 there);
/// for p > 2 that corner is the zero tensor and for p = 2 it is C itself.
pub fn tangent(
    xi: &SymMatrix,
    params: &GrowthParams,
    c: &ElasticTensor,
) -> Result<Tensor4, ModelError> {
    let q = c.quad(xi);
    let base = q + params.mu;
    if base < 1e-300 {
        if params.p > 2.0 {
            return Ok(Tensor4::zeros(xi.dim()));
        }
        if params.p == 2.0 {
            return Ok(c.tensor().clone());
        }
        return Err(ModelError::UndefinedHessian);
    }
    let cxi = c.apply(xi);
    let rank_one = Tensor4::outer(&cxi, &cxi).scale(params.p - 2.0);
    let iso = c.tensor().scale(base);
    Ok(rank_one.add(&iso).scale(pow_guarded(base, 0.5 * params.p - 2.0)))
}

/// Scalar factor of the V_mu map: (mu + s2)^((p-2)/4) where s2 = |xi|^2,
/// with the V_0(0) = 0 convention.
#[inline]
pub fn v_scale_factor(norm_sq: f64, params: &GrowthParams) -> f64 {
    if norm_sq == 0.0 && params.mu == 0.0 {
        return 0.0;
    }
    pow_guarded(params.mu + norm_sq, 0.25 * (params.p - 2.0))
}

/// V_mu(xi) = (mu + |xi|^2)^((p-2)/4) xi.
pub fn v_transform(xi: &SymMatrix, params: &GrowthParams) -> SymMatrix {
    xi.scale(v_scale_factor(xi.norm_sq(), params))
}

/// Numerical inverse of V_mu (bisection + Newton on the radial profile).
/// The profile m(s) = (mu + s^2)^((p-2)/4) s is strictly increasing for all
/// p > 1, mu >= 0.
pub fn v_inverse(eta: &SymMatrix, params: &GrowthParams) -> SymMatrix {
    let target = eta.norm();
    if target == 0.0 {
        return SymMatrix::zeros(eta.dim());
    }
    let profile = |s: f64| pow_guarded(params.mu + s * s, 0.25 * (params.p - 2.0)) * s;
    // bracket
    let mut hi = 1.0_f64.max(target);
    while profile(hi) < target {
        hi *= 2.0;
    }
    let mut lo = 0.0;
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if profile(mid) < target {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo <= 1e-15 * hi {
            break;
        }
    }
    let s = 0.5 * (lo + hi);
    let factor = pow_guarded(params.mu + s * s, 0.25 * (params.p - 2.0));
    if factor == 0.0 {
        return SymMatrix::zeros(eta.dim());
    }
    eta.scale(1.0 / factor)
}

/// Base strain, blow-up scale, and limiting strain of the second-order
/// rescaling of f_mu.
#[derive(Debug, Clone)]
pub struct BlowupParams {
    pub base_strain: SymMatrix,
    pub scale: f64,
    pub limit_strain: SymMatrix,
}

impl BlowupParams {
    pub fn new(base_strain: SymMatrix, scale: f64, limit_strain: SymMatrix) -> Self {
        assert!(scale > 0.0, "blow-up scale must be positive");
        Self { base_strain, scale, limit_strain }
    }
}

/// F_h(xi) = (f_mu(A_h + l_h xi) - f_mu(A_h) - l_h <grad f_mu(A_h), xi>) / l_h^2.
/// Requires mu > 0 (the expansion needs C^2 smoothness at the base strain).
pub fn blowup_integrand(
    xi: &SymMatrix,
    bp: &BlowupParams,
    params: &GrowthParams,
    c: &ElasticTensor,
) -> Result<f64, ModelError> {
    blowup_integrand_with_noise(xi, bp, params, c).map(|(v, _)| v)
}

/// F_h together with an estimate of its floating-point cancellation noise
/// (the Taylor remainder is a difference of O(f) quantities divided by the
/// squared scale, so for tiny scales the roundoff can dominate the value).
pub fn blowup_integrand_with_noise(
    xi: &SymMatrix,
    bp: &BlowupParams,
    params: &GrowthParams,
    c: &ElasticTensor,
) -> Result<(f64, f64), ModelError> {
    if params.mu <= 0.0 {
        return Err(ModelError::RequiresPositiveMu);
    }
    let l = bp.scale;
    let shifted = bp.base_strain + xi.scale(l);
    let f_shift = energy_density(&shifted, params, c);
    let f_base = energy_density(&bp.base_strain, params, c);
    let lin = stress(&bp.base_strain, params, c).dot(xi);
    let value = (f_shift - f_base - l * lin) / (l * l);
    let noise =
        f64::EPSILON * (f_shift.abs() + f_base.abs() + (l * lin).abs()) / (l * l);
    Ok((value, noise))
}

/// Quadratic limit F_inf(xi) = <grad^2 f_mu(A_inf) xi, xi> / 2.
pub fn blowup_limit(
    xi: &SymMatrix,
    bp: &BlowupParams,
    params: &GrowthParams,
    c: &ElasticTensor,
) -> Result<f64, ModelError> {
    if params.mu <= 0.0 {
        return Err(ModelError::RequiresPositiveMu);
    }
    let t = tangent(&bp.limit_strain, params, c)?;
    Ok(0.5 * t.quad(xi, xi))
}
