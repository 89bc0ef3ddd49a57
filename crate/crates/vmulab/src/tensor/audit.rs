//! Randomized audits of the quantitative inequalities behind the model:
//! segment-integral bounds, V-potential comparisons, shifted N-function
//! doubling/Young/polar facts, mean minimality, and the blow-up sandwich.
//!
//! Audits are falsification evidence, not proofs. Inequalities that carry an
//! explicit constant or are exact identities are asserted (a failure sets
//! `violated`); inequalities stated with an unnamed constant only report the
//! empirical range of the relevant ratio.
//!
//! Sampling is deterministic: the sample stream is split into fixed-size
//! chunks, each seeded from (seed, chunk index), and chunk results are merged
//! in chunk order. Results are therefore independent of the worker count, and
//! growing the sample count extends the stream as a superset.

use super::energy::{blowup_integrand_with_noise, energy_density, stress, v_transform};
use super::nfunc::{shifted_conjugate, shifted_n_derivative, shifted_n_function};
use super::{pow_guarded, BlowupParams, ElasticTensor, GrowthParams, SymMatrix};
use crate::error::AuditError;
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

/// Tolerances for the hard (asserted) bounds. Identity-class checks allow
/// plain roundoff; quadrature-backed checks allow the quadrature budget.
const REL_TOL_IDENTITY: f64 = 1e-9;
const REL_TOL_QUADRATURE: f64 = 1e-7;
const REL_TOL_POLAR: f64 = 1e-8;

const CHUNK: usize = 4096;

/// Enumeration of the audited inequalities.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LemmaId {
    /// Two-sided bounds for the line integral of (mu + |.|^2)^gamma along a
    /// segment against the endpoint value; upper constant 8/(2 gamma + 1)
    /// asserted for gamma in (-1/2, 0).
    SegmentIntegralBounds,
    /// Two-sided Lipschitz-type equivalence for xi -> (mu + |xi|^2)^gamma xi.
    VFactorEquivalence,
    /// Exact power bounds for |V(xi)|^2 against |xi|^p (asserted).
    VNormBounds,
    /// Convexity of |V|^2 (p >= 2) and of its sub-quadratic convex surrogate
    /// profile (asserted midpoint inequality).
    VSquaredConvexity,
    /// Quasi-triangle inequality |V(xi+eta)| <= c (|V(xi)| + |V(eta)|).
    VTriangleInequality,
    /// Shifted difference comparison |V(xi) - V(eta)| vs |V(xi - eta)| under
    /// a norm cap on eta.
    VShiftComparison,
    /// The quadrature mean of V minimizes the L2 distance among constants
    /// (first half asserted; second half reported).
    MeanMinimality,
    /// Doubling bounds for phi_a and its conjugate with the exact exponents
    /// p^1.5 min/max 2 and their duals (asserted).
    DoublingBounds,
    /// Young's inequality s t <= phi_a(t) + phi_a*(s) (asserted).
    YoungInequality,
    /// Polar identity phi_a*(phi_a'(t)) = phi_a'(t) t - phi_a(t) (asserted).
    PolarIdentity,
    /// phi_{|xi|}(|xi - eta|) <= c |V(xi) - V(eta)|^2 (range only).
    ShiftedPhiVsV,
    /// Second-order Taylor gap of f_mu against |V(xi) - V(eta)|^2 (range).
    TaylorGapVsV,
    /// Blow-up integrand sandwiched by the rescaled V-norm (range; mu > 0).
    BlowupSandwich,
    /// Convexity gap of the blow-up integrand is nonnegative (asserted) and
    /// compared against the V-distance (range; mu > 0).
    BlowupConvexityGap,
}

impl LemmaId {
    pub fn all() -> &'static [LemmaId] {
        use LemmaId::*;
        &[
            SegmentIntegralBounds,
            VFactorEquivalence,
            VNormBounds,
            VSquaredConvexity,
            VTriangleInequality,
            VShiftComparison,
            MeanMinimality,
            DoublingBounds,
            YoungInequality,
            PolarIdentity,
            ShiftedPhiVsV,
            TaylorGapVsV,
            BlowupSandwich,
            BlowupConvexityGap,
        ]
    }

    pub fn tag(&self) -> &'static str {
        use LemmaId::*;
        match self {
            SegmentIntegralBounds => "segment_integral_bounds",
            VFactorEquivalence => "v_factor_equivalence",
            VNormBounds => "v_norm_bounds",
            VSquaredConvexity => "v_squared_convexity",
            VTriangleInequality => "v_triangle_inequality",
            VShiftComparison => "v_shift_comparison",
            MeanMinimality => "mean_minimality",
            DoublingBounds => "doubling_bounds",
            YoungInequality => "young_inequality",
            PolarIdentity => "polar_identity",
            ShiftedPhiVsV => "shifted_phi_vs_v",
            TaylorGapVsV => "taylor_gap_vs_v",
            BlowupSandwich => "blowup_sandwich",
            BlowupConvexityGap => "blowup_convexity_gap",
        }
    }

    /// True when the lemma requires a non-degenerate shift mu > 0.
    pub fn needs_positive_mu(&self) -> bool {
        matches!(self, LemmaId::BlowupSandwich | LemmaId::BlowupConvexityGap)
    }
}

impl fmt::Display for LemmaId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.tag())
    }
}

impl FromStr for LemmaId {
    type Err = AuditError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        LemmaId::all()
            .iter()
            .copied()
            .find(|l| l.tag() == s)
            .ok_or_else(|| AuditError::UnsupportedLemma(s.to_string()))
    }
}

/// Sampling plan for one audit run.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SampleSpec {
    pub count: usize,
    pub seed: u64,
    /// Exponent gamma for the segment/factor lemmas; None draws it per
    /// sample (half the draws land in the singular range (-1/2, 0)).
    pub gamma: Option<f64>,
    /// Norm cap L for the shifted comparison / blow-up base strains.
    pub shift_cap: f64,
    /// Magnitude scales for the Gaussian matrix draws.
    pub scales: Vec<f64>,
}

impl SampleSpec {
    pub fn new(count: usize, seed: u64) -> Self {
        Self { count, seed, gamma: None, shift_cap: 10.0, scales: vec![1e-3, 1.0, 1e3] }
    }

    pub fn with_gamma(mut self, gamma: f64) -> Self {
        self.gamma = Some(gamma);
        self
    }
}

/// Worst-case sample record kept alongside the empirical range.
#[derive(Debug, Clone, Serialize)]
pub struct AuditWitness {
    pub ratio: f64,
    pub xi: Vec<f64>,
    pub eta: Vec<f64>,
    pub scalars: BTreeMap<String, f64>,
}

/// Result of one randomized audit.
#[derive(Debug, Clone, Serialize)]
pub struct InequalityAudit {
    pub lemma_id: LemmaId,
    pub samples: usize,
    pub empirical_lo: f64,
    pub empirical_hi: f64,
    pub violated: bool,
    pub violations: usize,
    pub witness: AuditWitness,
}

/// One evaluated sample: the characteristic ratio (None when the sample is
/// degenerate for the ratio), a violation margin (> 0 means a hard bound
/// failed), and the raw sample data for witness reconstruction.
#[derive(Clone, Copy)]
struct RawSample {
    ratio: Option<f64>,
    violation: f64,
    xi: [f64; 9],
    eta: [f64; 9],
    scalars: [f64; 4],
}

impl RawSample {
    fn new() -> Self {
        Self { ratio: None, violation: 0.0, xi: [0.0; 9], eta: [0.0; 9], scalars: [0.0; 4] }
    }

    fn record_xi(&mut self, m: &SymMatrix) {
        let n = m.dim();
        for i in 0..n {
            for j in 0..n {
                self.xi[i * n + j] = m.get(i, j);
            }
        }
    }

    fn record_eta(&mut self, m: &SymMatrix) {
        let n = m.dim();
        for i in 0..n {
            for j in 0..n {
                self.eta[i * n + j] = m.get(i, j);
            }
        }
    }
}

#[derive(Clone)]
struct ChunkAccum {
    lo: f64,
    hi: f64,
    lo_sample: Option<RawSample>,
    hi_sample: Option<RawSample>,
    violations: usize,
    worst_violation: Option<RawSample>,
}

impl ChunkAccum {
    fn new() -> Self {
        Self {
            lo: f64::INFINITY,
            hi: f64::NEG_INFINITY,
            lo_sample: None,
            hi_sample: None,
            violations: 0,
            worst_violation: None,
        }
    }

    fn update(&mut self, s: RawSample) {
        if let Some(r) = s.ratio {
            if r.is_finite() {
                if r < self.lo {
                    self.lo = r;
                    self.lo_sample = Some(s);
                }
                if r > self.hi {
                    self.hi = r;
                    self.hi_sample = Some(s);
                }
            }
        }
        if s.violation > 0.0 {
            self.violations += 1;
            let worse = match &self.worst_violation {
                Some(w) => s.violation > w.violation,
                None => true,
            };
            if worse {
                self.worst_violation = Some(s);
            }
        }
    }

    fn merge(&mut self, other: &ChunkAccum) {
        if other.lo < self.lo {
            self.lo = other.lo;
            self.lo_sample = other.lo_sample;
        }
        if other.hi > self.hi {
            self.hi = other.hi;
            self.hi_sample = other.hi_sample;
        }
        self.violations += other.violations;
        let replace = match (&self.worst_violation, &other.worst_violation) {
            (_, None) => false,
            (None, Some(_)) => true,
            (Some(a), Some(b)) => b.violation > a.violation,
        };
        if replace {
            self.worst_violation = other.worst_violation;
        }
    }
}

fn chunk_seed(seed: u64, chunk: usize) -> u64 {
    seed.wrapping_add((chunk as u64).wrapping_mul(0x9E3779B97F4A7C15))
}

/// Random symmetric matrix: Gaussian entries at a random scale, with a small
/// admixture of axis-aligned, rank-one, and zero specials to exercise the
/// degenerate corners.
fn sample_matrix(rng: &mut ChaCha8Rng, dim: usize, scales: &[f64]) -> SymMatrix {
    let kind: u32 = rng.random_range(0..100);
    let scale = scales[rng.random_range(0..scales.len())];
    match kind {
        0..=1 => SymMatrix::zeros(dim),
        2..=5 => {
            // axis-aligned: a single (i, j) symmetric entry
            let i = rng.random_range(0..dim);
            let j = rng.random_range(0..dim);
            let mut m = SymMatrix::zeros(dim);
            m.set_sym(i.min(j), i.max(j), scale * rng.sample::<f64, _>(StandardNormal));
            m
        }
        6..=9 => {
            // rank-one a (x) a
            let a: Vec<f64> =
                (0..dim).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
            let mut m = SymMatrix::zeros(dim);
            for i in 0..dim {
                for j in i..dim {
                    m.set_sym(i, j, scale * a[i] * a[j]);
                }
            }
            m
        }
        _ => {
            let mut m = SymMatrix::zeros(dim);
            for i in 0..dim {
                for j in i..dim {
                    m.set_sym(i, j, scale * rng.sample::<f64, _>(StandardNormal));
                }
            }
            m
        }
    }
}

fn sample_pair(rng: &mut ChaCha8Rng, dim: usize, scales: &[f64]) -> (SymMatrix, SymMatrix) {
    let xi = sample_matrix(rng, dim, scales);
    let eta = match rng.random_range(0..100u32) {
        0..=2 => xi,
        3..=5 => -xi,
        _ => sample_matrix(rng, dim, scales),
    };
    (xi, eta)
}

/// Runs one audit.
pub fn inequality_audit(
    lemma: LemmaId,
    spec: &SampleSpec,
    params: &GrowthParams,
) -> Result<InequalityAudit, AuditError> {
    if spec.count == 0 {
        return Err(AuditError::EmptySampleSpec);
    }
    if lemma.needs_positive_mu() && params.mu <= 0.0 {
        return Err(AuditError::Model(crate::error::ModelError::RequiresPositiveMu));
    }
    let elastic = ElasticTensor::identity(params.dim);
    let chunks = spec.count.div_ceil(CHUNK);
    let accums: Vec<ChunkAccum> = (0..chunks)
        .into_par_iter()
        .map(|c| {
            let mut rng = ChaCha8Rng::seed_from_u64(chunk_seed(spec.seed, c));
            let n = CHUNK.min(spec.count - c * CHUNK);
            let mut acc = ChunkAccum::new();
            for _ in 0..n {
                let s = draw_sample(lemma, spec, params, &elastic, &mut rng);
                acc.update(s);
            }
            acc
        })
        .collect();
    let mut total = ChunkAccum::new();
    for a in &accums {
        total.merge(a);
    }
    let witness_sample = total
        .worst_violation
        .or(total.hi_sample)
        .or(total.lo_sample)
        .unwrap_or_else(RawSample::new);
    let (lo, hi) = if total.lo.is_finite() { (total.lo, total.hi) } else { (0.0, 0.0) };
    Ok(InequalityAudit {
        lemma_id: lemma,
        samples: spec.count,
        empirical_lo: lo,
        empirical_hi: hi,
        violated: total.violations > 0,
        violations: total.violations,
        witness: make_witness(lemma, params, &witness_sample),
    })
}

/// Runs every supported audit for the given parameters, skipping the ones
/// whose preconditions exclude these parameters.
pub fn audit_bundle(
    spec: &SampleSpec,
    params: &GrowthParams,
) -> Result<Vec<InequalityAudit>, AuditError> {
    let mut out = Vec::new();
    for &lemma in LemmaId::all() {
        if lemma.needs_positive_mu() && params.mu <= 0.0 {
            continue;
        }
        out.push(inequality_audit(lemma, spec, params)?);
    }
    Ok(out)
}

fn scalar_names(lemma: LemmaId) -> [&'static str; 4] {
    use LemmaId::*;
    match lemma {
        SegmentIntegralBounds => ["gamma", "weight_exponent", "", ""],
        VFactorEquivalence => ["gamma", "", "", ""],
        DoublingBounds => ["shift", "t", "lambda", ""],
        YoungInequality => ["shift", "t", "s", ""],
        PolarIdentity => ["shift", "t", "", ""],
        BlowupSandwich | BlowupConvexityGap => ["scale", "", "", ""],
        _ => ["", "", "", ""],
    }
}

fn make_witness(lemma: LemmaId, params: &GrowthParams, s: &RawSample) -> AuditWitness {
    let n = params.dim;
    let mut scalars = BTreeMap::new();
    for (name, value) in scalar_names(lemma).iter().zip(s.scalars.iter()) {
        if !name.is_empty() {
            scalars.insert((*name).to_string(), *value);
        }
    }
    AuditWitness {
        ratio: s.ratio.unwrap_or(0.0),
        xi: s.xi[..n * n].to_vec(),
        eta: s.eta[..n * n].to_vec(),
        scalars,
    }
}

fn draw_sample(
    lemma: LemmaId,
    spec: &SampleSpec,
    params: &GrowthParams,
    elastic: &ElasticTensor,
    rng: &mut ChaCha8Rng,
) -> RawSample {
    use LemmaId::*;
    match lemma {
        SegmentIntegralBounds => segment_integral_sample(spec, params, rng),
        VFactorEquivalence => v_factor_sample(spec, params, rng),
        VNormBounds => v_norm_bounds_sample(spec, params, rng),
        VSquaredConvexity => v_convexity_sample(spec, params, rng),
        VTriangleInequality => v_triangle_sample(spec, params, rng),
        VShiftComparison => v_shift_sample(spec, params, rng),
        MeanMinimality => mean_minimality_sample(spec, params, rng),
        DoublingBounds => doubling_sample(spec, params, rng),
        YoungInequality => young_sample(spec, params, rng),
        PolarIdentity => polar_sample(spec, params, rng),
        ShiftedPhiVsV => shifted_phi_sample(spec, params, rng),
        TaylorGapVsV => taylor_gap_sample(spec, params, elastic, rng),
        BlowupSandwich => blowup_sandwich_sample(spec, params, elastic, rng),
        BlowupConvexityGap => blowup_gap_sample(spec, params, elastic, rng),
    }
}

fn draw_gamma(spec: &SampleSpec, rng: &mut ChaCha8Rng) -> f64 {
    match spec.gamma {
        Some(g) => g,
        None => {
            if rng.random_bool(0.5) {
                // singular range where the explicit upper constant applies
                rng.random_range(-0.499..-0.001)
            } else {
                rng.random_range(0.0..3.0)
            }
        }
    }
}

fn segment_integral_sample(
    spec: &SampleSpec,
    params: &GrowthParams,
    rng: &mut ChaCha8Rng,
) -> RawSample {
    let mut out = RawSample::new();
    let gamma = draw_gamma(spec, rng);
    let r: f64 = rng.random_range(0.0..3.0);
    let (xi, eta) = sample_pair(rng, params.dim, &spec.scales);
    let mu = params.mu;
    let denom_base = mu + xi.norm_sq() + eta.norm_sq();
    if denom_base <= 0.0 {
        return out;
    }
    out.record_xi(&xi);
    out.record_eta(&eta);
    out.scalars[0] = gamma;
    out.scalars[1] = r;
    // |eta + t (xi - eta)|^2 = c0 + c1 t + c2 t^2
    let diff = xi - eta;
    let c0 = eta.norm_sq();
    let c1 = 2.0 * eta.dot(&diff);
    let c2 = diff.norm_sq();
    let integrand =
        |t: f64| pow_guarded(mu + c0 + t * (c1 + t * c2), gamma) * (1.0 - t).max(0.0).powf(r);
    let denom = pow_guarded(denom_base, gamma);
    let atol = REL_TOL_QUADRATURE * denom * 0.01;
    // split at the segment's closest approach to the origin
    let tmin = if c2 > 0.0 { (-c1 / (2.0 * c2)).clamp(0.0, 1.0) } else { 0.5 };
    let numer = if tmin > 0.0 && tmin < 1.0 {
        super::nfunc::adaptive_gk(&integrand, 0.0, tmin, atol)
            + super::nfunc::adaptive_gk(&integrand, tmin, 1.0, atol)
    } else {
        super::nfunc::adaptive_gk(&integrand, 0.0, 1.0, atol)
    };
    let ratio = numer / denom;
    out.ratio = Some(ratio);
    if gamma < 0.0 {
        let c2_bound = 8.0 / (2.0 * gamma + 1.0);
        let excess = ratio - c2_bound * (1.0 + REL_TOL_QUADRATURE);
        if excess > 0.0 {
            out.violation = excess;
        }
    }
    out
}

fn v_factor_sample(spec: &SampleSpec, params: &GrowthParams, rng: &mut ChaCha8Rng) -> RawSample {
    let mut out = RawSample::new();
    let gamma = spec.gamma.unwrap_or(0.25 * (params.p - 2.0));
    let (xi, eta) = sample_pair(rng, params.dim, &spec.scales);
    let mu = params.mu;
    let dist = (xi - eta).norm();
    let denom_base = mu + xi.norm_sq() + eta.norm_sq();
    if dist == 0.0 || denom_base <= 0.0 {
        return out;
    }
    out.record_xi(&xi);
    out.record_eta(&eta);
    out.scalars[0] = gamma;
    let map = |m: &SymMatrix| m.scale(pow_guarded(mu + m.norm_sq(), gamma));
    let numer = (map(&xi) - map(&eta)).norm();
    out.ratio = Some(numer / (pow_guarded(denom_base, gamma) * dist));
    out
}

fn v_norm_bounds_sample(
    spec: &SampleSpec,
    params: &GrowthParams,
    rng: &mut ChaCha8Rng,
) -> RawSample {
    let mut out = RawSample::new();
    let xi = sample_matrix(rng, params.dim, &spec.scales);
    let norm = xi.norm();
    if norm == 0.0 {
        return out;
    }
    out.record_xi(&xi);
    let (p, mu) = (params.p, params.mu);
    let v2 = v_transform(&xi, params).norm_sq();
    let pow_p = norm.powf(p);
    let (lower, upper) = if p >= 2.0 {
        let up = pow_guarded(2.0, 0.5 * p - 1.0)
            * (pow_guarded(mu, 0.5 * p - 1.0) * norm * norm + pow_p);
        (pow_p, up)
    } else {
        let lo = pow_guarded(2.0 * mu.max(norm * norm), 0.5 * p - 1.0) * norm * norm;
        (lo, pow_p)
    };
    out.ratio = Some(v2 / pow_p);
    let tol = REL_TOL_IDENTITY * (v2.abs() + lower.abs() + upper.abs());
    if v2 < lower - tol || v2 > upper + tol {
        out.violation = (lower - v2).max(v2 - upper);
    }
    out
}

/// Sub-quadratic convex surrogate profile for |V|^2.
fn subquadratic_profile(xi: &SymMatrix, params: &GrowthParams) -> f64 {
    let norm = xi.norm();
    let denom = pow_guarded(params.mu, 0.5 * (2.0 - params.p)) + norm.powf(2.0 - params.p);
    if denom == 0.0 {
        0.0
    } else {
        norm * norm / denom
    }
}

fn v_convexity_sample(spec: &SampleSpec, params: &GrowthParams, rng: &mut ChaCha8Rng) -> RawSample {
    let mut out = RawSample::new();
    let (xi, eta) = sample_pair(rng, params.dim, &spec.scales);
    out.record_xi(&xi);
    out.record_eta(&eta);
    let mid = (xi + eta).scale(0.5);
    let (value_mid, avg) = if params.p >= 2.0 {
        let f = |m: &SymMatrix| v_transform(m, params).norm_sq();
        (f(&mid), 0.5 * (f(&xi) + f(&eta)))
    } else {
        let f = |m: &SymMatrix| subquadratic_profile(m, params);
        (f(&mid), 0.5 * (f(&xi) + f(&eta)))
    };
    if avg > 0.0 {
        out.ratio = Some(value_mid / avg);
    }
    let tol = REL_TOL_IDENTITY * (1.0 + avg.abs());
    if value_mid > avg + tol {
        out.violation = value_mid - avg;
    }
    out
}

fn v_triangle_sample(spec: &SampleSpec, params: &GrowthParams, rng: &mut ChaCha8Rng) -> RawSample {
    let mut out = RawSample::new();
    let (xi, eta) = sample_pair(rng, params.dim, &spec.scales);
    let denom = v_transform(&xi, params).norm() + v_transform(&eta, params).norm();
    if denom == 0.0 {
        return out;
    }
    out.record_xi(&xi);
    out.record_eta(&eta);
    out.ratio = Some(v_transform(&(xi + eta), params).norm() / denom);
    out
}

fn v_shift_sample(spec: &SampleSpec, params: &GrowthParams, rng: &mut ChaCha8Rng) -> RawSample {
    let mut out = RawSample::new();
    let xi = sample_matrix(rng, params.dim, &spec.scales);
    let mut eta = sample_matrix(rng, params.dim, &spec.scales);
    // condition on |eta| <= L as in the lemma's hypothesis
    let norm = eta.norm();
    if norm > spec.shift_cap {
        eta = eta.scale(spec.shift_cap / norm);
    }
    let diff_v = v_transform(&(xi - eta), params).norm();
    if diff_v == 0.0 {
        return out;
    }
    out.record_xi(&xi);
    out.record_eta(&eta);
    out.ratio = Some((v_transform(&xi, params) - v_transform(&eta, params)).norm() / diff_v);
    out
}

fn mean_minimality_sample(
    spec: &SampleSpec,
    params: &GrowthParams,
    rng: &mut ChaCha8Rng,
) -> RawSample {
    const BATCH: usize = 8;
    let mut out = RawSample::new();
    let mut mats = [SymMatrix::zeros(params.dim); BATCH];
    let mut mean_xi = SymMatrix::zeros(params.dim);
    let mut mean_v = SymMatrix::zeros(params.dim);
    for m in mats.iter_mut() {
        *m = sample_matrix(rng, params.dim, &spec.scales);
        mean_xi += m.scale(1.0 / BATCH as f64);
        mean_v += v_transform(m, params).scale(1.0 / BATCH as f64);
    }
    let v_of_mean = v_transform(&mean_xi, params);
    let mut lhs = 0.0;
    let mut mid = 0.0;
    for m in mats.iter() {
        let v = v_transform(m, params);
        lhs += (v - mean_v).norm_sq();
        mid += (v - v_of_mean).norm_sq();
    }
    out.record_xi(&mats[0]);
    out.record_eta(&mats[1]);
    if lhs > 0.0 {
        out.ratio = Some(mid / lhs);
    }
    let tol = REL_TOL_IDENTITY * (1.0 + lhs.abs() + mid.abs());
    if lhs > mid + tol {
        out.violation = lhs - mid;
    }
    out
}

fn log_uniform(rng: &mut ChaCha8Rng, lo: f64, hi: f64) -> f64 {
    (rng.random_range(lo.ln()..hi.ln())).exp()
}

fn doubling_sample(spec: &SampleSpec, params: &GrowthParams, rng: &mut ChaCha8Rng) -> RawSample {
    let _ = spec;
    let mut out = RawSample::new();
    let a = if rng.random_bool(0.1) { 0.0 } else { log_uniform(rng, 1e-3, 1e2) };
    let t = log_uniform(rng, 1e-3, 1e2);
    let lam = log_uniform(rng, 1.0 + 1e-12, 30.0);
    out.scalars = [a, t, lam, 0.0];
    let p = params.p;
    let (elo, ehi) = (p.min(2.0), p.max(2.0));
    let phi_t = shifted_n_function(a, t, params);
    let phi_lt = shifted_n_function(a, lam * t, params);
    if phi_t <= 0.0 {
        return out;
    }
    // effective doubling exponent of phi
    out.ratio = Some((phi_lt / phi_t).ln() / lam.ln());
    let tol = REL_TOL_QUADRATURE * (1.0 + phi_lt);
    let mut violation = (lam.powf(elo) * phi_t - phi_lt - tol).max(phi_lt - lam.powf(ehi) * phi_t - tol);
    // conjugate side: exponents p' min/max 2 with p' = p/(p-1)
    let q = p / (p - 1.0);
    let (qlo, qhi) = (q.min(2.0), q.max(2.0));
    let s = shifted_n_derivative(a, t, params);
    let star_s = s * t - phi_t; // polar identity evaluated parametrically
    let star_ls = shifted_conjugate(a, lam * s, params);
    if star_s > 0.0 {
        let tol_star = REL_TOL_QUADRATURE * (1.0 + star_ls);
        violation = violation
            .max(lam.powf(qlo) * star_s - star_ls - tol_star)
            .max(star_ls - lam.powf(qhi) * star_s - tol_star);
    }
    if violation > 0.0 {
        out.violation = violation;
    }
    out
}

fn young_sample(spec: &SampleSpec, params: &GrowthParams, rng: &mut ChaCha8Rng) -> RawSample {
    let _ = spec;
    let mut out = RawSample::new();
    let a = if rng.random_bool(0.1) { 0.0 } else { log_uniform(rng, 1e-3, 1e2) };
    let t = log_uniform(rng, 1e-4, 1e2);
    let s = log_uniform(rng, 1e-4, 1e2);
    out.scalars = [a, t, s, 0.0];
    let rhs = shifted_n_function(a, t, params) + shifted_conjugate(a, s, params);
    if rhs <= 0.0 {
        return out;
    }
    out.ratio = Some(s * t / rhs);
    let tol = REL_TOL_QUADRATURE * (1.0 + rhs);
    if s * t > rhs + tol {
        out.violation = s * t - rhs;
    }
    out
}

fn polar_sample(spec: &SampleSpec, params: &GrowthParams, rng: &mut ChaCha8Rng) -> RawSample {
    let _ = spec;
    let mut out = RawSample::new();
    let a = if rng.random_bool(0.1) { 0.0 } else { log_uniform(rng, 1e-3, 1e2) };
    let t = log_uniform(rng, 1e-4, 1e2);
    out.scalars = [a, t, 0.0, 0.0];
    let dphi = shifted_n_derivative(a, t, params);
    let lhs = shifted_conjugate(a, dphi, params);
    let rhs = dphi * t - shifted_n_function(a, t, params);
    if rhs.abs() > 1e-300 {
        out.ratio = Some(lhs / rhs);
    }
    if (lhs - rhs).abs() > REL_TOL_POLAR * (1.0 + rhs.abs()) {
        out.violation = (lhs - rhs).abs();
    }
    out
}

fn shifted_phi_sample(spec: &SampleSpec, params: &GrowthParams, rng: &mut ChaCha8Rng) -> RawSample {
    let mut out = RawSample::new();
    let (xi, eta) = sample_pair(rng, params.dim, &spec.scales);
    let denom = (v_transform(&xi, params) - v_transform(&eta, params)).norm_sq();
    if denom == 0.0 {
        return out;
    }
    out.record_xi(&xi);
    out.record_eta(&eta);
    let lhs = shifted_n_function(xi.norm(), (xi - eta).norm(), params);
    out.ratio = Some(lhs / denom);
    out
}

fn taylor_gap_sample(
    spec: &SampleSpec,
    params: &GrowthParams,
    elastic: &ElasticTensor,
    rng: &mut ChaCha8Rng,
) -> RawSample {
    let mut out = RawSample::new();
    let clamp = |m: SymMatrix| {
        let n = m.norm();
        if n > 1e3 {
            m.scale(1e3 / n)
        } else {
            m
        }
    };
    let (xi, eta) = sample_pair(rng, params.dim, &spec.scales);
    let (xi, eta) = (clamp(xi), clamp(eta));
    let denom = (v_transform(&eta, params) - v_transform(&xi, params)).norm_sq();
    if denom == 0.0 {
        return out;
    }
    out.record_xi(&xi);
    out.record_eta(&eta);
    let gap = energy_density(&eta, params, elastic)
        - energy_density(&xi, params, elastic)
        - stress(&xi, params, elastic).dot(&(eta - xi));
    out.ratio = Some(gap / denom);
    out
}

fn sample_blowup(
    spec: &SampleSpec,
    params: &GrowthParams,
    rng: &mut ChaCha8Rng,
) -> (BlowupParams, f64) {
    let mut base = sample_matrix(rng, params.dim, &[1.0]);
    let norm = base.norm();
    if norm > spec.shift_cap {
        base = base.scale(spec.shift_cap / norm);
    }
    let scale = log_uniform(rng, 1e-6, 1.0);
    (BlowupParams::new(base, scale, base), scale)
}

fn blowup_sandwich_sample(
    spec: &SampleSpec,
    params: &GrowthParams,
    elastic: &ElasticTensor,
    rng: &mut ChaCha8Rng,
) -> RawSample {
    let mut out = RawSample::new();
    let (bp, scale) = sample_blowup(spec, params, rng);
    let xi = sample_matrix(rng, params.dim, &spec.scales);
    let v2 = v_transform(&xi.scale(scale), params).norm_sq() / (scale * scale);
    if v2 == 0.0 {
        return out;
    }
    out.record_xi(&xi);
    out.record_eta(&bp.base_strain);
    out.scalars[0] = scale;
    let (fh, noise) =
        blowup_integrand_with_noise(&xi, &bp, params, elastic).expect("mu > 0 checked upstream");
    // skip samples whose Taylor remainder is below the cancellation noise
    if fh.abs() <= 32.0 * noise {
        return out;
    }
    out.ratio = Some(fh / v2);
    out
}

fn blowup_gap_sample(
    spec: &SampleSpec,
    params: &GrowthParams,
    elastic: &ElasticTensor,
    rng: &mut ChaCha8Rng,
) -> RawSample {
    let mut out = RawSample::new();
    let (bp, scale) = sample_blowup(spec, params, rng);
    let xi = sample_matrix(rng, params.dim, &spec.scales);
    let eta = sample_matrix(rng, params.dim, &spec.scales);
    out.record_xi(&xi);
    out.record_eta(&eta);
    out.scalars[0] = scale;
    let (fh_xi, noise_xi) =
        blowup_integrand_with_noise(&xi, &bp, params, elastic).expect("mu > 0 checked upstream");
    let (fh_eta, noise_eta) =
        blowup_integrand_with_noise(&eta, &bp, params, elastic).expect("mu > 0 checked upstream");
    let shifted_eta = bp.base_strain + eta.scale(scale);
    let stress_eta = stress(&shifted_eta, params, elastic);
    let stress_base = stress(&bp.base_strain, params, elastic);
    let lin = (stress_eta - stress_base).dot(&(xi - eta)) / scale;
    let lin_noise = f64::EPSILON * (stress_eta.norm() + stress_base.norm())
        * (xi - eta).norm()
        / scale;
    let gap = fh_xi - fh_eta - lin;
    let noise = 32.0 * (noise_xi + noise_eta + lin_noise);
    let denom = (v_transform(&(bp.base_strain + xi.scale(scale)), params)
        - v_transform(&shifted_eta, params))
    .norm_sq()
        / (scale * scale);
    if denom > 0.0 && gap.abs() > noise {
        out.ratio = Some(gap / denom);
    }
    // convexity makes the gap nonnegative up to the cancellation noise
    let magnitude = fh_xi.abs() + fh_eta.abs() + lin.abs();
    if gap < -(1e-9 * (1.0 + magnitude) + noise) {
        out.violation = -gap;
    }
    out
}
