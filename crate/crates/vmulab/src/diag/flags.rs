//! Discrete singular-set flags: per-node surrogates of the four singular
//! sets (persistent V-oscillation, divergent V-means, persistent u-
//! oscillation or divergent u-means, divergent gradient means), evaluated
//! on a decreasing radii sweep. The limit r -> 0 has no discrete meaning;
//! the surrogate uses the smallest resolvable radius plus a monotonicity
//! check along the sweep.

use super::excess::v_values;
use crate::error::DiagError;
use crate::fem::{ball_mean, Ball, DiscreteField, ProblemSpec};
use serde::Serialize;

/// Flag thresholds. `None` entries use scale-free defaults derived from
/// domain averages: oscillation thresholds are 1e-2 times the domain-average
/// squared magnitude, divergence thresholds 1e2 times the domain-average
/// magnitude.
#[derive(Debug, Clone, Default, Serialize)]
pub struct FlagThresholds {
    pub v_oscillation: Option<f64>,
    pub v_divergence: Option<f64>,
    pub u_oscillation: Option<f64>,
    pub u_divergence: Option<f64>,
    pub grad_divergence: Option<f64>,
}

const OSCILLATION_FACTOR: f64 = 1e-2;
const DIVERGENCE_FACTOR: f64 = 1e2;

#[derive(Debug, Clone, Serialize)]
pub struct SingularFlags {
    pub radii: Vec<f64>,
    pub thresholds_used: ResolvedThresholds,
    /// Per node: whether the sweep fits inside the domain there.
    pub evaluated: Vec<bool>,
    pub sigma1: Vec<bool>,
    pub sigma2: Vec<bool>,
    pub sigma3: Vec<bool>,
    pub sigma4: Vec<bool>,
}

#[derive(Debug, Clone, Serialize)]
pub struct ResolvedThresholds {
    pub v_oscillation: f64,
    pub v_divergence: f64,
    pub u_oscillation: f64,
    pub u_divergence: f64,
    pub grad_divergence: f64,
}

impl SingularFlags {
    pub fn count(&self) -> [usize; 4] {
        let c = |v: &[bool]| v.iter().filter(|&&b| b).count();
        [c(&self.sigma1), c(&self.sigma2), c(&self.sigma3), c(&self.sigma4)]
    }
}

fn is_nondecreasing(values: &[f64]) -> bool {
    // values are ordered from the largest radius to the smallest; the
    // divergence surrogate wants growth as the radius shrinks
    values.windows(2).all(|w| w[1] >= w[0] * (1.0 - 1e-12))
}

pub fn singular_flags(
    field: &DiscreteField,
    spec: &ProblemSpec,
    radii_sweep: &[f64],
    thresholds: &FlagThresholds,
) -> Result<SingularFlags, DiagError> {
    if radii_sweep.is_empty() {
        return Err(DiagError::InsufficientRadii { needed: 1, got: 0 });
    }
    let mut radii = radii_sweep.to_vec();
    radii.sort_by(|a, b| b.partial_cmp(a).unwrap());
    let mesh = &field.mesh;
    let dim = mesh.dim;
    let qs = spec.quadrature();
    let params = &spec.params;

    // cached per-point quantities
    let vs = v_values(field, params, qs);
    let rule_pts = qs.rule.npoints();
    let mut u_pts: Vec<[f64; 3]> = Vec::with_capacity(qs.len());
    let mut grad_pts: Vec<[f64; 9]> = Vec::with_capacity(qs.len());
    {
        let mut grad_per_elem = Vec::with_capacity(mesh.num_elems());
        for e in 0..mesh.num_elems() {
            grad_per_elem.push(field.gradient(e));
        }
        for q in 0..qs.len() {
            let e = qs.elem[q];
            u_pts.push(field.value_at(e, qs.rule.point(q % rule_pts)));
            grad_pts.push(grad_per_elem[e]);
        }
    }

    // scale-free default thresholds from domain averages
    let total_w: f64 = qs.weights.iter().sum();
    let avg = |f: &dyn Fn(usize) -> f64| -> f64 {
        (0..qs.len()).map(|q| qs.weights[q] * f(q)).sum::<f64>() / total_w
    };
    let avg_v2 = avg(&|q| vs[q].norm_sq());
    let avg_vnorm = avg(&|q| vs[q].norm());
    let avg_up = avg(&|q| {
        let mut s = 0.0;
        for a in 0..dim {
            s += u_pts[q][a] * u_pts[q][a];
        }
        s.powf(0.5 * params.p)
    });
    let avg_unorm = avg(&|q| {
        let mut s = 0.0;
        for a in 0..dim {
            s += u_pts[q][a] * u_pts[q][a];
        }
        s.sqrt()
    });
    let avg_gnorm = avg(&|q| {
        let mut s = 0.0;
        for k in 0..dim * dim {
            s += grad_pts[q][k] * grad_pts[q][k];
        }
        s.sqrt()
    });
    let th = ResolvedThresholds {
        v_oscillation: thresholds.v_oscillation.unwrap_or(OSCILLATION_FACTOR * avg_v2),
        v_divergence: thresholds.v_divergence.unwrap_or(DIVERGENCE_FACTOR * avg_vnorm),
        u_oscillation: thresholds.u_oscillation.unwrap_or(OSCILLATION_FACTOR * avg_up),
        u_divergence: thresholds.u_divergence.unwrap_or(DIVERGENCE_FACTOR * avg_unorm),
        grad_divergence: thresholds.grad_divergence.unwrap_or(DIVERGENCE_FACTOR * avg_gnorm),
    };

    let nn = mesh.num_nodes();
    let mut evaluated = vec![false; nn];
    let mut sigma1 = vec![false; nn];
    let mut sigma2 = vec![false; nn];
    let mut sigma3 = vec![false; nn];
    let mut sigma4 = vec![false; nn];

    for node in 0..nn {
        let x = mesh.node(node);
        let balls: Option<Vec<Ball>> =
            radii.iter().map(|&r| Ball::new(mesh, &x[..dim], r).ok()).collect();
        let Some(balls) = balls else { continue };
        evaluated[node] = true;

        let mut v_mean_norms = Vec::with_capacity(balls.len());
        let mut u_mean_norms = Vec::with_capacity(balls.len());
        let mut g_mean_norms = Vec::with_capacity(balls.len());
        let mut v_osc_last = 0.0;
        let mut u_osc_last = 0.0;
        for (bi, ball) in balls.iter().enumerate() {
            let v_mean = ball_mean(qs, &vs, ball);
            let u_mean = ball_mean(qs, &u_pts, ball);
            v_mean_norms.push(v_mean.norm());
            u_mean_norms.push({
                let mut s = 0.0;
                for a in 0..dim {
                    s += u_mean[a] * u_mean[a];
                }
                s.sqrt()
            });
            // gradient mean via component sums
            let mut g_mean = [0.0_f64; 9];
            let mut measure = 0.0;
            for q in 0..qs.len() {
                if ball.contains(&qs.point(q)) {
                    for k in 0..dim * dim {
                        g_mean[k] += qs.weights[q] * grad_pts[q][k];
                    }
                    measure += qs.weights[q];
                }
            }
            let mut gn = 0.0;
            if measure > 0.0 {
                for gk in g_mean.iter().take(dim * dim) {
                    gn += (gk / measure) * (gk / measure);
                }
            }
            g_mean_norms.push(gn.sqrt());

            if bi + 1 == balls.len() {
                // oscillations at the smallest resolvable radius only
                let mut vosc = 0.0;
                let mut uosc = 0.0;
                let mut measure = 0.0;
                for q in 0..qs.len() {
                    if ball.contains(&qs.point(q)) {
                        vosc += qs.weights[q] * (vs[q] - v_mean).norm_sq();
                        let mut du = 0.0;
                        for a in 0..dim {
                            let d = u_pts[q][a] - u_mean[a];
                            du += d * d;
                        }
                        uosc += qs.weights[q] * du.powf(0.5 * params.p);
                        measure += qs.weights[q];
                    }
                }
                if measure > 0.0 {
                    v_osc_last = vosc / measure;
                    u_osc_last = uosc / measure;
                }
            }
        }

        sigma1[node] = v_osc_last > th.v_oscillation;
        sigma2[node] =
            *v_mean_norms.last().unwrap() > th.v_divergence && is_nondecreasing(&v_mean_norms);
        sigma3[node] = u_osc_last > th.u_oscillation
            || (*u_mean_norms.last().unwrap() > th.u_divergence
                && is_nondecreasing(&u_mean_norms));
        sigma4[node] =
            *g_mean_norms.last().unwrap() > th.grad_divergence && is_nondecreasing(&g_mean_norms);
    }

    Ok(SingularFlags { radii, thresholds_used: th, evaluated, sigma1, sigma2, sigma3, sigma4 })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fem::{build_mesh, DirichletBc, ProblemSpec};
    use crate::tensor::{ElasticTensor, GrowthParams};
    use std::sync::Arc;

    fn spec_on(mesh: Arc<crate::fem::Mesh>, p: f64, mu: f64) -> ProblemSpec {
        let params = GrowthParams::new(p, mu, 0.0, 2).unwrap();
        let g = DiscreteField::zeros(mesh.clone());
        let bc = DirichletBc::none(&mesh);
        ProblemSpec::new(mesh, params, ElasticTensor::identity(2), g, bc, None, 2).unwrap()
    }

    #[test]
    fn smooth_field_has_no_flags() {
        let mesh = Arc::new(build_mesh(2, &[0.0, 0.0], &[1.0, 1.0], 48).unwrap());
        let spec = spec_on(mesh.clone(), 2.0, 0.0);
        let u = DiscreteField::interpolate(mesh.clone(), |x| {
            vec![0.1 * x[0] + 0.02 * (std::f64::consts::PI * x[1]).sin(), -0.05 * x[1]]
        });
        let h = mesh.max_spacing();
        let flags =
            singular_flags(&u, &spec, &[8.0 * h, 6.0 * h, 4.0 * h], &FlagThresholds::default())
                .unwrap();
        assert_eq!(flags.count(), [0, 0, 0, 0], "thresholds {:?}", flags.thresholds_used);
        assert!(flags.evaluated.iter().any(|&e| e));
    }

    #[test]
    fn infinite_thresholds_never_flag() {
        let mesh = Arc::new(build_mesh(2, &[0.0, 0.0], &[1.0, 1.0], 32).unwrap());
        let spec = spec_on(mesh.clone(), 2.0, 0.0);
        // wild field
        let u = DiscreteField::interpolate(mesh.clone(), |x| {
            vec![(40.0 * x[0]).sin(), (35.0 * x[1]).cos()]
        });
        let h = mesh.max_spacing();
        let inf = FlagThresholds {
            v_oscillation: Some(f64::INFINITY),
            v_divergence: Some(f64::INFINITY),
            u_oscillation: Some(f64::INFINITY),
            u_divergence: Some(f64::INFINITY),
            grad_divergence: Some(f64::INFINITY),
        };
        let flags = singular_flags(&u, &spec, &[6.0 * h, 4.0 * h], &inf).unwrap();
        assert_eq!(flags.count(), [0, 0, 0, 0]);
    }

    #[test]
    fn strain_jump_flags_one_cell_neighborhood() {
        // u = (max(x1 - 0.5, 0), 0): e_11 jumps from 0 to 1 across x1 = 0.5.
        // Oracle: the continuum oscillation of V at center distance d with
        // ball radius r is J^2 f (1 - f) with f the circular-segment area
        // fraction; a threshold between the d = 2h and d = h levels isolates
        // the one-cell neighborhood.
        let mesh = Arc::new(build_mesh(2, &[0.0, 0.0], &[1.0, 1.0], 64).unwrap());
        let spec = spec_on(mesh.clone(), 2.0, 0.0);
        let u = DiscreteField::interpolate(mesh.clone(), |x| {
            vec![(x[0] - 0.5).max(0.0), 0.0]
        });
        let h = mesh.max_spacing();
        let r_min = 4.0 * h;
        let segment_fraction = |d: f64, r: f64| -> f64 {
            if d >= r {
                return 0.0;
            }
            let t = d / r;
            (t.acos() - t * (1.0 - t * t).sqrt()) / std::f64::consts::PI
        };
        let osc = |d: f64| {
            let f = segment_fraction(d, r_min);
            f * (1.0 - f)
        };
        // threshold halfway between the oscillation one cell and two cells
        // away from the jump line
        let threshold = 0.5 * (osc(h) + osc(2.0 * h));
        let th = FlagThresholds {
            v_oscillation: Some(threshold),
            v_divergence: Some(f64::INFINITY),
            u_oscillation: Some(f64::INFINITY),
            u_divergence: Some(f64::INFINITY),
            grad_divergence: Some(f64::INFINITY),
        };
        let flags = singular_flags(&u, &spec, &[6.0 * h, 5.0 * h, r_min], &th).unwrap();
        let mut flagged_right = 0;
        for node in 0..mesh.num_nodes() {
            if !flags.evaluated[node] {
                continue;
            }
            let d = (mesh.node(node)[0] - 0.5).abs();
            let expect = d <= h * 1.001;
            assert_eq!(
                flags.sigma1[node], expect,
                "node at {:?} (d = {d:.4}, h = {h:.4})",
                mesh.node(node)
            );
            if flags.sigma1[node] {
                flagged_right += 1;
            }
        }
        assert!(flagged_right > 50, "jump line must actually flag ({flagged_right})");
    }
}
