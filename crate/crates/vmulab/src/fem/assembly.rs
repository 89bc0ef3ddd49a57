//! Assembly of the discrete energy, its gradient and Hessian, the
//! second-gradient jump penalty, and frozen-tangent linear systems.
//!
//! The energy of a field u is
//!     sum_K |K| f_mu(e(u)|_K)
//!   + kappa sum_q w_q |u(x_q) - g(x_q)|^p
//!   + (1/2L) sum_faces (|face| / d_centroid) |[grad u]|^2     (if L is set)
//! with e(u) constant per element for P1 fields.

use super::field::DiscreteField;
use super::problem::{DirichletBc, ProblemSpec};
use crate::error::{MeshError, SolveError};
use crate::tensor::{energy_density, stress, tangent, SymMatrix, Tensor4};

/// Regularization floor for the fidelity Hessian weight |u-g|^(p-2) when
/// p < 2 (the energy is C^1 but not C^2 where u = g; the gradient is exact,
/// only the Newton model is floored).
const FIDELITY_HESSIAN_FLOOR: f64 = 1e-8;

fn check_field(field: &DiscreteField, spec: &ProblemSpec) -> Result<(), MeshError> {
    if !field.same_mesh(&spec.g) || field.values.len() != spec.mesh.num_dofs() {
        return Err(MeshError::MeshMismatch);
    }
    Ok(())
}

/// Strain of the vector basis function phi = lambda_v e_i:
/// sym(e_i (x) grad lambda_v).
fn strain_basis(dim: usize, i: usize, bg: &[f64; 3]) -> SymMatrix {
    let mut b = SymMatrix::zeros(dim);
    for j in 0..dim {
        if j == i {
            b.set_sym(i, i, bg[i]);
        } else {
            b.set_sym(i.min(j), i.max(j), 0.5 * bg[j]);
        }
    }
    b
}

/// Per-element face gradient jump [grad u] = grad u|left - grad u|right.
fn face_jump(field: &DiscreteField, left: usize, right: usize) -> [f64; 9] {
    let dim = field.dim();
    let gl = field.gradient(left);
    let gr = field.gradient(right);
    let mut j = [0.0; 9];
    for k in 0..dim * dim {
        j[k] = gl[k] - gr[k];
    }
    j
}

/// Total energy of the field under the spec.
pub fn assemble_energy(field: &DiscreteField, spec: &ProblemSpec) -> Result<f64, SolveError> {
    check_field(field, spec)?;
    let params = &spec.params;
    let dim = spec.mesh.dim;
    let mut energy = 0.0;
    for e in 0..spec.mesh.num_elems() {
        let strain = field.sym_gradient(e);
        energy += spec.mesh.volume(e) * energy_density(&strain, params, &spec.elastic);
    }
    if params.kappa > 0.0 {
        let qs = spec.quadrature();
        let rule_pts = qs.rule.npoints();
        let mut fidelity = 0.0;
        for q in 0..qs.len() {
            let e = qs.elem[q];
            let bary = qs.rule.point(q % rule_pts);
            let u = field.value_at(e, bary);
            let g = spec.g.value_at(e, bary);
            let mut m2 = 0.0;
            for a in 0..dim {
                let d = u[a] - g[a];
                m2 += d * d;
            }
            fidelity += qs.weights[q] * m2.powf(0.5 * params.p);
        }
        energy += params.kappa * fidelity;
    }
    if let Some(level) = spec.penalty_level {
        let mut jump_sum = 0.0;
        for f in &spec.mesh.faces {
            let j = face_jump(field, f.left, f.right);
            let mut n2 = 0.0;
            for v in j.iter().take(dim * dim) {
                n2 += v * v;
            }
            jump_sum += f.measure / f.centroid_dist * n2;
        }
        energy += jump_sum / (2.0 * level);
    }
    Ok(energy)
}

/// Full gradient vector of the energy (all dofs, including constrained ones;
/// the constrained entries are the reaction channel).
pub fn assemble_gradient(field: &DiscreteField, spec: &ProblemSpec) -> Result<Vec<f64>, SolveError> {
    check_field(field, spec)?;
    let params = &spec.params;
    let dim = spec.mesh.dim;
    let mut grad = vec![0.0; spec.mesh.num_dofs()];

    for e in 0..spec.mesh.num_elems() {
        let strain = field.sym_gradient(e);
        let s = stress(&strain, params, &spec.elastic);
        let vol = spec.mesh.volume(e);
        for (v, &node) in spec.mesh.elem(e).iter().enumerate() {
            let bg = spec.mesh.basis_grad(e, v);
            // <stress, sym(e_i (x) grad lambda_v)> = (stress . grad lambda_v)_i
            for i in 0..dim {
                let mut acc = 0.0;
                for j in 0..dim {
                    acc += s.get(i, j) * bg[j];
                }
                grad[node * dim + i] += vol * acc;
            }
        }
    }

    if params.kappa > 0.0 {
        let qs = spec.quadrature();
        let rule_pts = qs.rule.npoints();
        let kp = params.kappa * params.p;
        for q in 0..qs.len() {
            let e = qs.elem[q];
            let bary = qs.rule.point(q % rule_pts);
            let u = field.value_at(e, bary);
            let g = spec.g.value_at(e, bary);
            let mut m = [0.0; 3];
            let mut m2 = 0.0;
            for a in 0..dim {
                m[a] = u[a] - g[a];
                m2 += m[a] * m[a];
            }
            if m2 == 0.0 {
                // |.|^(p-2) (.) extends continuously by zero
                continue;
            }
            let w = kp * qs.weights[q] * m2.powf(0.5 * params.p - 1.0);
            for (v, &node) in spec.mesh.elem(e).iter().enumerate() {
                for a in 0..dim {
                    grad[node * dim + a] += w * m[a] * bary[v];
                }
            }
        }
    }

    if let Some(level) = spec.penalty_level {
        let inv_l = 1.0 / level;
        for f in &spec.mesh.faces {
            let j = face_jump(field, f.left, f.right);
            let c = f.measure / f.centroid_dist * inv_l;
            for (elem, sign) in [(f.left, 1.0), (f.right, -1.0)] {
                for (v, &node) in spec.mesh.elem(elem).iter().enumerate() {
                    let bg = spec.mesh.basis_grad(elem, v);
                    for i in 0..dim {
                        let mut acc = 0.0;
                        for k in 0..dim {
                            acc += j[i * dim + k] * bg[k];
                        }
                        grad[node * dim + i] += c * sign * acc;
                    }
                }
            }
        }
    }

    Ok(grad)
}

/// Splits a full gradient into (free part, reaction part); each has the full
/// length with zeros on the complementary dofs.
pub fn split_dirichlet(full: &[f64], bc: &DirichletBc) -> (Vec<f64>, Vec<f64>) {
    let mut free = vec![0.0; full.len()];
    let mut reaction = vec![0.0; full.len()];
    for (dof, &v) in full.iter().enumerate() {
        if bc.constrained[dof] {
            reaction[dof] = v;
        } else {
            free[dof] = v;
        }
    }
    (free, reaction)
}

pub fn free_norm(full: &[f64], bc: &DirichletBc) -> f64 {
    full.iter()
        .enumerate()
        .filter(|(dof, _)| !bc.constrained[*dof])
        .map(|(_, v)| v * v)
        .sum::<f64>()
        .sqrt()
}

/// Symmetric sparse matrix in triplet form.
#[derive(Debug, Clone)]
pub struct Triplets {
    pub n: usize,
    pub rows: Vec<usize>,
    pub cols: Vec<usize>,
    pub vals: Vec<f64>,
}

impl Triplets {
    pub fn new(n: usize) -> Self {
        Self { n, rows: Vec::new(), cols: Vec::new(), vals: Vec::new() }
    }

    #[inline]
    pub fn push(&mut self, r: usize, c: usize, v: f64) {
        if v != 0.0 {
            self.rows.push(r);
            self.cols.push(c);
            self.vals.push(v);
        }
    }
}

/// Pushes a dense local block into the triplets, masking Dirichlet dofs.
#[allow(clippy::too_many_arguments)]
fn push_masked(t: &mut Triplets, bc: &DirichletBc, r: usize, c: usize, v: f64) {
    if !bc.constrained[r] && !bc.constrained[c] {
        t.push(r, c, v);
    }
}

/// Assembles the energy Hessian at the field, with Dirichlet dofs replaced
/// by identity rows/columns. Errors with `UndefinedHessian` in the
/// non-smooth corner (p < 2, mu = 0, zero element strain, no penalty).
pub fn assemble_hessian(
    field: &DiscreteField,
    spec: &ProblemSpec,
    bc: &DirichletBc,
) -> Result<Triplets, SolveError> {
    check_field(field, spec)?;
    let params = &spec.params;
    let dim = spec.mesh.dim;
    let nloc = dim + 1;
    let mut t = Triplets::new(spec.mesh.num_dofs());

    // strain-dependent elastic block
    let mut basis = vec![SymMatrix::zeros(dim); nloc * dim];
    let mut applied = vec![SymMatrix::zeros(dim); nloc * dim];
    for e in 0..spec.mesh.num_elems() {
        let strain = field.sym_gradient(e);
        let tan: Tensor4 = match tangent(&strain, params, &spec.elastic) {
            Ok(t) => t,
            Err(crate::error::ModelError::UndefinedHessian) if spec.penalty_level.is_some() => {
                // finite-penalty stages keep a usable (huge but finite)
                // Newton model at the C^1-only corner; energy and gradient
                // stay exact
                let floored = crate::tensor::GrowthParams { mu: 1e-12, ..*params };
                tangent(&strain, &floored, &spec.elastic)?
            }
            Err(e) => return Err(e.into()),
        };
        let vol = spec.mesh.volume(e);
        let verts = spec.mesh.elem(e);
        for (v, _) in verts.iter().enumerate() {
            let bg = spec.mesh.basis_grad(e, v);
            for i in 0..dim {
                let b = strain_basis(dim, i, &bg);
                basis[v * dim + i] = b;
                applied[v * dim + i] = tan.apply(&b);
            }
        }
        for (va, &na) in verts.iter().enumerate() {
            for ia in 0..dim {
                let row = na * dim + ia;
                let ca = &applied[va * dim + ia];
                for (vb, &nb) in verts.iter().enumerate() {
                    for ib in 0..dim {
                        let col = nb * dim + ib;
                        let val = vol * ca.dot(&basis[vb * dim + ib]);
                        push_masked(&mut t, bc, row, col, val);
                    }
                }
            }
        }
    }

    // fidelity block
    if params.kappa > 0.0 {
        let qs = spec.quadrature();
        let rule_pts = qs.rule.npoints();
        let kp = params.kappa * params.p;
        for q in 0..qs.len() {
            let e = qs.elem[q];
            let bary = qs.rule.point(q % rule_pts);
            let u = field.value_at(e, bary);
            let g = spec.g.value_at(e, bary);
            let mut m = [0.0; 3];
            let mut m2 = 0.0;
            for a in 0..dim {
                m[a] = u[a] - g[a];
                m2 += m[a] * m[a];
            }
            let s = m2.sqrt();
            let s_eff = if params.p < 2.0 { s.max(FIDELITY_HESSIAN_FLOOR) } else { s };
            let w_iso = if params.p == 2.0 {
                1.0
            } else if s_eff == 0.0 {
                if params.p > 2.0 {
                    0.0
                } else {
                    unreachable!("floored above")
                }
            } else {
                s_eff.powf(params.p - 2.0)
            };
            let w_rank = if s_eff > 1e-100 {
                (params.p - 2.0) * s_eff.powf(params.p - 4.0)
            } else {
                0.0
            };
            let wq = kp * qs.weights[q];
            let verts = spec.mesh.elem(e);
            for (va, &na) in verts.iter().enumerate() {
                for (vb, &nb) in verts.iter().enumerate() {
                    let shape = wq * bary[va] * bary[vb];
                    for i in 0..dim {
                        for j in 0..dim {
                            let mut val = 0.0;
                            if i == j {
                                val += w_iso;
                            }
                            val += w_rank * m[i] * m[j];
                            push_masked(&mut t, bc, na * dim + i, nb * dim + j, shape * val);
                        }
                    }
                }
            }
        }
    }

    // jump-penalty block (component-diagonal)
    if let Some(level) = spec.penalty_level {
        let inv_l = 1.0 / level;
        for f in &spec.mesh.faces {
            let c = f.measure / f.centroid_dist * inv_l;
            let sides = [(f.left, 1.0), (f.right, -1.0)];
            for &(ea, sa) in &sides {
                for (va, &na) in spec.mesh.elem(ea).iter().enumerate() {
                    let ga = spec.mesh.basis_grad(ea, va);
                    for &(eb, sb) in &sides {
                        for (vb, &nb) in spec.mesh.elem(eb).iter().enumerate() {
                            let gb = spec.mesh.basis_grad(eb, vb);
                            let mut dot = 0.0;
                            for k in 0..dim {
                                dot += ga[k] * gb[k];
                            }
                            let val = c * sa * sb * dot;
                            for i in 0..dim {
                                push_masked(&mut t, bc, na * dim + i, nb * dim + i, val);
                            }
                        }
                    }
                }
            }
        }
    }

    // identity rows for constrained dofs
    for (dof, &constrained) in bc.constrained.iter().enumerate() {
        if constrained {
            t.push(dof, dof, 1.0);
        }
    }

    Ok(t)
}

/// Assembles the frozen-tangent (linear) stiffness and load vector:
/// sum_K |K| <A e(u), e(phi)> = int <load, phi>, Dirichlet handled as in
/// `assemble_hessian`. The load is a P1 field (may be zero).
pub fn assemble_linear_system(
    spec: &ProblemSpec,
    frozen_tangent: &Tensor4,
    load: Option<&DiscreteField>,
    bc: &DirichletBc,
) -> Result<(Triplets, Vec<f64>), SolveError> {
    let dim = spec.mesh.dim;
    let nloc = dim + 1;
    let ndof = spec.mesh.num_dofs();
    let mut t = Triplets::new(ndof);
    let mut rhs = vec![0.0; ndof];

    let mut basis = vec![SymMatrix::zeros(dim); nloc * dim];
    let mut applied = vec![SymMatrix::zeros(dim); nloc * dim];
    for e in 0..spec.mesh.num_elems() {
        let vol = spec.mesh.volume(e);
        let verts = spec.mesh.elem(e);
        for (v, _) in verts.iter().enumerate() {
            let bg = spec.mesh.basis_grad(e, v);
            for i in 0..dim {
                let b = strain_basis(dim, i, &bg);
                basis[v * dim + i] = b;
                applied[v * dim + i] = frozen_tangent.apply(&b);
            }
        }
        for (va, &na) in verts.iter().enumerate() {
            for ia in 0..dim {
                let row = na * dim + ia;
                let ca = &applied[va * dim + ia];
                for (vb, &nb) in verts.iter().enumerate() {
                    for ib in 0..dim {
                        push_masked(&mut t, bc, row, nb * dim + ib, vol * ca.dot(&basis[vb * dim + ib]));
                    }
                }
            }
        }
    }

    if let Some(load) = load {
        let qs = spec.quadrature();
        let rule_pts = qs.rule.npoints();
        for q in 0..qs.len() {
            let e = qs.elem[q];
            let bary = qs.rule.point(q % rule_pts);
            let l = load.value_at(e, bary);
            for (v, &node) in spec.mesh.elem(e).iter().enumerate() {
                for a in 0..dim {
                    rhs[node * dim + a] += qs.weights[q] * l[a] * bary[v];
                }
            }
        }
    }

    for (dof, &constrained) in bc.constrained.iter().enumerate() {
        if constrained {
            t.push(dof, dof, 1.0);
            rhs[dof] = 0.0;
        }
    }

    Ok((t, rhs))
}

/// Moves inhomogeneous Dirichlet data to the right-hand side: given the
/// stiffness action on the lifted boundary field, returns rhs - K u_lift on
/// free dofs (the system is then solved for the free correction).
pub fn lift_dirichlet_rhs(
    spec: &ProblemSpec,
    frozen_tangent: &Tensor4,
    bc: &DirichletBc,
    rhs: &mut [f64],
) -> Result<DiscreteField, SolveError> {
    let mut lifted = DiscreteField::zeros(spec.mesh.clone());
    bc.apply(&mut lifted);
    // K_full * lifted via element loops (no BC masking)
    let dim = spec.mesh.dim;
    for e in 0..spec.mesh.num_elems() {
        let strain = lifted.sym_gradient(e);
        let s = frozen_tangent.apply(&strain);
        let vol = spec.mesh.volume(e);
        for (v, &node) in spec.mesh.elem(e).iter().enumerate() {
            let bg = spec.mesh.basis_grad(e, v);
            for i in 0..dim {
                let mut acc = 0.0;
                for j in 0..dim {
                    acc += s.get(i, j) * bg[j];
                }
                if !bc.constrained[node * dim + i] {
                    rhs[node * dim + i] -= vol * acc;
                }
            }
        }
    }
    Ok(lifted)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fem::mesh::build_mesh;
    use crate::fem::problem::{DirichletBc, ProblemSpec};
    use crate::tensor::{ElasticTensor, GrowthParams};
    use rand::prelude::*;
    use std::sync::Arc;

    fn make_spec(
        n: usize,
        dim: usize,
        p: f64,
        mu: f64,
        kappa: f64,
        level: Option<f64>,
    ) -> ProblemSpec {
        let lo = vec![0.0; dim];
        let hi = vec![1.0; dim];
        let mesh = Arc::new(build_mesh(dim, &lo, &hi, n).unwrap());
        let params = GrowthParams::new(p, mu, kappa, dim).unwrap();
        let g = DiscreteField::interpolate(mesh.clone(), |x| {
            let mut v = vec![0.1 * (3.0 * x[0]).sin(); dim];
            v[dim - 1] = 0.05 * x[0] * x[1];
            v
        });
        let bc = DirichletBc::none(&mesh);
        ProblemSpec::new(mesh, params, ElasticTensor::identity(dim), g, bc, level, 2).unwrap()
    }

    fn random_field(spec: &ProblemSpec, seed: u64, scale: f64) -> DiscreteField {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let mut f = DiscreteField::zeros(spec.mesh.clone());
        for v in f.values.iter_mut() {
            *v = scale * rng.random_range(-1.0..1.0);
        }
        f
    }

    #[test]
    fn energy_zero_when_field_matches_datum_and_strain_free() {
        // u = g = affine with zero symmetric strain, penalty off
        let dim = 2;
        let mesh = Arc::new(build_mesh(dim, &[0.0, 0.0], &[1.0, 1.0], 4).unwrap());
        let params = GrowthParams::new(3.0, 1.0, 5.0, dim).unwrap();
        let skew = DiscreteField::affine(mesh.clone(), &[0.0, 0.7, -0.7, 0.0]);
        let spec = ProblemSpec::new(
            mesh.clone(),
            params,
            ElasticTensor::identity(dim),
            skew.clone(),
            DirichletBc::none(&mesh),
            None,
            2,
        )
        .unwrap();
        let e = assemble_energy(&skew, &spec).unwrap();
        assert!(e.abs() < 1e-14, "energy {e}");
    }

    #[test]
    fn quadratic_energy_of_constant_strain() {
        // p = 2, C = Id, mu = 0, kappa = 0, u = Ax symmetric:
        // energy = |A|^2/2 * volume
        let spec = make_spec(4, 2, 2.0, 0.0, 0.0, None);
        let a = [0.5, 0.25, 0.25, -1.0];
        let u = DiscreteField::affine(spec.mesh.clone(), &a);
        let e = assemble_energy(&u, &spec).unwrap();
        let a_norm2: f64 = 0.5 * 0.5 + 2.0 * 0.25 * 0.25 + 1.0;
        assert!((e - 0.5 * a_norm2).abs() < 1e-13, "{e}");
    }

    #[test]
    fn energy_matches_independent_reassembly() {
        // independent oracle: recompute the same discrete functional with a
        // from-scratch loop over elements and rule points
        let spec = make_spec(4, 2, 3.0, 1.0, 2.0, None);
        let u = random_field(&spec, 1, 0.3);
        let got = assemble_energy(&u, &spec).unwrap();

        let mesh = &spec.mesh;
        let rule = crate::fem::quad::simplex_rule(2, 2).unwrap();
        let mut oracle = 0.0;
        for e in 0..mesh.num_elems() {
            let verts: Vec<usize> = mesh.elem(e).to_vec();
            // strain from scratch
            let mut grad = [[0.0_f64; 2]; 2];
            for (v, &node) in verts.iter().enumerate() {
                let bg = mesh.basis_grad(e, v);
                for i in 0..2 {
                    for j in 0..2 {
                        grad[i][j] += u.values[node * 2 + i] * bg[j];
                    }
                }
            }
            let strain = SymMatrix::symmetrize(
                2,
                &[grad[0][0], grad[0][1], grad[1][0], grad[1][1]],
            );
            oracle += mesh.volume(e)
                * crate::tensor::energy_density(&strain, &spec.params, &spec.elastic);
            for q in 0..rule.npoints() {
                let lam = rule.point(q);
                let mut diff2 = 0.0;
                for a in 0..2 {
                    let mut uu = 0.0;
                    let mut gg = 0.0;
                    for (v, &node) in verts.iter().enumerate() {
                        uu += lam[v] * u.values[node * 2 + a];
                        gg += lam[v] * spec.g.values[node * 2 + a];
                    }
                    diff2 += (uu - gg) * (uu - gg);
                }
                oracle += spec.params.kappa
                    * rule.weights[q]
                    * mesh.volume(e)
                    * diff2.powf(0.5 * spec.params.p);
            }
        }
        assert!((got - oracle).abs() <= 1e-10 * (1.0 + oracle.abs()), "{got} vs {oracle}");
    }

    #[test]
    fn gradient_matches_finite_differences() {
        for (p, mu, kappa, level) in [
            (1.5, 1.0, 2.0, None),
            (2.0, 0.0, 0.0, None),
            (3.0, 0.0, 2.0, None),
            (4.0, 1.0, 0.0, None),
            (1.5, 0.0, 1.0, Some(10.0)),
        ] {
            let spec = make_spec(4, 2, p, mu, kappa, level);
            let u = random_field(&spec, 2, 0.5);
            let grad = assemble_gradient(&u, &spec).unwrap();
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(9);
            for _ in 0..5 {
                let dir: Vec<f64> =
                    (0..u.values.len()).map(|_| rng.random_range(-1.0..1.0)).collect();
                let h = 1e-6;
                let mut up = u.clone();
                let mut dn = u.clone();
                for (i, d) in dir.iter().enumerate() {
                    up.values[i] += h * d;
                    dn.values[i] -= h * d;
                }
                let fd = (assemble_energy(&up, &spec).unwrap()
                    - assemble_energy(&dn, &spec).unwrap())
                    / (2.0 * h);
                let an: f64 = grad.iter().zip(dir.iter()).map(|(g, d)| g * d).sum();
                let scale = fd.abs().max(an.abs()).max(1e-10);
                assert!(
                    (fd - an).abs() / scale < 1e-5,
                    "p={p} mu={mu} kappa={kappa} level={level:?}: {fd} vs {an}"
                );
            }
        }
    }

    #[test]
    fn quadratic_gradient_is_linear_in_field() {
        // p = 2, kappa = 0: gradient is the constant stiffness acting on u
        let spec = make_spec(3, 2, 2.0, 0.0, 0.0, None);
        let u = random_field(&spec, 3, 1.0);
        let v = random_field(&spec, 4, 1.0);
        let gu = assemble_gradient(&u, &spec).unwrap();
        let gv = assemble_gradient(&v, &spec).unwrap();
        let mut uv = u.clone();
        for (a, b) in uv.values.iter_mut().zip(v.values.iter()) {
            *a += b;
        }
        let guv = assemble_gradient(&uv, &spec).unwrap();
        for i in 0..gu.len() {
            assert!((guv[i] - gu[i] - gv[i]).abs() < 1e-11);
        }
    }

    #[test]
    fn hessian_vector_matches_gradient_differences() {
        for (p, mu, kappa, level) in [
            (1.5, 1.0, 2.0, None),
            (2.0, 0.0, 2.0, None),
            (3.0, 0.0, 0.0, None),
            (4.0, 1.0, 2.0, Some(100.0)),
        ] {
            let spec = make_spec(3, 2, p, mu, kappa, level);
            let bc = DirichletBc::none(&spec.mesh);
            let u = random_field(&spec, 5, 0.4);
            let trips = assemble_hessian(&u, &spec, &bc).unwrap();
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(10);
            let dir: Vec<f64> = (0..u.values.len()).map(|_| rng.random_range(-1.0..1.0)).collect();
            let mut hv = vec![0.0; dir.len()];
            for ((&r, &c), &v) in trips.rows.iter().zip(&trips.cols).zip(&trips.vals) {
                hv[r] += v * dir[c];
            }
            let h = 1e-6;
            let mut up = u.clone();
            let mut dn = u.clone();
            for (i, d) in dir.iter().enumerate() {
                up.values[i] += h * d;
                dn.values[i] -= h * d;
            }
            let gp = assemble_gradient(&up, &spec).unwrap();
            let gm = assemble_gradient(&dn, &spec).unwrap();
            let mut err: f64 = 0.0;
            let mut scale: f64 = 1e-10;
            for i in 0..hv.len() {
                let fd = (gp[i] - gm[i]) / (2.0 * h);
                err = err.max((fd - hv[i]).abs());
                scale = scale.max(fd.abs()).max(hv[i].abs());
            }
            assert!(err / scale < 1e-4, "p={p} mu={mu} kappa={kappa}: rel err {}", err / scale);
        }
    }

    #[test]
    fn hessian_kills_rigid_motions() {
        // kappa = 0, no constraints: H acting on an infinitesimal rigid
        // motion gives zero
        let spec = make_spec(3, 2, 3.0, 1.0, 0.0, None);
        let bc = DirichletBc::none(&spec.mesh);
        let u = random_field(&spec, 6, 0.2);
        let trips = assemble_hessian(&u, &spec, &bc).unwrap();
        let rigid = DiscreteField::interpolate(spec.mesh.clone(), |x| {
            vec![0.3 - 0.9 * x[1], -0.7 + 0.9 * x[0]]
        });
        let mut hv = vec![0.0; rigid.values.len()];
        for ((&r, &c), &v) in trips.rows.iter().zip(&trips.cols).zip(&trips.vals) {
            hv[r] += v * rigid.values[c];
        }
        let max = hv.iter().fold(0.0_f64, |m, &v| m.max(v.abs()));
        assert!(max < 1e-11, "rigid motion response {max}");
    }

    #[test]
    fn undefined_hessian_propagates() {
        let spec = make_spec(3, 2, 1.5, 0.0, 0.0, None);
        let bc = DirichletBc::none(&spec.mesh);
        let u = DiscreteField::zeros(spec.mesh.clone()); // zero strain everywhere
        assert!(matches!(
            assemble_hessian(&u, &spec, &bc),
            Err(SolveError::Model(crate::error::ModelError::UndefinedHessian))
        ));
        // with the jump penalty the elastic tangent is still undefined; the
        // solver must use the continuation path, which perturbs the field
        // away from zero strain before assembling
    }

    #[test]
    fn frame_indifference_of_elastic_term() {
        // adding a skew-affine field leaves the elastic energy unchanged
        let spec = make_spec(4, 2, 3.0, 1.0, 0.0, None);
        let u = random_field(&spec, 7, 0.5);
        let mut shifted = u.clone();
        let skew = DiscreteField::affine(spec.mesh.clone(), &[0.0, 1.3, -1.3, 0.0]);
        for (a, b) in shifted.values.iter_mut().zip(skew.values.iter()) {
            *a += b;
        }
        let e1 = assemble_energy(&u, &spec).unwrap();
        let e2 = assemble_energy(&shifted, &spec).unwrap();
        assert!((e1 - e2).abs() <= 1e-12 * (1.0 + e1.abs()), "{e1} vs {e2}");
    }

    #[test]
    fn penalty_dominates_baseline_energy() {
        // F_L >= F for every field when L is set
        let spec = make_spec(4, 2, 1.5, 0.0, 1.0, None);
        let spec_pen = spec.with_penalty(Some(3.0));
        for seed in 0..5 {
            let u = random_field(&spec, 100 + seed, 0.8);
            let base = assemble_energy(&u, &spec).unwrap();
            let pen = assemble_energy(&u, &spec_pen).unwrap();
            assert!(pen >= base - 1e-13 * base.abs().max(1.0));
        }
    }

    #[test]
    fn penalty_vanishes_on_globally_affine_fields() {
        let spec = make_spec(4, 2, 2.0, 0.0, 0.0, Some(1.0));
        let u = DiscreteField::affine(spec.mesh.clone(), &[0.4, 0.1, 0.1, -0.2]);
        let spec_off = spec.with_penalty(None);
        let with = assemble_energy(&u, &spec).unwrap();
        let without = assemble_energy(&u, &spec_off).unwrap();
        assert!((with - without).abs() < 1e-13);
    }

    #[test]
    fn discrete_korn_constant_on_constrained_fields() {
        // for u vanishing on the boundary: int |grad u|^2 <= 2 int |e(u)|^2
        let spec = make_spec(8, 2, 2.0, 0.0, 0.0, None);
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(12);
        for _ in 0..5 {
            let mut u = DiscreteField::zeros(spec.mesh.clone());
            for node in 0..spec.mesh.num_nodes() {
                if !spec.mesh.boundary_nodes.contains(&node) {
                    for a in 0..2 {
                        u.values[node * 2 + a] = rng.random_range(-1.0..1.0);
                    }
                }
            }
            let mut grad2 = 0.0;
            let mut sym2 = 0.0;
            for e in 0..spec.mesh.num_elems() {
                let g = u.gradient(e);
                let vol = spec.mesh.volume(e);
                for k in 0..4 {
                    grad2 += vol * g[k] * g[k];
                }
                sym2 += vol * u.sym_gradient(e).norm_sq();
            }
            assert!(grad2 <= 2.0 * sym2 * (1.0 + 1e-12), "korn ratio {}", grad2 / sym2);
        }
    }

    #[test]
    fn energy_quadrature_converges_at_second_order() {
        // fixed smooth field, interpolated on finer and finer meshes;
        // p = 2 energy has the closed-form limit 3 pi^2 / 16 on [0, pi]^2
        let exact = 3.0 * std::f64::consts::PI.powi(2) / 16.0;
        let mut errs = Vec::new();
        for n in [8, 16, 32] {
            let mesh = Arc::new(
                build_mesh(2, &[0.0, 0.0], &[std::f64::consts::PI, std::f64::consts::PI], n)
                    .unwrap(),
            );
            let params = GrowthParams::new(2.0, 0.0, 0.0, 2).unwrap();
            let g = DiscreteField::zeros(mesh.clone());
            let spec = ProblemSpec::new(
                mesh.clone(),
                params,
                ElasticTensor::identity(2),
                g,
                DirichletBc::none(&mesh),
                None,
                2,
            )
            .unwrap();
            let u = DiscreteField::interpolate(mesh, |x| vec![x[0].sin() * x[1].sin(), 0.0]);
            errs.push((assemble_energy(&u, &spec).unwrap() - exact).abs());
        }
        assert!(errs[0] / errs[1] > 3.3, "orders: {errs:?}");
        assert!(errs[1] / errs[2] > 3.5, "orders: {errs:?}");
    }
}
