//! Nodal vector fields (continuous piecewise-affine P1) and lattice
//! difference quotients.

use super::mesh::Mesh;
use crate::error::MeshError;
use crate::tensor::SymMatrix;
use std::sync::Arc;

/// A P1 vector field on a mesh; values are node-major, stride = dim.
#[derive(Debug, Clone)]
pub struct DiscreteField {
    pub mesh: Arc<Mesh>,
    pub values: Vec<f64>,
}

impl DiscreteField {
    pub fn zeros(mesh: Arc<Mesh>) -> Self {
        let n = mesh.num_dofs();
        Self { mesh, values: vec![0.0; n] }
    }

    /// Nodal interpolation of a pointwise function.
    pub fn interpolate<F>(mesh: Arc<Mesh>, f: F) -> Self
    where
        F: Fn(&[f64]) -> Vec<f64>,
    {
        let dim = mesh.dim;
        let mut values = vec![0.0; mesh.num_dofs()];
        for node in 0..mesh.num_nodes() {
            let x = mesh.node(node);
            let v = f(&x[..dim]);
            values[node * dim..node * dim + dim].copy_from_slice(&v[..dim]);
        }
        Self { mesh, values }
    }

    /// Interpolant of the affine field x -> A x (A need not be symmetric).
    pub fn affine(mesh: Arc<Mesh>, a: &[f64]) -> Self {
        let dim = mesh.dim;
        Self::interpolate(mesh, |x| {
            (0..dim)
                .map(|i| (0..dim).map(|j| a[i * dim + j] * x[j]).sum())
                .collect()
        })
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.mesh.dim
    }

    #[inline]
    pub fn node_value(&self, node: usize) -> &[f64] {
        let d = self.dim();
        &self.values[node * d..(node + 1) * d]
    }

    pub fn same_mesh(&self, other: &DiscreteField) -> bool {
        Arc::ptr_eq(&self.mesh, &other.mesh) || self.mesh.descriptor() == other.mesh.descriptor()
    }

    /// Value of the P1 interpolant at a barycentric point of an element.
    pub fn value_at(&self, elem: usize, bary: &[f64]) -> [f64; 3] {
        let dim = self.dim();
        let mut out = [0.0; 3];
        for (v, &node) in self.mesh.elem(elem).iter().enumerate() {
            let nv = self.node_value(node);
            for a in 0..dim {
                out[a] += bary[v] * nv[a];
            }
        }
        out
    }

    /// Full displacement gradient on an element (constant for P1),
    /// row-major dim x dim: (grad u)_{ij} = d u_i / d x_j.
    pub fn gradient(&self, elem: usize) -> [f64; 9] {
        let dim = self.dim();
        let mut g = [0.0; 9];
        for (v, &node) in self.mesh.elem(elem).iter().enumerate() {
            let bg = self.mesh.basis_grad(elem, v);
            let nv = self.node_value(node);
            for i in 0..dim {
                for j in 0..dim {
                    g[i * dim + j] += nv[i] * bg[j];
                }
            }
        }
        g
    }

    /// Symmetric gradient e(u) on an element: constant per element,
    /// vanishing exactly on infinitesimal rigid motions.
    pub fn sym_gradient(&self, elem: usize) -> SymMatrix {
        let dim = self.dim();
        let g = self.gradient(elem);
        SymMatrix::symmetrize(dim, &g[..dim * dim])
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0_f64, |m, &v| m.max(v.abs()))
    }

    /// Nodal max-norm distance to another field on the same mesh.
    pub fn max_diff(&self, other: &DiscreteField) -> f64 {
        self.values
            .iter()
            .zip(other.values.iter())
            .fold(0.0_f64, |m, (&a, &b)| m.max((a - b).abs()))
    }
}

/// Forward difference quotient along lattice axis `axis` with step `h`
/// (a signed multiple of the mesh spacing): (v(x + h e_s) - v(x)) / h where
/// the shifted node exists, 0 elsewhere.
pub fn difference_quotient(
    field: &DiscreteField,
    axis: usize,
    h: f64,
) -> Result<DiscreteField, MeshError> {
    let mesh = &field.mesh;
    let spacing = mesh.spacing()[axis];
    let steps = h / spacing;
    let m = steps.round();
    if (steps - m).abs() > 1e-9 * (1.0 + m.abs()) || m == 0.0 {
        return Err(MeshError::BadStep { step: h, spacing });
    }
    let m = m as i64;
    let dim = mesh.dim;
    let npa = mesh.cells_per_axis as i64;
    let mut out = DiscreteField::zeros(field.mesh.clone());
    for node in 0..mesh.num_nodes() {
        let mut idx = mesh.node_lattice(node);
        let shifted = idx[axis] as i64 + m;
        if shifted < 0 || shifted > npa {
            continue;
        }
        idx[axis] = shifted as usize;
        let other = mesh.lattice_node(idx);
        for a in 0..dim {
            out.values[node * dim + a] =
                (field.values[other * dim + a] - field.values[node * dim + a]) / h;
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fem::mesh::build_mesh;

    fn unit_square(n: usize) -> Arc<Mesh> {
        Arc::new(build_mesh(2, &[0.0, 0.0], &[1.0, 1.0], n).unwrap())
    }

    #[test]
    fn sym_gradient_of_affine_field() {
        let mesh = unit_square(3);
        let a = [0.5, 0.25, 0.25, -1.0]; // symmetric A
        let u = DiscreteField::affine(mesh.clone(), &a);
        for e in 0..mesh.num_elems() {
            let s = u.sym_gradient(e);
            assert!((s.get(0, 0) - 0.5).abs() < 1e-13);
            assert!((s.get(0, 1) - 0.25).abs() < 1e-13);
            assert!((s.get(1, 1) + 1.0).abs() < 1e-13);
        }
    }

    #[test]
    fn sym_gradient_kills_skew_fields() {
        let mesh = unit_square(3);
        let w = [0.0, 1.0, -1.0, 0.0]; // skew W
        let u = DiscreteField::affine(mesh.clone(), &w);
        for e in 0..mesh.num_elems() {
            assert!(u.sym_gradient(e).norm() < 1e-13);
        }
    }

    #[test]
    fn sym_gradient_of_quadratic_interpolant() {
        // u = (x1^2, 0): on each element the P1 interpolant has
        // e_11 = d/dx interp(x1^2); oracle: solve the 2x2 edge system by hand
        let mesh = unit_square(4);
        let u = DiscreteField::interpolate(mesh.clone(), |x| vec![x[0] * x[0], 0.0]);
        for e in 0..mesh.num_elems() {
            let verts: Vec<[f64; 3]> = mesh.elem(e).iter().map(|&v| mesh.node(v)).collect();
            // independent oracle: gradient g of the scalar interpolant solves
            // g . (v_i - v_0) = f(v_i) - f(v_0)
            let f = |p: [f64; 3]| p[0] * p[0];
            let (d1x, d1y) = (verts[1][0] - verts[0][0], verts[1][1] - verts[0][1]);
            let (d2x, d2y) = (verts[2][0] - verts[0][0], verts[2][1] - verts[0][1]);
            let (r1, r2) = (f(verts[1]) - f(verts[0]), f(verts[2]) - f(verts[0]));
            let det = d1x * d2y - d2x * d1y;
            let gx = (r1 * d2y - r2 * d1y) / det;
            let s = u.sym_gradient(e);
            assert!((s.get(0, 0) - gx).abs() < 1e-12, "elem {e}: {} vs {gx}", s.get(0, 0));
        }
    }

    #[test]
    fn difference_quotient_of_affine_field_is_constant_column() {
        let mesh = unit_square(4);
        let a = [2.0, 1.0, 0.5, -1.0];
        let u = DiscreteField::affine(mesh.clone(), &a);
        let h = mesh.spacing()[0];
        let dq = difference_quotient(&u, 0, h).unwrap();
        // interior nodes carry the column A e_0 = (2.0, 0.5)
        for node in 0..mesh.num_nodes() {
            let idx = mesh.node_lattice(node);
            if idx[0] < mesh.cells_per_axis {
                let v = dq.node_value(node);
                assert!((v[0] - 2.0).abs() < 1e-12);
                assert!((v[1] - 0.5).abs() < 1e-12);
            } else {
                assert_eq!(dq.node_value(node), &[0.0, 0.0]);
            }
        }
    }

    #[test]
    fn second_difference_of_quadratic() {
        // forward then backward difference on (x1^2, 0): the composition at
        // interior nodes is the exact second difference, giving (2, 0)
        let mesh = unit_square(6);
        let u = DiscreteField::interpolate(mesh.clone(), |x| vec![x[0] * x[0], 0.0]);
        let h = mesh.spacing()[0];
        let fwd = difference_quotient(&u, 0, h).unwrap();
        let bwd = difference_quotient(&fwd, 0, -h).unwrap();
        for node in 0..mesh.num_nodes() {
            let idx = mesh.node_lattice(node);
            if idx[0] >= 1 && idx[0] < mesh.cells_per_axis {
                let v = bwd.node_value(node);
                assert!((v[0] + 2.0).abs() < 1e-10 || (v[0] - 2.0).abs() < 1e-10, "{}", v[0]);
            }
        }
    }

    #[test]
    fn shift_identity_tau_equals_h_times_quotient() {
        let mesh = unit_square(4);
        let u = DiscreteField::interpolate(mesh.clone(), |x| vec![x[0].sin(), x[1] * x[0]]);
        let h = 2.0 * mesh.spacing()[1];
        let dq = difference_quotient(&u, 1, h).unwrap();
        for node in 0..mesh.num_nodes() {
            let mut idx = mesh.node_lattice(node);
            if idx[1] + 2 <= mesh.cells_per_axis {
                let here = u.node_value(node).to_vec();
                idx[1] += 2;
                let there = u.node_value(mesh.lattice_node(idx)).to_vec();
                for a in 0..2 {
                    let tau = h * dq.node_value(node)[a];
                    assert!((tau - (there[a] - here[a])).abs() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn misaligned_step_rejected() {
        let mesh = unit_square(4);
        let u = DiscreteField::zeros(mesh.clone());
        let h = 0.37 * mesh.spacing()[0];
        assert!(matches!(difference_quotient(&u, 0, h), Err(MeshError::BadStep { .. })));
    }
}
