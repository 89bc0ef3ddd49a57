//! Structured simplicial mesh of an axis-aligned box: each cell of the
//! regular grid is split into 2 triangles (2D) or 6 tetrahedra (3D,
//! Freudenthal split along vertex permutations), giving a conforming mesh
//! with positively oriented elements.

use crate::error::MeshError;
use serde::{Deserialize, Serialize};

/// Regenerable description of a mesh (the full mesh is derived data).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MeshDescriptor {
    pub dim: usize,
    pub box_lo: Vec<f64>,
    pub box_hi: Vec<f64>,
    pub cells_per_axis: usize,
}

#[derive(Debug, Clone)]
pub struct Mesh {
    pub dim: usize,
    pub box_lo: [f64; 3],
    pub box_hi: [f64; 3],
    pub cells_per_axis: usize,
    /// Node coordinates, node-major, stride 3 (unused axes zero).
    coords: Vec<f64>,
    /// Element connectivity, stride dim + 1.
    elems: Vec<usize>,
    /// Sorted indices of nodes on the box boundary.
    pub boundary_nodes: Vec<usize>,
    /// Per-element data: volume and the constant gradients of the
    /// barycentric (P1) basis functions, element-major,
    /// stride (dim+1) * 3.
    volumes: Vec<f64>,
    grads: Vec<f64>,
    /// Interior faces (facets shared by exactly two elements).
    pub faces: Vec<InteriorFace>,
}

/// A facet shared by two elements.
#[derive(Debug, Clone)]
pub struct InteriorFace {
    pub nodes: [usize; 3],
    pub node_count: usize,
    pub left: usize,
    pub right: usize,
    pub measure: f64,
    /// Distance between the two element centroids.
    pub centroid_dist: f64,
}

/// Builds the structured mesh.
pub fn build_mesh(
    dim: usize,
    box_lo: &[f64],
    box_hi: &[f64],
    cells_per_axis: usize,
) -> Result<Mesh, MeshError> {
    if dim != 2 && dim != 3 {
        return Err(MeshError::BadDomain { axis: dim, lo: 0.0, hi: 0.0 });
    }
    if cells_per_axis < 2 {
        return Err(MeshError::TooFewCells(cells_per_axis));
    }
    let mut lo = [0.0; 3];
    let mut hi = [0.0; 3];
    for a in 0..dim {
        if !(box_hi[a] > box_lo[a]) || !box_lo[a].is_finite() || !box_hi[a].is_finite() {
            return Err(MeshError::BadDomain { axis: a, lo: box_lo[a], hi: box_hi[a] });
        }
        lo[a] = box_lo[a];
        hi[a] = box_hi[a];
    }
    let n = cells_per_axis;
    let nodes_per_axis = n + 1;

    let mut coords = Vec::new();
    let mut boundary = Vec::new();
    if dim == 2 {
        coords.reserve(nodes_per_axis * nodes_per_axis * 3);
        for j in 0..nodes_per_axis {
            for i in 0..nodes_per_axis {
                let x = lo[0] + (hi[0] - lo[0]) * i as f64 / n as f64;
                let y = lo[1] + (hi[1] - lo[1]) * j as f64 / n as f64;
                coords.extend_from_slice(&[x, y, 0.0]);
                if i == 0 || i == n || j == 0 || j == n {
                    boundary.push(j * nodes_per_axis + i);
                }
            }
        }
    } else {
        coords.reserve(nodes_per_axis.pow(3) * 3);
        for k in 0..nodes_per_axis {
            for j in 0..nodes_per_axis {
                for i in 0..nodes_per_axis {
                    let x = lo[0] + (hi[0] - lo[0]) * i as f64 / n as f64;
                    let y = lo[1] + (hi[1] - lo[1]) * j as f64 / n as f64;
                    let z = lo[2] + (hi[2] - lo[2]) * k as f64 / n as f64;
                    coords.extend_from_slice(&[x, y, z]);
                    if i == 0 || i == n || j == 0 || j == n || k == 0 || k == n {
                        boundary.push((k * nodes_per_axis + j) * nodes_per_axis + i);
                    }
                }
            }
        }
    }

    let mut elems = Vec::new();
    if dim == 2 {
        let node = |i: usize, j: usize| j * nodes_per_axis + i;
        for j in 0..n {
            for i in 0..n {
                let (v00, v10, v01, v11) =
                    (node(i, j), node(i + 1, j), node(i, j + 1), node(i + 1, j + 1));
                elems.extend_from_slice(&[v00, v10, v11]);
                elems.extend_from_slice(&[v00, v11, v01]);
            }
        }
    } else {
        let node = |i: usize, j: usize, k: usize| (k * nodes_per_axis + j) * nodes_per_axis + i;
        // Freudenthal: six tetrahedra per cube, one per permutation of the
        // axis order; even permutations keep the vertex order, odd ones swap
        // the last two vertices to keep the orientation positive.
        const PERMS: [([usize; 3], bool); 6] = [
            ([0, 1, 2], true),
            ([1, 2, 0], true),
            ([2, 0, 1], true),
            ([0, 2, 1], false),
            ([2, 1, 0], false),
            ([1, 0, 2], false),
        ];
        for k in 0..n {
            for j in 0..n {
                for i in 0..n {
                    for (perm, even) in PERMS.iter() {
                        let mut ijk = [i, j, k];
                        let mut verts = [node(i, j, k), 0, 0, 0];
                        for (step, &axis) in perm.iter().enumerate() {
                            ijk[axis] += 1;
                            verts[step + 1] = node(ijk[0], ijk[1], ijk[2]);
                        }
                        if !even {
                            verts.swap(2, 3);
                        }
                        elems.extend_from_slice(&verts);
                    }
                }
            }
        }
    }

    let mut mesh = Mesh {
        dim,
        box_lo: lo,
        box_hi: hi,
        cells_per_axis: n,
        coords,
        elems,
        boundary_nodes: boundary,
        volumes: Vec::new(),
        grads: Vec::new(),
        faces: Vec::new(),
    };
    mesh.compute_geometry()?;
    mesh.compute_faces();
    Ok(mesh)
}

impl Mesh {
    pub fn from_descriptor(d: &MeshDescriptor) -> Result<Mesh, MeshError> {
        build_mesh(d.dim, &d.box_lo, &d.box_hi, d.cells_per_axis)
    }

    pub fn descriptor(&self) -> MeshDescriptor {
        MeshDescriptor {
            dim: self.dim,
            box_lo: self.box_lo[..self.dim].to_vec(),
            box_hi: self.box_hi[..self.dim].to_vec(),
            cells_per_axis: self.cells_per_axis,
        }
    }

    #[inline]
    pub fn num_nodes(&self) -> usize {
        self.coords.len() / 3
    }

    #[inline]
    pub fn num_elems(&self) -> usize {
        self.elems.len() / (self.dim + 1)
    }

    #[inline]
    pub fn num_dofs(&self) -> usize {
        self.num_nodes() * self.dim
    }

    #[inline]
    pub fn node(&self, id: usize) -> [f64; 3] {
        [self.coords[3 * id], self.coords[3 * id + 1], self.coords[3 * id + 2]]
    }

    #[inline]
    pub fn elem(&self, e: usize) -> &[usize] {
        let k = self.dim + 1;
        &self.elems[e * k..(e + 1) * k]
    }

    #[inline]
    pub fn volume(&self, e: usize) -> f64 {
        self.volumes[e]
    }

    /// Gradient of the barycentric basis function of local vertex `v` on
    /// element `e`.
    #[inline]
    pub fn basis_grad(&self, e: usize, v: usize) -> [f64; 3] {
        let base = (e * (self.dim + 1) + v) * 3;
        [self.grads[base], self.grads[base + 1], self.grads[base + 2]]
    }

    /// Mesh spacing along each axis.
    pub fn spacing(&self) -> [f64; 3] {
        let mut h = [0.0; 3];
        for a in 0..self.dim {
            h[a] = (self.box_hi[a] - self.box_lo[a]) / self.cells_per_axis as f64;
        }
        h
    }

    pub fn max_spacing(&self) -> f64 {
        self.spacing()[..self.dim].iter().cloned().fold(0.0, f64::max)
    }

    pub fn elem_centroid(&self, e: usize) -> [f64; 3] {
        let verts = self.elem(e);
        let mut c = [0.0; 3];
        for &v in verts {
            let x = self.node(v);
            for a in 0..3 {
                c[a] += x[a];
            }
        }
        let k = verts.len() as f64;
        for v in c.iter_mut() {
            *v /= k;
        }
        c
    }

    /// Lattice index of a node (i fastest).
    pub fn node_lattice(&self, id: usize) -> [usize; 3] {
        let m = self.cells_per_axis + 1;
        if self.dim == 2 {
            [id % m, id / m, 0]
        } else {
            [id % m, (id / m) % m, id / (m * m)]
        }
    }

    pub fn lattice_node(&self, idx: [usize; 3]) -> usize {
        let m = self.cells_per_axis + 1;
        if self.dim == 2 {
            idx[1] * m + idx[0]
        } else {
            (idx[2] * m + idx[1]) * m + idx[0]
        }
    }

    fn compute_geometry(&mut self) -> Result<(), MeshError> {
        let k = self.dim + 1;
        let ne = self.num_elems();
        self.volumes = vec![0.0; ne];
        self.grads = vec![0.0; ne * k * 3];
        for e in 0..ne {
            let verts: Vec<[f64; 3]> = self.elem(e).iter().map(|&v| self.node(v)).collect();
            if self.dim == 2 {
                let (a, b, c) = (verts[0], verts[1], verts[2]);
                let det = (b[0] - a[0]) * (c[1] - a[1]) - (c[0] - a[0]) * (b[1] - a[1]);
                if det <= 0.0 {
                    return Err(MeshError::BadDomain { axis: 0, lo: det, hi: 0.0 });
                }
                self.volumes[e] = 0.5 * det;
                // grad lambda_i from the inverse Jacobian
                let g = [
                    [(b[1] - c[1]) / det, (c[0] - b[0]) / det],
                    [(c[1] - a[1]) / det, (a[0] - c[0]) / det],
                    [(a[1] - b[1]) / det, (b[0] - a[0]) / det],
                ];
                for v in 0..3 {
                    let base = (e * k + v) * 3;
                    self.grads[base] = g[v][0];
                    self.grads[base + 1] = g[v][1];
                }
            } else {
                let a = verts[0];
                let d1 = sub3(verts[1], a);
                let d2 = sub3(verts[2], a);
                let d3 = sub3(verts[3], a);
                let det = dot3(d1, cross3(d2, d3));
                if det <= 0.0 {
                    return Err(MeshError::BadDomain { axis: 0, lo: det, hi: 0.0 });
                }
                self.volumes[e] = det / 6.0;
                // rows of the inverse Jacobian give grad lambda_1..3
                let g1 = scale3(cross3(d2, d3), 1.0 / det);
                let g2 = scale3(cross3(d3, d1), 1.0 / det);
                let g3 = scale3(cross3(d1, d2), 1.0 / det);
                let g0 = [-(g1[0] + g2[0] + g3[0]), -(g1[1] + g2[1] + g3[1]), -(g1[2] + g2[2] + g3[2])];
                for (v, g) in [g0, g1, g2, g3].iter().enumerate() {
                    let base = (e * k + v) * 3;
                    self.grads[base] = g[0];
                    self.grads[base + 1] = g[1];
                    self.grads[base + 2] = g[2];
                }
            }
        }
        Ok(())
    }

    fn compute_faces(&mut self) {
        use std::collections::HashMap;
        let k = self.dim + 1;
        let mut seen: HashMap<[usize; 3], (usize, [usize; 3])> = HashMap::new();
        let mut faces = Vec::new();
        for e in 0..self.num_elems() {
            let verts: Vec<usize> = self.elem(e).to_vec();
            for skip in 0..k {
                let mut face = [usize::MAX; 3];
                let mut m = 0;
                for (idx, &v) in verts.iter().enumerate() {
                    if idx != skip {
                        face[m] = v;
                        m += 1;
                    }
                }
                let mut key = face;
                key[..self.dim].sort_unstable();
                match seen.remove(&key) {
                    None => {
                        seen.insert(key, (e, face));
                    }
                    Some((other, face_nodes)) => {
                        let measure = self.facet_measure(&face_nodes);
                        let ca = self.elem_centroid(other);
                        let cb = self.elem_centroid(e);
                        let dist = dist3(ca, cb);
                        faces.push(InteriorFace {
                            nodes: face_nodes,
                            node_count: self.dim,
                            left: other,
                            right: e,
                            measure,
                            centroid_dist: dist,
                        });
                    }
                }
            }
        }
        // deterministic order regardless of hash iteration
        faces.sort_by_key(|f| (f.left, f.right, f.nodes));
        self.faces = faces;
    }

    fn facet_measure(&self, face: &[usize; 3]) -> f64 {
        if self.dim == 2 {
            dist3(self.node(face[0]), self.node(face[1]))
        } else {
            let a = self.node(face[0]);
            let d1 = sub3(self.node(face[1]), a);
            let d2 = sub3(self.node(face[2]), a);
            0.5 * norm3(cross3(d1, d2))
        }
    }
}

#[inline]
fn sub3(a: [f64; 3], b: [f64; 3]) -> [f64; 3] {
    [a[0] - b[0], a[1] - b[1], a[2] - b[2]]
}

#[inline]
fn dot3(a: [f64; 3], b: [f64; 3]) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

#[inline]
fn cross3(a: [f64; 3], b: [f64; 3]) -> [f64; 3] {
    [
        a[1] * b[2] - a[2] * b[1],
        a[2] * b[0] - a[0] * b[2],
        a[0] * b[1] - a[1] * b[0],
    ]
}

#[inline]
fn scale3(a: [f64; 3], s: f64) -> [f64; 3] {
    [a[0] * s, a[1] * s, a[2] * s]
}

#[inline]
fn norm3(a: [f64; 3]) -> f64 {
    dot3(a, a).sqrt()
}

#[inline]
pub(crate) fn dist3(a: [f64; 3], b: [f64; 3]) -> f64 {
    norm3(sub3(a, b))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn counts_match_structured_pattern() {
        let m = build_mesh(2, &[0.0, 0.0], &[1.0, 1.0], 2).unwrap();
        assert_eq!(m.num_nodes(), 9);
        assert_eq!(m.num_elems(), 8);
        let m = build_mesh(2, &[0.0, 0.0], &[1.0, 1.0], 5).unwrap();
        assert_eq!(m.num_nodes(), 36);
        assert_eq!(m.num_elems(), 50);
        let m = build_mesh(3, &[0.0; 3], &[1.0; 3], 2).unwrap();
        assert_eq!(m.num_nodes(), 27);
        assert_eq!(m.num_elems(), 48);
    }

    #[test]
    fn volumes_sum_to_box_volume() {
        let m = build_mesh(2, &[-1.0, 0.5], &[2.0, 2.5], 7).unwrap();
        let total: f64 = (0..m.num_elems()).map(|e| m.volume(e)).sum();
        assert!((total - 6.0).abs() < 1e-12 * 6.0);
        let m = build_mesh(3, &[0.0; 3], &[2.0, 1.0, 1.0], 3).unwrap();
        let total: f64 = (0..m.num_elems()).map(|e| m.volume(e)).sum();
        assert!((total - 2.0).abs() < 1e-12 * 2.0);
    }

    #[test]
    fn all_volumes_positive() {
        for dim in [2usize, 3] {
            let lo = vec![0.0; dim];
            let hi = vec![1.0; dim];
            let m = build_mesh(dim, &lo, &hi, 3).unwrap();
            for e in 0..m.num_elems() {
                assert!(m.volume(e) > 0.0, "element {e} in dim {dim}");
            }
        }
    }

    #[test]
    fn boundary_nodes_exactly_box_boundary() {
        let m = build_mesh(2, &[0.0, 0.0], &[1.0, 1.0], 4).unwrap();
        for id in 0..m.num_nodes() {
            let x = m.node(id);
            let on_boundary = x[0] == 0.0 || x[0] == 1.0 || x[1] == 0.0 || x[1] == 1.0;
            assert_eq!(m.boundary_nodes.contains(&id), on_boundary, "node {id} at {x:?}");
        }
    }

    #[test]
    fn degenerate_box_rejected() {
        assert!(matches!(
            build_mesh(2, &[0.0, 1.0], &[1.0, 1.0], 2),
            Err(MeshError::BadDomain { axis: 1, .. })
        ));
        assert!(matches!(build_mesh(2, &[0.0, 0.0], &[1.0, 1.0], 1), Err(MeshError::TooFewCells(1))));
    }

    #[test]
    fn interior_face_count_2d() {
        // N^2 cells: vertical interior edges N(N-1), horizontal N(N-1),
        // diagonals N^2
        let n = 4;
        let m = build_mesh(2, &[0.0, 0.0], &[1.0, 1.0], n).unwrap();
        let expected = 2 * n * (n - 1) + n * n;
        assert_eq!(m.faces.len(), expected);
    }

    #[test]
    fn basis_gradients_reproduce_affine_functions() {
        let m = build_mesh(3, &[0.0; 3], &[1.0, 2.0, 0.5], 2).unwrap();
        // nodal values of f(x) = 3 x0 - x1 + 2 x2; the P1 gradient must be
        // exactly (3, -1, 2) on each element
        for e in 0..m.num_elems() {
            let mut g = [0.0; 3];
            for (v, &node) in m.elem(e).iter().enumerate() {
                let x = m.node(node);
                let f = 3.0 * x[0] - x[1] + 2.0 * x[2];
                let bg = m.basis_grad(e, v);
                for a in 0..3 {
                    g[a] += f * bg[a];
                }
            }
            assert!((g[0] - 3.0).abs() < 1e-12);
            assert!((g[1] + 1.0).abs() < 1e-12);
            assert!((g[2] - 2.0).abs() < 1e-12);
        }
    }

    #[test]
    fn meshes_regenerate_from_descriptor() {
        let m = build_mesh(2, &[0.0, -1.0], &[2.0, 1.0], 3).unwrap();
        let m2 = Mesh::from_descriptor(&m.descriptor()).unwrap();
        assert_eq!(m.num_nodes(), m2.num_nodes());
        assert_eq!(m.num_elems(), m2.num_elems());
        for id in 0..m.num_nodes() {
            assert_eq!(m.node(id), m2.node(id));
        }
    }
}
