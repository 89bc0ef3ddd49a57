//! Simplex quadrature. Low orders use the classical interior rules; higher
//! orders use Gauss-Legendre points collapsed onto the simplex (Duffy
//! transform), which keeps all weights positive and needs no tabulated
//! constants.

use super::mesh::Mesh;
use crate::error::MeshError;

/// A quadrature rule in barycentric coordinates with weights summing to 1.
#[derive(Debug, Clone)]
pub struct SimplexRule {
    /// Barycentric coordinates, point-major, stride dim + 1.
    pub bary: Vec<f64>,
    pub weights: Vec<f64>,
    pub dim: usize,
}

impl SimplexRule {
    pub fn npoints(&self) -> usize {
        self.weights.len()
    }

    pub fn point(&self, q: usize) -> &[f64] {
        let k = self.dim + 1;
        &self.bary[q * k..(q + 1) * k]
    }
}

/// Gauss-Legendre nodes and weights on [0, 1], computed by Newton iteration
/// on the Legendre polynomial.
pub fn gauss_legendre_unit(n: usize) -> Vec<(f64, f64)> {
    let mut out = Vec::with_capacity(n);
    for i in 0..n {
        // initial guess (Chebyshev-like) on [-1, 1]
        let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        for _ in 0..100 {
            let (p, dp) = legendre(n, x);
            let dx = p / dp;
            x -= dx;
            if dx.abs() < 1e-15 {
                break;
            }
        }
        let (_, dp) = legendre(n, x);
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        out.push((0.5 * (1.0 - x), 0.5 * w));
    }
    out.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
    out
}

/// Legendre P_n(x) and its derivative.
fn legendre(n: usize, x: f64) -> (f64, f64) {
    let (mut p0, mut p1) = (1.0, x);
    if n == 0 {
        return (1.0, 0.0);
    }
    for k in 2..=n {
        let kf = k as f64;
        let p2 = ((2.0 * kf - 1.0) * x * p1 - (kf - 1.0) * p0) / kf;
        p0 = p1;
        p1 = p2;
    }
    let dp = n as f64 * (x * p1 - p0) / (x * x - 1.0);
    (p1, dp)
}

/// Rule exact for polynomials up to the given degree on the reference
/// simplex of the given dimension.
pub fn simplex_rule(dim: usize, degree: usize) -> Result<SimplexRule, MeshError> {
    if degree == 0 {
        return Err(MeshError::BadQuadratureOrder(degree));
    }
    match (dim, degree) {
        (2, 1) => Ok(SimplexRule {
            bary: vec![1.0 / 3.0, 1.0 / 3.0, 1.0 / 3.0],
            weights: vec![1.0],
            dim,
        }),
        (2, 2) => {
            // interior 3-point rule, degree 2
            let (a, b) = (2.0 / 3.0, 1.0 / 6.0);
            Ok(SimplexRule {
                bary: vec![a, b, b, b, a, b, b, b, a],
                weights: vec![1.0 / 3.0; 3],
                dim,
            })
        }
        (3, 1) => Ok(SimplexRule { bary: vec![0.25; 4], weights: vec![1.0], dim }),
        (3, 2) => {
            // 4-point degree-2 rule
            let a = 0.585_410_196_624_968_5;
            let b = 0.138_196_601_125_010_5;
            let mut bary = Vec::with_capacity(16);
            for i in 0..4 {
                for j in 0..4 {
                    bary.push(if i == j { a } else { b });
                }
            }
            Ok(SimplexRule { bary, weights: vec![0.25; 4], dim })
        }
        (2, d) => Ok(duffy_triangle(d)),
        (3, d) => Ok(duffy_tet(d)),
        _ => Err(MeshError::BadQuadratureOrder(degree)),
    }
}

/// Collapsed-coordinate rule on the triangle {l1 + l2 <= 1}: x = u,
/// y = v (1 - u), Jacobian (1 - u). Exact for degree d when the 1D rule has
/// n >= (d + 2) / 2 points.
fn duffy_triangle(degree: usize) -> SimplexRule {
    let n = degree.div_ceil(2) + 1;
    let gl = gauss_legendre_unit(n);
    let mut bary = Vec::with_capacity(n * n * 3);
    let mut weights = Vec::with_capacity(n * n);
    for &(u, wu) in &gl {
        for &(v, wv) in &gl {
            let x = u;
            let y = v * (1.0 - u);
            // reference triangle area is 1/2; weights normalized to sum 1
            weights.push(2.0 * wu * wv * (1.0 - u));
            bary.push(1.0 - x - y);
            bary.push(x);
            bary.push(y);
        }
    }
    SimplexRule { bary, weights, dim: 2 }
}

/// Collapsed-coordinate rule on the tetrahedron, Jacobian (1-u)^2 (1-v).
fn duffy_tet(degree: usize) -> SimplexRule {
    let n = degree.div_ceil(2) + 2;
    let gl = gauss_legendre_unit(n);
    let mut bary = Vec::with_capacity(n * n * n * 4);
    let mut weights = Vec::with_capacity(n * n * n);
    for &(u, wu) in &gl {
        for &(v, wv) in &gl {
            for &(w, ww) in &gl {
                let x = u;
                let y = v * (1.0 - u);
                let z = w * (1.0 - u) * (1.0 - v);
                // reference tet volume is 1/6; normalize weights to sum 1
                weights.push(6.0 * wu * wv * ww * (1.0 - u) * (1.0 - u) * (1.0 - v));
                bary.push(1.0 - x - y - z);
                bary.push(x);
                bary.push(y);
                bary.push(z);
            }
        }
    }
    SimplexRule { bary, weights, dim: 3 }
}

/// A materialized quadrature over a whole mesh: physical points with
/// physical weights (weights per element sum to the element volume).
#[derive(Debug, Clone)]
pub struct QuadratureSet {
    pub rule: SimplexRule,
    /// Element id per point.
    pub elem: Vec<usize>,
    /// Physical coordinates per point (stride 3).
    pub coords: Vec<f64>,
    /// Physical weight per point.
    pub weights: Vec<f64>,
}

impl QuadratureSet {
    pub fn build(mesh: &Mesh, degree: usize) -> Result<Self, MeshError> {
        let rule = simplex_rule(mesh.dim, degree)?;
        let npts = rule.npoints();
        let ne = mesh.num_elems();
        let mut elem = Vec::with_capacity(ne * npts);
        let mut coords = Vec::with_capacity(ne * npts * 3);
        let mut weights = Vec::with_capacity(ne * npts);
        for e in 0..ne {
            let verts = mesh.elem(e);
            let vol = mesh.volume(e);
            for q in 0..npts {
                let lam = rule.point(q);
                let mut x = [0.0; 3];
                for (v, &node) in verts.iter().enumerate() {
                    let p = mesh.node(node);
                    for a in 0..3 {
                        x[a] += lam[v] * p[a];
                    }
                }
                elem.push(e);
                coords.extend_from_slice(&x);
                weights.push(rule.weights[q] * vol);
            }
        }
        Ok(Self { rule, elem, coords, weights })
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.weights.len()
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    #[inline]
    pub fn point(&self, q: usize) -> [f64; 3] {
        [self.coords[3 * q], self.coords[3 * q + 1], self.coords[3 * q + 2]]
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gauss_legendre_integrates_polynomials() {
        for n in 1..=8 {
            let rule = gauss_legendre_unit(n);
            for d in 0..=(2 * n - 1) {
                let exact = 1.0 / (d as f64 + 1.0);
                let got: f64 = rule.iter().map(|&(x, w)| w * x.powi(d as i32)).sum();
                assert!((got - exact).abs() < 1e-14, "n={n} d={d}: {got} vs {exact}");
            }
        }
    }

    fn integrate_monomial_tri(rule: &SimplexRule, a: u32, b: u32) -> f64 {
        // over the reference triangle with vertices (0,0),(1,0),(0,1),
        // area-normalized weights
        let mut s = 0.0;
        for q in 0..rule.npoints() {
            let lam = rule.point(q);
            let (x, y) = (lam[1], lam[2]);
            s += rule.weights[q] * x.powi(a as i32) * y.powi(b as i32);
        }
        s * 0.5
    }

    /// int over reference triangle of x^a y^b = a! b! / (a + b + 2)!
    fn exact_monomial_tri(a: u32, b: u32) -> f64 {
        let fact = |k: u32| (1..=k).map(|v| v as f64).product::<f64>().max(1.0);
        fact(a) * fact(b) / fact(a + b + 2)
    }

    #[test]
    fn triangle_rules_exact_to_degree() {
        for degree in 1..=7 {
            let rule = simplex_rule(2, degree).unwrap();
            assert!(rule.weights.iter().all(|&w| w > 0.0));
            for a in 0..=degree as u32 {
                for b in 0..=(degree as u32 - a) {
                    let got = integrate_monomial_tri(&rule, a, b);
                    let want = exact_monomial_tri(a, b);
                    assert!(
                        (got - want).abs() < 1e-13,
                        "degree {degree}, x^{a} y^{b}: {got} vs {want}"
                    );
                }
            }
        }
    }

    fn exact_monomial_tet(a: u32, b: u32, c: u32) -> f64 {
        let fact = |k: u32| (1..=k).map(|v| v as f64).product::<f64>().max(1.0);
        fact(a) * fact(b) * fact(c) / fact(a + b + c + 3)
    }

    #[test]
    fn tet_rules_exact_to_degree() {
        for degree in 1..=5 {
            let rule = simplex_rule(3, degree).unwrap();
            assert!(rule.weights.iter().all(|&w| w > 0.0));
            for a in 0..=degree as u32 {
                for b in 0..=(degree as u32 - a) {
                    for c in 0..=(degree as u32 - a - b) {
                        let mut s = 0.0;
                        for q in 0..rule.npoints() {
                            let lam = rule.point(q);
                            s += rule.weights[q]
                                * lam[1].powi(a as i32)
                                * lam[2].powi(b as i32)
                                * lam[3].powi(c as i32);
                        }
                        s /= 6.0;
                        let want = exact_monomial_tet(a, b, c);
                        assert!(
                            (s - want).abs() < 1e-13,
                            "degree {degree}, x^{a} y^{b} z^{c}: {s} vs {want}"
                        );
                    }
                }
            }
        }
    }

    #[test]
    fn quadrature_set_weights_sum_to_volume() {
        let mesh = crate::fem::mesh::build_mesh(2, &[0.0, 0.0], &[2.0, 1.0], 4).unwrap();
        for degree in [1, 2, 4, 6] {
            let qs = QuadratureSet::build(&mesh, degree).unwrap();
            let total: f64 = qs.weights.iter().sum();
            assert!((total - 2.0).abs() < 1e-12, "degree {degree}: {total}");
        }
    }
}
