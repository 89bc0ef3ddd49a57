//! Problem definition (mesh + constitutive data + boundary conditions) and
//! interior balls with quadrature-based means.

use super::field::DiscreteField;
use super::mesh::Mesh;
use super::quad::QuadratureSet;
use crate::error::{MeshError, ModelError};
use crate::tensor::{ElasticTensor, GrowthParams};
use std::sync::Arc;

/// Dirichlet constraints: a mask over dofs plus the pinned values.
#[derive(Debug, Clone)]
pub struct DirichletBc {
    pub constrained: Vec<bool>,
    pub values: Vec<f64>,
}

impl DirichletBc {
    /// No constraints.
    pub fn none(mesh: &Mesh) -> Self {
        Self { constrained: vec![false; mesh.num_dofs()], values: vec![0.0; mesh.num_dofs()] }
    }

    /// Pins every boundary node to `data` sampled nodally.
    pub fn on_boundary<F>(mesh: &Mesh, data: F) -> Self
    where
        F: Fn(&[f64]) -> Vec<f64>,
    {
        let dim = mesh.dim;
        let mut bc = Self::none(mesh);
        for &node in &mesh.boundary_nodes {
            let x = mesh.node(node);
            let v = data(&x[..dim]);
            for a in 0..dim {
                bc.constrained[node * dim + a] = true;
                bc.values[node * dim + a] = v[a];
            }
        }
        bc
    }

    /// Pins every dof of the listed nodes to the values of `field`.
    pub fn freeze_nodes(field: &DiscreteField, nodes: impl Iterator<Item = usize>) -> Self {
        let dim = field.dim();
        let mut bc = Self::none(&field.mesh);
        for node in nodes {
            for a in 0..dim {
                bc.constrained[node * dim + a] = true;
                bc.values[node * dim + a] = field.values[node * dim + a];
            }
        }
        bc
    }

    pub fn num_constrained(&self) -> usize {
        self.constrained.iter().filter(|&&c| c).count()
    }

    /// Writes the pinned values into a field.
    pub fn apply(&self, field: &mut DiscreteField) {
        for (dof, &c) in self.constrained.iter().enumerate() {
            if c {
                field.values[dof] = self.values[dof];
            }
        }
    }

    /// Largest mismatch between a field and the pinned values.
    pub fn max_violation(&self, field: &DiscreteField) -> (usize, f64) {
        let mut worst = (0, 0.0);
        for (dof, &c) in self.constrained.iter().enumerate() {
            if c {
                let d = (field.values[dof] - self.values[dof]).abs();
                if d > worst.1 {
                    worst = (dof, d);
                }
            }
        }
        worst
    }
}

/// Discrete minimization problem for the p-growth energy with optional
/// fidelity datum and optional second-gradient jump penalty (level L).
#[derive(Clone)]
pub struct ProblemSpec {
    pub mesh: Arc<Mesh>,
    pub params: GrowthParams,
    pub elastic: ElasticTensor,
    pub g: DiscreteField,
    pub dirichlet: DirichletBc,
    /// Jump-penalty level L; None means the penalty is off.
    pub penalty_level: Option<f64>,
    pub quadrature_order: usize,
    pub(crate) quadrature: Arc<QuadratureSet>,
}

impl ProblemSpec {
    pub fn new(
        mesh: Arc<Mesh>,
        params: GrowthParams,
        elastic: ElasticTensor,
        g: DiscreteField,
        dirichlet: DirichletBc,
        penalty_level: Option<f64>,
        quadrature_order: usize,
    ) -> Result<Self, MeshError> {
        if quadrature_order < 2 {
            return Err(MeshError::BadQuadratureOrder(quadrature_order));
        }
        if !g.same_mesh(&DiscreteField::zeros(mesh.clone())) {
            return Err(MeshError::MeshMismatch);
        }
        if dirichlet.constrained.len() != mesh.num_dofs() {
            return Err(MeshError::MeshMismatch);
        }
        if let Some(l) = penalty_level {
            assert!(l > 0.0, "penalty level must be positive");
        }
        let quadrature = Arc::new(QuadratureSet::build(&mesh, quadrature_order)?);
        Ok(Self { mesh, params, elastic, g, dirichlet, penalty_level, quadrature_order, quadrature })
    }

    pub fn check_model_smoothness(&self) -> Result<(), ModelError> {
        if self.params.p < 2.0 && self.params.mu == 0.0 && self.penalty_level.is_none() {
            // the Newton path needs either mu > 0 or a finite penalty level;
            // the solver runs the continuation schedule in this regime
            return Err(ModelError::UndefinedHessian);
        }
        Ok(())
    }

    pub fn quadrature(&self) -> &QuadratureSet {
        &self.quadrature
    }

    /// Clone with a different penalty level (shares mesh and quadrature).
    pub fn with_penalty(&self, penalty_level: Option<f64>) -> Self {
        let mut s = self.clone();
        s.penalty_level = penalty_level;
        s
    }

    /// Clone with different Dirichlet data.
    pub fn with_dirichlet(&self, dirichlet: DirichletBc) -> Self {
        let mut s = self.clone();
        s.dirichlet = dirichlet;
        s
    }

    /// Clone with the fidelity term switched off.
    pub fn autonomous(&self) -> Self {
        let mut s = self.clone();
        s.params = self.params.autonomous();
        s
    }
}

/// A ball strictly inside the mesh box, resolvable by the mesh: radius at
/// least four times the largest spacing and closure inside the box interior.
#[derive(Debug, Clone, Copy)]
pub struct Ball {
    pub center: [f64; 3],
    pub radius: f64,
}

/// Minimum radius-to-spacing ratio for ball quantities.
pub const BALL_GUARD_FACTOR: f64 = 4.0;

impl Ball {
    pub fn new(mesh: &Mesh, center: &[f64], radius: f64) -> Result<Self, MeshError> {
        let min_radius = BALL_GUARD_FACTOR * mesh.max_spacing();
        let mut c = [0.0; 3];
        c[..mesh.dim].copy_from_slice(&center[..mesh.dim]);
        let mut inside = radius >= min_radius;
        for a in 0..mesh.dim {
            inside &= c[a] - radius > mesh.box_lo[a] && c[a] + radius < mesh.box_hi[a];
        }
        if !inside {
            return Err(MeshError::BallTooSmall { radius, min_radius });
        }
        Ok(Self { center: c, radius })
    }

    #[inline]
    pub fn contains(&self, x: &[f64; 3]) -> bool {
        let dx = x[0] - self.center[0];
        let dy = x[1] - self.center[1];
        let dz = x[2] - self.center[2];
        dx * dx + dy * dy + dz * dz <= self.radius * self.radius
    }

    pub fn scaled(&self, factor: f64) -> Ball {
        Ball { center: self.center, radius: self.radius * factor }
    }
}

/// Values that can be averaged over a ball.
pub trait QuadValue: Copy {
    fn zero_like(&self) -> Self;
    fn add_scaled(&mut self, other: &Self, w: f64);
    fn scale_by(&mut self, s: f64);
}

impl QuadValue for f64 {
    fn zero_like(&self) -> Self {
        0.0
    }
    fn add_scaled(&mut self, other: &Self, w: f64) {
        *self += *other * w;
    }
    fn scale_by(&mut self, s: f64) {
        *self *= s;
    }
}

impl QuadValue for crate::tensor::SymMatrix {
    fn zero_like(&self) -> Self {
        crate::tensor::SymMatrix::zeros(self.dim())
    }
    fn add_scaled(&mut self, other: &Self, w: f64) {
        *self += other.scale(w);
    }
    fn scale_by(&mut self, s: f64) {
        *self = self.scale(s);
    }
}

impl QuadValue for [f64; 3] {
    fn zero_like(&self) -> Self {
        [0.0; 3]
    }
    fn add_scaled(&mut self, other: &Self, w: f64) {
        for a in 0..3 {
            self[a] += other[a] * w;
        }
    }
    fn scale_by(&mut self, s: f64) {
        for a in 0..3 {
            self[a] *= s;
        }
    }
}

/// Sum of w_q * v_q over the quadrature points inside the ball.
pub fn ball_integral<T: QuadValue>(qs: &QuadratureSet, values: &[T], ball: &Ball) -> T {
    debug_assert_eq!(qs.len(), values.len());
    let mut acc = values[0].zero_like();
    for q in 0..qs.len() {
        if ball.contains(&qs.point(q)) {
            acc.add_scaled(&values[q], qs.weights[q]);
        }
    }
    acc
}

/// Quadrature measure of the ball (sum of included weights).
pub fn ball_measure(qs: &QuadratureSet, ball: &Ball) -> f64 {
    let mut acc = 0.0;
    for q in 0..qs.len() {
        if ball.contains(&qs.point(q)) {
            acc += qs.weights[q];
        }
    }
    acc
}

/// Self-normalizing mean: integral divided by the quadrature measure, so the
/// mean of a constant is exact.
pub fn ball_mean<T: QuadValue>(qs: &QuadratureSet, values: &[T], ball: &Ball) -> T {
    let measure = ball_measure(qs, ball);
    let mut acc = ball_integral(qs, values, ball);
    if measure > 0.0 {
        acc.scale_by(1.0 / measure);
    }
    acc
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fem::mesh::build_mesh;

    fn mesh_with_quad(n: usize, degree: usize) -> (Arc<Mesh>, QuadratureSet) {
        let mesh = Arc::new(build_mesh(2, &[-1.0, -1.0], &[1.0, 1.0], n).unwrap());
        let qs = QuadratureSet::build(&mesh, degree).unwrap();
        (mesh, qs)
    }

    #[test]
    fn guard_rejects_small_or_protruding_balls() {
        let mesh = build_mesh(2, &[0.0, 0.0], &[1.0, 1.0], 8).unwrap();
        // spacing 1/8, min radius 1/2: a radius 0.3 ball fails the guard
        assert!(matches!(
            Ball::new(&mesh, &[0.5, 0.5], 0.3),
            Err(MeshError::BallTooSmall { .. })
        ));
        // big enough but touching the boundary
        assert!(Ball::new(&mesh, &[0.5, 0.5], 0.5).is_err());
        let mesh = build_mesh(2, &[0.0, 0.0], &[1.0, 1.0], 32).unwrap();
        assert!(Ball::new(&mesh, &[0.5, 0.5], 0.3).is_ok());
    }

    #[test]
    fn mean_of_constant_is_exact() {
        // self-normalization: no O(h) boundary bias, only summation roundoff
        let (_, qs) = mesh_with_quad(16, 2);
        let ball = Ball { center: [0.1, -0.2, 0.0], radius: 0.5 };
        let values = vec![3.25_f64; qs.len()];
        let mean = ball_mean(&qs, &values, &ball);
        assert!((mean - 3.25).abs() <= 1e-13 * 3.25, "mean {mean}");
    }

    #[test]
    fn odd_function_cancels() {
        let (_, qs) = mesh_with_quad(32, 2);
        let ball = Ball { center: [0.0, 0.0, 0.0], radius: 0.5 };
        let values: Vec<f64> = (0..qs.len()).map(|q| qs.point(q)[0]).collect();
        let mean = ball_mean(&qs, &values, &ball);
        assert!(mean.abs() <= 1e-3 * ball.radius, "mean {mean}");
    }

    #[test]
    fn second_moment_matches_disk_integral() {
        // x1^2 over B_r(0) in 2D: mean = r^2/4 (oracle: pi r^4 / 4 over pi r^2)
        let (_, qs) = mesh_with_quad(64, 2); // 16 cells per radius 0.5
        let ball = Ball { center: [0.0, 0.0, 0.0], radius: 0.5 };
        let values: Vec<f64> = (0..qs.len()).map(|q| qs.point(q)[0].powi(2)).collect();
        let mean = ball_mean(&qs, &values, &ball);
        let exact = ball.radius * ball.radius / 4.0;
        assert!(
            (mean - exact).abs() <= 0.02 * exact,
            "mean {mean} vs exact {exact} (rel {})",
            (mean - exact).abs() / exact
        );
    }

    #[test]
    fn freeze_nodes_roundtrip() {
        let mesh = Arc::new(build_mesh(2, &[0.0, 0.0], &[1.0, 1.0], 4).unwrap());
        let mut f = DiscreteField::zeros(mesh.clone());
        for v in f.values.iter_mut() {
            *v = 1.5;
        }
        let bc = DirichletBc::freeze_nodes(&f, [0usize, 3, 7].into_iter());
        assert_eq!(bc.num_constrained(), 6);
        let mut g = DiscreteField::zeros(mesh);
        bc.apply(&mut g);
        assert_eq!(g.values[0], 1.5);
        assert_eq!(g.values[7], 1.5);
        assert_eq!(g.values[2], 0.0);
    }
}
