//! Pointwise algebra of the constitutive model: symmetric matrices,
//! fourth-order tangent tensors, growth parameters, and the elastic
//! moduli tensor.

mod energy;
mod nfunc;

pub mod audit;

pub use energy::{
    blowup_integrand, blowup_limit, energy_density, stress, tangent, v_inverse, v_scale_factor,
    v_transform, BlowupParams,
};
pub use nfunc::{
    lambda0, ptilde, shifted_conjugate, shifted_n_derivative, shifted_n_function,
    sobolev_exponent,
};

use crate::error::ModelError;
use serde::{Deserialize, Serialize};

/// Raises `mu + |xi|^2`-style bases to a real power, guarding the
/// underflow/zero-base corner where a negative exponent would produce
/// inf from a denormal rounding artifact.
#[inline]
pub(crate) fn pow_guarded(base: f64, gamma: f64) -> f64 {
    if base < 1e-300 {
        if gamma > 0.0 {
            0.0
        } else if gamma == 0.0 {
            1.0
        } else {
            f64::INFINITY
        }
    } else {
        base.powf(gamma)
    }
}

/// Constitutive parameters: growth exponent `p`, ellipticity shift `mu`,
/// fidelity weight `kappa`, spatial dimension.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GrowthParams {
    pub p: f64,
    pub mu: f64,
    pub kappa: f64,
    pub dim: usize,
}

impl GrowthParams {
    pub fn new(p: f64, mu: f64, kappa: f64, dim: usize) -> Result<Self, ModelError> {
        if !(p > 1.0) || !p.is_finite() {
            return Err(ModelError::BadExponent(p));
        }
        if !(mu >= 0.0) || !mu.is_finite() {
            return Err(ModelError::BadMu(mu));
        }
        if !(kappa >= 0.0) || !kappa.is_finite() {
            return Err(ModelError::BadKappa(kappa));
        }
        if dim != 2 && dim != 3 {
            return Err(ModelError::BadDim(dim));
        }
        Ok(Self { p, mu, kappa, dim })
    }

    /// Same parameters with the fidelity term switched off.
    pub fn autonomous(&self) -> Self {
        Self { kappa: 0.0, ..*self }
    }
}

const MAXN: usize = 3;

/// Symmetric n-by-n matrix, n in {2, 3}. Entries are stored dense and the
/// symmetry is maintained to exact representation equality.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SymMatrix {
    dim: usize,
    a: [f64; MAXN * MAXN],
}

impl SymMatrix {
    pub fn zeros(dim: usize) -> Self {
        debug_assert!(dim == 2 || dim == 3);
        Self { dim, a: [0.0; MAXN * MAXN] }
    }

    pub fn identity(dim: usize) -> Self {
        let mut m = Self::zeros(dim);
        for i in 0..dim {
            m.a[i * MAXN + i] = 1.0;
        }
        m
    }

    pub fn diag(dim: usize, d: &[f64]) -> Self {
        let mut m = Self::zeros(dim);
        for i in 0..dim {
            m.a[i * MAXN + i] = d[i];
        }
        m
    }

    /// Builds from row-major entries, rejecting non-symmetric input.
    pub fn from_entries(dim: usize, entries: &[f64]) -> Result<Self, ModelError> {
        let mut m = Self::zeros(dim);
        for i in 0..dim {
            for j in 0..dim {
                m.a[i * MAXN + j] = entries[i * dim + j];
            }
        }
        for i in 0..dim {
            for j in (i + 1)..dim {
                if m.a[i * MAXN + j] != m.a[j * MAXN + i] {
                    return Err(ModelError::NotSymmetric { i, j });
                }
            }
        }
        Ok(m)
    }

    /// Symmetric part of an arbitrary row-major matrix.
    pub fn symmetrize(dim: usize, entries: &[f64]) -> Self {
        let mut m = Self::zeros(dim);
        for i in 0..dim {
            for j in 0..dim {
                let v = 0.5 * (entries[i * dim + j] + entries[j * dim + i]);
                m.a[i * MAXN + j] = v;
            }
        }
        m
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.dim
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.a[i * MAXN + j]
    }

    /// Sets entry (i, j) and its mirror (j, i) to the same value.
    #[inline]
    pub fn set_sym(&mut self, i: usize, j: usize, v: f64) {
        self.a[i * MAXN + j] = v;
        self.a[j * MAXN + i] = v;
    }

    /// Frobenius inner product.
    #[inline]
    pub fn dot(&self, other: &Self) -> f64 {
        debug_assert_eq!(self.dim, other.dim);
        let mut s = 0.0;
        for i in 0..self.dim {
            for j in 0..self.dim {
                s += self.a[i * MAXN + j] * other.a[i * MAXN + j];
            }
        }
        s
    }

    #[inline]
    pub fn norm_sq(&self) -> f64 {
        self.dot(self)
    }

    #[inline]
    pub fn norm(&self) -> f64 {
        self.norm_sq().sqrt()
    }

    pub fn trace(&self) -> f64 {
        (0..self.dim).map(|i| self.a[i * MAXN + i]).sum()
    }

    pub fn is_zero(&self) -> bool {
        self.a.iter().all(|&v| v == 0.0)
    }

    pub fn scale(&self, s: f64) -> Self {
        let mut out = *self;
        for v in out.a.iter_mut() {
            *v *= s;
        }
        out
    }

    /// Row-major entries as a dim*dim vector (for serialization).
    pub fn to_rows(&self) -> Vec<Vec<f64>> {
        (0..self.dim)
            .map(|i| (0..self.dim).map(|j| self.get(i, j)).collect())
            .collect()
    }
}

impl std::ops::Add for SymMatrix {
    type Output = SymMatrix;
    fn add(self, rhs: SymMatrix) -> SymMatrix {
        debug_assert_eq!(self.dim, rhs.dim);
        let mut out = self;
        for (v, w) in out.a.iter_mut().zip(rhs.a.iter()) {
            *v += *w;
        }
        out
    }
}

impl std::ops::Sub for SymMatrix {
    type Output = SymMatrix;
    fn sub(self, rhs: SymMatrix) -> SymMatrix {
        debug_assert_eq!(self.dim, rhs.dim);
        let mut out = self;
        for (v, w) in out.a.iter_mut().zip(rhs.a.iter()) {
            *v -= *w;
        }
        out
    }
}

impl std::ops::Mul<f64> for SymMatrix {
    type Output = SymMatrix;
    fn mul(self, s: f64) -> SymMatrix {
        self.scale(s)
    }
}

impl std::ops::AddAssign for SymMatrix {
    fn add_assign(&mut self, rhs: SymMatrix) {
        for (v, w) in self.a.iter_mut().zip(rhs.a.iter()) {
            *v += *w;
        }
    }
}

impl std::ops::Neg for SymMatrix {
    type Output = SymMatrix;
    fn neg(self) -> SymMatrix {
        self.scale(-1.0)
    }
}

impl Serialize for SymMatrix {
    fn serialize<S: serde::Serializer>(&self, ser: S) -> Result<S::Ok, S::Error> {
        self.to_rows().serialize(ser)
    }
}

/// Fourth-order tensor with entries C_{ijkl}, acting on symmetric matrices.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor4 {
    dim: usize,
    c: [f64; MAXN * MAXN * MAXN * MAXN],
}

impl Tensor4 {
    pub fn zeros(dim: usize) -> Self {
        debug_assert!(dim == 2 || dim == 3);
        Self { dim, c: [0.0; MAXN * MAXN * MAXN * MAXN] }
    }

    #[inline]
    fn at(i: usize, j: usize, k: usize, l: usize) -> usize {
        ((i * MAXN + j) * MAXN + k) * MAXN + l
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.dim
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize, k: usize, l: usize) -> f64 {
        self.c[Self::at(i, j, k, l)]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, k: usize, l: usize, v: f64) {
        self.c[Self::at(i, j, k, l)] = v;
    }

    /// Identity on symmetric matrices: C_{ijkl} = (d_ik d_jl + d_il d_jk)/2.
    pub fn sym_identity(dim: usize) -> Self {
        let mut t = Self::zeros(dim);
        for i in 0..dim {
            for j in 0..dim {
                for k in 0..dim {
                    for l in 0..dim {
                        let d = |a: usize, b: usize| if a == b { 1.0 } else { 0.0 };
                        t.set(i, j, k, l, 0.5 * (d(i, k) * d(j, l) + d(i, l) * d(j, k)));
                    }
                }
            }
        }
        t
    }

    /// Contraction (C xi)_{ij} = sum_kl C_{ijkl} xi_{kl}; symmetric output
    /// when the minor symmetries hold.
    pub fn apply(&self, xi: &SymMatrix) -> SymMatrix {
        debug_assert_eq!(self.dim, xi.dim());
        let n = self.dim;
        let mut out = SymMatrix::zeros(n);
        for i in 0..n {
            for j in i..n {
                let mut s = 0.0;
                for k in 0..n {
                    for l in 0..n {
                        s += self.get(i, j, k, l) * xi.get(k, l);
                    }
                }
                out.set_sym(i, j, s);
            }
        }
        out
    }

    /// Quadratic form <C xi, eta>.
    pub fn quad(&self, xi: &SymMatrix, eta: &SymMatrix) -> f64 {
        self.apply(xi).dot(eta)
    }

    pub fn scale(&self, s: f64) -> Self {
        let mut out = self.clone();
        for v in out.c.iter_mut() {
            *v *= s;
        }
        out
    }

    pub fn add(&self, other: &Self) -> Self {
        debug_assert_eq!(self.dim, other.dim);
        let mut out = self.clone();
        for (v, w) in out.c.iter_mut().zip(other.c.iter()) {
            *v += *w;
        }
        out
    }

    /// Rank-one contribution a_{ij} b_{kl}.
    pub fn outer(a: &SymMatrix, b: &SymMatrix) -> Self {
        debug_assert_eq!(a.dim(), b.dim());
        let n = a.dim();
        let mut t = Self::zeros(n);
        for i in 0..n {
            for j in 0..n {
                for k in 0..n {
                    for l in 0..n {
                        t.set(i, j, k, l, a.get(i, j) * b.get(k, l));
                    }
                }
            }
        }
        t
    }

    /// Checks C_{ijkl} = C_{klij} = C_{jikl} = C_{ijlk} within `tol`.
    pub fn has_symmetries(&self, tol: f64) -> bool {
        let n = self.dim;
        for i in 0..n {
            for j in 0..n {
                for k in 0..n {
                    for l in 0..n {
                        let c = self.get(i, j, k, l);
                        if (c - self.get(k, l, i, j)).abs() > tol
                            || (c - self.get(j, i, k, l)).abs() > tol
                            || (c - self.get(i, j, l, k)).abs() > tol
                        {
                            return false;
                        }
                    }
                }
            }
        }
        true
    }
}

/// Positive-definite elastic moduli tensor with major and minor symmetries.
/// Stores the certified coercivity constant alpha = min_{|xi|=1} <C xi, xi>
/// over symmetric matrices.
#[derive(Debug, Clone, PartialEq)]
pub struct ElasticTensor {
    tensor: Tensor4,
    alpha: f64,
}

impl ElasticTensor {
    /// C = identity on symmetric matrices (alpha = 1).
    pub fn identity(dim: usize) -> Self {
        Self { tensor: Tensor4::sym_identity(dim), alpha: 1.0 }
    }

    /// Isotropic tensor C xi = 2 mu_s xi + lambda tr(xi) Id.
    pub fn isotropic(dim: usize, lambda: f64, mu_shear: f64) -> Result<Self, ModelError> {
        let mut t = Tensor4::sym_identity(dim).scale(2.0 * mu_shear);
        for i in 0..dim {
            for k in 0..dim {
                let v = t.get(i, i, k, k);
                t.set(i, i, k, k, v + lambda);
            }
        }
        Self::from_tensor(t)
    }

    /// Validates symmetries and positive definiteness on symmetric matrices.
    pub fn from_tensor(tensor: Tensor4) -> Result<Self, ModelError> {
        if !tensor.has_symmetries(1e-12) {
            return Err(ModelError::TensorNotSymmetric);
        }
        let alpha = min_eigenvalue_on_sym(&tensor);
        if alpha <= 0.0 {
            return Err(ModelError::NotPositiveDefinite(alpha));
        }
        Ok(Self { tensor, alpha })
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.tensor.dim()
    }

    #[inline]
    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    #[inline]
    pub fn tensor(&self) -> &Tensor4 {
        &self.tensor
    }

    #[inline]
    pub fn apply(&self, xi: &SymMatrix) -> SymMatrix {
        self.tensor.apply(xi)
    }

    #[inline]
    pub fn quad(&self, xi: &SymMatrix) -> f64 {
        self.tensor.quad(xi, xi)
    }
}

/// Orthonormal basis of the space of symmetric n-by-n matrices.
pub(crate) fn sym_basis(dim: usize) -> Vec<SymMatrix> {
    let mut basis = Vec::new();
    for i in 0..dim {
        let mut e = SymMatrix::zeros(dim);
        e.set_sym(i, i, 1.0);
        basis.push(e);
    }
    let inv_sqrt2 = 1.0 / 2.0_f64.sqrt();
    for i in 0..dim {
        for j in (i + 1)..dim {
            let mut e = SymMatrix::zeros(dim);
            e.set_sym(i, j, inv_sqrt2);
            basis.push(e);
        }
    }
    basis
}

/// Smallest Rayleigh quotient of a fourth-order tensor over symmetric
/// matrices (via the exact Gram eigenproblem); positive iff the tensor is
/// elliptic on symmetric matrices.
pub fn sym_basis_probe(t: &Tensor4) -> f64 {
    min_eigenvalue_on_sym(t)
}

/// Smallest eigenvalue of the Gram matrix of C in an orthonormal basis of
/// symmetric matrices; exact (up to LAPACK-style roundoff) rather than sampled.
fn min_eigenvalue_on_sym(t: &Tensor4) -> f64 {
    let basis = sym_basis(t.dim());
    let m = basis.len();
    let mut gram = nalgebra::DMatrix::<f64>::zeros(m, m);
    for (a, ea) in basis.iter().enumerate() {
        for (b, eb) in basis.iter().enumerate() {
            gram[(a, b)] = t.quad(ea, eb);
        }
    }
    // enforce exact symmetry before the eigensolve
    let gram = (gram.clone() + gram.transpose()).scale(0.5);
    let eig = nalgebra::SymmetricEigen::new(gram);
    eig.eigenvalues.iter().cloned().fold(f64::INFINITY, f64::min)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn growth_params_validation() {
        assert!(GrowthParams::new(2.0, 0.0, 0.0, 2).is_ok());
        assert!(matches!(GrowthParams::new(1.0, 0.0, 0.0, 2), Err(ModelError::BadExponent(_))));
        assert!(matches!(GrowthParams::new(2.0, -1.0, 0.0, 2), Err(ModelError::BadMu(_))));
        assert!(matches!(GrowthParams::new(2.0, 0.0, -0.5, 2), Err(ModelError::BadKappa(_))));
        assert!(matches!(GrowthParams::new(2.0, 0.0, 0.0, 4), Err(ModelError::BadDim(4))));
    }

    #[test]
    fn sym_matrix_rejects_asymmetric_entries() {
        let r = SymMatrix::from_entries(2, &[1.0, 2.0, 3.0, 4.0]);
        assert!(matches!(r, Err(ModelError::NotSymmetric { i: 0, j: 1 })));
        let ok = SymMatrix::from_entries(2, &[1.0, 2.0, 2.0, 4.0]).unwrap();
        assert_eq!(ok.get(0, 1), ok.get(1, 0));
    }

    #[test]
    fn symmetrize_kills_skew_part() {
        let m = SymMatrix::symmetrize(2, &[0.0, 1.0, -1.0, 0.0]);
        assert!(m.is_zero());
    }

    #[test]
    fn sym_identity_acts_as_identity() {
        let c = Tensor4::sym_identity(3);
        let xi = SymMatrix::from_entries(3, &[1.0, 2.0, 0.5, 2.0, -1.0, 0.0, 0.5, 0.0, 3.0]).unwrap();
        let out = c.apply(&xi);
        for i in 0..3 {
            for j in 0..3 {
                assert_relative_eq!(out.get(i, j), xi.get(i, j), max_relative = 1e-14);
            }
        }
    }

    #[test]
    fn isotropic_tensor_matches_closed_form() {
        let (lam, mu) = (1.3, 0.7);
        let c = ElasticTensor::isotropic(2, lam, mu).unwrap();
        let xi = SymMatrix::from_entries(2, &[1.0, 0.5, 0.5, -2.0]).unwrap();
        let out = c.apply(&xi);
        let expect = xi.scale(2.0 * mu) + SymMatrix::identity(2).scale(lam * xi.trace());
        for i in 0..2 {
            for j in 0..2 {
                assert_relative_eq!(out.get(i, j), expect.get(i, j), max_relative = 1e-14);
            }
        }
        // coercivity constant: min(2 mu, 2 mu + n lambda) for isotropic C
        assert_relative_eq!(c.alpha(), 2.0 * mu, max_relative = 1e-10);
    }

    #[test]
    fn indefinite_tensor_rejected() {
        let t = Tensor4::sym_identity(2).scale(-1.0);
        assert!(matches!(ElasticTensor::from_tensor(t), Err(ModelError::NotPositiveDefinite(_))));
    }
}
