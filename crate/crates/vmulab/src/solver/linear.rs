//! Symmetric positive-definite solves behind one interface: dense Cholesky
//! for small systems, Jacobi-preconditioned conjugate gradients above the
//! dense cutoff. Both paths are deterministic.

use crate::error::SolveError;
use crate::fem::Triplets;

/// Compressed sparse row matrix (values deduplicated and sorted per row).
#[derive(Debug, Clone)]
pub struct CsrMatrix {
    pub n: usize,
    pub row_ptr: Vec<usize>,
    pub col_idx: Vec<usize>,
    pub vals: Vec<f64>,
}

impl CsrMatrix {
    pub fn from_triplets(t: &Triplets) -> Self {
        let n = t.n;
        // bucket by row, then sort and merge duplicates per row
        let mut counts = vec![0usize; n + 1];
        for &r in &t.rows {
            counts[r + 1] += 1;
        }
        for i in 0..n {
            counts[i + 1] += counts[i];
        }
        let mut entries: Vec<(usize, f64)> = vec![(0, 0.0); t.rows.len()];
        let mut cursor = counts.clone();
        for ((&r, &c), &v) in t.rows.iter().zip(&t.cols).zip(&t.vals) {
            entries[cursor[r]] = (c, v);
            cursor[r] += 1;
        }
        let mut row_ptr = Vec::with_capacity(n + 1);
        let mut col_idx = Vec::new();
        let mut vals = Vec::new();
        row_ptr.push(0);
        for r in 0..n {
            let slice = &mut entries[counts[r]..counts[r + 1]];
            slice.sort_unstable_by_key(|e| e.0);
            let mut last_col = usize::MAX;
            for &(c, v) in slice.iter() {
                if c == last_col {
                    *vals.last_mut().unwrap() += v;
                } else {
                    col_idx.push(c);
                    vals.push(v);
                    last_col = c;
                }
            }
            row_ptr.push(col_idx.len());
        }
        Self { n, row_ptr, col_idx, vals }
    }

    pub fn matvec(&self, x: &[f64], y: &mut [f64]) {
        for r in 0..self.n {
            let mut acc = 0.0;
            for k in self.row_ptr[r]..self.row_ptr[r + 1] {
                acc += self.vals[k] * x[self.col_idx[k]];
            }
            y[r] = acc;
        }
    }

    pub fn diagonal(&self) -> Vec<f64> {
        let mut d = vec![0.0; self.n];
        for r in 0..self.n {
            for k in self.row_ptr[r]..self.row_ptr[r + 1] {
                if self.col_idx[k] == r {
                    d[r] = self.vals[k];
                }
            }
        }
        d
    }

    /// Adds `shift` to the diagonal (entries must exist).
    pub fn shift_diagonal(&mut self, shift: f64) {
        for r in 0..self.n {
            for k in self.row_ptr[r]..self.row_ptr[r + 1] {
                if self.col_idx[k] == r {
                    self.vals[k] += shift;
                }
            }
        }
    }
}

/// Above this dof count the dense factorization is replaced by CG.
const DENSE_CUTOFF: usize = 1800;

pub enum SpdSolver {
    Dense(nalgebra::Cholesky<f64, nalgebra::Dyn>),
    Cg { mat: CsrMatrix, inv_diag: Vec<f64>, tol: f64, max_iters: usize },
}

impl SpdSolver {
    /// Factors (or prepares) the matrix. Fails when the dense path detects
    /// an indefinite matrix; the CG path reports indefiniteness only when a
    /// solve encounters a nonpositive curvature direction.
    pub fn new(csr: CsrMatrix) -> Result<Self, SolveError> {
        if csr.n <= DENSE_CUTOFF {
            let mut dense = nalgebra::DMatrix::<f64>::zeros(csr.n, csr.n);
            for r in 0..csr.n {
                for k in csr.row_ptr[r]..csr.row_ptr[r + 1] {
                    dense[(r, csr.col_idx[k])] = csr.vals[k];
                }
            }
            let chol = nalgebra::Cholesky::new(dense)
                .ok_or_else(|| SolveError::LinearSolve("dense cholesky failed".into()))?;
            Ok(SpdSolver::Dense(chol))
        } else {
            let diag = csr.diagonal();
            if diag.iter().any(|&d| d <= 0.0) {
                return Err(SolveError::LinearSolve("nonpositive diagonal".into()));
            }
            let inv_diag = diag.iter().map(|&d| 1.0 / d).collect();
            Ok(SpdSolver::Cg { mat: csr, inv_diag, tol: 1e-13, max_iters: 0 })
        }
    }

    pub fn solve(&self, rhs: &[f64]) -> Result<Vec<f64>, SolveError> {
        match self {
            SpdSolver::Dense(chol) => {
                let b = nalgebra::DVector::from_column_slice(rhs);
                Ok(chol.solve(&b).as_slice().to_vec())
            }
            SpdSolver::Cg { mat, inv_diag, tol, max_iters } => {
                let iters = if *max_iters == 0 { 20 * mat.n } else { *max_iters };
                pcg(mat, inv_diag, rhs, *tol, iters)
            }
        }
    }
}

/// Jacobi-preconditioned conjugate gradients from a zero start.
fn pcg(
    mat: &CsrMatrix,
    inv_diag: &[f64],
    rhs: &[f64],
    tol: f64,
    max_iters: usize,
) -> Result<Vec<f64>, SolveError> {
    let n = mat.n;
    let rhs_norm = rhs.iter().map(|v| v * v).sum::<f64>().sqrt();
    if rhs_norm == 0.0 {
        return Ok(vec![0.0; n]);
    }
    let stop = tol * rhs_norm;
    let mut x = vec![0.0; n];
    let mut r = rhs.to_vec();
    let mut z: Vec<f64> = r.iter().zip(inv_diag).map(|(ri, di)| ri * di).collect();
    let mut p = z.clone();
    let mut rz: f64 = r.iter().zip(&z).map(|(a, b)| a * b).sum();
    let mut ap = vec![0.0; n];
    for _ in 0..max_iters {
        mat.matvec(&p, &mut ap);
        let pap: f64 = p.iter().zip(&ap).map(|(a, b)| a * b).sum();
        if pap <= 0.0 {
            return Err(SolveError::LinearSolve("nonpositive curvature in cg".into()));
        }
        let alpha = rz / pap;
        for i in 0..n {
            x[i] += alpha * p[i];
            r[i] -= alpha * ap[i];
        }
        let rnorm = r.iter().map(|v| v * v).sum::<f64>().sqrt();
        if rnorm <= stop {
            return Ok(x);
        }
        for i in 0..n {
            z[i] = r[i] * inv_diag[i];
        }
        let rz_new: f64 = r.iter().zip(&z).map(|(a, b)| a * b).sum();
        let beta = rz_new / rz;
        rz = rz_new;
        for i in 0..n {
            p[i] = z[i] + beta * p[i];
        }
    }
    Err(SolveError::LinearSolve("cg did not converge".into()))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn laplacian_triplets(n: usize) -> Triplets {
        // 1D Dirichlet Laplacian, SPD tridiagonal
        let mut t = Triplets::new(n);
        for i in 0..n {
            t.push(i, i, 2.0);
            if i + 1 < n {
                t.push(i, i + 1, -1.0);
                t.push(i + 1, i, -1.0);
            }
        }
        t
    }

    #[test]
    fn dense_and_cg_agree() {
        let n = 120;
        let t = laplacian_triplets(n);
        let csr = CsrMatrix::from_triplets(&t);
        let rhs: Vec<f64> = (0..n).map(|i| ((i * 7 % 13) as f64) - 6.0).collect();
        let dense = SpdSolver::new(csr.clone()).unwrap().solve(&rhs).unwrap();
        let cg = SpdSolver::Cg {
            inv_diag: csr.diagonal().iter().map(|d| 1.0 / d).collect(),
            mat: csr.clone(),
            tol: 1e-14,
            max_iters: 0,
        }
        .solve(&rhs)
        .unwrap();
        for i in 0..n {
            assert!((dense[i] - cg[i]).abs() < 1e-8 * (1.0 + dense[i].abs()));
        }
        // residual check
        let mut ax = vec![0.0; n];
        csr.matvec(&dense, &mut ax);
        for i in 0..n {
            assert!((ax[i] - rhs[i]).abs() < 1e-9);
        }
    }

    #[test]
    fn duplicate_triplets_are_merged() {
        let mut t = Triplets::new(2);
        t.push(0, 0, 1.0);
        t.push(0, 0, 2.0);
        t.push(1, 1, 1.0);
        t.push(0, 1, 0.5);
        t.push(1, 0, 0.5);
        let csr = CsrMatrix::from_triplets(&t);
        assert_eq!(csr.vals.len(), 4);
        let d = csr.diagonal();
        assert_eq!(d, vec![3.0, 1.0]);
    }

    #[test]
    fn indefinite_matrix_rejected() {
        let mut t = Triplets::new(2);
        t.push(0, 0, 1.0);
        t.push(1, 1, -1.0);
        assert!(SpdSolver::new(CsrMatrix::from_triplets(&t)).is_err());
    }
}
