//! Small dense symmetric linear-algebra kernels used by the certifier:
//! Jacobi eigendecomposition, PSD margins, null-space bases and the minimal
//! generalized comparison factor between two PSD matrices.
//!
//! Everything here targets matrices of single-digit dimension; there are no
//! sparse or large-scale paths and no complex arithmetic.

use nalgebra::{DMatrix, DVector};
use thiserror::Error;

/// Acceptance threshold for non-strict matrix inequalities: a slack matrix
/// is accepted when its smallest eigenvalue is at least `-TOL_FEAS`.
pub const TOL_FEAS: f64 = 1e-9;
/// Relative threshold below which an eigenvalue counts as part of a kernel.
pub const TOL_KER: f64 = 1e-8;
/// Relative rank-decision threshold for null-space extraction.
pub const TOL_RANK: f64 = 1e-9;

const MAX_JACOBI_SWEEPS: usize = 50;

#[derive(Debug, Error)]
pub enum LinalgError {
    #[error("matrix is not symmetric: max |M - M^T| = {asym:.3e} exceeds {tol:.3e}")]
    NotSymmetric { asym: f64, tol: f64 },
    #[error("Jacobi iteration did not converge after {sweeps} sweeps (residual {residual:.3e})")]
    NoConvergence { sweeps: usize, residual: f64 },
    #[error("kernel mismatch: ker(Mj) is not contained in ker(Mi), no finite comparison factor")]
    KernelMismatch,
    #[error("input matrix is not positive semidefinite (lambda_min = {lambda_min:.3e})")]
    NotPsd { lambda_min: f64 },
    #[error("dimension mismatch: {0}")]
    Dimension(String),
}

/// A real symmetric matrix. Construction symmetrizes the input and rejects
/// matrices whose asymmetry exceeds `1e-12 * ||M||`.
#[derive(Debug, Clone, PartialEq)]
pub struct SymMatrix {
    m: DMatrix<f64>,
}

impl SymMatrix {
    pub fn new(m: DMatrix<f64>) -> Result<Self, LinalgError> {
        assert_eq!(m.nrows(), m.ncols(), "SymMatrix requires a square matrix");
        let scale = m.norm();
        let asym = (&m - m.transpose()).amax();
        let tol = 1e-12 * scale.max(1e-300);
        if asym > tol {
            return Err(LinalgError::NotSymmetric { asym, tol });
        }
        Ok(Self::symmetrize(m))
    }

    /// Forces symmetry by averaging with the transpose. For matrices that are
    /// symmetric by construction up to roundoff.
    pub fn symmetrize(m: DMatrix<f64>) -> Self {
        assert_eq!(m.nrows(), m.ncols(), "SymMatrix requires a square matrix");
        let t = m.transpose();
        Self { m: (m + t) * 0.5 }
    }

    pub fn from_diagonal(d: &DVector<f64>) -> Self {
        Self {
            m: DMatrix::from_diagonal(d),
        }
    }

    pub fn zeros(n: usize) -> Self {
        Self {
            m: DMatrix::zeros(n, n),
        }
    }

    pub fn dim(&self) -> usize {
        self.m.nrows()
    }

    pub fn as_matrix(&self) -> &DMatrix<f64> {
        &self.m
    }

    pub fn into_matrix(self) -> DMatrix<f64> {
        self.m
    }
}

/// Eigendecomposition of a symmetric matrix by cyclic Jacobi rotations.
///
/// Returns eigenvalues in ascending order and the matching orthonormal
/// eigenvectors as columns. Deterministic for a fixed input: the sweep order
/// is fixed and column signs are normalized so that the entry of largest
/// magnitude in each eigenvector is positive.
pub fn sym_eig(m: &SymMatrix) -> Result<(DVector<f64>, DMatrix<f64>), LinalgError> {
    let n = m.dim();
    let orig = m.as_matrix();
    let mut a = orig.clone();
    let mut v = DMatrix::<f64>::identity(n, n);
    let scale = orig.norm().max(1.0);
    let stop = 1e-14 * scale;

    let mut sweeps = 0;
    while sweeps < MAX_JACOBI_SWEEPS {
        let mut off = 0.0f64;
        for p in 0..n {
            for q in (p + 1)..n {
                off += a[(p, q)] * a[(p, q)];
            }
        }
        if off.sqrt() <= stop {
            break;
        }
        for p in 0..n {
            for q in (p + 1)..n {
                let apq = a[(p, q)];
                if apq == 0.0 {
                    continue;
                }
                // Skip rotations that cannot change anything at working precision.
                if apq.abs() <= 1e-300 {
                    a[(p, q)] = 0.0;
                    a[(q, p)] = 0.0;
                    continue;
                }
                let app = a[(p, p)];
                let aqq = a[(q, q)];
                let theta = (aqq - app) / (2.0 * apq);
                let t = if theta >= 0.0 {
                    1.0 / (theta + (1.0 + theta * theta).sqrt())
                } else {
                    -1.0 / (-theta + (1.0 + theta * theta).sqrt())
                };
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = t * c;
                // Apply the rotation G(p, q, theta) on both sides of `a` and
                // accumulate it into `v`.
                for k in 0..n {
                    let akp = a[(k, p)];
                    let akq = a[(k, q)];
                    a[(k, p)] = c * akp - s * akq;
                    a[(k, q)] = s * akp + c * akq;
                }
                for k in 0..n {
                    let apk = a[(p, k)];
                    let aqk = a[(q, k)];
                    a[(p, k)] = c * apk - s * aqk;
                    a[(q, k)] = s * apk + c * aqk;
                }
                a[(p, q)] = 0.0;
                a[(q, p)] = 0.0;
                for k in 0..n {
                    let vkp = v[(k, p)];
                    let vkq = v[(k, q)];
                    v[(k, p)] = c * vkp - s * vkq;
                    v[(k, q)] = s * vkp + c * vkq;
                }
            }
        }
        sweeps += 1;
    }

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| a[(i, i)].partial_cmp(&a[(j, j)]).unwrap());
    let mut evals = DVector::<f64>::zeros(n);
    let mut evecs = DMatrix::<f64>::zeros(n, n);
    for (dst, &src) in order.iter().enumerate() {
        evals[dst] = a[(src, src)];
        let mut col = v.column(src).clone_owned();
        // Sign convention: largest-magnitude component positive.
        let mut imax = 0;
        for k in 0..n {
            if col[k].abs() > col[imax].abs() {
                imax = k;
            }
        }
        if col[imax] < 0.0 {
            col = -col;
        }
        evecs.set_column(dst, &col);
    }

    let residual = (orig * &evecs - &evecs * DMatrix::from_diagonal(&evals)).norm();
    if residual > 1e-10 * scale {
        return Err(LinalgError::NoConvergence {
            sweeps: MAX_JACOBI_SWEEPS,
            residual,
        });
    }
    Ok((evals, evecs))
}

/// Smallest eigenvalue of a symmetric matrix. Callers test
/// `psd_margin(M) >= -TOL_FEAS` for "M ⪰ 0 up to tolerance".
pub fn psd_margin(m: &SymMatrix) -> Result<f64, LinalgError> {
    if m.dim() == 0 {
        return Ok(f64::INFINITY);
    }
    let (evals, _) = sym_eig(m)?;
    Ok(evals[0])
}

/// Orthonormal basis of the null space of a `p x q` matrix, as columns of a
/// `q x r` matrix with `r = q - rank(E)`. Rank is decided at the relative
/// threshold `tol_rank`.
pub fn null_space_basis(e: &DMatrix<f64>, tol_rank: f64) -> DMatrix<f64> {
    let q = e.ncols();
    if e.nrows() == 0 || e.amax() == 0.0 {
        return DMatrix::identity(q, q);
    }
    // Pad with zero rows when p < q: the thin SVD of a wide matrix omits the
    // right singular vectors spanning the null space, a square input keeps
    // them all.
    let padded = if e.nrows() < q {
        let mut p = DMatrix::<f64>::zeros(q, q);
        p.rows_mut(0, e.nrows()).copy_from(e);
        p
    } else {
        e.clone()
    };
    let svd = padded.svd(false, true);
    let v_t = svd.v_t.expect("SVD with v_t requested");
    let smax = svd.singular_values.iter().cloned().fold(0.0f64, f64::max);
    let mut cols: Vec<DVector<f64>> = Vec::new();
    for (i, &s) in svd.singular_values.iter().enumerate() {
        if s <= tol_rank * smax {
            cols.push(v_t.row(i).transpose());
        }
    }
    // Singular vectors beyond min(p, q) never appear in `singular_values`;
    // recover the remaining null directions when q > p from the rows of v_t
    // that carry no singular value.
    for i in svd.singular_values.len()..v_t.nrows() {
        cols.push(v_t.row(i).transpose());
    }
    let mut basis = DMatrix::<f64>::zeros(q, cols.len());
    for (j, c) in cols.iter().enumerate() {
        let mut c = c.clone();
        // Deterministic sign: first component of non-negligible magnitude positive.
        for k in 0..q {
            if c[k].abs() > 1e-12 {
                if c[k] < 0.0 {
                    c = -c;
                }
                break;
            }
        }
        basis.set_column(j, &c);
    }
    basis
}

/// Smallest `gamma` such that `Mi ⪯ gamma * Mj` for PSD `Mi`, `Mj`.
///
/// Computed on the orthogonal complement of `ker(Mj)`: eigendecompose `Mj`,
/// split off the kernel at the relative threshold `tol_ker`, verify that
/// `ker(Mj) ⊆ ker(Mi)` and take the largest eigenvalue of the congruence
/// `R^{-1/2} Mi' R^{-1/2}` of the restrictions. Returns
/// [`LinalgError::KernelMismatch`] when the kernels are incompatible, in
/// which case no finite factor exists.
pub fn min_gamma(mi: &SymMatrix, mj: &SymMatrix, tol_ker: f64) -> Result<f64, LinalgError> {
    let n = mi.dim();
    if mj.dim() != n {
        return Err(LinalgError::Dimension(format!(
            "min_gamma: {}x{} vs {}x{}",
            n,
            n,
            mj.dim(),
            mj.dim()
        )));
    }
    for (name, m) in [("Mi", mi), ("Mj", mj)] {
        let lam = psd_margin(m)?;
        if lam < -TOL_FEAS * m.as_matrix().norm().max(1.0) {
            let _ = name;
            return Err(LinalgError::NotPsd { lambda_min: lam });
        }
    }

    let (evals, evecs) = sym_eig(mj)?;
    let emax = evals.iter().cloned().fold(0.0f64, f64::max);
    let mut range_idx = Vec::new();
    let mut kernel_idx = Vec::new();
    for k in 0..n {
        if evals[k] > tol_ker * emax.max(1e-300) && evals[k] > 0.0 {
            range_idx.push(k);
        } else {
            kernel_idx.push(k);
        }
    }

    let mi_mat = mi.as_matrix();
    let mi_scale = mi_mat.norm().max(1e-300);
    for &k in &kernel_idx {
        let v = evecs.column(k);
        let r = (mi_mat * v).norm();
        if r > tol_ker * mi_scale {
            return Err(LinalgError::KernelMismatch);
        }
    }

    if range_idx.is_empty() {
        // Both matrices vanish on the whole space; any factor works.
        return Ok(1.0);
    }

    let r = range_idx.len();
    let mut u = DMatrix::<f64>::zeros(n, r);
    for (j, &k) in range_idx.iter().enumerate() {
        u.set_column(j, &evecs.column(k).clone_owned());
    }
    let mi_r = u.transpose() * mi_mat * &u;
    // Congruence by the diagonal restriction of Mj: C_kl = Mi'_kl / sqrt(d_k d_l).
    let mut c = DMatrix::<f64>::zeros(r, r);
    for a in 0..r {
        for b in 0..r {
            let d = (evals[range_idx[a]] * evals[range_idx[b]]).sqrt();
            c[(a, b)] = mi_r[(a, b)] / d;
        }
    }
    let (evals_c, _) = sym_eig(&SymMatrix::symmetrize(c))?;
    Ok(evals_c[evals_c.len() - 1])
}
