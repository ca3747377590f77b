//! System data model for switched 1-D linear hyperbolic systems and the
//! conversion between the physical form
//!
//! ```text
//! ∂t w + L ∂x w = A w,    B0 w(t,0) + B1 w(t,1) = 0
//! ```
//!
//! and the characteristic form used by every stability test. A mode is
//! diagonalized as `L = S⁻¹ Λ S` with the negative velocities first; the
//! source becomes `F = S A S⁻¹` and the boundary condition is reduced to
//!
//! ```text
//! (y⁻(t,1), y⁺(t,0)) = G (y⁻(t,0), y⁺(t,1))
//! ```
//!
//! where `y = S w` and the split at `m` separates incoming from outgoing
//! characteristics at each end of the interval.

use nalgebra::{Complex, DMatrix, DVector};
use serde::Deserialize;
use thiserror::Error;

/// Minimum magnitude for a characteristic velocity; anything smaller is
/// rejected as non-hyperbolic.
pub const TOL_HYP: f64 = 1e-9;
/// Relative reconstruction tolerance for the diagonalization and the
/// boundary reduction.
pub const TOL_RECON: f64 = 1e-10;

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("matrix is not hyperbolic: {0}")]
    NotHyperbolic(String),
    #[error("boundary conditions do not uniquely determine the incoming characteristics")]
    BoundaryNotReducible,
    #[error("diagonal sign pattern inconsistent with m = {m}: {detail}")]
    BadPartition { m: usize, detail: String },
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("invalid system: {0}")]
    InvalidSystem(String),
    #[error("failed to parse system description: {0}")]
    Parse(String),
}

/// Physical-form boundary coefficients `B0 w(t,0) + B1 w(t,1) = 0`.
#[derive(Debug, Clone)]
pub struct BoundaryPhysical {
    pub b0: DMatrix<f64>,
    pub b1: DMatrix<f64>,
}

/// One hyperbolic mode: transport matrix, source and boundary coupling,
/// together with the derived characteristic data.
///
/// Immutable after construction; all fields are kept consistent by the
/// constructors, which are the only way to build a `Mode`.
#[derive(Debug, Clone)]
pub struct Mode {
    n: usize,
    l: DMatrix<f64>,
    a: DMatrix<f64>,
    s: DMatrix<f64>,
    s_inv: DMatrix<f64>,
    lambda: DVector<f64>,
    m: usize,
    f: DMatrix<f64>,
    g: DMatrix<f64>,
}

impl Mode {
    /// Builds a mode from the physical form. The boundary pair `(B0, B1)` is
    /// reduced to the characteristic coupling `G`; reduction fails when the
    /// incoming characteristics are not uniquely determined.
    pub fn from_physical(
        l: DMatrix<f64>,
        a: DMatrix<f64>,
        bp: &BoundaryPhysical,
    ) -> Result<Self, ModelError> {
        let n = l.nrows();
        if a.nrows() != n || a.ncols() != n || l.ncols() != n {
            return Err(ModelError::DimensionMismatch(
                "L and A must be square with equal dimension".into(),
            ));
        }
        if bp.b0.nrows() != n || bp.b0.ncols() != n || bp.b1.nrows() != n || bp.b1.ncols() != n {
            return Err(ModelError::DimensionMismatch(
                "B0 and B1 must be n x n".into(),
            ));
        }
        let (s, lambda, m) = diagonalize_hyperbolic(&l)?;
        let s_inv = invert(&s).ok_or_else(|| {
            ModelError::NotHyperbolic("eigenvector basis is numerically singular".into())
        })?;
        let f = &s * &a * &s_inv;

        // B0 = G0 S and B1 = G1 S with the template sparsity
        //   G0 = [-G-- 0; -G+- I],  G1 = [I -G-+; 0 -G++].
        // Writing the constraint on (incoming, outgoing) characteristic traces
        // gives C_in * incoming + C_out * outgoing = 0 with the column split
        // below; G = -C_in⁻¹ C_out when C_in is invertible.
        let g0 = &bp.b0 * &s_inv;
        let g1 = &bp.b1 * &s_inv;
        let mut c_in = DMatrix::<f64>::zeros(n, n);
        let mut c_out = DMatrix::<f64>::zeros(n, n);
        for j in 0..m {
            c_in.set_column(j, &g1.column(j).clone_owned());
            c_out.set_column(j, &g0.column(j).clone_owned());
        }
        for j in m..n {
            c_in.set_column(j, &g0.column(j).clone_owned());
            c_out.set_column(j, &g1.column(j).clone_owned());
        }
        let c_in_inv = invert(&c_in).ok_or(ModelError::BoundaryNotReducible)?;
        let g = -(&c_in_inv * &c_out);
        let residual = (&c_in * &g + &c_out).amax();
        let scale = c_in.norm().max(c_out.norm()).max(1.0);
        if residual > 1e-8 * scale {
            return Err(ModelError::BoundaryNotReducible);
        }

        let mode = Mode {
            n,
            l,
            a,
            s,
            s_inv,
            lambda,
            m,
            f,
            g,
        };
        mode.validate()?;
        Ok(mode)
    }

    /// Direct construction when the system is already in characteristic form:
    /// `S = I`, `L = Λ`, `A = F`.
    pub fn from_characteristic(
        lambda: DVector<f64>,
        m: usize,
        f: DMatrix<f64>,
        g: DMatrix<f64>,
    ) -> Result<Self, ModelError> {
        let n = lambda.len();
        if m > n {
            return Err(ModelError::BadPartition {
                m,
                detail: format!("m exceeds dimension {n}"),
            });
        }
        if f.nrows() != n || f.ncols() != n || g.nrows() != n || g.ncols() != n {
            return Err(ModelError::DimensionMismatch(
                "F and G must be n x n".into(),
            ));
        }
        for k in 0..n {
            if lambda[k].abs() < TOL_HYP {
                return Err(ModelError::NotHyperbolic(format!(
                    "characteristic velocity {} has magnitude below {TOL_HYP:.1e}",
                    lambda[k]
                )));
            }
            let want_negative = k < m;
            if want_negative != (lambda[k] < 0.0) {
                return Err(ModelError::BadPartition {
                    m,
                    detail: format!("entry {k} of Lambda is {}", lambda[k]),
                });
            }
        }
        let l = DMatrix::from_diagonal(&lambda);
        let mode = Mode {
            n,
            l,
            a: f.clone(),
            s: DMatrix::identity(n, n),
            s_inv: DMatrix::identity(n, n),
            lambda,
            m,
            f,
            g,
        };
        mode.validate()?;
        Ok(mode)
    }

    fn validate(&self) -> Result<(), ModelError> {
        let n = self.n;
        let l_scale = self.l.norm();
        let recon = (&self.s_inv * DMatrix::from_diagonal(&self.lambda) * &self.s - &self.l).amax();
        if recon > TOL_RECON * l_scale.max(1.0) {
            return Err(ModelError::NotHyperbolic(format!(
                "diagonalization residual {recon:.3e} exceeds tolerance"
            )));
        }
        let a_scale = self.a.norm();
        let frecon = (&self.s * &self.a * &self.s_inv - &self.f).amax();
        if frecon > TOL_RECON * a_scale.max(1.0) {
            return Err(ModelError::InvalidSystem(format!(
                "source reconstruction residual {frecon:.3e}"
            )));
        }
        for k in 0..n {
            if self.lambda[k].abs() < TOL_HYP {
                return Err(ModelError::NotHyperbolic(
                    "zero characteristic velocity".into(),
                ));
            }
        }
        for k in 1..self.m {
            if self.lambda[k] < self.lambda[k - 1] {
                return Err(ModelError::BadPartition {
                    m: self.m,
                    detail: "negative block not ascending".into(),
                });
            }
        }
        for k in (self.m + 1)..n {
            if self.lambda[k] < self.lambda[k - 1] {
                return Err(ModelError::BadPartition {
                    m: self.m,
                    detail: "positive block not ascending".into(),
                });
            }
        }
        Ok(())
    }

    pub fn n(&self) -> usize {
        self.n
    }
    /// Number of negative characteristic velocities.
    pub fn m(&self) -> usize {
        self.m
    }
    pub fn transport(&self) -> &DMatrix<f64> {
        &self.l
    }
    pub fn source_physical(&self) -> &DMatrix<f64> {
        &self.a
    }
    pub fn diagonalizer(&self) -> &DMatrix<f64> {
        &self.s
    }
    pub fn diagonalizer_inv(&self) -> &DMatrix<f64> {
        &self.s_inv
    }
    /// Diagonal of Λ (velocities, negatives first).
    pub fn lambda(&self) -> &DVector<f64> {
        &self.lambda
    }
    /// Elementwise absolute values |Λ|.
    pub fn lambda_plus(&self) -> DVector<f64> {
        self.lambda.map(f64::abs)
    }
    pub fn max_speed(&self) -> f64 {
        self.lambda.iter().fold(0.0f64, |m, &x| m.max(x.abs()))
    }
    /// Source in characteristic variables, `F = S A S⁻¹`.
    pub fn source(&self) -> &DMatrix<f64> {
        &self.f
    }
    /// Boundary coupling in characteristic variables.
    pub fn coupling(&self) -> &DMatrix<f64> {
        &self.g
    }
    pub fn is_source_diagonal(&self) -> bool {
        let n = self.n;
        let scale = self.f.norm().max(1.0);
        for i in 0..n {
            for j in 0..n {
                if i != j && self.f[(i, j)].abs() > 1e-14 * scale {
                    return false;
                }
            }
        }
        true
    }

    /// Rows of `S` below the split (left eigenvectors of the negative
    /// velocities), as an `m x n` matrix.
    pub fn s_minus(&self) -> DMatrix<f64> {
        self.s.rows(0, self.m).clone_owned()
    }
    /// Rows of `S` above the split, as an `(n - m) x n` matrix.
    pub fn s_plus(&self) -> DMatrix<f64> {
        self.s.rows(self.m, self.n - self.m).clone_owned()
    }

    /// Emits the physical boundary pair from the canonical templates
    /// `G0 = [-G-- 0; -G+- I]`, `G1 = [I -G-+; 0 -G++]`.
    pub fn boundary_physical(&self) -> BoundaryPhysical {
        let n = self.n;
        let m = self.m;
        let mut g0 = DMatrix::<f64>::zeros(n, n);
        let mut g1 = DMatrix::<f64>::zeros(n, n);
        for i in 0..n {
            for j in 0..n {
                let gij = self.g[(i, j)];
                if j < m {
                    g0[(i, j)] = -gij;
                } else {
                    g1[(i, j)] = -gij;
                }
            }
        }
        for i in m..n {
            g0[(i, i)] = 1.0;
        }
        for i in 0..m {
            g1[(i, i)] = 1.0;
        }
        BoundaryPhysical {
            b0: &g0 * &self.s,
            b1: &g1 * &self.s,
        }
    }
}

/// A finite ordered set of modes sharing the state dimension.
#[derive(Debug, Clone)]
pub struct SwitchedSystem {
    modes: Vec<Mode>,
    n: usize,
}

impl SwitchedSystem {
    pub fn new(modes: Vec<Mode>) -> Result<Self, ModelError> {
        let n = modes
            .first()
            .ok_or_else(|| ModelError::InvalidSystem("at least one mode is required".into()))?
            .n();
        if modes.iter().any(|m| m.n() != n) {
            return Err(ModelError::InvalidSystem(
                "all modes must share the state dimension".into(),
            ));
        }
        Ok(Self { modes, n })
    }

    pub fn n(&self) -> usize {
        self.n
    }
    pub fn num_modes(&self) -> usize {
        self.modes.len()
    }
    pub fn mode(&self, i: usize) -> &Mode {
        &self.modes[i]
    }
    pub fn modes(&self) -> &[Mode] {
        &self.modes
    }
    /// True when every mode has the same count of negative velocities.
    pub fn uniform_sign_structure(&self) -> bool {
        self.modes.iter().all(|m| m.m() == self.modes[0].m())
    }
}

/// Diagonalizes a hyperbolic transport matrix: returns `(S, diag(Λ), m)` with
/// `L = S⁻¹ Λ S`, the diagonal sorted negatives-first (each block ascending)
/// and `S` rows of unit Euclidean norm (left eigenvector rows).
///
/// Fails with [`ModelError::NotHyperbolic`] on complex or defective spectra
/// and on velocities of magnitude below [`TOL_HYP`].
pub fn diagonalize_hyperbolic(
    l: &DMatrix<f64>,
) -> Result<(DMatrix<f64>, DVector<f64>, usize), ModelError> {
    let n = l.nrows();
    if l.ncols() != n {
        return Err(ModelError::DimensionMismatch("L must be square".into()));
    }
    if n == 0 {
        return Err(ModelError::DimensionMismatch("empty matrix".into()));
    }
    let scale = l.norm().max(1.0);
    let eigs: DVector<Complex<f64>> = l.clone().complex_eigenvalues();
    let mut reals = Vec::with_capacity(n);
    for e in eigs.iter() {
        if e.im.abs() > 1e-9 * scale {
            return Err(ModelError::NotHyperbolic(format!(
                "complex eigenvalue {:.6} + {:.6}i",
                e.re, e.im
            )));
        }
        reals.push(e.re);
    }
    reals.sort_by(|a, b| a.partial_cmp(b).unwrap());

    // Cluster nearby eigenvalues so repeated roots with a full eigenspace are
    // handled as one block.
    let cluster_tol = 1e-8 * scale;
    let mut clusters: Vec<(f64, usize)> = Vec::new();
    for &lam in &reals {
        match clusters.last_mut() {
            Some((val, count)) if (lam - *val).abs() <= cluster_tol => {
                *val = (*val * *count as f64 + lam) / (*count as f64 + 1.0);
                *count += 1;
            }
            _ => clusters.push((lam, 1)),
        }
    }

    let lt = l.transpose();
    let mut rows: Vec<(f64, DVector<f64>)> = Vec::with_capacity(n);
    for &(lam, mult) in &clusters {
        if lam.abs() < TOL_HYP {
            return Err(ModelError::NotHyperbolic(format!(
                "eigenvalue {lam:.3e} below the hyperbolicity cutoff"
            )));
        }
        // Left eigenvectors: rows s with s L = lam s, i.e. null space of (Lᵀ - lam I).
        let shifted = &lt - DMatrix::identity(n, n) * lam;
        let svd = shifted.clone().svd(false, true);
        let v_t = svd.v_t.as_ref().expect("SVD v_t");
        let smax = svd.singular_values.iter().cloned().fold(0.0f64, f64::max);
        let mut idx: Vec<usize> = (0..svd.singular_values.len()).collect();
        idx.sort_by(|&a, &b| {
            svd.singular_values[a]
                .partial_cmp(&svd.singular_values[b])
                .unwrap()
        });
        let near_null = idx
            .iter()
            .filter(|&&i| svd.singular_values[i] <= 1e-7 * smax.max(scale))
            .count();
        if near_null < mult {
            return Err(ModelError::NotHyperbolic(format!(
                "defective eigenvalue {lam:.6} (geometric multiplicity {near_null} < {mult})"
            )));
        }
        // Refine each eigenvalue by a Rayleigh quotient of its row.
        let mut lam_refined = 0.0;
        let mut cluster_rows = Vec::with_capacity(mult);
        for &i in idx.iter().take(mult) {
            let v = v_t.row(i).transpose();
            lam_refined += (v.transpose() * &lt * &v)[(0, 0)] / v.norm_squared();
            cluster_rows.push(v);
        }
        lam_refined /= mult as f64;
        if lam_refined.abs() < TOL_HYP {
            return Err(ModelError::NotHyperbolic(format!(
                "eigenvalue {lam_refined:.3e} below the hyperbolicity cutoff"
            )));
        }
        for v in cluster_rows {
            rows.push((lam_refined, v));
        }
    }

    // Sign partition: negatives first, each block ascending. Within-cluster
    // rows keep the SVD order, which is deterministic.
    rows.sort_by(|a, b| {
        let (sa, sb) = (a.0 < 0.0, b.0 < 0.0);
        sb.cmp(&sa).then(a.0.partial_cmp(&b.0).unwrap())
    });
    let m = rows.iter().filter(|(lam, _)| *lam < 0.0).count();

    let mut s = DMatrix::<f64>::zeros(n, n);
    let mut lambda = DVector::<f64>::zeros(n);
    for (k, (lam, v)) in rows.iter().enumerate() {
        lambda[k] = *lam;
        let mut row = v.transpose() / v.norm();
        let mut imax = 0;
        for j in 0..n {
            if row[j].abs() > row[imax].abs() {
                imax = j;
            }
        }
        if row[imax] < 0.0 {
            row = -row;
        }
        s.row_mut(k).copy_from(&row);
    }

    let s_inv = invert(&s).ok_or_else(|| {
        ModelError::NotHyperbolic("eigenvector basis is numerically singular".into())
    })?;
    let recon = (&s_inv * DMatrix::from_diagonal(&lambda) * &s - l).amax();
    if recon > TOL_RECON * l.norm().max(1.0) {
        return Err(ModelError::NotHyperbolic(format!(
            "reconstruction residual {recon:.3e} exceeds tolerance (defective or ill-conditioned)"
        )));
    }
    Ok((s, lambda, m))
}

fn invert(m: &DMatrix<f64>) -> Option<DMatrix<f64>> {
    m.clone().try_inverse()
}

// ---------------------------------------------------------------------------
// System description files
// ---------------------------------------------------------------------------

/// On-disk mode description: either physical or characteristic form.
#[derive(Debug, Deserialize)]
#[serde(untagged)]
enum ModeFile {
    Physical {
        #[serde(rename = "L")]
        l: Vec<Vec<f64>>,
        #[serde(rename = "A")]
        a: Vec<Vec<f64>>,
        #[serde(rename = "B0")]
        b0: Vec<Vec<f64>>,
        #[serde(rename = "B1")]
        b1: Vec<Vec<f64>>,
    },
    Characteristic {
        #[serde(rename = "Lambda")]
        lambda: LambdaFile,
        m: usize,
        #[serde(rename = "F")]
        f: Vec<Vec<f64>>,
        #[serde(rename = "G")]
        g: Vec<Vec<f64>>,
    },
}

/// Λ may be given as the diagonal vector or as a full (diagonal) matrix.
#[derive(Debug, Deserialize)]
#[serde(untagged)]
enum LambdaFile {
    Diagonal(Vec<f64>),
    Full(Vec<Vec<f64>>),
}

#[derive(Debug, Deserialize)]
struct SystemFile {
    n: usize,
    modes: Vec<ModeFile>,
}

fn rows_to_matrix(rows: &[Vec<f64>], n: usize, what: &str) -> Result<DMatrix<f64>, ModelError> {
    if rows.len() != n || rows.iter().any(|r| r.len() != n) {
        return Err(ModelError::Parse(format!(
            "{what} must be {n} rows of {n} numbers"
        )));
    }
    Ok(DMatrix::from_fn(n, n, |i, j| rows[i][j]))
}

impl SwitchedSystem {
    /// Parses a JSON system description with fields `n` and `modes[]`, each
    /// mode giving either `{"L", "A", "B0", "B1"}` or
    /// `{"Lambda", "m", "F", "G"}` as row-major numeric arrays.
    pub fn from_json(text: &str) -> Result<Self, ModelError> {
        let file: SystemFile =
            serde_json::from_str(text).map_err(|e| ModelError::Parse(e.to_string()))?;
        let n = file.n;
        if n == 0 {
            return Err(ModelError::Parse("n must be positive".into()));
        }
        let mut modes = Vec::with_capacity(file.modes.len());
        for (idx, mf) in file.modes.iter().enumerate() {
            let mode = match mf {
                ModeFile::Physical { l, a, b0, b1 } => {
                    let l = rows_to_matrix(l, n, "L")?;
                    let a = rows_to_matrix(a, n, "A")?;
                    let bp = BoundaryPhysical {
                        b0: rows_to_matrix(b0, n, "B0")?,
                        b1: rows_to_matrix(b1, n, "B1")?,
                    };
                    Mode::from_physical(l, a, &bp)
                }
                ModeFile::Characteristic { lambda, m, f, g } => {
                    let lambda = match lambda {
                        LambdaFile::Diagonal(d) => {
                            if d.len() != n {
                                return Err(ModelError::Parse(format!(
                                    "Lambda diagonal must have {n} entries"
                                )));
                            }
                            DVector::from_vec(d.clone())
                        }
                        LambdaFile::Full(rows) => {
                            let full = rows_to_matrix(rows, n, "Lambda")?;
                            for i in 0..n {
                                for j in 0..n {
                                    if i != j && full[(i, j)] != 0.0 {
                                        return Err(ModelError::Parse(
                                            "Lambda must be diagonal".into(),
                                        ));
                                    }
                                }
                            }
                            full.diagonal()
                        }
                    };
                    let f = rows_to_matrix(f, n, "F")?;
                    let g = rows_to_matrix(g, n, "G")?;
                    Mode::from_characteristic(lambda, *m, f, g)
                }
            }
            .map_err(|e| ModelError::Parse(format!("mode {idx}: {e}")))?;
            modes.push(mode);
        }
        SwitchedSystem::new(modes)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    fn mat(rows: &[&[f64]]) -> DMatrix<f64> {
        DMatrix::from_fn(rows.len(), rows[0].len(), |i, j| rows[i][j])
    }

    #[test]
    fn diagonalize_already_diagonal() {
        let l = mat(&[&[-1.0, 0.0], &[0.0, 1.0]]);
        let (s, lambda, m) = diagonalize_hyperbolic(&l).unwrap();
        assert_eq!(m, 1);
        assert_eq!(lambda.as_slice(), &[-1.0, 1.0]);
        assert_eq!(s, DMatrix::identity(2, 2));
    }

    #[test]
    fn diagonalize_swap_matrix() {
        let l = mat(&[&[0.0, 1.0], &[1.0, 0.0]]);
        let (s, lambda, m) = diagonalize_hyperbolic(&l).unwrap();
        assert_eq!(m, 1);
        assert_abs_diff_eq!(lambda[0], -1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(lambda[1], 1.0, epsilon = 1e-12);
        let s_inv = s.clone().try_inverse().unwrap();
        let recon = &s_inv * DMatrix::from_diagonal(&lambda) * &s;
        assert!((recon - &l).amax() <= 1e-10 * l.norm());
    }

    #[test]
    fn diagonalize_rejects_rotation() {
        let l = mat(&[&[0.0, 1.0], &[-1.0, 0.0]]);
        assert!(matches!(
            diagonalize_hyperbolic(&l),
            Err(ModelError::NotHyperbolic(_))
        ));
    }

    #[test]
    fn diagonalize_rejects_zero_speed() {
        let l = mat(&[&[0.0, 0.0], &[0.0, 1.0]]);
        assert!(matches!(
            diagonalize_hyperbolic(&l),
            Err(ModelError::NotHyperbolic(_))
        ));
    }

    #[test]
    fn diagonalize_rejects_defective() {
        // Jordan block with eigenvalue 1.
        let l = mat(&[&[1.0, 1.0], &[0.0, 1.0]]);
        assert!(matches!(
            diagonalize_hyperbolic(&l),
            Err(ModelError::NotHyperbolic(_))
        ));
    }

    #[test]
    fn diagonalize_accepts_repeated_full_eigenspace() {
        let l = mat(&[&[2.0, 0.0, 0.0], &[0.0, 2.0, 0.0], &[0.0, 0.0, -1.0]]);
        let (_, lambda, m) = diagonalize_hyperbolic(&l).unwrap();
        assert_eq!(m, 1);
        assert_abs_diff_eq!(lambda[0], -1.0, epsilon = 1e-10);
        assert_abs_diff_eq!(lambda[1], 2.0, epsilon = 1e-10);
        assert_abs_diff_eq!(lambda[2], 2.0, epsilon = 1e-10);
    }

    fn wave_boundary(g: &DMatrix<f64>) -> BoundaryPhysical {
        // Physical pair for L = diag(-1, 1), S = I via the canonical templates.
        let mode = Mode::from_characteristic(
            DVector::from_vec(vec![-1.0, 1.0]),
            1,
            DMatrix::zeros(2, 2),
            g.clone(),
        )
        .unwrap();
        mode.boundary_physical()
    }

    #[test]
    fn physical_roundtrip_recovers_coupling() {
        let g = mat(&[&[0.0, -1.2], &[0.6, 0.0]]);
        let bp = wave_boundary(&g);
        let mode =
            Mode::from_physical(mat(&[&[-1.0, 0.0], &[0.0, 1.0]]), DMatrix::zeros(2, 2), &bp)
                .unwrap();
        assert_eq!(mode.m(), 1);
        assert!((mode.coupling() - &g).amax() <= 1e-10);
    }

    #[test]
    fn physical_scalar_outflow() {
        // n = 1, L = 1, A = F, boundary w(t,0) = G w(t,1): B0 = 1, B1 = -G.
        let g = 2.0;
        let mode = Mode::from_physical(
            mat(&[&[1.0]]),
            mat(&[&[-1.0]]),
            &BoundaryPhysical {
                b0: mat(&[&[1.0]]),
                b1: mat(&[&[-g]]),
            },
        )
        .unwrap();
        assert_eq!(mode.m(), 0);
        assert_abs_diff_eq!(mode.coupling()[(0, 0)], g, epsilon = 1e-14);
    }

    #[test]
    fn degenerate_boundary_rejected() {
        let bp = BoundaryPhysical {
            b0: DMatrix::zeros(2, 2),
            b1: DMatrix::zeros(2, 2),
        };
        let got = Mode::from_physical(mat(&[&[-1.0, 0.0], &[0.0, 1.0]]), DMatrix::zeros(2, 2), &bp);
        assert!(matches!(got, Err(ModelError::BoundaryNotReducible)));
    }

    #[test]
    fn characteristic_examples() {
        let ok = Mode::from_characteristic(
            DVector::from_vec(vec![-1.0, 1.0]),
            1,
            mat(&[&[-0.3, 0.0], &[0.0, -0.3]]),
            mat(&[&[0.0, -1.2], &[0.6, 0.0]]),
        );
        assert!(ok.is_ok());

        let bad = Mode::from_characteristic(
            DVector::from_vec(vec![1.0, -1.0]),
            1,
            DMatrix::zeros(2, 2),
            DMatrix::zeros(2, 2),
        );
        assert!(matches!(bad, Err(ModelError::BadPartition { .. })));

        let scalar = Mode::from_characteristic(
            DVector::from_vec(vec![1.0]),
            0,
            mat(&[&[-1.0]]),
            mat(&[&[2.0]]),
        );
        assert!(scalar.is_ok());
    }

    #[test]
    fn lambda_plus_matches_partition() {
        let mode = Mode::from_characteristic(
            DVector::from_vec(vec![-2.0, -0.5, 1.0]),
            2,
            DMatrix::zeros(3, 3),
            DMatrix::zeros(3, 3),
        )
        .unwrap();
        let lp = mode.lambda_plus();
        for k in 0..3 {
            let expected = if k < mode.m() {
                -mode.lambda()[k]
            } else {
                mode.lambda()[k]
            };
            assert_eq!(lp[k], expected);
        }
    }

    #[test]
    fn system_json_both_forms() {
        let text = r#"{
            "n": 2,
            "modes": [
                {"Lambda": [-1.0, 1.0], "m": 1,
                 "F": [[0.0, 0.0], [0.0, 0.0]],
                 "G": [[0.0, -1.2], [0.6, 0.0]]},
                {"L": [[-1.0, 0.0], [0.0, 1.0]],
                 "A": [[0.0, 0.0], [0.0, 0.0]],
                 "B0": [[0.0, 0.0], [-1.2, 1.0]],
                 "B1": [[1.0, 0.6], [0.0, 0.0]]}
            ]
        }"#;
        let sys = SwitchedSystem::from_json(text).unwrap();
        assert_eq!(sys.num_modes(), 2);
        assert_eq!(sys.n(), 2);
        assert!(sys.uniform_sign_structure());
        assert_abs_diff_eq!(sys.mode(1).coupling()[(0, 1)], -0.6, epsilon = 1e-12);
        assert_abs_diff_eq!(sys.mode(1).coupling()[(1, 0)], 1.2, epsilon = 1e-12);
    }

    #[test]
    fn system_json_accepts_full_diagonal_lambda() {
        let text = r#"{
            "n": 2,
            "modes": [
                {"Lambda": [[-1.0, 0.0], [0.0, 1.0]], "m": 1,
                 "F": [[0.0, 0.0], [0.0, 0.0]],
                 "G": [[0.0, 0.0], [0.0, 0.0]]}
            ]
        }"#;
        let sys = SwitchedSystem::from_json(text).unwrap();
        assert_eq!(sys.mode(0).lambda().as_slice(), &[-1.0, 1.0]);

        let bad = r#"{
            "n": 2,
            "modes": [
                {"Lambda": [[-1.0, 0.5], [0.0, 1.0]], "m": 1,
                 "F": [[0.0, 0.0], [0.0, 0.0]],
                 "G": [[0.0, 0.0], [0.0, 0.0]]}
            ]
        }"#;
        assert!(SwitchedSystem::from_json(bad).is_err());
    }

    #[test]
    fn system_json_rejects_malformed() {
        assert!(SwitchedSystem::from_json("{\"n\": 2}").is_err());
        assert!(SwitchedSystem::from_json("not json").is_err());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(48))]
        #[test]
        fn diagonalize_random_similarity(
            d1 in 0.5f64..3.0, d2 in 0.5f64..3.0, d3 in 0.5f64..3.0,
            e in proptest::collection::vec(-0.4f64..0.4, 9),
        ) {
            // L = S⁻¹ D S for a perturbed-identity S and distinct mixed-sign D.
            let d = DVector::from_vec(vec![-d1, d2, d2 + d3 + 0.1]);
            let s = DMatrix::identity(3, 3) + DMatrix::from_fn(3, 3, |i, j| e[3 * i + j]);
            prop_assume!(s.clone().try_inverse().is_some());
            let s_inv = s.clone().try_inverse().unwrap();
            prop_assume!(s.norm() * s_inv.norm() < 40.0);
            let l = &s_inv * DMatrix::from_diagonal(&d) * &s;
            let (s_hat, lambda, m) = diagonalize_hyperbolic(&l).unwrap();
            prop_assert_eq!(m, 1);
            prop_assert!((lambda[0] + d1).abs() <= 1e-7 * d1.max(1.0));
            let s_hat_inv = s_hat.clone().try_inverse().unwrap();
            let recon = &s_hat_inv * DMatrix::from_diagonal(&lambda) * &s_hat;
            prop_assert!((recon - &l).amax() <= 1e-10 * l.norm().max(1.0));
        }

        #[test]
        fn physical_roundtrip_property(
            g in proptest::collection::vec(-1.5f64..1.5, 4),
            f in proptest::collection::vec(-1.0f64..1.0, 4),
        ) {
            let g = DMatrix::from_fn(2, 2, |i, j| g[2 * i + j]);
            let f = DMatrix::from_fn(2, 2, |i, j| f[2 * i + j]);
            let mode = Mode::from_characteristic(
                DVector::from_vec(vec![-1.3, 0.7]), 1, f, g.clone()).unwrap();
            let bp = mode.boundary_physical();
            let back = Mode::from_physical(
                mode.transport().clone(), mode.source_physical().clone(), &bp).unwrap();
            prop_assert_eq!(back.m(), 1);
            prop_assert!((back.coupling() - &g).amax() <= 1e-9);
        }
    }
}
