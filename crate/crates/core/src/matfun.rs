//! Dense matrix-function kernels the geometry rests on: Householder QR (thin
//! and full), compact SVD with fixed sign conventions, the exponential of
//! skew-symmetric matrices and the principal logarithm of special orthogonal
//! matrices.
//!
//! All routines are pure functions of their inputs and deterministic:
//! identical input bits produce identical output bits.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_distr::StandardNormal;

use crate::error::{FlagError, Result};

/// Frobenius tolerance for XᵀX = I on orthonormal-column matrices.
pub const ORTHONORMALITY_TOL: f64 = 1e-10;
/// Largest asymmetry accepted (and stripped) when constructing a
/// skew-symmetric matrix from a computed logarithm.
pub const SKEW_TOL: f64 = 1e-12;
/// Orthogonality tolerance accepted by [`logm_so`] on its input.
pub const LOG_INPUT_TOL: f64 = 1e-8;
/// Rotation angles closer to pi than this are reported as the cut locus,
/// where the principal logarithm is not unique.
pub const CUT_LOCUS_TOL: f64 = 1e-6;

fn ensure_finite(m: &DMatrix<f64>, what: &str) -> Result<()> {
    if m.iter().all(|x| x.is_finite()) {
        Ok(())
    } else {
        Err(FlagError::invalid(format!("{what} contains non-finite entries")))
    }
}

/// A real skew-symmetric matrix, Aᵀ = −A.
///
/// Construction symmetrizes the input, rejecting asymmetry above [`SKEW_TOL`]
/// so floating-point noise is stripped without masking real errors.
#[derive(Clone, Debug, PartialEq)]
pub struct SkewSymmetric {
    mat: DMatrix<f64>,
}

impl SkewSymmetric {
    pub fn new(mat: DMatrix<f64>) -> Result<Self> {
        if !mat.is_square() {
            return Err(FlagError::invalid("skew-symmetric matrix must be square"));
        }
        ensure_finite(&mat, "skew-symmetric matrix")?;
        let mut worst = 0.0_f64;
        for i in 0..mat.nrows() {
            for j in 0..=i {
                worst = worst.max(0.5 * (mat[(i, j)] + mat[(j, i)]).abs());
            }
        }
        if worst > SKEW_TOL {
            return Err(FlagError::invalid(format!(
                "matrix is not skew-symmetric: max |A + Aᵀ|/2 = {worst:.3e}"
            )));
        }
        let skew = 0.5 * (&mat - mat.transpose());
        Ok(Self { mat: skew })
    }

    pub fn zeros(dim: usize) -> Self {
        Self {
            mat: DMatrix::zeros(dim, dim),
        }
    }

    /// Fills the strict lower triangle from `f` and mirrors with opposite sign.
    pub fn from_lower_triangle(dim: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut mat = DMatrix::zeros(dim, dim);
        for i in 1..dim {
            for j in 0..i {
                let v = f(i, j);
                mat[(i, j)] = v;
                mat[(j, i)] = -v;
            }
        }
        Self { mat }
    }

    pub fn dim(&self) -> usize {
        self.mat.nrows()
    }

    pub fn as_matrix(&self) -> &DMatrix<f64> {
        &self.mat
    }

    pub fn into_matrix(self) -> DMatrix<f64> {
        self.mat
    }

    pub fn negated(&self) -> Self {
        Self { mat: -&self.mat }
    }

    pub fn scaled(&self, t: f64) -> Self {
        Self { mat: t * &self.mat }
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.mat.norm()
    }

    /// Crate-internal constructor for matrices that are skew by construction
    /// (projections, block masks).
    pub(crate) fn from_skew_unchecked(mat: DMatrix<f64>) -> Self {
        debug_assert!(mat.is_square());
        Self { mat }
    }
}

/// A matrix with orthonormal columns: XᵀX = I within [`ORTHONORMALITY_TOL`].
#[derive(Clone, Debug, PartialEq)]
pub struct OrthonormalColumns {
    mat: DMatrix<f64>,
}

impl OrthonormalColumns {
    pub fn new(mat: DMatrix<f64>) -> Result<Self> {
        ensure_finite(&mat, "orthonormal matrix")?;
        let (n, k) = mat.shape();
        if k > n {
            return Err(FlagError::invalid(format!(
                "orthonormal matrix cannot have more columns than rows ({n}x{k})"
            )));
        }
        let gram_err = (mat.transpose() * &mat - DMatrix::identity(k, k)).norm();
        if gram_err > ORTHONORMALITY_TOL {
            return Err(FlagError::invalid(format!(
                "orthonormality violated: |XᵀX - I|_F = {gram_err:.3e}"
            )));
        }
        Ok(Self { mat })
    }

    pub fn rows(&self) -> usize {
        self.mat.nrows()
    }

    pub fn cols(&self) -> usize {
        self.mat.ncols()
    }

    pub fn as_matrix(&self) -> &DMatrix<f64> {
        &self.mat
    }

    pub fn into_matrix(self) -> DMatrix<f64> {
        self.mat
    }
}

/// Matrix exponential of a skew-symmetric matrix.
///
/// The result is special orthogonal: RᵀR = I and det R = +1 (within 1e-10).
pub fn expm_skew(a: &SkewSymmetric) -> DMatrix<f64> {
    a.as_matrix().exp()
}

/// Principal logarithm of a special orthogonal matrix.
///
/// Reduces R to real Schur form, reads the rotation angle of each 2x2 block
/// with `atan2`, and transforms back; every rotation angle of the result lies
/// in (-pi, pi). Angles within [`CUT_LOCUS_TOL`] of pi are rejected with
/// [`FlagError::LogNearCutLocus`] since the principal log is not unique there.
pub fn logm_so(r: &DMatrix<f64>) -> Result<SkewSymmetric> {
    if !r.is_square() {
        return Err(FlagError::invalid("logm_so input must be square"));
    }
    ensure_finite(r, "logm_so input")?;
    let n = r.nrows();
    let gram_err = (r.transpose() * r - DMatrix::identity(n, n)).norm();
    if gram_err > LOG_INPUT_TOL {
        return Err(FlagError::invalid(format!(
            "orthonormality violated: |RᵀR - I|_F = {gram_err:.3e}"
        )));
    }
    if r.determinant() < 0.0 {
        return Err(FlagError::invalid(
            "logm_so requires det = +1, got a reflection",
        ));
    }

    match orthogonal_schur(r) {
        Some((z, t)) => log_from_schur(&z, &t),
        // The QR iteration can stall on orthogonal matrices with very small
        // rotation angles; the clustered route below always terminates.
        None => log_from_symmetric_part(r),
    }
}

/// Real Schur form of an orthogonal matrix, or None when the QR iteration
/// stalls. Tries a tolerance ladder, then a fixed orthogonal change of basis
/// that perturbs the shifts.
fn orthogonal_schur(r: &DMatrix<f64>) -> Option<(DMatrix<f64>, DMatrix<f64>)> {
    const EPS_LADDER: [f64; 3] = [f64::EPSILON, 1e-13, 1e-11];
    for eps in EPS_LADDER {
        if let Some(s) = r.clone().try_schur(eps, 20_000) {
            return Some(s.unpack());
        }
    }
    let n = r.nrows();
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(0x5ceed ^ (n as u64));
    let w = random_special_orthogonal(n, &mut rng);
    let conjugated = w.transpose() * r * &w;
    for eps in EPS_LADDER {
        if let Some(s) = conjugated.clone().try_schur(eps, 20_000) {
            let (z, t) = s.unpack();
            return Some((&w * z, t));
        }
    }
    None
}

fn log_from_schur(z: &DMatrix<f64>, t: &DMatrix<f64>) -> Result<SkewSymmetric> {
    let n = t.nrows();
    let mut log_t = DMatrix::zeros(n, n);
    let mut i = 0;
    while i < n {
        let paired = i + 1 < n && t[(i + 1, i)].abs() > 1e-12;
        if paired {
            // 2x2 block of a normal matrix: [[c, -s], [s, c]] up to roundoff.
            let c = 0.5 * (t[(i, i)] + t[(i + 1, i + 1)]);
            let s = 0.5 * (t[(i + 1, i)] - t[(i, i + 1)]);
            if (c * c + s * s - 1.0).abs() > 1e-6 {
                return Err(FlagError::Numerical(format!(
                    "Schur block at {i} is not a rotation: c={c:.6e}, s={s:.6e}"
                )));
            }
            let theta = s.atan2(c);
            if std::f64::consts::PI - theta.abs() < CUT_LOCUS_TOL {
                return Err(FlagError::LogNearCutLocus(CUT_LOCUS_TOL));
            }
            log_t[(i, i + 1)] = -theta;
            log_t[(i + 1, i)] = theta;
            i += 2;
        } else {
            let lam = t[(i, i)];
            if (lam.abs() - 1.0).abs() > 1e-6 {
                return Err(FlagError::Numerical(format!(
                    "Schur diagonal entry {lam:.6e} is not a unit eigenvalue"
                )));
            }
            if lam < 0.0 {
                // Eigenvalue -1: a rotation by exactly pi in some plane.
                return Err(FlagError::LogNearCutLocus(CUT_LOCUS_TOL));
            }
            i += 1;
        }
    }

    SkewSymmetric::new(z * log_t * z.transpose())
}

/// Principal log via the symmetric part.
///
/// (R + Rᵀ)/2 has eigenvalue cos θ on each invariant rotation plane of R.
/// Group its eigenvalues into clusters of equal angle; on each cluster's
/// eigenspace R restricts to cos θ·I + sin θ·J with J a skew orthogonal
/// complex structure, so the log restricted there is (θ/sin θ) times the
/// skew part of the restriction. Symmetric eigensolvers do not stall, which
/// makes this a dependable fallback.
fn log_from_symmetric_part(r: &DMatrix<f64>) -> Result<SkewSymmetric> {
    const CLUSTER_TOL: f64 = 1e-8;
    let n = r.nrows();
    let sym = 0.5 * (r + r.transpose());
    let se = sym.symmetric_eigen();

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| se.eigenvalues[b].partial_cmp(&se.eigenvalues[a]).unwrap());

    let mut log = DMatrix::<f64>::zeros(n, n);
    let mut start = 0;
    while start < n {
        let mut end = start + 1;
        while end < n
            && (se.eigenvalues[order[end - 1]] - se.eigenvalues[order[end]]).abs() < CLUSTER_TOL
        {
            end += 1;
        }
        let m = end - start;
        let mean_cos = (start..end)
            .map(|i| se.eigenvalues[order[i]])
            .sum::<f64>()
            / m as f64;
        let theta = mean_cos.clamp(-1.0, 1.0).acos();
        if std::f64::consts::PI - theta < CUT_LOCUS_TOL {
            return Err(FlagError::LogNearCutLocus(CUT_LOCUS_TOL));
        }

        let mut basis = DMatrix::<f64>::zeros(n, m);
        for (dst, &src) in order[start..end].iter().enumerate() {
            basis.set_column(dst, &se.eigenvectors.column(src));
        }
        let restricted = basis.transpose() * r * &basis;
        let skew_part = 0.5 * (&restricted - restricted.transpose());
        let factor = if theta.sin() < 1e-9 {
            1.0 // theta -> 0 limit of theta / sin(theta)
        } else {
            theta / theta.sin()
        };
        log += &basis * (factor * skew_part) * basis.transpose();
        start = end;
    }

    SkewSymmetric::new(log)
}

/// Householder QR of an n-by-m matrix, m <= n.
///
/// Returns (Q, R) with Q n-by-n orthogonal and R n-by-m upper triangular with
/// nonnegative diagonal (the sign convention fixes the factorization). The
/// trailing n-m columns of Q span the orthogonal complement of the range.
pub fn qr_full(x: &DMatrix<f64>) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
    ensure_finite(x, "QR input")?;
    let (n, m) = x.shape();
    if m > n {
        return Err(FlagError::invalid(format!(
            "QR input must have at least as many rows as columns ({n}x{m})"
        )));
    }

    let mut r = x.clone();
    let mut q = DMatrix::<f64>::identity(n, n);
    let mut v = DVector::<f64>::zeros(n);

    for j in 0..m {
        let len = n - j;
        for i in 0..len {
            v[i] = r[(j + i, j)];
        }
        let alpha = v.rows(0, len).norm();
        if alpha == 0.0 {
            continue;
        }
        let sign = if v[0] >= 0.0 { 1.0 } else { -1.0 };
        v[0] += sign * alpha;
        let vnorm2 = v.rows(0, len).norm_squared();
        if vnorm2 == 0.0 {
            continue;
        }
        let beta = 2.0 / vnorm2;

        // R <- H R on the trailing columns.
        for col in (j + 1)..m {
            let mut w = 0.0;
            for i in 0..len {
                w += v[i] * r[(j + i, col)];
            }
            let w = beta * w;
            for i in 0..len {
                r[(j + i, col)] -= w * v[i];
            }
        }
        r[(j, j)] = -sign * alpha;
        for i in (j + 1)..n {
            r[(i, j)] = 0.0;
        }

        // Q <- Q H (accumulate the product of reflectors).
        for row in 0..n {
            let mut w = 0.0;
            for i in 0..len {
                w += q[(row, j + i)] * v[i];
            }
            let w = beta * w;
            for i in 0..len {
                q[(row, j + i)] -= w * v[i];
            }
        }
    }

    // Nonnegative diagonal of R.
    for j in 0..m {
        if r[(j, j)] < 0.0 {
            for col in j..m {
                r[(j, col)] = -r[(j, col)];
            }
            for row in 0..n {
                q[(row, j)] = -q[(row, j)];
            }
        }
    }

    Ok((q, r))
}

/// Thin QR: X = QR with Q n-by-m orthonormal and R m-by-m upper triangular
/// with nonnegative diagonal.
pub fn qr_thin(x: &DMatrix<f64>) -> Result<(OrthonormalColumns, DMatrix<f64>)> {
    let m = x.ncols();
    let (q, r) = qr_full(x)?;
    let q_thin = q.columns(0, m).into_owned();
    let r_thin = r.rows(0, m).into_owned();
    Ok((OrthonormalColumns::new(q_thin)?, r_thin))
}

/// Extends an n-by-k orthonormal matrix to an n-by-n orthogonal matrix whose
/// leading k columns coincide with the input (to machine precision).
pub fn complete_orthonormal(x: &OrthonormalColumns) -> Result<DMatrix<f64>> {
    let (q, _r) = qr_full(x.as_matrix())?;
    Ok(q)
}

/// Compact SVD, X = U Σ Vᵀ, singular values sorted descending.
#[derive(Clone, Debug)]
pub struct CompactSvd {
    pub u: OrthonormalColumns,
    pub singular_values: DVector<f64>,
    pub v: OrthonormalColumns,
}

/// Compact SVD with a fixed sign convention: the largest-magnitude entry of
/// each left singular vector is positive (first such entry wins ties), which
/// makes the factorization deterministic.
pub fn svd_compact(x: &DMatrix<f64>) -> Result<CompactSvd> {
    ensure_finite(x, "SVD input")?;
    let svd = x.clone().svd(true, true);
    let mut u = svd
        .u
        .ok_or_else(|| FlagError::Numerical("SVD failed to produce U".into()))?;
    let mut v = svd
        .v_t
        .ok_or_else(|| FlagError::Numerical("SVD failed to produce V".into()))?
        .transpose();
    let s = DVector::from_iterator(
        svd.singular_values.len(),
        svd.singular_values.iter().copied(),
    );

    for j in 0..u.ncols() {
        let mut idx = 0;
        let mut best = -1.0;
        for i in 0..u.nrows() {
            let a = u[(i, j)].abs();
            if a > best {
                best = a;
                idx = i;
            }
        }
        if u[(idx, j)] < 0.0 {
            for i in 0..u.nrows() {
                u[(i, j)] = -u[(i, j)];
            }
            for i in 0..v.nrows() {
                v[(i, j)] = -v[(i, j)];
            }
        }
    }

    Ok(CompactSvd {
        u: OrthonormalColumns::new(u)?,
        singular_values: s,
        v: OrthonormalColumns::new(v)?,
    })
}

/// Spectral norm (largest singular value).
pub fn spectral_norm(x: &DMatrix<f64>) -> f64 {
    x.clone().singular_values().max()
}

/// Draws a random special orthogonal matrix: QR of a Gaussian matrix with the
/// determinant fixed to +1 by negating the last column if needed.
pub fn random_special_orthogonal(n: usize, rng: &mut impl Rng) -> DMatrix<f64> {
    let g = DMatrix::from_fn(n, n, |_, _| rng.sample::<f64, _>(StandardNormal));
    let (mut q, _r) = qr_full(&g).expect("Gaussian sample is finite");
    if q.determinant() < 0.0 {
        for i in 0..n {
            q[(i, n - 1)] = -q[(i, n - 1)];
        }
    }
    q
}
