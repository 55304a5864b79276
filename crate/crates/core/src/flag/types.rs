use std::fmt;

use itertools::Itertools;
use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{FlagError, Result};
use crate::matfun::{
    complete_orthonormal, expm_skew, OrthonormalColumns, SkewSymmetric, ORTHONORMALITY_TOL,
};

/// The type (n₁,…,n_d) of a flag: the dimension increments of the nested
/// subspaces. Governs the block structure of everything else.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct FlagSignature {
    parts: Vec<usize>,
}

impl FlagSignature {
    /// At least two parts, all positive.
    pub fn new(parts: Vec<usize>) -> Result<Self> {
        if parts.len() < 2 {
            return Err(FlagError::invalid(
                "flag signature needs at least two parts",
            ));
        }
        if parts.iter().any(|&p| p == 0) {
            return Err(FlagError::invalid("flag signature parts must be positive"));
        }
        Ok(Self { parts })
    }

    /// The Grassmannian signature (k, n-k).
    pub fn grassmann(k: usize, n: usize) -> Result<Self> {
        if k == 0 || k >= n {
            return Err(FlagError::invalid(format!(
                "Grassmann signature requires 0 < k < n, got k={k}, n={n}"
            )));
        }
        Self::new(vec![k, n - k])
    }

    /// Extends a prefix of parts with the trailing block n - Σ prefix.
    pub fn with_trailing(prefix: &[usize], n: usize) -> Result<Self> {
        let k: usize = prefix.iter().sum();
        if k >= n {
            return Err(FlagError::invalid(format!(
                "signature prefix sums to {k}, needs to be below the ambient dimension {n}"
            )));
        }
        let mut parts = prefix.to_vec();
        parts.push(n - k);
        Self::new(parts)
    }

    pub fn parts(&self) -> &[usize] {
        &self.parts
    }

    /// Ambient dimension n = Σ nᵢ.
    pub fn n(&self) -> usize {
        self.parts.iter().sum()
    }

    /// Number of blocks.
    pub fn d(&self) -> usize {
        self.parts.len()
    }

    /// Dimension of the largest proper subspace, k = n - n_d.
    pub fn k(&self) -> usize {
        self.n() - self.parts[self.d() - 1]
    }

    /// First column (0-based) of block `i`.
    pub fn block_start(&self, i: usize) -> usize {
        self.parts[..i].iter().sum()
    }

    pub fn block_size(&self, i: usize) -> usize {
        self.parts[i]
    }
}

impl fmt::Display for FlagSignature {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({})", self.parts.iter().join(","))
    }
}

/// A point on the flag manifold: the equivalence class [Q] of an n-by-n
/// special orthogonal matrix under right multiplication by block-diagonal
/// orthogonal matrices with determinant product +1.
#[derive(Clone, Debug)]
pub struct FlagPoint {
    sig: FlagSignature,
    q: DMatrix<f64>,
}

impl FlagPoint {
    /// Wraps an orthogonal matrix as a flag representative.
    ///
    /// Inputs with det = -1 are canonicalized into SO(n) by negating the first
    /// column of the last block, which stays inside the same flag.
    pub fn from_orthogonal(q: DMatrix<f64>, sig: FlagSignature) -> Result<Self> {
        let n = sig.n();
        if q.nrows() != n || q.ncols() != n {
            return Err(FlagError::invalid(format!(
                "matrix is {}x{} but signature {} has ambient dimension {n}",
                q.nrows(),
                q.ncols(),
                sig
            )));
        }
        let gram_err = (q.transpose() * &q - DMatrix::<f64>::identity(n, n)).norm();
        if gram_err > ORTHONORMALITY_TOL {
            return Err(FlagError::invalid(format!(
                "orthonormality violated: |QᵀQ - I|_F = {gram_err:.3e}"
            )));
        }
        let mut q = q;
        if q.determinant() < 0.0 {
            let col = sig.block_start(sig.d() - 1);
            for i in 0..n {
                q[(i, col)] = -q[(i, col)];
            }
        }
        Ok(Self { sig, q })
    }

    /// Builds a flag from an n-by-k orthonormal matrix (e.g. a truncated SVD
    /// basis) and the block sizes of its columns. The matrix is completed to
    /// n-by-n via Householder reflections; the signature gains a trailing
    /// block of size n-k. Any completion represents the same flag.
    pub fn from_orthonormal_columns(x: &DMatrix<f64>, prefix_parts: &[usize]) -> Result<Self> {
        let k: usize = prefix_parts.iter().sum();
        if k != x.ncols() {
            return Err(FlagError::invalid(format!(
                "signature prefix sums to {k} but the basis has {} columns",
                x.ncols()
            )));
        }
        let sig = FlagSignature::with_trailing(prefix_parts, x.nrows())?;
        let basis = OrthonormalColumns::new(x.clone())?;
        let full = complete_orthonormal(&basis)?;
        Self::from_orthogonal(full, sig)
    }

    /// The identity flag: the canonical nested coordinate subspaces.
    pub fn identity(sig: FlagSignature) -> Self {
        let n = sig.n();
        Self {
            sig,
            q: DMatrix::identity(n, n),
        }
    }

    pub fn random(sig: FlagSignature, rng: &mut impl Rng) -> Self {
        let q = crate::matfun::random_special_orthogonal(sig.n(), rng);
        Self { sig, q }
    }

    pub fn signature(&self) -> &FlagSignature {
        &self.sig
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.q
    }

    /// For matrices that are special orthogonal by construction (products of
    /// validated representatives, exponentials of skew matrices).
    pub(crate) fn from_parts_unchecked(sig: FlagSignature, q: DMatrix<f64>) -> Self {
        Self { sig, q }
    }
}

/// A geodesic direction: skew-symmetric with every diagonal block zero.
#[derive(Clone, Debug)]
pub struct HorizontalTangent {
    sig: FlagSignature,
    skew: SkewSymmetric,
}

impl HorizontalTangent {
    /// Requires exactly-zero diagonal blocks; use [`project_horizontal`] to
    /// build one from a general skew-symmetric matrix.
    pub fn new(skew: SkewSymmetric, sig: FlagSignature) -> Result<Self> {
        check_dim(&skew, &sig)?;
        let m = skew.as_matrix();
        for b in 0..sig.d() {
            let s = sig.block_start(b);
            for i in s..s + sig.block_size(b) {
                for j in s..s + sig.block_size(b) {
                    if m[(i, j)] != 0.0 {
                        return Err(FlagError::invalid(format!(
                            "diagonal block {b} is not zero at ({i},{j})"
                        )));
                    }
                }
            }
        }
        Ok(Self { sig, skew })
    }

    pub fn zero(sig: FlagSignature) -> Self {
        let n = sig.n();
        Self {
            sig,
            skew: SkewSymmetric::zeros(n),
        }
    }

    /// Gaussian skew matrix projected to the horizontal space.
    pub fn random(sig: &FlagSignature, rng: &mut impl Rng) -> Self {
        let skew = SkewSymmetric::from_lower_triangle(sig.n(), |_, _| {
            rng.sample::<f64, _>(StandardNormal)
        });
        project_horizontal(&skew, sig).expect("dimensions match by construction")
    }

    pub fn signature(&self) -> &FlagSignature {
        &self.sig
    }

    pub fn as_skew(&self) -> &SkewSymmetric {
        &self.skew
    }

    pub fn as_matrix(&self) -> &DMatrix<f64> {
        self.skew.as_matrix()
    }

    pub fn scaled(&self, t: f64) -> Self {
        Self {
            sig: self.sig.clone(),
            skew: self.skew.scaled(t),
        }
    }

    /// Geodesic length sqrt(½ Tr(HᵀH)); equals sqrt(½ Σ λⱼ²) over the skew
    /// eigenvalues ±iλⱼ.
    pub fn geodesic_length(&self) -> f64 {
        (0.5 * self.skew.as_matrix().norm_squared()).sqrt()
    }
}

/// A flag-preserving direction: block-diagonal skew-symmetric.
#[derive(Clone, Debug)]
pub struct VerticalTangent {
    sig: FlagSignature,
    skew: SkewSymmetric,
}

impl VerticalTangent {
    /// Requires exactly-zero off-diagonal blocks; use [`project_vertical`] to
    /// build one from a general skew-symmetric matrix.
    pub fn new(skew: SkewSymmetric, sig: FlagSignature) -> Result<Self> {
        check_dim(&skew, &sig)?;
        let m = skew.as_matrix();
        let n = sig.n();
        for i in 0..n {
            for j in 0..n {
                if !same_block(&sig, i, j) && m[(i, j)] != 0.0 {
                    return Err(FlagError::invalid(format!(
                        "off-diagonal entry ({i},{j}) is not zero"
                    )));
                }
            }
        }
        Ok(Self { sig, skew })
    }

    pub fn zero(sig: FlagSignature) -> Self {
        let n = sig.n();
        Self {
            sig,
            skew: SkewSymmetric::zeros(n),
        }
    }

    /// Each diagonal block's strict lower triangle i.i.d. uniform on
    /// [-spread, spread].
    pub fn random_uniform(sig: &FlagSignature, spread: f64, rng: &mut impl Rng) -> Self {
        let mut mat = DMatrix::zeros(sig.n(), sig.n());
        for b in 0..sig.d() {
            let s = sig.block_start(b);
            let sz = sig.block_size(b);
            for i in (s + 1)..(s + sz) {
                for j in s..i {
                    let v = rng.gen_range(-spread..=spread);
                    mat[(i, j)] = v;
                    mat[(j, i)] = -v;
                }
            }
        }
        Self {
            sig: sig.clone(),
            skew: SkewSymmetric::from_skew_unchecked(mat),
        }
    }

    pub fn signature(&self) -> &FlagSignature {
        &self.sig
    }

    pub fn as_skew(&self) -> &SkewSymmetric {
        &self.skew
    }

    pub fn as_matrix(&self) -> &DMatrix<f64> {
        self.skew.as_matrix()
    }
}

fn check_dim(skew: &SkewSymmetric, sig: &FlagSignature) -> Result<()> {
    if skew.dim() != sig.n() {
        return Err(FlagError::invalid(format!(
            "skew matrix dimension {} does not match signature {} (n = {})",
            skew.dim(),
            sig,
            sig.n()
        )));
    }
    Ok(())
}

fn same_block(sig: &FlagSignature, i: usize, j: usize) -> bool {
    block_of(sig, i) == block_of(sig, j)
}

fn block_of(sig: &FlagSignature, idx: usize) -> usize {
    let mut acc = 0;
    for (b, &p) in sig.parts().iter().enumerate() {
        acc += p;
        if idx < acc {
            return b;
        }
    }
    unreachable!("index within ambient dimension")
}

/// Projects a skew-symmetric matrix onto the horizontal space: zeroes every
/// diagonal block, keeps the rest bit-for-bit. Together with
/// [`project_vertical`] this splits the input exactly.
pub fn project_horizontal(a: &SkewSymmetric, sig: &FlagSignature) -> Result<HorizontalTangent> {
    check_dim(a, sig)?;
    let mut m = a.as_matrix().clone();
    for b in 0..sig.d() {
        let s = sig.block_start(b);
        let sz = sig.block_size(b);
        for i in s..s + sz {
            for j in s..s + sz {
                m[(i, j)] = 0.0;
            }
        }
    }
    Ok(HorizontalTangent {
        sig: sig.clone(),
        skew: SkewSymmetric::from_skew_unchecked(m),
    })
}

/// Projects a skew-symmetric matrix onto the vertical space: keeps the
/// diagonal blocks bit-for-bit, zeroes the rest.
pub fn project_vertical(a: &SkewSymmetric, sig: &FlagSignature) -> Result<VerticalTangent> {
    check_dim(a, sig)?;
    let n = sig.n();
    let mut m = DMatrix::zeros(n, n);
    let src = a.as_matrix();
    for b in 0..sig.d() {
        let s = sig.block_start(b);
        let sz = sig.block_size(b);
        for i in s..s + sz {
            for j in s..s + sz {
                m[(i, j)] = src[(i, j)];
            }
        }
    }
    Ok(VerticalTangent {
        sig: sig.clone(),
        skew: SkewSymmetric::from_skew_unchecked(m),
    })
}

/// Exponential map: the geodesic through `p` with direction `h`, evaluated at
/// time `t`, represented by Q·exp(tH).
pub fn flag_exp(p: &FlagPoint, h: &HorizontalTangent, t: f64) -> Result<FlagPoint> {
    if p.signature() != h.signature() {
        return Err(FlagError::invalid(format!(
            "signature mismatch: point {} vs tangent {}",
            p.signature(),
            h.signature()
        )));
    }
    if t == 0.0 {
        return Ok(p.clone());
    }
    let step = h.as_skew().scaled(t);
    let q = p.matrix() * expm_skew(&step);
    Ok(FlagPoint::from_parts_unchecked(p.signature().clone(), q))
}

/// All 2^(d-1) representatives of `p` on the fully oriented flag manifold.
///
/// Element 0 is `p` itself; each other element negates the first column of
/// each block in an even-cardinality subset of the d blocks (subsets by size
/// then lexicographic). Negating two first columns flips two block
/// determinants, so every output stays in SO(n) and represents the same flag.
pub fn enumerate_representatives(p: &FlagPoint) -> Vec<FlagPoint> {
    let sig = p.signature();
    let d = sig.d();
    let n = sig.n();
    let mut reps = Vec::with_capacity(1 << (d - 1));
    reps.push(p.clone());
    for size in (2..=d).step_by(2) {
        for combo in (0..d).combinations(size) {
            let mut q = p.matrix().clone();
            for b in combo {
                let col = sig.block_start(b);
                for i in 0..n {
                    q[(i, col)] = -q[(i, col)];
                }
            }
            reps.push(FlagPoint::from_parts_unchecked(sig.clone(), q));
        }
    }
    reps
}
