use crate::error::{FlagError, Result};
use crate::matfun::{qr_thin, OrthonormalColumns};
use nalgebra::DMatrix;

use super::solver::{flag_distance, GeodesicSolution, SolverConfig};
use super::types::{FlagPoint, FlagSignature};

/// Smallest singular value the trailing-row block of q must exceed for the
/// endpoint spans to count as non-intersecting.
pub const REDUCTION_RANK_TOL: f64 = 1e-8;

/// A geodesic problem restated inside the 2k-dimensional span of the two
/// endpoint frames.
#[derive(Clone, Debug)]
pub struct Reduction {
    /// Reduced first endpoint (the identity frame in the new coordinates).
    pub first: FlagPoint,
    /// Reduced second endpoint.
    pub second: FlagPoint,
    /// Signature of the reduced problem: (n₁,…,n_{d-1}, k) in dimension 2k.
    pub signature: FlagSignature,
    /// n-by-2k orthonormal basis of span{[q(0), q(1)]}; maps reduced frames
    /// back into the original space.
    pub basis: OrthonormalColumns,
}

/// Restates the geodesic problem between two flags inside the 2k-dimensional
/// subspace spanned by the leading k columns of both endpoints (k = Σ of all
/// parts but the last). Distances are preserved, so the solver can run on
/// 2k-by-2k matrices instead of n-by-n.
///
/// Requires 2k < n ([`FlagError::NotApplicable`] otherwise) and trivially
/// intersecting endpoint spans, checked through the smallest singular value of
/// the trailing rows of q ([`FlagError::RankDeficient`] when it fails; the
/// caller then falls back to the full-size computation).
pub fn reduce_2k(p1: &FlagPoint, p2: &FlagPoint) -> Result<Reduction> {
    if p1.signature() != p2.signature() {
        return Err(FlagError::invalid(format!(
            "signature mismatch: {} vs {}",
            p1.signature(),
            p2.signature()
        )));
    }
    let sig = p1.signature();
    let n = sig.n();
    let k = sig.k();
    if 2 * k >= n {
        return Err(FlagError::NotApplicable(format!(
            "2k-reduction needs 2k < n, got k={k}, n={n}"
        )));
    }

    // q = (Q₁ᵀQ₂) I_{n,k}: where the moving frame ends up.
    let q_rel = p1.matrix().transpose() * p2.matrix();
    let q = q_rel.columns(0, k).into_owned();

    let q_tail = q.view((k, 0), (n - k, k)).into_owned();
    let sigma_min = q_tail.svd(false, false).singular_values.min();
    if sigma_min <= REDUCTION_RANK_TOL {
        return Err(FlagError::RankDeficient(format!(
            "endpoint spans intersect: smallest tail singular value {sigma_min:.3e}"
        )));
    }

    // Orthonormal basis of span{[q(0), q(1)]} via thin QR of [I_{n,k}, q].
    let mut stacked = DMatrix::<f64>::zeros(n, 2 * k);
    for j in 0..k {
        stacked[(j, j)] = 1.0;
    }
    stacked.view_mut((0, k), (n, k)).copy_from(&q);
    let (u, _r) = qr_thin(&stacked)?;

    // phi(t) = Uᵀ q(t); both endpoints become 2k-by-k orthonormal frames.
    let phi0 = u.as_matrix().rows(0, k).transpose();
    let phi1 = u.as_matrix().transpose() * &q;

    let prefix = &sig.parts()[..sig.d() - 1];
    let first = FlagPoint::from_orthonormal_columns(&phi0, prefix)?;
    let second = FlagPoint::from_orthonormal_columns(&phi1, prefix)?;
    let signature = first.signature().clone();

    Ok(Reduction {
        first,
        second,
        signature,
        basis: u,
    })
}

/// Distance computation that reduces to 2k dimensions whenever Theorem-style
/// preconditions hold and falls back to the full-size solver otherwise.
///
/// The returned solution's tangents live in the reduced coordinates when the
/// reduction was taken; the distance is the same either way.
pub fn flag_distance_auto(
    p1: &FlagPoint,
    p2: &FlagPoint,
    cfg: &SolverConfig,
) -> Result<GeodesicSolution> {
    match reduce_2k(p1, p2) {
        Ok(red) => flag_distance(&red.first, &red.second, cfg),
        Err(FlagError::NotApplicable(_)) | Err(FlagError::RankDeficient(_)) => {
            flag_distance(p1, p2, cfg)
        }
        Err(e) => Err(e),
    }
}
