//! Pairwise geodesic distance matrices over collections of flag or Grassmann
//! points, and classical (Torgerson) multidimensional scaling.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

use crate::error::{FlagError, Result};
use crate::flag::{flag_distance_auto, FlagPoint, FlagSignature, SolverConfig};
use crate::grassmann::{grassmann_distance, GrassmannPoint};
use crate::seed::derive_seed;

/// How a distance matrix was produced.
#[derive(Clone, Debug, PartialEq)]
pub enum DistanceMethod {
    Flag(FlagSignature),
    Grassmann { k: usize },
}

/// A symmetric, hollow, nonnegative matrix of pairwise geodesic distances
/// with per-point labels.
#[derive(Clone, Debug)]
pub struct DistanceMatrix {
    entries: DMatrix<f64>,
    labels: Vec<String>,
    method: Option<DistanceMethod>,
}

impl DistanceMatrix {
    /// Validates symmetry (within 1e-6), a zero diagonal and nonnegative
    /// finite entries, then normalizes: symmetrize as (D+Dᵀ)/2 and force the
    /// diagonal to zero. `method` is None for matrices loaded from disk.
    pub fn new(
        entries: DMatrix<f64>,
        labels: Vec<String>,
        method: Option<DistanceMethod>,
    ) -> Result<Self> {
        if !entries.is_square() {
            return Err(FlagError::invalid("distance matrix must be square"));
        }
        let p = entries.nrows();
        if labels.len() != p {
            return Err(FlagError::invalid(format!(
                "{} labels for {p} points",
                labels.len()
            )));
        }
        for i in 0..p {
            if entries[(i, i)].abs() > 1e-8 {
                return Err(FlagError::invalid(format!(
                    "diagonal entry ({i},{i}) = {} is not zero",
                    entries[(i, i)]
                )));
            }
            for j in 0..p {
                let d = entries[(i, j)];
                if !d.is_finite() || d < 0.0 {
                    return Err(FlagError::invalid(format!(
                        "entry ({i},{j}) = {d} is not a distance"
                    )));
                }
                if (d - entries[(j, i)]).abs() > 1e-6 {
                    return Err(FlagError::invalid(format!(
                        "asymmetry at ({i},{j}): {d} vs {}",
                        entries[(j, i)]
                    )));
                }
            }
        }
        let mut sym = 0.5 * (&entries + entries.transpose());
        for i in 0..p {
            sym[(i, i)] = 0.0;
        }
        Ok(Self {
            entries: sym,
            labels,
            method,
        })
    }

    pub fn size(&self) -> usize {
        self.entries.nrows()
    }

    pub fn entries(&self) -> &DMatrix<f64> {
        &self.entries
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn method(&self) -> Option<&DistanceMethod> {
        self.method.as_ref()
    }
}

fn upper_triangle_pairs(p: usize) -> Vec<(usize, usize)> {
    let mut pairs = Vec::with_capacity(p * (p - 1) / 2);
    for i in 0..p {
        for j in (i + 1)..p {
            pairs.push((i, j));
        }
    }
    pairs
}

fn assemble(
    p: usize,
    pairs: Vec<(usize, usize)>,
    results: Vec<Result<f64>>,
    labels: Vec<String>,
    method: DistanceMethod,
) -> Result<DistanceMatrix> {
    let mut entries = DMatrix::<f64>::zeros(p, p);
    for ((i, j), r) in pairs.into_iter().zip(results) {
        match r {
            Ok(d) => {
                entries[(i, j)] = d;
                entries[(j, i)] = d;
            }
            Err(FlagError::NoConvergedTrial(detail)) => {
                return Err(FlagError::NoConvergedTrial(format!(
                    " for pair ({i},{j}){detail}"
                )))
            }
            Err(e) => return Err(e),
        }
    }
    DistanceMatrix::new(entries, labels, Some(method))
}

/// Pairwise flag distances, upper triangle only, mirrored to a symmetric
/// matrix. Pairs are computed in parallel; each pair's solver is seeded from
/// (i, j, cfg.seed) so the result is independent of scheduling order. Pairs
/// where the 2k-reduction applies are solved in the reduced dimension.
pub fn pairwise_flag_distances(
    points: &[FlagPoint],
    labels: Vec<String>,
    cfg: &SolverConfig,
) -> Result<DistanceMatrix> {
    let p = points.len();
    if p < 2 {
        return Err(FlagError::invalid("need at least 2 points"));
    }
    let sig = points[0].signature().clone();
    for (i, pt) in points.iter().enumerate() {
        if pt.signature() != &sig {
            return Err(FlagError::invalid(format!(
                "point {i} has signature {} instead of {sig}",
                pt.signature()
            )));
        }
    }
    let pairs = upper_triangle_pairs(p);
    let results: Vec<Result<f64>> = pairs
        .par_iter()
        .map(|&(i, j)| {
            let pair_cfg = SolverConfig {
                seed: derive_seed(cfg.seed, i as u64, j as u64),
                ..cfg.clone()
            };
            flag_distance_auto(&points[i], &points[j], &pair_cfg).map(|sol| sol.distance)
        })
        .collect();
    assemble(p, pairs, results, labels, DistanceMethod::Flag(sig))
}

/// Pairwise Grassmann distances (principal angles), parallel over pairs.
pub fn pairwise_grassmann_distances(
    points: &[GrassmannPoint],
    labels: Vec<String>,
) -> Result<DistanceMatrix> {
    let p = points.len();
    if p < 2 {
        return Err(FlagError::invalid("need at least 2 points"));
    }
    let (n, k) = (points[0].n(), points[0].k());
    for (i, pt) in points.iter().enumerate() {
        if pt.n() != n || pt.k() != k {
            return Err(FlagError::invalid(format!(
                "point {i} is {}x{} instead of {n}x{k}",
                pt.n(),
                pt.k()
            )));
        }
    }
    let pairs = upper_triangle_pairs(p);
    let results: Vec<Result<f64>> = pairs
        .par_iter()
        .map(|&(i, j)| grassmann_distance(&points[i], &points[j]))
        .collect();
    assemble(p, pairs, results, labels, DistanceMethod::Grassmann { k })
}

/// Euclidean embedding produced by classical MDS.
#[derive(Clone, Debug)]
pub struct MdsResult {
    /// p-by-m coordinates; column j is scaled by sqrt of the j-th positive
    /// eigenvalue, or zero where the eigenvalue is not positive.
    pub coordinates: DMatrix<f64>,
    /// All p eigenvalues of the double-centered matrix, descending, signed.
    pub eigenvalues: DVector<f64>,
}

/// Classical (Torgerson) MDS: double-center B = -½ J D∘D J, eigendecompose,
/// scale the top-m eigenvectors by the square roots of their (positive)
/// eigenvalues. Negative eigenvalues (expected when the distances come from
/// a curved manifold) are reported but excluded from the coordinates.
pub fn classical_mds(d: &DistanceMatrix, m: usize) -> Result<MdsResult> {
    let p = d.size();
    if m == 0 || m >= p {
        return Err(FlagError::invalid(format!(
            "embedding dimension must satisfy 1 <= m < p, got m={m}, p={p}"
        )));
    }

    // b_ij = -1/2 (d²_ij - rowmean_i - colmean_j + grandmean)
    let dd = d.entries().map(|x| x * x);
    let row_means: Vec<f64> = (0..p).map(|i| dd.row(i).sum() / p as f64).collect();
    let grand = dd.sum() / (p * p) as f64;
    let mut b = DMatrix::<f64>::zeros(p, p);
    for i in 0..p {
        for j in 0..p {
            b[(i, j)] = -0.5 * (dd[(i, j)] - row_means[i] - row_means[j] + grand);
        }
    }
    // Symmetrize away roundoff before the eigensolve.
    b = 0.5 * (&b + b.transpose());

    let eig = b.symmetric_eigen();
    let mut order: Vec<usize> = (0..p).collect();
    order.sort_by(|&a, &c| eig.eigenvalues[c].partial_cmp(&eig.eigenvalues[a]).unwrap());

    let eigenvalues = DVector::from_iterator(p, order.iter().map(|&i| eig.eigenvalues[i]));
    let mut coordinates = DMatrix::<f64>::zeros(p, m);
    for col in 0..m {
        let lambda = eigenvalues[col];
        if lambda <= 0.0 {
            continue;
        }
        let src = eig.eigenvectors.column(order[col]);
        // Deterministic sign: largest-magnitude entry positive.
        let mut idx = 0;
        let mut bestmag = -1.0;
        for i in 0..p {
            if src[i].abs() > bestmag {
                bestmag = src[i].abs();
                idx = i;
            }
        }
        let flip = if src[idx] < 0.0 { -1.0 } else { 1.0 };
        let scale = flip * lambda.sqrt();
        for i in 0..p {
            coordinates[(i, col)] = scale * src[i];
        }
    }

    Ok(MdsResult {
        coordinates,
        eigenvalues,
    })
}
