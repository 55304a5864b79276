//! Class-separation measures over embedded coordinates: centroid gaps,
//! silhouette scores and a perceptron-based linear-separability probe.

use nalgebra::DMatrix;
use serde::Serialize;

use crate::embedding::DistanceMatrix;
use crate::error::{FlagError, Result};

/// Update budget of the linear-separability probe.
pub const PERCEPTRON_UPDATE_BUDGET: usize = 10_000;

#[derive(Clone, Debug, Serialize)]
pub struct SeparationReport {
    /// Smallest Euclidean distance between class centroids.
    pub centroid_gap: f64,
    /// Mean silhouette over all points.
    pub silhouette: f64,
    /// Whether a perceptron separates every class pair within the budget.
    pub linearly_separable: bool,
    /// Mean distance between points of the same class (from the distance
    /// matrix, not the embedding).
    pub mean_intra_class_distance: f64,
    /// Mean distance between points of different classes.
    pub mean_inter_class_distance: f64,
}

fn distinct_classes(labels: &[String]) -> Vec<String> {
    let mut seen = Vec::new();
    for l in labels {
        if !seen.contains(l) {
            seen.push(l.clone());
        }
    }
    seen
}

/// Mean silhouette score of `coords` (one row per point) under Euclidean
/// distance. Points in singleton classes score 0.
pub fn silhouette(coords: &DMatrix<f64>, labels: &[String]) -> Result<f64> {
    let p = coords.nrows();
    if labels.len() != p {
        return Err(FlagError::invalid("one label per row required"));
    }
    let classes = distinct_classes(labels);
    if classes.len() < 2 {
        return Err(FlagError::invalid("silhouette needs at least two classes"));
    }
    let dist = |i: usize, j: usize| (coords.row(i) - coords.row(j)).norm();

    let mut total = 0.0;
    for i in 0..p {
        let mut same_sum = 0.0;
        let mut same_count = 0usize;
        let mut other: Vec<(f64, usize)> = vec![(0.0, 0); classes.len()];
        for j in 0..p {
            if j == i {
                continue;
            }
            let d = dist(i, j);
            if labels[j] == labels[i] {
                same_sum += d;
                same_count += 1;
            } else {
                let c = classes.iter().position(|c| c == &labels[j]).unwrap();
                other[c].0 += d;
                other[c].1 += 1;
            }
        }
        if same_count == 0 {
            continue; // singleton class contributes 0
        }
        let a = same_sum / same_count as f64;
        let b = other
            .iter()
            .filter(|(_, c)| *c > 0)
            .map(|(s, c)| s / *c as f64)
            .fold(f64::INFINITY, f64::min);
        let s = if a.max(b) > 0.0 { (b - a) / a.max(b) } else { 0.0 };
        total += s;
    }
    Ok(total / p as f64)
}

/// Smallest Euclidean distance between class centroids in the embedding.
pub fn centroid_gap(coords: &DMatrix<f64>, labels: &[String]) -> Result<f64> {
    let p = coords.nrows();
    if labels.len() != p {
        return Err(FlagError::invalid("one label per row required"));
    }
    let classes = distinct_classes(labels);
    if classes.len() < 2 {
        return Err(FlagError::invalid("centroid gap needs at least two classes"));
    }
    let m = coords.ncols();
    let mut centroids = vec![vec![0.0; m]; classes.len()];
    let mut counts = vec![0usize; classes.len()];
    for i in 0..p {
        let c = classes.iter().position(|c| c == &labels[i]).unwrap();
        counts[c] += 1;
        for j in 0..m {
            centroids[c][j] += coords[(i, j)];
        }
    }
    for (c, count) in counts.iter().enumerate() {
        for j in 0..m {
            centroids[c][j] /= *count as f64;
        }
    }
    let mut gap = f64::INFINITY;
    for a in 0..classes.len() {
        for b in (a + 1)..classes.len() {
            let d: f64 = (0..m)
                .map(|j| (centroids[a][j] - centroids[b][j]).powi(2))
                .sum::<f64>()
                .sqrt();
            gap = gap.min(d);
        }
    }
    Ok(gap)
}

/// Perceptron separability of one class pair: fixed-order passes over the
/// points, counting weight updates; converging within the budget means the
/// two classes are linearly separable (with bias).
fn pair_separable(coords: &DMatrix<f64>, labels: &[String], pos: &str, neg: &str) -> bool {
    let m = coords.ncols();
    let idx: Vec<usize> = (0..coords.nrows())
        .filter(|&i| labels[i] == pos || labels[i] == neg)
        .collect();
    let mut w = vec![0.0; m + 1];
    let mut updates = 0usize;
    loop {
        let mut clean = true;
        for &i in &idx {
            let y = if labels[i] == pos { 1.0 } else { -1.0 };
            let mut act = w[m];
            for j in 0..m {
                act += w[j] * coords[(i, j)];
            }
            if y * act <= 0.0 {
                for j in 0..m {
                    w[j] += y * coords[(i, j)];
                }
                w[m] += y;
                updates += 1;
                clean = false;
                if updates >= PERCEPTRON_UPDATE_BUDGET {
                    return false;
                }
            }
        }
        if clean {
            return true;
        }
    }
}

/// Whether every class pair is linearly separable in the embedding.
pub fn linearly_separable(coords: &DMatrix<f64>, labels: &[String]) -> Result<bool> {
    let classes = distinct_classes(labels);
    if classes.len() < 2 {
        return Err(FlagError::invalid("separability needs at least two classes"));
    }
    for a in 0..classes.len() {
        for b in (a + 1)..classes.len() {
            if !pair_separable(coords, labels, &classes[a], &classes[b]) {
                return Ok(false);
            }
        }
    }
    Ok(true)
}

/// Mean intra-class and inter-class distances straight from the distance
/// matrix.
pub fn intra_inter_means(d: &DistanceMatrix) -> Result<(f64, f64)> {
    let labels = d.labels();
    let p = d.size();
    let mut intra = (0.0, 0usize);
    let mut inter = (0.0, 0usize);
    for i in 0..p {
        for j in (i + 1)..p {
            let v = d.entries()[(i, j)];
            if labels[i] == labels[j] {
                intra.0 += v;
                intra.1 += 1;
            } else {
                inter.0 += v;
                inter.1 += 1;
            }
        }
    }
    if intra.1 == 0 || inter.1 == 0 {
        return Err(FlagError::invalid(
            "need both intra-class and inter-class pairs",
        ));
    }
    Ok((intra.0 / intra.1 as f64, inter.0 / inter.1 as f64))
}

/// Bundle of all separation measures for a labeled embedding.
pub fn separation_report(
    d: &DistanceMatrix,
    coords: &DMatrix<f64>,
) -> Result<SeparationReport> {
    let labels = d.labels();
    let (intra, inter) = intra_inter_means(d)?;
    Ok(SeparationReport {
        centroid_gap: centroid_gap(coords, labels)?,
        silhouette: silhouette(coords, labels)?,
        linearly_separable: linearly_separable(coords, labels)?,
        mean_intra_class_distance: intra,
        mean_inter_class_distance: inter,
    })
}
