//! The mixture-separation experiment pipeline: generate or load two class
//! pools, center them jointly, draw mixed sets, represent each set by its
//! SVD basis (flag or Grassmann point), compute the pairwise distance
//! matrix, embed with classical MDS and report class separation.

use std::path::{Path, PathBuf};

use nalgebra::DMatrix;
use serde::Serialize;

use crate::dataio::{
    gen_mixture, load_class_pool, svd_flag, write_matrix_csv, DataMatrix, ExperimentSpec,
};
use crate::embedding::{
    classical_mds, pairwise_flag_distances, pairwise_grassmann_distances, DistanceMatrix,
    MdsResult,
};
use crate::error::{FlagError, Result};
use crate::flag::{FlagPoint, FlagSignature, SolverConfig};
use crate::grassmann::GrassmannPoint;
use crate::matfun::svd_compact;
use crate::seed::derive_seed;
use crate::separation::{separation_report, SeparationReport};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PipelineMethod {
    Flag,
    Grassmann,
}

impl PipelineMethod {
    pub fn name(self) -> &'static str {
        match self {
            PipelineMethod::Flag => "flag",
            PipelineMethod::Grassmann => "grassmann",
        }
    }
}

#[derive(Clone, Debug)]
pub struct PipelineOutput {
    pub distances: DistanceMatrix,
    pub mds: MdsResult,
    pub report: SeparationReport,
    pub method: PipelineMethod,
    pub signature: Vec<usize>,
    pub k: usize,
}

/// Subtracts the mean over the union of both pools from each pool.
fn center_jointly(a: &DataMatrix, b: &DataMatrix) -> Result<(DataMatrix, DataMatrix)> {
    let n = a.n();
    if b.n() != n {
        return Err(FlagError::invalid(format!(
            "class pools live in different dimensions: {} vs {}",
            n,
            b.n()
        )));
    }
    let total = (a.p() + b.p()) as f64;
    let mut mean = vec![0.0; n];
    for pool in [a, b] {
        for j in 0..pool.p() {
            for i in 0..n {
                mean[i] += pool.matrix()[(i, j)];
            }
        }
    }
    for m in &mut mean {
        *m /= total;
    }
    let shift = |x: &DataMatrix| -> Result<DataMatrix> {
        let mut data = x.matrix().clone();
        for j in 0..data.ncols() {
            for i in 0..n {
                data[(i, j)] -= mean[i];
            }
        }
        let out = DataMatrix::new(data, None)?;
        Ok(match x.label() {
            Some(l) => out.with_label(l.to_string()),
            None => out,
        })
    };
    Ok((shift(a)?, shift(b)?))
}

/// Runs the experiment described by `spec` and returns the distance matrix,
/// the 2D MDS embedding and the separation report.
pub fn run_experiment(
    spec: &ExperimentSpec,
    method: PipelineMethod,
    cfg: &SolverConfig,
) -> Result<PipelineOutput> {
    crate::dataio::validate_spec(spec)?;

    let pool_a = load_class_pool(&spec.classes[0], 0, spec.seed)?;
    let pool_b = load_class_pool(&spec.classes[1], 1, spec.seed)?;
    let (pool_a, pool_b) = center_jointly(&pool_a, &pool_b)?;

    let n = pool_a.n();
    if spec.k > n {
        return Err(FlagError::invalid(format!(
            "k = {} exceeds the data dimension {n}",
            spec.k
        )));
    }
    let sig = FlagSignature::with_trailing(&spec.signature, n)?;

    // One mixture family per majority class.
    let mut sets = gen_mixture(
        &pool_a,
        &pool_b,
        spec.m,
        spec.q,
        spec.sets,
        derive_seed(spec.seed, 0xa17, 0),
    )?;
    sets.extend(gen_mixture(
        &pool_b,
        &pool_a,
        spec.m,
        spec.q,
        spec.sets,
        derive_seed(spec.seed, 0xa17, 1),
    )?);

    let labels: Vec<String> = sets
        .iter()
        .map(|s| s.label().unwrap_or("set").to_string())
        .collect();

    let distances = match method {
        PipelineMethod::Flag => {
            let points: Vec<FlagPoint> = sets
                .iter()
                .map(|s| svd_flag(s, &sig))
                .collect::<Result<_>>()?;
            pairwise_flag_distances(&points, labels, cfg)?
        }
        PipelineMethod::Grassmann => {
            let points: Vec<GrassmannPoint> = sets
                .iter()
                .map(|s| {
                    let svd = svd_compact(s.matrix())?;
                    let u = svd.u.as_matrix().columns(0, spec.k).into_owned();
                    GrassmannPoint::from_matrix(u)
                })
                .collect::<Result<_>>()?;
            pairwise_grassmann_distances(&points, labels)?
        }
    };

    let mds = classical_mds(&distances, 2)?;
    let report = separation_report(&distances, &mds.coordinates)?;

    Ok(PipelineOutput {
        distances,
        mds,
        report,
        method,
        signature: sig.parts().to_vec(),
        k: spec.k,
    })
}

#[derive(Serialize)]
struct ReportFile<'a> {
    method: &'a str,
    signature: &'a [usize],
    k: usize,
    points: usize,
    #[serde(flatten)]
    separation: &'a SeparationReport,
}

/// File names produced by [`write_outputs`].
#[derive(Clone, Debug)]
pub struct OutputPaths {
    pub distances: PathBuf,
    pub coordinates: PathBuf,
    pub eigenvalues: PathBuf,
    pub report: PathBuf,
}

/// Writes the pipeline artifacts into `dir`: the distance matrix and the MDS
/// coordinates as labeled CSV (points as columns), the eigenvalue list, and
/// the separation report as JSON.
pub fn write_outputs(out: &PipelineOutput, dir: impl AsRef<Path>) -> Result<OutputPaths> {
    let dir = dir.as_ref();
    std::fs::create_dir_all(dir)?;
    let paths = OutputPaths {
        distances: dir.join("distances.csv"),
        coordinates: dir.join("coordinates.csv"),
        eigenvalues: dir.join("eigenvalues.csv"),
        report: dir.join("report.json"),
    };

    let labels = out.distances.labels().to_vec();
    write_matrix_csv(&paths.distances, out.distances.entries(), Some(&labels))?;
    write_matrix_csv(
        &paths.coordinates,
        &out.mds.coordinates.transpose(),
        Some(&labels),
    )?;
    let p = out.mds.eigenvalues.len();
    let eig = DMatrix::from_fn(p, 1, |i, _| out.mds.eigenvalues[i]);
    write_matrix_csv(&paths.eigenvalues, &eig, None)?;

    let report = ReportFile {
        method: out.method.name(),
        signature: &out.signature,
        k: out.k,
        points: out.distances.size(),
        separation: &out.report,
    };
    let json = serde_json::to_string_pretty(&report)
        .map_err(|e| FlagError::Numerical(format!("report serialization: {e}")))?;
    std::fs::write(&paths.report, json + "\n")?;
    Ok(paths)
}
