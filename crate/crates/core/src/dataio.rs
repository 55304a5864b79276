//! Data ingestion and generation: CSV matrices (samples as columns),
//! centering, SVD-basis flag construction, and the synthetic generators used
//! by the experiment pipeline (ellipsoid clouds, Gaussian pools, two-class
//! mixtures).

use std::fs;
use std::io::Write as _;
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::Deserialize;

use crate::error::{FlagError, Result};
use crate::flag::{FlagPoint, FlagSignature};
use crate::matfun::svd_compact;
use crate::seed::derive_seed;

/// Gap below which adjacent singular values count as tied when the flag
/// block structure is checked.
pub const SPECTRAL_GAP_TOL: f64 = 1e-10;
/// Relative threshold under which trailing singular values count as zero.
pub const RANK_TOL: f64 = 1e-12;

/// A real n-by-p data matrix: p samples living in ℝⁿ, one per column,
/// optionally tagged with a class label.
#[derive(Clone, Debug)]
pub struct DataMatrix {
    data: DMatrix<f64>,
    class_label: Option<String>,
}

impl DataMatrix {
    pub fn new(data: DMatrix<f64>, class_label: Option<String>) -> Result<Self> {
        if data.nrows() == 0 || data.ncols() == 0 {
            return Err(FlagError::invalid("data matrix must be nonempty"));
        }
        if !data.iter().all(|x| x.is_finite()) {
            return Err(FlagError::invalid("data matrix contains non-finite entries"));
        }
        Ok(Self { data, class_label })
    }

    /// Ambient dimension (rows).
    pub fn n(&self) -> usize {
        self.data.nrows()
    }

    /// Sample count (columns).
    pub fn p(&self) -> usize {
        self.data.ncols()
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.data
    }

    pub fn label(&self) -> Option<&str> {
        self.class_label.as_deref()
    }

    pub fn with_label(mut self, label: impl Into<String>) -> Self {
        self.class_label = Some(label.into());
        self
    }
}

/// Subtracts the mean sample from every column, so each row has zero mean.
pub fn center(x: &DataMatrix) -> DataMatrix {
    let mut data = x.data.clone();
    let p = data.ncols() as f64;
    for i in 0..data.nrows() {
        let mean = data.row(i).sum() / p;
        for j in 0..data.ncols() {
            data[(i, j)] -= mean;
        }
    }
    DataMatrix {
        data,
        class_label: x.class_label.clone(),
    }
}

/// Builds a flag from the leading SVD basis of a data matrix.
///
/// The first k = sig.k() left singular vectors (descending singular values)
/// become the nested-subspace frame, completed to an n-by-n representative;
/// the signature's trailing block covers the orthogonal complement.
///
/// Errors: `RankTooLow` when the numerical rank is below k; a
/// `DegenerateSpectrum` when singular values are tied across a block
/// boundary, where the flag is genuinely ill defined. Ties strictly inside a
/// block are harmless (any rotation within the block stays in the class).
pub fn svd_flag(x: &DataMatrix, sig: &FlagSignature) -> Result<FlagPoint> {
    if sig.n() != x.n() {
        return Err(FlagError::invalid(format!(
            "signature {sig} has ambient dimension {} but the data lives in ℝ^{}",
            sig.n(),
            x.n()
        )));
    }
    let k = sig.k();
    if k > x.n().min(x.p()) {
        return Err(FlagError::invalid(format!(
            "signature asks for k={k} basis columns, data supports at most {}",
            x.n().min(x.p())
        )));
    }

    let svd = svd_compact(x.matrix())?;
    let s = &svd.singular_values;
    if s[0] <= 0.0 || s[k - 1] <= RANK_TOL * s[0] {
        return Err(FlagError::RankTooLow(format!(
            "numerical rank below k={k}: sigma_k = {:.3e}, sigma_1 = {:.3e}",
            s[k - 1],
            s[0]
        )));
    }

    // Boundaries of the retained blocks: after n1, n1+n2, ..., k columns.
    let mut boundary = 0;
    for b in 0..sig.d() - 1 {
        boundary += sig.block_size(b);
        let lo = s[boundary - 1];
        let hi = if boundary < s.len() { s[boundary] } else { 0.0 };
        if lo - hi <= SPECTRAL_GAP_TOL {
            return Err(FlagError::DegenerateSpectrum(format!(
                "singular values tie across the block boundary after column {boundary}: \
                 {lo:.6e} vs {hi:.6e}"
            )));
        }
    }

    let basis = svd.u.as_matrix().columns(0, k).into_owned();
    FlagPoint::from_orthonormal_columns(&basis, &sig.parts()[..sig.d() - 1])
}

/// Samples `count` points of an ellipsoid cloud: frame · diag(axes) · u with
/// u uniform on the unit sphere, plus isotropic Gaussian noise.
pub fn gen_ellipsoid(
    axes: &[f64],
    frame: &DMatrix<f64>,
    count: usize,
    noise: f64,
    seed: u64,
) -> Result<DataMatrix> {
    let dim = axes.len();
    if dim == 0 || count == 0 {
        return Err(FlagError::invalid("need at least one axis and one sample"));
    }
    if axes.iter().any(|&a| !(a > 0.0)) {
        return Err(FlagError::invalid("axis lengths must be positive"));
    }
    if axes.windows(2).any(|w| w[0] < w[1]) {
        return Err(FlagError::invalid("axis lengths must be descending"));
    }
    if frame.nrows() != dim || frame.ncols() != dim {
        return Err(FlagError::invalid(format!(
            "frame must be {dim}x{dim} to match the axes"
        )));
    }
    let gram = (frame.transpose() * frame - DMatrix::<f64>::identity(dim, dim)).norm();
    if gram > 1e-8 {
        return Err(FlagError::invalid("frame must be orthogonal"));
    }
    if !(noise >= 0.0) {
        return Err(FlagError::invalid("noise must be nonnegative"));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut data = DMatrix::zeros(dim, count);
    for j in 0..count {
        // Uniform direction on the sphere via a normalized Gaussian draw.
        let mut u = DVector::from_fn(dim, |_, _| rng.sample::<f64, _>(StandardNormal));
        let norm = u.norm();
        if norm > 0.0 {
            u /= norm;
        }
        let scaled = DVector::from_fn(dim, |i, _| axes[i] * u[i]);
        let mut sample = frame * scaled;
        if noise > 0.0 {
            for i in 0..dim {
                sample[i] += noise * rng.sample::<f64, _>(StandardNormal);
            }
        }
        data.set_column(j, &sample);
    }
    DataMatrix::new(data, None)
}

/// Samples a Gaussian pool: mean + scale · N(0, I) per column.
pub fn gen_gaussian(
    dim: usize,
    count: usize,
    mean: Option<&[f64]>,
    scale: f64,
    seed: u64,
) -> Result<DataMatrix> {
    if dim == 0 || count == 0 {
        return Err(FlagError::invalid("need positive dimension and count"));
    }
    if let Some(m) = mean {
        if m.len() != dim {
            return Err(FlagError::invalid(format!(
                "mean has {} entries for dimension {dim}",
                m.len()
            )));
        }
    }
    if !(scale > 0.0) {
        return Err(FlagError::invalid("scale must be positive"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut data = DMatrix::zeros(dim, count);
    for j in 0..count {
        for i in 0..dim {
            let m = mean.map_or(0.0, |m| m[i]);
            data[(i, j)] = m + scale * rng.sample::<f64, _>(StandardNormal);
        }
    }
    DataMatrix::new(data, None)
}

/// Samples an anisotropic Gaussian pool with covariance
/// frame · diag(axes²) · frameᵀ: each column is frame · (axes ∘ g) with
/// g ~ N(0, I). The axes set a per-direction standard deviation, so classes
/// can differ in shape rather than location.
pub fn gen_gaussian_shaped(
    axes: &[f64],
    frame: &DMatrix<f64>,
    count: usize,
    seed: u64,
) -> Result<DataMatrix> {
    let dim = axes.len();
    if dim == 0 || count == 0 {
        return Err(FlagError::invalid("need at least one axis and one sample"));
    }
    if axes.iter().any(|&a| !(a > 0.0)) {
        return Err(FlagError::invalid("axis scales must be positive"));
    }
    if frame.nrows() != dim || frame.ncols() != dim {
        return Err(FlagError::invalid(format!(
            "frame must be {dim}x{dim} to match the axes"
        )));
    }
    let gram = (frame.transpose() * frame - DMatrix::<f64>::identity(dim, dim)).norm();
    if gram > 1e-8 {
        return Err(FlagError::invalid("frame must be orthogonal"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut data = DMatrix::zeros(dim, count);
    for j in 0..count {
        let g = DVector::from_fn(dim, |i, _| axes[i] * rng.sample::<f64, _>(StandardNormal));
        data.set_column(j, &(frame * g));
    }
    DataMatrix::new(data, None)
}

/// Draws `sets` mixed data sets, each concatenating `majors` columns from the
/// major pool and `minors` columns from the minor pool, without replacement
/// across the whole call. Labels combine the pool labels.
pub fn gen_mixture(
    major: &DataMatrix,
    minor: &DataMatrix,
    majors: usize,
    minors: usize,
    sets: usize,
    seed: u64,
) -> Result<Vec<DataMatrix>> {
    if major.n() != minor.n() {
        return Err(FlagError::invalid(format!(
            "pool dimensions differ: {} vs {}",
            major.n(),
            minor.n()
        )));
    }
    if majors == 0 || sets == 0 {
        return Err(FlagError::invalid("need at least one major column per set"));
    }
    if sets * majors > major.p() || sets * minors > minor.p() {
        return Err(FlagError::invalid(format!(
            "pool exhaustion: need {}x{majors} major and {}x{minors} minor columns, pools hold {} and {}",
            sets, sets, major.p(), minor.p()
        )));
    }

    // Partial Fisher-Yates on index vectors: without replacement across sets.
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let draw = |pool: usize, take: usize, rng: &mut ChaCha8Rng| -> Vec<usize> {
        let mut idx: Vec<usize> = (0..pool).collect();
        for i in 0..take {
            let j = rng.gen_range(i..pool);
            idx.swap(i, j);
        }
        idx.truncate(take);
        idx
    };
    let major_idx = draw(major.p(), sets * majors, &mut rng);
    let minor_idx = draw(minor.p(), sets * minors, &mut rng);

    let label = format!(
        "{}+{}",
        major.label().unwrap_or("major"),
        minor.label().unwrap_or("minor")
    );
    let n = major.n();
    let mut out = Vec::with_capacity(sets);
    for s in 0..sets {
        let mut data = DMatrix::zeros(n, majors + minors);
        for (c, &col) in major_idx[s * majors..(s + 1) * majors].iter().enumerate() {
            data.set_column(c, &major.matrix().column(col));
        }
        for (c, &col) in minor_idx[s * minors..(s + 1) * minors].iter().enumerate() {
            data.set_column(majors + c, &minor.matrix().column(col));
        }
        out.push(DataMatrix::new(data, Some(label.clone()))?);
    }
    Ok(out)
}

fn format_value(x: f64) -> String {
    format!("{x:.16e}")
}

fn label_ok(l: &str) -> bool {
    !l.is_empty() && !l.contains(',') && !l.contains('\n') && !l.contains('\r')
}

/// Writes a matrix as CSV, one row per line, 17 significant digits (lossless
/// for f64). An optional header row carries one label per column.
pub fn write_matrix_csv(
    path: impl AsRef<Path>,
    m: &DMatrix<f64>,
    header: Option<&[String]>,
) -> Result<()> {
    let mut out = String::new();
    if let Some(h) = header {
        if h.len() != m.ncols() {
            return Err(FlagError::invalid(format!(
                "{} header labels for {} columns",
                h.len(),
                m.ncols()
            )));
        }
        for l in h {
            if !label_ok(l) {
                return Err(FlagError::invalid(format!(
                    "label {l:?} cannot appear in a CSV header"
                )));
            }
        }
        out.push_str(&h.join(","));
        out.push('\n');
    }
    for i in 0..m.nrows() {
        let row: Vec<String> = (0..m.ncols()).map(|j| format_value(m[(i, j)])).collect();
        out.push_str(&row.join(","));
        out.push('\n');
    }
    let mut f = fs::File::create(path)?;
    f.write_all(out.as_bytes())?;
    Ok(())
}

/// Reads a CSV matrix; a first row with any non-numeric cell is taken as the
/// header. Errors carry 1-based line numbers.
pub fn read_matrix_csv(path: impl AsRef<Path>) -> Result<(Option<Vec<String>>, DMatrix<f64>)> {
    let text = fs::read_to_string(path)?;
    let mut header: Option<Vec<String>> = None;
    let mut rows: Vec<Vec<f64>> = Vec::new();
    let mut width: Option<usize> = None;

    for (lineno, line) in text.lines().enumerate() {
        let line_num = lineno + 1;
        if line.trim().is_empty() {
            return Err(FlagError::Parse {
                line: line_num,
                message: "empty line inside matrix".into(),
            });
        }
        let cells: Vec<&str> = line.split(',').map(|c| c.trim()).collect();
        if let Some(w) = width {
            if cells.len() != w {
                return Err(FlagError::Parse {
                    line: line_num,
                    message: format!("expected {w} cells, found {}", cells.len()),
                });
            }
        } else {
            width = Some(cells.len());
        }

        let parsed: std::result::Result<Vec<f64>, _> =
            cells.iter().map(|c| c.parse::<f64>()).collect();
        match parsed {
            Ok(values) => {
                if values.iter().any(|v| !v.is_finite()) {
                    return Err(FlagError::Parse {
                        line: line_num,
                        message: "non-finite value".into(),
                    });
                }
                rows.push(values);
            }
            Err(_) => {
                if lineno == 0 {
                    header = Some(cells.iter().map(|c| c.to_string()).collect());
                } else {
                    return Err(FlagError::Parse {
                        line: line_num,
                        message: format!("non-numeric cell in {line:?}"),
                    });
                }
            }
        }
    }

    if rows.is_empty() {
        return Err(FlagError::Parse {
            line: 1,
            message: "no numeric rows".into(),
        });
    }
    let ncols = width.unwrap();
    let nrows = rows.len();
    let m = DMatrix::from_fn(nrows, ncols, |i, j| rows[i][j]);
    Ok((header, m))
}

/// Loads a DataMatrix; a header row must repeat one class label across all
/// columns.
pub fn load_csv(path: impl AsRef<Path>) -> Result<DataMatrix> {
    let (header, m) = read_matrix_csv(path)?;
    let label = match header {
        None => None,
        Some(cells) => {
            let first = cells[0].clone();
            if cells.iter().any(|c| c != &first) {
                return Err(FlagError::Parse {
                    line: 1,
                    message: "inconsistent column labels for a single data matrix".into(),
                });
            }
            Some(first)
        }
    };
    DataMatrix::new(m, label)
}

/// Writes a DataMatrix; the class label, when present, is repeated across the
/// header row.
pub fn save_csv(path: impl AsRef<Path>, x: &DataMatrix) -> Result<()> {
    let header: Option<Vec<String>> = x
        .label()
        .map(|l| std::iter::repeat(l.to_string()).take(x.p()).collect());
    write_matrix_csv(path, x.matrix(), header.as_deref())
}

/// Source of one class pool in an experiment.
#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ClassSpec {
    pub label: String,
    #[serde(default)]
    pub path: Option<String>,
    #[serde(default)]
    pub generator: Option<GeneratorSpec>,
}

#[derive(Clone, Debug, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum GeneratorSpec {
    Gaussian {
        dim: usize,
        count: usize,
        #[serde(default)]
        mean: Option<Vec<f64>>,
        #[serde(default = "default_scale")]
        scale: f64,
        /// Per-direction standard deviations; turns the pool anisotropic.
        #[serde(default)]
        axes: Option<Vec<f64>>,
        #[serde(default)]
        random_frame: bool,
    },
    Ellipsoid {
        axes: Vec<f64>,
        count: usize,
        #[serde(default)]
        noise: f64,
        #[serde(default)]
        random_frame: bool,
    },
}

fn default_scale() -> f64 {
    1.0
}

/// A mixture-separation experiment: two class pools, mixed sets of
/// majors+minors columns, an SVD flag per set.
#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentSpec {
    /// Block sizes of the retained basis columns (the signature prefix);
    /// must sum to k. The trailing block n-k is added once the data
    /// dimension is known.
    pub signature: Vec<usize>,
    pub k: usize,
    pub classes: Vec<ClassSpec>,
    /// Major columns per set.
    pub m: usize,
    /// Minor columns per set.
    pub q: usize,
    /// Sets per mixture type.
    pub sets: usize,
    pub seed: u64,
}

/// Parses and validates an experiment spec, naming the offending JSON field
/// on failure.
pub fn load_experiment_spec(path: impl AsRef<Path>) -> Result<ExperimentSpec> {
    let text = fs::read_to_string(&path)?;
    let spec: ExperimentSpec = serde_json::from_str(&text)
        .map_err(|e| FlagError::invalid(format!("experiment spec: {e}")))?;
    validate_spec(&spec)?;
    Ok(spec)
}

pub fn validate_spec(spec: &ExperimentSpec) -> Result<()> {
    if spec.signature.is_empty() {
        return Err(FlagError::invalid("experiment spec: signature is empty"));
    }
    if spec.signature.iter().any(|&p| p == 0) {
        return Err(FlagError::invalid(
            "experiment spec: signature parts must be positive",
        ));
    }
    let sum: usize = spec.signature.iter().sum();
    if sum != spec.k {
        return Err(FlagError::invalid(format!(
            "experiment spec: signature sums to {sum}, expected k = {}",
            spec.k
        )));
    }
    if spec.classes.len() != 2 {
        return Err(FlagError::invalid(format!(
            "experiment spec: classes must list exactly 2 pools, got {}",
            spec.classes.len()
        )));
    }
    for (i, c) in spec.classes.iter().enumerate() {
        if !label_ok(&c.label) {
            return Err(FlagError::invalid(format!(
                "experiment spec: classes[{i}].label is not a valid tag"
            )));
        }
        match (&c.path, &c.generator) {
            (Some(_), None) | (None, Some(_)) => {}
            _ => {
                return Err(FlagError::invalid(format!(
                    "experiment spec: classes[{i}] needs exactly one of path or generator"
                )))
            }
        }
    }
    if spec.m == 0 || spec.sets == 0 {
        return Err(FlagError::invalid(
            "experiment spec: m and sets must be positive",
        ));
    }
    if spec.m + spec.q < spec.k {
        return Err(FlagError::invalid(format!(
            "experiment spec: sets have m+q = {} columns, fewer than k = {}",
            spec.m + spec.q,
            spec.k
        )));
    }
    Ok(())
}

/// Materializes one class pool from its spec.
pub fn load_class_pool(class: &ClassSpec, class_index: usize, seed: u64) -> Result<DataMatrix> {
    let pool = if let Some(path) = &class.path {
        load_csv(path)?
    } else {
        let gen_seed = derive_seed(seed, 0xc1a55, class_index as u64);
        let seeded_frame = |dim: usize, random: bool| {
            if random {
                let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(gen_seed, 0xf7a3e, 0));
                crate::matfun::random_special_orthogonal(dim, &mut rng)
            } else {
                DMatrix::identity(dim, dim)
            }
        };
        match class.generator.as_ref().unwrap() {
            GeneratorSpec::Gaussian {
                dim,
                count,
                mean,
                scale,
                axes,
                random_frame,
            } => match axes {
                Some(axes) => {
                    if axes.len() != *dim {
                        return Err(FlagError::invalid(format!(
                            "gaussian generator: {} axes for dimension {dim}",
                            axes.len()
                        )));
                    }
                    let frame = seeded_frame(*dim, *random_frame);
                    let shaped = gen_gaussian_shaped(axes, &frame, *count, gen_seed)?;
                    match mean {
                        None => shaped,
                        Some(m) => {
                            if m.len() != *dim {
                                return Err(FlagError::invalid(format!(
                                    "gaussian generator: mean has {} entries for dimension {dim}",
                                    m.len()
                                )));
                            }
                            let mut data = shaped.matrix().clone();
                            for j in 0..data.ncols() {
                                for i in 0..*dim {
                                    data[(i, j)] += m[i];
                                }
                            }
                            DataMatrix::new(data, None)?
                        }
                    }
                }
                None => gen_gaussian(*dim, *count, mean.as_deref(), *scale, gen_seed)?,
            },
            GeneratorSpec::Ellipsoid {
                axes,
                count,
                noise,
                random_frame,
            } => {
                let frame = seeded_frame(axes.len(), *random_frame);
                gen_ellipsoid(axes, &frame, *count, *noise, gen_seed)?
            }
        }
    };
    Ok(pool.with_label(class.label.clone()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::flag::{flag_distance, SolverConfig};
    use crate::grassmann::{grassmann_distance, GrassmannPoint};

    fn sig(parts: &[usize]) -> FlagSignature {
        FlagSignature::new(parts.to_vec()).unwrap()
    }

    #[test]
    fn centering_removes_row_means() {
        let x = DataMatrix::new(DMatrix::from_row_slice(1, 2, &[1.0, 3.0]), None).unwrap();
        let c = center(&x);
        assert_eq!(c.matrix()[(0, 0)], -1.0);
        assert_eq!(c.matrix()[(0, 1)], 1.0);

        // Identical columns center to zero.
        let x = DataMatrix::new(
            DMatrix::from_fn(4, 5, |i, _| i as f64 + 1.0),
            Some("c".into()),
        )
        .unwrap();
        let c = center(&x);
        assert!(c.matrix().norm() < 1e-14);
        assert_eq!(c.label(), Some("c"));

        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let x = DataMatrix::new(
            DMatrix::from_fn(5, 20, |_, _| rng.sample::<f64, _>(StandardNormal)),
            None,
        )
        .unwrap();
        let c = center(&x);
        for i in 0..5 {
            assert!(c.matrix().row(i).sum().abs() < 1e-12);
        }
    }

    #[test]
    fn svd_flag_axis_aligned() {
        let x = DataMatrix::new(
            DMatrix::from_row_slice(3, 3, &[3., 0., 0., 0., 2., 0., 0., 0., 1.]),
            None,
        )
        .unwrap();
        let p = svd_flag(&x, &sig(&[1, 1, 1])).unwrap();
        // Flag spanned by e1 in span(e1,e2) in R^3, up to column signs.
        for j in 0..2 {
            let col = p.matrix().column(j);
            assert!(col[j].abs() > 1.0 - 1e-12);
        }
    }

    #[test]
    fn svd_flag_recovers_ellipsoid_frame() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let frame = crate::matfun::random_special_orthogonal(3, &mut rng);
        let cloud = gen_ellipsoid(&[5.0, 2.0, 1.0], &frame, 500, 0.0, 11).unwrap();
        let flag = svd_flag(&center(&cloud), &sig(&[1, 1, 1])).unwrap();
        let target = FlagPoint::from_orthogonal(frame, sig(&[1, 1, 1])).unwrap();
        let d = flag_distance(&flag, &target, &SolverConfig::default())
            .unwrap()
            .distance;
        assert!(d < 0.15, "sampled frame is {d} away from the truth");
    }

    #[test]
    fn svd_flag_degenerate_spectrum_across_boundary() {
        // Equal singular values 2,2 with a block boundary between them.
        let x = DataMatrix::new(
            DMatrix::from_row_slice(3, 3, &[2., 0., 0., 0., 2., 0., 0., 0., 1e-3]),
            None,
        )
        .unwrap();
        assert!(matches!(
            svd_flag(&x, &sig(&[1, 1, 1])),
            Err(FlagError::DegenerateSpectrum(_))
        ));
        // The same tie inside one block is fine.
        assert!(svd_flag(&x, &sig(&[2, 1])).is_ok());
    }

    #[test]
    fn svd_flag_rank_too_low() {
        let x = DataMatrix::new(
            DMatrix::from_row_slice(3, 2, &[1., 2., 2., 4., 3., 6.]),
            None,
        )
        .unwrap();
        assert!(matches!(
            svd_flag(&x, &sig(&[1, 1, 1])),
            Err(FlagError::RankTooLow(_))
        ));
    }

    #[test]
    fn svd_flag_invariances() {
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        let x = DataMatrix::new(
            DMatrix::from_fn(4, 12, |_, _| rng.sample::<f64, _>(StandardNormal)),
            None,
        )
        .unwrap();
        let s = sig(&[1, 1, 2]);
        let base = svd_flag(&center(&x), &s).unwrap();

        // Column permutation leaves the flag unchanged.
        let perm: Vec<usize> = vec![5, 0, 7, 2, 11, 4, 1, 9, 3, 10, 6, 8];
        let xp = DataMatrix::new(
            DMatrix::from_fn(4, 12, |i, j| x.matrix()[(i, perm[j])]),
            None,
        )
        .unwrap();
        let permuted = svd_flag(&center(&xp), &s).unwrap();
        let d = flag_distance(&base, &permuted, &SolverConfig::default())
            .unwrap()
            .distance;
        assert!(d < 1e-6);

        // Positive scaling: same flag (check each nested span directly).
        let xs = DataMatrix::new(2.7 * x.matrix(), None).unwrap();
        let scaled = svd_flag(&center(&xs), &s).unwrap();
        for cols in [1usize, 2] {
            let a = GrassmannPoint::from_matrix(base.matrix().columns(0, cols).into_owned())
                .unwrap();
            let b = GrassmannPoint::from_matrix(scaled.matrix().columns(0, cols).into_owned())
                .unwrap();
            assert!(grassmann_distance(&a, &b).unwrap() < 1e-8);
        }
    }

    #[test]
    fn ellipsoid_generator_basics() {
        // Unit sphere: every sample has norm 1.
        let eye = DMatrix::identity(3, 3);
        let cloud = gen_ellipsoid(&[1.0, 1.0, 1.0], &eye, 50, 0.0, 3).unwrap();
        for j in 0..50 {
            assert!((cloud.matrix().column(j).norm() - 1.0).abs() < 1e-12);
        }

        // Seed determinism, bit for bit.
        let a = gen_ellipsoid(&[5.0, 2.0, 1.0], &eye, 40, 0.1, 9).unwrap();
        let b = gen_ellipsoid(&[5.0, 2.0, 1.0], &eye, 40, 0.1, 9).unwrap();
        assert_eq!(a.matrix(), b.matrix());

        // Axis order is enforced.
        assert!(gen_ellipsoid(&[1.0, 2.0], &DMatrix::identity(2, 2), 5, 0.0, 1).is_err());
    }

    #[test]
    fn ellipsoid_recovers_axes_directions() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let frame = crate::matfun::random_special_orthogonal(3, &mut rng);
        let cloud = gen_ellipsoid(&[5.0, 2.0, 1.0], &frame, 500, 0.0, 17).unwrap();
        let svd = svd_compact(center(&cloud).matrix()).unwrap();
        for j in 0..3 {
            let dot = svd.u.as_matrix().column(j).dot(&frame.column(j)).abs();
            assert!(dot.acos() < 0.1, "axis {j} off by {} rad", dot.acos());
        }
    }

    #[test]
    fn mixture_counts_and_disjointness() {
        let major = gen_gaussian(6, 80, None, 1.0, 1).unwrap().with_label("one");
        let minor = gen_gaussian(6, 50, None, 1.0, 2).unwrap().with_label("five");
        let sets = gen_mixture(&major, &minor, 16, 9, 3, 7).unwrap();
        assert_eq!(sets.len(), 3);
        for s in &sets {
            assert_eq!(s.p(), 25);
            assert_eq!(s.label(), Some("one+five"));
        }

        // Without replacement across the call: all drawn columns distinct.
        // Column values are continuous, so equal columns mean reuse.
        let mut seen: Vec<Vec<u64>> = Vec::new();
        for s in &sets {
            for j in 0..s.p() {
                let fp: Vec<u64> = s.matrix().column(j).iter().map(|v| v.to_bits()).collect();
                assert!(!seen.contains(&fp), "column reused across sets");
                seen.push(fp);
            }
        }

        // q = 0 gives pure-class sets.
        let pure = gen_mixture(&major, &minor, 5, 0, 2, 3).unwrap();
        assert!(pure.iter().all(|s| s.p() == 5));

        // Pool exhaustion.
        assert!(matches!(
            gen_mixture(&major, &minor, 30, 9, 3, 7),
            Err(FlagError::InvalidInput(_))
        ));
    }

    #[test]
    fn csv_round_trip_and_errors() {
        let dir = std::env::temp_dir().join("flaggeo_dataio_test");
        fs::create_dir_all(&dir).unwrap();

        let mut rng = ChaCha8Rng::seed_from_u64(33);
        let x = DataMatrix::new(
            DMatrix::from_fn(4, 6, |_, _| rng.sample::<f64, _>(StandardNormal)),
            Some("classA".into()),
        )
        .unwrap();
        let path = dir.join("round.csv");
        save_csv(&path, &x).unwrap();
        let back = load_csv(&path).unwrap();
        assert_eq!(back.matrix(), x.matrix());
        assert_eq!(back.label(), Some("classA"));

        let tiny = dir.join("tiny.csv");
        fs::write(&tiny, "1,2\n3,4\n").unwrap();
        let t = load_csv(&tiny).unwrap();
        assert_eq!((t.n(), t.p()), (2, 2));
        assert_eq!(t.label(), None);

        let ragged = dir.join("ragged.csv");
        fs::write(&ragged, "1,2\n3,4\n5\n").unwrap();
        match load_csv(&ragged) {
            Err(FlagError::Parse { line, .. }) => assert_eq!(line, 3),
            other => panic!("expected parse error, got {other:?}"),
        }

        let sour = dir.join("nonnumeric.csv");
        fs::write(&sour, "1,2\n3,x\n").unwrap();
        match load_csv(&sour) {
            Err(FlagError::Parse { line, .. }) => assert_eq!(line, 2),
            other => panic!("expected parse error, got {other:?}"),
        }
    }

    #[test]
    fn experiment_spec_validation() {
        let ok: ExperimentSpec = serde_json::from_str(
            r#"{
                "signature": [2, 3], "k": 5,
                "classes": [
                    {"label": "a", "generator": {"kind": "gaussian", "dim": 20, "count": 100}},
                    {"label": "b", "generator": {"kind": "gaussian", "dim": 20, "count": 100, "scale": 2.0}}
                ],
                "m": 16, "q": 9, "sets": 5, "seed": 1
            }"#,
        )
        .unwrap();
        assert!(validate_spec(&ok).is_ok());

        let bad_sum = ExperimentSpec {
            k: 4,
            ..ok.clone()
        };
        let err = validate_spec(&bad_sum).unwrap_err().to_string();
        assert!(err.contains("signature"), "{err}");

        let one_class = ExperimentSpec {
            classes: ok.classes[..1].to_vec(),
            ..ok.clone()
        };
        assert!(validate_spec(&one_class).is_err());
    }

    #[test]
    fn class_pool_generation_is_seeded() {
        let spec = ClassSpec {
            label: "a".into(),
            path: None,
            generator: Some(GeneratorSpec::Gaussian {
                dim: 8,
                count: 30,
                mean: None,
                scale: 1.0,
            }),
        };
        let p1 = load_class_pool(&spec, 0, 42).unwrap();
        let p2 = load_class_pool(&spec, 0, 42).unwrap();
        assert_eq!(p1.matrix(), p2.matrix());
        let p3 = load_class_pool(&spec, 1, 42).unwrap();
        assert_ne!(p1.matrix(), p3.matrix());
        assert_eq!(p1.label(), Some("a"));
    }
}
