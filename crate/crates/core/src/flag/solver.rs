use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{FlagError, Result};
use crate::matfun::{expm_skew, logm_so, random_special_orthogonal};
use crate::seed::derive_seed;

use super::types::{
    enumerate_representatives, project_horizontal, project_vertical, FlagPoint, FlagSignature,
    HorizontalTangent, VerticalTangent,
};

/// History depth of the Anderson mixing applied to the vertical iterate.
const MIX_DEPTH: usize = 10;
/// A trial is cut off once the best residual has not improved for this many
/// sweeps (the mixed iteration is not monotone, so the window is generous).
const STALL_LIMIT: usize = 30;
/// Residual regressions beyond this factor discard the mixing history.
const RESET_FACTOR: f64 = 10.0;

/// Knobs of the minimum-geodesic search.
#[derive(Clone, Debug)]
pub struct SolverConfig {
    /// Trials per representative (the paper's M). Trial 0 starts from G = 0,
    /// trial 1 from the block-polar alignment of Q, the rest from random
    /// block rotations.
    pub restarts: usize,
    /// Sweep cap of the alternating solver.
    pub max_iter: usize,
    /// Convergence threshold on the Frobenius residual |Q - exp(H)exp(G)|.
    pub eps: f64,
    /// Seed for the randomized restarts; trials are seeded per
    /// (representative, trial) so runs are reproducible.
    pub seed: u64,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            restarts: 5,
            max_iter: 100,
            eps: 1e-10,
            seed: 0,
        }
    }
}

/// Final iterates of one alternating-solver trial.
#[derive(Clone, Debug)]
pub struct IterativeLogOutcome {
    pub horizontal: HorizontalTangent,
    pub vertical: VerticalTangent,
    /// |Q - exp(H)exp(G)|_F at the last plain sweep; +∞ when a matrix log hit
    /// the cut locus and the trial was discarded.
    pub residual: f64,
    pub iterations: usize,
    pub converged: bool,
}

/// One plain sweep of the alternating solver:
/// H = P_H(log(Q exp(-G))), then G' = P_G(log(exp(-H) Q)).
fn sweep(
    q: &DMatrix<f64>,
    sig: &FlagSignature,
    g: &DMatrix<f64>,
) -> Result<(HorizontalTangent, VerticalTangent, f64)> {
    // exp(-A) = exp(A)ᵀ for skew A, so each half-step costs one exponential.
    let exp_g = expm_skew(&crate::matfun::SkewSymmetric::new(g.clone())?);
    let l = logm_so(&(q * exp_g.transpose()))?;
    let h = project_horizontal(&l, sig)?;
    let exp_h = expm_skew(h.as_skew());
    let l = logm_so(&(exp_h.transpose() * q))?;
    let g_next = project_vertical(&l, sig)?;
    let residual = (q - exp_h * expm_skew(g_next.as_skew())).norm();
    Ok((h, g_next, residual))
}

fn vertical_dim(sig: &FlagSignature) -> usize {
    sig.parts().iter().map(|&p| p * p.saturating_sub(1) / 2).sum()
}

fn flatten_vertical(sig: &FlagSignature, g: &DMatrix<f64>) -> DVector<f64> {
    let mut out = Vec::with_capacity(vertical_dim(sig));
    for b in 0..sig.d() {
        let s = sig.block_start(b);
        for i in (s + 1)..(s + sig.block_size(b)) {
            for j in s..i {
                out.push(g[(i, j)]);
            }
        }
    }
    DVector::from_vec(out)
}

fn unflatten_vertical(sig: &FlagSignature, v: &DVector<f64>) -> DMatrix<f64> {
    let n = sig.n();
    let mut m = DMatrix::zeros(n, n);
    let mut idx = 0;
    for b in 0..sig.d() {
        let s = sig.block_start(b);
        for i in (s + 1)..(s + sig.block_size(b)) {
            for j in s..i {
                m[(i, j)] = v[idx];
                m[(j, i)] = -v[idx];
                idx += 1;
            }
        }
    }
    m
}

/// Anderson mixing over the vertical fixed point G -> Φ(G).
///
/// The plain alternation converges only linearly (rates above 0.99 are common
/// for distant pairs), far too slow for the default sweep budget; mixing the
/// recent iterates turns the tail into a small least-squares problem over the
/// vertical space and typically converges within a few dozen sweeps.
struct AndersonMixer {
    xs: Vec<DVector<f64>>,
    images: Vec<DVector<f64>>,
    depth: usize,
}

impl AndersonMixer {
    fn new(depth: usize) -> Self {
        Self {
            xs: Vec::new(),
            images: Vec::new(),
            depth,
        }
    }

    fn clear(&mut self) {
        self.xs.clear();
        self.images.clear();
    }

    fn push(&mut self, x: DVector<f64>, image: DVector<f64>) {
        self.xs.push(x);
        self.images.push(image);
        if self.xs.len() > self.depth + 1 {
            self.xs.remove(0);
            self.images.remove(0);
        }
    }

    /// Extrapolated next iterate, or None when there is not enough history
    /// or the candidate is unusable.
    fn extrapolate(&self) -> Option<DVector<f64>> {
        let m = self.xs.len();
        if m < 2 || self.xs[0].is_empty() {
            return None;
        }
        let dim = self.xs[0].len();
        let cols = m - 1;
        let residuals: Vec<DVector<f64>> = self
            .xs
            .iter()
            .zip(&self.images)
            .map(|(x, fx)| fx - x)
            .collect();
        let mut diff = DMatrix::zeros(dim, cols);
        for c in 0..cols {
            diff.set_column(c, &(&residuals[c + 1] - &residuals[c]));
        }
        let mut normal = diff.transpose() * &diff;
        let reg = 1e-12 * normal.trace().max(1e-30);
        for i in 0..cols {
            normal[(i, i)] += reg;
        }
        let rhs = diff.transpose() * &residuals[m - 1];
        let theta = normal.lu().solve(&rhs)?;
        let mut next = self.images[m - 1].clone();
        for c in 0..cols {
            let dimg = &self.images[c + 1] - &self.images[c];
            next -= dimg * theta[c];
        }
        if next.iter().all(|v| v.is_finite()) && next.norm() < 1e3 {
            Some(next)
        } else {
            None
        }
    }
}

/// Alternating solver for Q = exp(H)·exp(G) with H horizontal and G vertical.
///
/// Sweeps H ← P_H(log(Q·exp(-G))) and G ← P_G(log(exp(-H)·Q)) from the
/// supplied initial G until the residual drops below `eps` or `max_iter`
/// sweeps are spent, with Anderson mixing of the vertical iterate in between.
/// The returned tangents always come from a plain sweep; mixing only selects
/// where to evaluate next. A cut-locus failure at a mixed evaluation point is
/// retried closer to the last plain image; a cut-locus failure on the plain
/// path marks the trial as not converged (residual +∞) rather than erroring,
/// and the caller moves on to other representatives.
pub fn iterative_log(
    q: &DMatrix<f64>,
    sig: &FlagSignature,
    g0: &VerticalTangent,
    max_iter: usize,
    eps: f64,
) -> Result<IterativeLogOutcome> {
    let n = sig.n();
    if q.nrows() != n || q.ncols() != n {
        return Err(FlagError::invalid(format!(
            "matrix is {}x{} but signature {sig} has ambient dimension {n}",
            q.nrows(),
            q.ncols()
        )));
    }
    if g0.signature() != sig {
        return Err(FlagError::invalid(
            "initial vertical tangent signature mismatch",
        ));
    }
    if max_iter == 0 {
        return Err(FlagError::invalid("max_iter must be at least 1"));
    }
    if !(eps > 0.0) {
        return Err(FlagError::invalid("eps must be positive"));
    }

    let mut mixer = AndersonMixer::new(MIX_DEPTH);
    let mut g_mat = g0.as_matrix().clone();
    // Rescue points to try when a mixed evaluation lands at the cut locus;
    // empty while iterating on plain images, where a failure is genuine.
    let mut rescues: Vec<DVector<f64>> = Vec::new();

    let mut last = (
        HorizontalTangent::zero(sig.clone()),
        g0.clone(),
        f64::INFINITY,
    );
    let mut best = f64::INFINITY;
    let mut stall = 0usize;
    let mut sweeps = 0usize;

    while sweeps < max_iter {
        sweeps += 1;
        let (h, g_plain, residual) = match sweep(q, sig, &g_mat) {
            Ok(t) => t,
            Err(FlagError::LogNearCutLocus(_)) => {
                mixer.clear();
                match rescues.pop() {
                    Some(candidate) => {
                        g_mat = unflatten_vertical(sig, &candidate);
                        continue;
                    }
                    None => {
                        return Ok(IterativeLogOutcome {
                            horizontal: last.0,
                            vertical: last.1,
                            residual: f64::INFINITY,
                            iterations: sweeps,
                            converged: false,
                        })
                    }
                }
            }
            Err(e) => return Err(e),
        };
        last = (h, g_plain, residual);
        if residual < eps {
            return Ok(IterativeLogOutcome {
                horizontal: last.0,
                vertical: last.1,
                residual,
                iterations: sweeps,
                converged: true,
            });
        }
        if residual < best {
            best = residual;
            stall = 0;
        } else {
            stall += 1;
            if stall >= STALL_LIMIT {
                break;
            }
            if residual > best * RESET_FACTOR {
                mixer.clear();
            }
        }

        let plain = flatten_vertical(sig, last.1.as_matrix());
        mixer.push(flatten_vertical(sig, &g_mat), plain.clone());
        match mixer.extrapolate() {
            Some(mixed) => {
                rescues = vec![plain.clone(), 0.5 * (&mixed + &plain)];
                g_mat = unflatten_vertical(sig, &mixed);
            }
            None => {
                rescues.clear();
                g_mat = unflatten_vertical(sig, &plain);
            }
        }
    }

    Ok(IterativeLogOutcome {
        horizontal: last.0,
        vertical: last.1,
        residual: last.2,
        iterations: sweeps,
        converged: false,
    })
}

/// Vertical start aligning each diagonal block of Q by its orthogonal polar
/// factor. At the minimizing branch the diagonal blocks of exp(H) are
/// symmetric positive semidefinite, and this start produces exactly that
/// structure at sweep one, so the iteration opens inside the minimizing
/// basin. Returns None when a block's polar factor is a reflection (that
/// alignment belongs to a different representative) or sits at the cut locus.
fn polar_alignment_start(q: &DMatrix<f64>, sig: &FlagSignature) -> Option<VerticalTangent> {
    let n = sig.n();
    let mut g = DMatrix::zeros(n, n);
    for b in 0..sig.d() {
        let s = sig.block_start(b);
        let sz = sig.block_size(b);
        if sz < 2 {
            continue;
        }
        let block = q.view((s, s), (sz, sz)).into_owned();
        let svd = block.svd(true, true);
        let w = svd.u? * svd.v_t?;
        if w.determinant() < 0.0 {
            return None;
        }
        let l = logm_so(&w).ok()?;
        for i in 0..sz {
            for j in 0..sz {
                g[(s + i, s + j)] = l.as_matrix()[(i, j)];
            }
        }
    }
    let skew = crate::matfun::SkewSymmetric::new(g).ok()?;
    VerticalTangent::new(skew, sig.clone()).ok()
}

/// Vertical start made of independent random rotations, one per block, drawn
/// through the log of a random special orthogonal matrix so the whole
/// alignment group is covered (uniform small entries would not leave a
/// neighborhood of the identity).
fn block_rotation_start(sig: &FlagSignature, rng: &mut impl Rng) -> VerticalTangent {
    let n = sig.n();
    let mut g = DMatrix::zeros(n, n);
    for b in 0..sig.d() {
        let s = sig.block_start(b);
        let sz = sig.block_size(b);
        if sz < 2 {
            continue;
        }
        let r = random_special_orthogonal(sz, rng);
        if let Ok(l) = logm_so(&r) {
            for i in 0..sz {
                for j in 0..sz {
                    g[(s + i, s + j)] = l.as_matrix()[(i, j)];
                }
            }
        }
    }
    VerticalTangent::new(
        crate::matfun::SkewSymmetric::from_skew_unchecked(g),
        sig.clone(),
    )
    .expect("block-diagonal by construction")
}

/// The minimizing geodesic found between two flags.
#[derive(Clone, Debug)]
pub struct GeodesicSolution {
    /// Direction of the shortest geodesic found, at the identity-based
    /// representative Q = Q₁ᵀQ₂.
    pub horizontal: HorizontalTangent,
    /// Block-diagonal alignment absorbed by the equivalence class.
    pub vertical: VerticalTangent,
    /// Geodesic length sqrt(½ Tr(HᵀH)).
    pub distance: f64,
    /// Which of the 2^(d-1) fully-oriented representatives won.
    pub representative_index: usize,
    /// |Qᵢ - exp(H)exp(G)|_F for the winning representative.
    pub residual: f64,
    pub converged: bool,
}

/// Geodesic distance between two flags of the same signature.
///
/// Forms Q = Q₁ᵀQ₂, enumerates all 2^(d-1) fully-oriented representatives,
/// runs the alternating solver `restarts` times on each (trial 0 from G = 0,
/// trial 1 from the block-polar alignment, the rest from random block
/// rotations) and returns the shortest converged geodesic. Ties keep the
/// earliest trial in enumeration order, which makes the result deterministic
/// for a fixed seed.
pub fn flag_distance(
    p1: &FlagPoint,
    p2: &FlagPoint,
    cfg: &SolverConfig,
) -> Result<GeodesicSolution> {
    if p1.signature() != p2.signature() {
        return Err(FlagError::invalid(format!(
            "signature mismatch: {} vs {}",
            p1.signature(),
            p2.signature()
        )));
    }
    let sig = p1.signature().clone();
    if cfg.restarts == 0 {
        return Err(FlagError::invalid("restarts must be at least 1"));
    }

    let q_rel = p1.matrix().transpose() * p2.matrix();
    let base = FlagPoint::from_parts_unchecked(sig.clone(), q_rel);
    let reps = enumerate_representatives(&base);

    let mut bestsol: Option<GeodesicSolution> = None;
    for (rep_idx, rep) in reps.iter().enumerate() {
        for trial in 0..cfg.restarts {
            let g0 = match trial {
                0 => VerticalTangent::zero(sig.clone()),
                1 => polar_alignment_start(rep.matrix(), &sig)
                    .unwrap_or_else(|| VerticalTangent::zero(sig.clone())),
                _ => {
                    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(
                        cfg.seed,
                        rep_idx as u64,
                        trial as u64,
                    ));
                    block_rotation_start(&sig, &mut rng)
                }
            };
            let out = iterative_log(rep.matrix(), &sig, &g0, cfg.max_iter, cfg.eps)?;
            if !out.converged {
                continue;
            }
            let distance = out.horizontal.geodesic_length();
            let better = match &bestsol {
                None => true,
                Some(b) => distance < b.distance,
            };
            if better {
                bestsol = Some(GeodesicSolution {
                    horizontal: out.horizontal,
                    vertical: out.vertical,
                    distance,
                    representative_index: rep_idx,
                    residual: out.residual,
                    converged: true,
                });
            }
        }
    }

    bestsol.ok_or_else(|| {
        FlagError::NoConvergedTrial(format!(
            " (signature {sig}, {} representatives x {} trials)",
            reps.len(),
            cfg.restarts
        ))
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn sig(parts: &[usize]) -> FlagSignature {
        FlagSignature::new(parts.to_vec()).unwrap()
    }

    fn rotation(theta: f64) -> DMatrix<f64> {
        DMatrix::from_row_slice(2, 2, &[theta.cos(), -theta.sin(), theta.sin(), theta.cos()])
    }

    #[test]
    fn iterative_log_identity_converges_immediately() {
        let s = sig(&[1, 1]);
        let out = iterative_log(
            &DMatrix::identity(2, 2),
            &s,
            &VerticalTangent::zero(s.clone()),
            100,
            1e-10,
        )
        .unwrap();
        assert!(out.converged);
        assert_eq!(out.iterations, 1);
        assert!(out.residual < 1e-14);
        assert_eq!(out.horizontal.as_matrix().norm(), 0.0);
        assert_eq!(out.vertical.as_matrix().norm(), 0.0);
    }

    #[test]
    fn iterative_log_recovers_horizontal_direction() {
        let mut rng = ChaCha8Rng::seed_from_u64(31);
        let s = sig(&[1, 1, 2]);
        let h0 = HorizontalTangent::random(&s, &mut rng);
        let h0 = h0.scaled(0.3 / h0.geodesic_length());
        let q = expm_skew(h0.as_skew());

        let out = iterative_log(&q, &s, &VerticalTangent::zero(s.clone()), 100, 1e-10).unwrap();
        assert!(out.converged);
        assert!(out.residual < 1e-10);
        assert!((out.horizontal.as_matrix() - h0.as_matrix()).norm() < 1e-6);
    }

    #[test]
    fn iterative_log_with_vertical_component() {
        let mut rng = ChaCha8Rng::seed_from_u64(37);
        let s = sig(&[2, 2]);
        let h0 = HorizontalTangent::random(&s, &mut rng);
        let h0 = h0.scaled(0.3 / h0.geodesic_length());
        let g0 = VerticalTangent::random_uniform(&s, 0.3, &mut rng);
        let q = expm_skew(h0.as_skew()) * expm_skew(g0.as_skew());

        let out = iterative_log(&q, &s, &VerticalTangent::zero(s.clone()), 100, 1e-10).unwrap();
        assert!(
            out.converged,
            "residual {} after {} sweeps",
            out.residual, out.iterations
        );
        assert!(out.residual < 1e-10);
    }

    #[test]
    fn iterative_log_validates_inputs() {
        let s = sig(&[1, 1]);
        let g = VerticalTangent::zero(s.clone());
        let q = DMatrix::identity(3, 3);
        assert!(iterative_log(&q, &s, &g, 100, 1e-10).is_err());
        let q = DMatrix::identity(2, 2);
        assert!(iterative_log(&q, &s, &g, 0, 1e-10).is_err());
        assert!(iterative_log(&q, &s, &g, 10, 0.0).is_err());
    }

    #[test]
    fn distance_of_point_to_itself_is_zero() {
        let mut rng = ChaCha8Rng::seed_from_u64(41);
        let s = sig(&[1, 2, 1]);
        let p = FlagPoint::random(s, &mut rng);
        let sol = flag_distance(&p, &p, &SolverConfig::default()).unwrap();
        assert!(sol.distance < 1e-8);
    }

    #[test]
    fn two_by_two_closed_form_with_orientation_flip() {
        let s = sig(&[1, 1]);
        let p1 = FlagPoint::identity(s.clone());
        let cfg = SolverConfig::default();

        // theta < pi/2: the direct rotation is shortest.
        let theta = 2.0 * PI / 5.0;
        let p2 = FlagPoint::from_orthogonal(rotation(theta), s.clone()).unwrap();
        let sol = flag_distance(&p1, &p2, &cfg).unwrap();
        assert!((sol.distance - theta).abs() < 1e-8);

        // theta > pi/2: the sign-flipped representative wins with pi - theta.
        let theta = 3.0 * PI / 5.0;
        let p2 = FlagPoint::from_orthogonal(rotation(theta), s.clone()).unwrap();
        let sol = flag_distance(&p1, &p2, &cfg).unwrap();
        assert!((sol.distance - (PI - theta)).abs() < 1e-8);
        assert_eq!(sol.representative_index, 1);
    }

    #[test]
    fn distance_is_symmetric() {
        let mut rng = ChaCha8Rng::seed_from_u64(43);
        let s = sig(&[1, 2]);
        let cfg = SolverConfig::default();
        for _ in 0..5 {
            let p1 = FlagPoint::random(s.clone(), &mut rng);
            let p2 = FlagPoint::random(s.clone(), &mut rng);
            let d12 = flag_distance(&p1, &p2, &cfg).unwrap().distance;
            let d21 = flag_distance(&p2, &p1, &cfg).unwrap().distance;
            assert!((d12 - d21).abs() < 1e-6, "d12={d12}, d21={d21}");
        }
    }

    #[test]
    fn distance_invariant_under_representative_change() {
        let mut rng = ChaCha8Rng::seed_from_u64(47);
        let s = sig(&[1, 2]);
        let cfg = SolverConfig::default();
        let p1 = FlagPoint::random(s.clone(), &mut rng);
        let p2 = FlagPoint::random(s.clone(), &mut rng);
        let d = flag_distance(&p1, &p2, &cfg).unwrap().distance;

        // Right-multiply p2 by a block-diagonal M with det(M₁)·det(M₂) = 1.
        let angle: f64 = 1.1;
        let mut m = DMatrix::<f64>::zeros(3, 3);
        m[(0, 0)] = -1.0;
        m[(1, 1)] = -angle.cos();
        m[(1, 2)] = angle.sin();
        m[(2, 1)] = angle.sin();
        m[(2, 2)] = angle.cos();
        assert!((m.determinant() - 1.0).abs() < 1e-12);
        let p2m = FlagPoint::from_orthogonal(p2.matrix() * &m, s.clone()).unwrap();
        let dm = flag_distance(&p1, &p2m, &cfg).unwrap().distance;
        assert!((d - dm).abs() < 1e-6, "d={d}, dm={dm}");

        // Left-multiply both by a common rotation.
        let r = random_special_orthogonal(3, &mut rng);
        let q1 = FlagPoint::from_orthogonal(&r * p1.matrix(), s.clone()).unwrap();
        let q2 = FlagPoint::from_orthogonal(&r * p2.matrix(), s).unwrap();
        let dr = flag_distance(&q1, &q2, &cfg).unwrap().distance;
        assert!((d - dr).abs() < 1e-6, "d={d}, dr={dr}");
    }

    #[test]
    fn grassmann_pair_matches_principal_angles() {
        // Random Gr(2,5) pair: the flag distance must equal the
        // principal-angle distance of the leading 2-column spans.
        let mut rng = ChaCha8Rng::seed_from_u64(59);
        let s = sig(&[2, 3]);
        let cfg = SolverConfig::default();
        for _ in 0..5 {
            let p1 = FlagPoint::random(s.clone(), &mut rng);
            let p2 = FlagPoint::random(s.clone(), &mut rng);
            let sol = flag_distance(&p1, &p2, &cfg).unwrap();

            let q_rel = p1.matrix().transpose() * p2.matrix();
            let block = q_rel.view((0, 0), (2, 2)).into_owned();
            let sv = block.svd(false, false).singular_values;
            let oracle: f64 = sv
                .iter()
                .map(|&x| x.clamp(-1.0, 1.0).acos().powi(2))
                .sum::<f64>()
                .sqrt();
            assert!(
                (sol.distance - oracle).abs() < 1e-6,
                "flag {} vs principal angles {}",
                sol.distance,
                oracle
            );
        }
    }

    #[test]
    fn solution_length_is_recomputable_from_h() {
        let mut rng = ChaCha8Rng::seed_from_u64(53);
        let s = sig(&[1, 1, 1]);
        let p1 = FlagPoint::random(s.clone(), &mut rng);
        let p2 = FlagPoint::random(s, &mut rng);
        let sol = flag_distance(&p1, &p2, &SolverConfig::default()).unwrap();
        assert!((sol.distance - sol.horizontal.geodesic_length()).abs() < 1e-12);
        assert!(sol.residual < 1e-9);
    }

    #[test]
    fn unreachable_eps_reports_no_converged_trial() {
        let s = sig(&[1, 1]);
        let p1 = FlagPoint::identity(s.clone());
        let p2 = FlagPoint::from_orthogonal(rotation(0.4), s).unwrap();
        let cfg = SolverConfig {
            eps: 1e-300,
            max_iter: 1,
            ..Default::default()
        };
        assert!(matches!(
            flag_distance(&p1, &p2, &cfg),
            Err(FlagError::NoConvergedTrial(_))
        ));
    }

    #[test]
    fn signature_mismatch_is_rejected() {
        let p1 = FlagPoint::identity(sig(&[1, 1, 1]));
        let p2 = FlagPoint::identity(sig(&[1, 2]));
        assert!(matches!(
            flag_distance(&p1, &p2, &SolverConfig::default()),
            Err(FlagError::InvalidInput(_))
        ));
    }
}
