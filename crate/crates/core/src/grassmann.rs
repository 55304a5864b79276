//! Principal-angle geodesic distance on the Grassmannian Gr(k,n), used both
//! as a baseline method and as the oracle for the FL(k,n-k) consistency
//! checks.

use nalgebra::DMatrix;

use crate::error::{FlagError, Result};
use crate::matfun::OrthonormalColumns;

/// A k-dimensional subspace of ℝⁿ, represented by an orthonormal basis.
#[derive(Clone, Debug)]
pub struct GrassmannPoint {
    basis: OrthonormalColumns,
}

impl GrassmannPoint {
    pub fn new(basis: OrthonormalColumns) -> Self {
        Self { basis }
    }

    pub fn from_matrix(x: DMatrix<f64>) -> Result<Self> {
        Ok(Self {
            basis: OrthonormalColumns::new(x)?,
        })
    }

    pub fn n(&self) -> usize {
        self.basis.rows()
    }

    pub fn k(&self) -> usize {
        self.basis.cols()
    }

    pub fn basis(&self) -> &DMatrix<f64> {
        self.basis.as_matrix()
    }
}

/// Principal angles between two subspaces, ascending in [0, π/2].
///
/// λⱼ = arccos σⱼ for the singular values of X₁ᵀX₂, clamped into [-1, 1]
/// since roundoff pushes cosines slightly past 1.
pub fn principal_angles(a: &GrassmannPoint, b: &GrassmannPoint) -> Result<Vec<f64>> {
    if a.n() != b.n() || a.k() != b.k() {
        return Err(FlagError::invalid(format!(
            "shape mismatch: {}x{} vs {}x{}",
            a.n(),
            a.k(),
            b.n(),
            b.k()
        )));
    }
    let product = a.basis().transpose() * b.basis();
    let sv = product.svd(false, false).singular_values;
    // Descending singular values give ascending angles.
    Ok(sv.iter().map(|&s| s.clamp(-1.0, 1.0).acos()).collect())
}

/// Geodesic distance sqrt(Σ λⱼ²) over the principal angles.
pub fn grassmann_distance(a: &GrassmannPoint, b: &GrassmannPoint) -> Result<f64> {
    let angles = principal_angles(a, b)?;
    Ok(angles.iter().map(|l| l * l).sum::<f64>().sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::matfun::random_special_orthogonal;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::StandardNormal;
    use std::f64::consts::{FRAC_PI_2, PI};

    fn random_point(n: usize, k: usize, rng: &mut impl Rng) -> GrassmannPoint {
        let x = DMatrix::from_fn(n, k, |_, _| rng.sample::<f64, _>(StandardNormal));
        let (q, _) = crate::matfun::qr_thin(&x).unwrap();
        GrassmannPoint::new(q)
    }

    #[test]
    fn identical_spans_have_zero_angles() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let p = random_point(5, 2, &mut rng);
        let angles = principal_angles(&p, &p).unwrap();
        assert!(angles.iter().all(|&a| a.abs() < 1e-7));
        assert!(grassmann_distance(&p, &p).unwrap() < 1e-7);
    }

    #[test]
    fn orthogonal_lines_in_the_plane() {
        let e1 = GrassmannPoint::from_matrix(DMatrix::from_column_slice(2, 1, &[1.0, 0.0]))
            .unwrap();
        let e2 = GrassmannPoint::from_matrix(DMatrix::from_column_slice(2, 1, &[0.0, 1.0]))
            .unwrap();
        let angles = principal_angles(&e1, &e2).unwrap();
        assert_eq!(angles.len(), 1);
        assert!((angles[0] - FRAC_PI_2).abs() < 1e-14);
        assert!((grassmann_distance(&e1, &e2).unwrap() - FRAC_PI_2).abs() < 1e-14);
    }

    #[test]
    fn angles_match_eigenvalue_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let a = random_point(6, 2, &mut rng);
        let b = random_point(6, 2, &mut rng);
        let angles = principal_angles(&a, &b).unwrap();

        // Eigenvalues of (X₁ᵀX₂)(X₁ᵀX₂)ᵀ are the squared cosines.
        let m = a.basis().transpose() * b.basis();
        let mut cos2: Vec<f64> = (m.clone() * m.transpose())
            .symmetric_eigen()
            .eigenvalues
            .iter()
            .copied()
            .collect();
        cos2.sort_by(|x, y| y.partial_cmp(x).unwrap());
        for (lam, c2) in angles.iter().zip(cos2) {
            let expected = c2.max(0.0).sqrt().clamp(-1.0, 1.0).acos();
            assert!((lam - expected).abs() < 1e-8);
        }
    }

    #[test]
    fn constructed_rotation_gives_known_distance() {
        // Rotate a 2-plane by 0.3 in one principal direction.
        let theta: f64 = 0.3;
        let x = DMatrix::from_column_slice(4, 2, &[1., 0., 0., 0., 0., 1., 0., 0.]);
        let mut y = x.clone();
        y[(0, 0)] = theta.cos();
        y[(2, 0)] = theta.sin();
        let a = GrassmannPoint::from_matrix(x).unwrap();
        let b = GrassmannPoint::from_matrix(y).unwrap();
        assert!((grassmann_distance(&a, &b).unwrap() - theta).abs() < 1e-12);
    }

    #[test]
    fn right_invariance_and_bound() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let a = random_point(7, 3, &mut rng);
        let b = random_point(7, 3, &mut rng);
        let d = grassmann_distance(&a, &b).unwrap();

        // X -> XU for U in O(k) (here a rotation, then a reflection).
        let u = random_special_orthogonal(3, &mut rng);
        let mut ur = u.clone();
        for i in 0..3 {
            ur[(i, 0)] = -ur[(i, 0)];
        }
        for trans in [u, ur] {
            let a2 = GrassmannPoint::from_matrix(a.basis() * &trans).unwrap();
            let d2 = grassmann_distance(&a2, &b).unwrap();
            assert!((d - d2).abs() < 1e-10);
        }

        assert!(d >= 0.0);
        assert!(d <= 3.0_f64.sqrt() * PI / 2.0 + 1e-12);
    }

    #[test]
    fn shape_mismatch_is_rejected() {
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        let a = random_point(5, 2, &mut rng);
        let b = random_point(5, 3, &mut rng);
        assert!(matches!(
            principal_angles(&a, &b),
            Err(FlagError::InvalidInput(_))
        ));
    }
}
