//! Geodesic distances and geodesics on flag manifolds FL(n₁,…,n_d), with the
//! Grassmannian as the two-block special case, plus the supporting pieces for
//! subspace-separation experiments: SVD-basis flag construction, pairwise
//! distance matrices, classical MDS and synthetic data generators.

pub mod dataio;
pub mod embedding;
pub mod error;
pub mod flag;
pub mod grassmann;
pub mod matfun;
pub mod pipeline;
pub mod seed;
pub mod separation;

pub use error::{FlagError, Result};
