//! Flag-manifold geometry: points on FL(n₁,…,n_d) = SO(n)/S(O(n₁)×…×O(n_d)),
//! horizontal/vertical tangent projections, the exponential map, enumeration
//! of fully-oriented representatives, the alternating log solver, the
//! minimum-geodesic distance and the 2k-dimensional reduction.

mod reduction;
mod solver;
mod types;

pub use reduction::{flag_distance_auto, reduce_2k, Reduction, REDUCTION_RANK_TOL};
pub use solver::{
    flag_distance, iterative_log, GeodesicSolution, IterativeLogOutcome, SolverConfig,
};
pub use types::{
    enumerate_representatives, flag_exp, project_horizontal, project_vertical, FlagPoint,
    FlagSignature, HorizontalTangent, VerticalTangent,
};
