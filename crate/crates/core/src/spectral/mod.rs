//! Level-set functions, Lambda_k membership, the one-dimensional matching
//! construction, spectral gap bounds and the autocorrelation-based gap
//! heuristic.

mod gap;
mod iat;
mod lambda;
mod level_set;

pub use gap::{gap_bound_for_target, gap_lower_bound, GapBound, GapKind, GapParams};
pub use iat::{
    autocorrelation, empirical_gap, heuristic_warning, iat_estimate, IatEstimate, HEURISTIC_WARNING_LEVEL,
    MIN_SERIES_LEN,
};
pub use lambda::{
    construct_matching_dk, lambda_k_check, smallest_admissible_p, verify_matching, LambdaCheck, LambdaVerdict,
    DEFAULT_GRID_SIZE,
};
pub use level_set::{
    level_set_closed_form, level_set_closed_form_with, level_set_mc, LevelSetFn, Provenance,
};
