//! Checkerboard pseudo-observations, cross-hour dependence estimation and
//! correlated Gaussian sampling.

mod constant;
pub mod matrix;
mod model;
mod pit;
mod timevarying;

pub use constant::{
    fit_constant_dependence, hour_pairs, pair_correlation, ConstantEstimate, MIN_PAIRS,
};
pub use model::{
    sample_z, DependenceKind, DependenceModel, SamplingPlan, TruthDependence, REPAIR_METHOD,
};
pub use pit::{checkerboard_pit, gaussianize, gaussianize_with, PseudoObs, U_CLAMP};
pub use timevarying::{
    bucket_correlations, fit_pair_curve, fit_time_varying, knots_for, PairCurve,
    TimeVaryingEstimate, WIDTH_CANDIDATES,
};
