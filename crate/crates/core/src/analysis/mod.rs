//! Robust moments, histograms, curve fitting and sensitivity tables.

pub mod fit;
pub mod histogram;
pub mod lm;
pub mod robust;
pub mod sensitivity;

pub use fit::{
    fit_cosine_fringe, fit_exponential_decay, fit_stretched_mean_decay, fit_stretched_variance_decay,
    variance_point_sigmas, BetaMode, FitParam, FitResult, FloorMode,
};
pub use histogram::{build_histogram, Histogram};
pub use robust::{robust_filter, robust_moments, RobustMoments};
pub use sensitivity::{sensitivity_table, SensitivityRow, SensitivityTable};
