//! Estimators and diagnostics.

pub mod convergence;
pub mod entropy;
pub mod histogram;
pub mod moments;
pub mod quadrature;

pub use convergence::{
    fit_order, fit_order_with_threshold, weak_error_exact, weak_error_self, ConvergenceReport,
    ConvergenceRow, WeakError,
};
pub use entropy::{bin_averages, relative_entropy, relative_entropy_hist, relative_entropy_to_density, RelativeEntropy};
pub use histogram::{
    batch_stderr, effective_diffusion, occupancy_density, occupancy_with_stderr, DeffBin, Histogram,
    DEFAULT_BATCHES,
};
pub use moments::{recover_diffusion, recover_drift};
