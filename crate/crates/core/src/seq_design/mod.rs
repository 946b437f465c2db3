//! Sequential designs for calibration.
//!
//! Starting from a maximin Latin hypercube, the design is augmented at parameter values
//! that maximize the expected improvement of the residual sum of squares between the
//! emulated code and the field data. New runs are restricted to the field sites.

mod algorithms;
mod covering;
mod criteria;
mod ei;
mod grid;
mod lhd;

pub use algorithms::{
    initial_design, initial_design_seed, posterior_mode_on_grid, run_algorithm1, run_algorithm2,
    run_sequential, write_trace_csv, CalibrationProblem, SequentialConfig, SequentialRun, Strategy,
    TraceRow,
};
pub use covering::{covering_distance, design_covering_distance, probe_grid};
pub use criteria::{crit_tradeoff, crit_variance, Criterion, CriterionChoice};
pub use ei::{
    ei_estimate, hyperrect_prob, select_theta, select_theta_exhaustive, EiEstimate, EiState,
    Selection,
};
pub use grid::{cartesian, linspace, GridSpec};
pub use lhd::{maximin_lhd, min_pairwise_distance, nested_maximin, random_lhd};
