//! Studies reproducing the finite-width / finite-depth experiments, with the
//! statistics, rate fits and tables they report.

mod harness;
mod stats;
mod studies;
mod table;

pub use harness::{cell_trial_seed, run_trials};
pub use stats::{l2_error, quantile, Quantiles, RateFit, Summary, DEFAULT_DROP_FRACTION};
pub use studies::{
    depth_rate_study, dual_table, flow_curve, flow_table, grid_study, joint_diagonal_study,
    reference_kernel, simulate_study, width_first_trace, width_rate_study, DepthRateResult,
    DepthRateRow, JointResult, JointRow, LayerRow, PairRecord, Reference, ReferenceKind,
    RunManifest, SimulateResult, StudyOptions, SweepResult, SweepRow, WidthRateResult,
    DEFAULT_SEED, DEFAULT_SERIES_TOL, MIN_WIDTH_RATE_TRIALS,
};
pub use table::{format_float, Cell, Table};
