//! Experiment orchestration: rate studies over a grid of sample sizes, empirical checks
//! of the regression-class assumptions, and CSV persistence.

mod assumptions;
mod config;
mod gap;
mod rademacher;
mod rates;
mod residual;
mod results;

pub use assumptions::{run_assumptions, run_assumptions_on, write_assumptions, AssumptionsReport, RademacherRow};
pub use config::{AssumptionsConfig, ExperimentConfig, FqiRunConfig, LambdaRule};
pub use gap::{evaluate_gap, suboptimality_gap, GapEstimate, GAP_FLOOR};
pub use rademacher::{estimate_rademacher, RademacherBall, RademacherEstimate};
pub use rates::{
    aggregate_rows, cell_seed, fit_loglog_slope, run_rate_experiment, run_rate_experiment_on, AggregateRow,
    CellDetail, RateResult, RateRow, SlopeFit,
};
pub use residual::{measure_one_step_residual, table_residuals};
pub use results::{
    content_hash, read_aggregate, read_metadata, read_rows, write_results, RunMetadata, AGGREGATE_FILE,
    DETAILS_FILE, METADATA_FILE, ROWS_FILE, ROW_HEADER,
};
