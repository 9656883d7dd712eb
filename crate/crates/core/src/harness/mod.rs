//! Scenario orchestration, Monte Carlo batches and reports.

mod report;
mod run;
mod scenario;

pub use report::{
    compare, emit_report, monte_carlo, monte_carlo_prepared, per_step_stats, report_csv, report_json, series_stats,
    Comparison, ReportFormat, RunReport,
};
pub use run::{divergence_check, error_k, match_segment, run_once, Prepared, RunResult};
pub use scenario::{Algorithm, MapSource, Route, Scenario, KEYS, MATCH_SIGMA_V_FLOOR, MATCH_SIGMA_Z_FLOOR};
