//! Benchmark harness: run configs, goodness sweeps, result tables and
//! plot-ready series.

pub mod config;
pub mod error;
pub mod plot;
pub mod run;

pub use config::{ResolvedRun, RunConfig};
pub use error::{BenchError, Result};
pub use plot::{emit_plot_data, write_plot_data, PlotData, PlotRow, PLOT_DATA_CSV};
pub use run::{
    read_results_csv, run_benchmark, run_on_dataset, write_results_csv, BenchOutcome, ResultRow, RunRecord,
    RESULTS_CSV, RESULTS_HEADER, RESULTS_JSON,
};
