//! Training runs with scheduled collapse analysis, terminal-phase detection,
//! report persistence and layer-depth trend summaries.

mod config;
mod persist;
mod run;
mod trend;

pub use config::{log_spaced_epochs, parse_entries, CheckpointSchedule, DataSource, ExperimentConfig, Seeds};
pub use persist::{
    fmt_real, plot_tables, read_report, report_to_csv, report_to_json, validate_report,
    write_report, CSV_HEADER,
};
pub use run::{
    analysis_threads, analyze_model, detect_tpt, load_dataset, run, Checkpoint, NcReport,
    RunFailure, RunOutput,
};
pub use trend::{describe_series, trend_summary, MetricKind, MetricTrend, TrendSummary, PLATEAU_REL_CHANGE};
