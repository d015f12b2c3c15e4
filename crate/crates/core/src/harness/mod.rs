//! Convergence experiments: configuration, schedules, sweeps and reports.

pub mod config;
pub mod report;
pub mod schedule;
pub mod sweep;

pub use config::{Config, ObservablesConfig, OutputConfig, TransportConfig};
pub use report::{read_report, report_emit, Format};
pub use schedule::{validate_schedule, Condition, ScalingRule, Schedule, ScheduleVerdict};
pub use sweep::{run_sweep, workers_from_env, GapSeries, OracleRow, RowStats, SweepReport, SweepRow};
