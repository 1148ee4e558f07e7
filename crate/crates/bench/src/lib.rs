//! Paired-seed evaluation of trained policies against fixed and random
//! baselines, with trip metrics, comfort categories and CSV reports.

mod error;
mod metrics;
mod report;
mod runner;

pub use error::{Error, Result};
pub use metrics::{categorize, late_rate, rel_max_movement, Category};
pub use report::{Aggregate, EvalReport, TripRecord, AGGREGATES_FILE, BUBBLES_FILE, REPORT_FILE};
pub use runner::{baselines, run_benchmark, run_on, run_trip, BenchConfig, BenchPolicy, Driver};
