//! Benchmark harness around `dcot-core`: suite and config file formats,
//! suite execution with per-task seeds, policy training, and report
//! emission (CSV, comparison table, trace and training logs).

pub mod configio;
pub mod report;
pub mod runner;
pub mod suite;
pub mod tracefmt;
pub mod trainer;
