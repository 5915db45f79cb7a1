//! Configuration, batch pipeline, report tables and SVG figures.

pub mod config;
pub mod format;
pub mod pipeline;
pub mod svg;

pub use config::{Evaluation, RunConfig, TaskConfig};
pub use format::{assemble_report, format_cell, EvalReport, FrozenResult, Provenance, ReportCell, StatsEntry};
pub use pipeline::{run, run_stage, with_jobs, LoadedTask, OutputLayout, RunOutcome, Stage};
pub use svg::emit_plots;
