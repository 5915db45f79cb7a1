//! Benchmarking engine for frozen image embeddings.
//!
//! The crate evaluates representation quality on classification tasks from
//! pre-computed embedding containers: patient-coherent splitting, weighted kNN
//! and linear probes, label-efficiency curves, utility scores, ANOVA / Tukey
//! HSD significance testing, and Table-style report and SVG plot emission.

pub mod data;
pub mod error;
pub mod fewshot;
pub mod knn;
pub mod linalg;
pub mod metrics;
pub mod probe;
pub mod report;
pub mod rng;
pub mod split;
pub mod stats;
pub mod synthetic;
pub mod utility;

pub use error::{BenchError, Result};
