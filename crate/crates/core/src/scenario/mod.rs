//! Scenario files, trace recording/emission and the batch benchmark.
//!
//! A scenario is one JSON document with the top-level keys `meta`,
//! `entities`, `thermal`, `species`, `mixtures`, `reactions`, `devices`,
//! `workflow`, `trace` and `verification`. Sections are registered in that
//! order and entries within a section in file order, which fixes the
//! process and event order of the built environment.
//!
//! Quantities are bare SI numbers or strings such as `"70 degC"`,
//! `"48 g"`, `"4 mmol"`, `"2 s"`.

mod bench;
mod build;
mod run;
mod spec;
mod trace;

pub use bench::{bench, record_schedule, BenchReport};
pub use build::{build, Built};
pub use run::{run, RunOptions, RunOutput};
pub use spec::*;
pub use trace::{parse_csv, Column, Trace, TraceEvent, TraceFormat};

use thiserror::Error;

use crate::error::EngineError;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ScenarioError {
    #[error("parse error at line {line}, column {column}: {message}")]
    Parse {
        line: usize,
        column: usize,
        message: String,
    },
    #[error("{message} (line {line}, column {column})")]
    Unit {
        line: usize,
        column: usize,
        message: String,
    },
    #[error("validation error: {0}")]
    Validation(String),
    #[error("engine error at step {step}: {source}")]
    Engine { step: u64, source: EngineError },
    #[error("batch size must be at least 1")]
    ZeroCount,
    #[error("trace has no rows")]
    EmptyTrace,
}

impl ScenarioError {
    pub(crate) fn validation(context: &str, err: impl std::fmt::Display) -> Self {
        ScenarioError::Validation(format!("{context}: {err}"))
    }
}
