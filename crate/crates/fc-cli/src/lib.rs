//! Library surface behind the `fc` binary: configuration schema, model
//! glue, pipeline orchestration, and report emission. Exposed so
//! integration suites can drive the same code paths the CLI uses.

pub mod config;
pub mod models;
pub mod pipeline;
pub mod report;
