//! Configuration, pipelines and output writers behind the `bubble-hjb`
//! binary.

pub mod config;
pub mod run;
pub mod svg;

pub use config::{emit_config, parse_config, Command, RunConfig};
pub use run::{run, CheckRecord, Outcome};
