//! Library side of the `sde-lab` binary: configuration and one function per
//! command.

pub mod commands;
pub mod config;

/// Result of a command: the JSON report and whether every check passed.
#[derive(Debug)]
pub struct Outcome {
    pub passed: bool,
    pub report: serde_json::Value,
}
