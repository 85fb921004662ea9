//! Command-line orchestration: config parsing, seed management, run
//! manifests, and CSV emission for every experiment subcommand.
//!
//! Exit codes: 0 when all defined checks pass, 1 when a check fails or a
//! run-time error occurs, 2 for usage/config errors.

pub mod commands;
pub mod config;
pub mod manifest;

/// Environment variable naming the default output root. Outputs land in
/// `<root>/<subcommand>` when `--out` is not given.
pub const OUT_ROOT_ENV: &str = "DRND_OUT_ROOT";

pub const EXIT_PASS: i32 = 0;
pub const EXIT_CHECK_FAILURE: i32 = 1;
pub const EXIT_USAGE: i32 = 2;
