//! Command-line front end for `csrk-core`.
//!
//! [`Cli`] parses flags, [`Cli::into_config`] validates them into a
//! [`RunConfig`], and [`run`] executes it and renders the document.

pub mod args;
pub mod commands;
pub mod config;
pub mod output;

pub use args::{Cli, THREADS_ENV};
pub use commands::{run, select_reference, Outcome};
pub use config::{CommandKind, OutputFormat, RunConfig, UsageError};
pub use output::{body_of, Rendered};

/// Exit status for a failed condition check.
pub const EXIT_CHECK_FAILED: i32 = 3;
/// Exit status for an invalid flag combination.
pub const EXIT_USAGE: i32 = 2;
