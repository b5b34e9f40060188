//! Hands figure rendering to the Python `anneal_reports` package.

use std::ffi::OsString;
use std::process::Command;

use crate::error::CliError;

pub const REPORT_MODULE: &str = "anneal_reports";

/// Interpreter used when neither `--python` nor `ANNEAL_BENCH_PYTHON` is set.
pub const DEFAULT_PYTHON: &str = "python3";

pub fn python_command(explicit: Option<OsString>) -> OsString {
    explicit
        .or_else(|| std::env::var_os("ANNEAL_BENCH_PYTHON"))
        .unwrap_or_else(|| DEFAULT_PYTHON.into())
}

/// Runs `python -m anneal_reports <args>` and returns its exit code.
pub fn report(python: &OsString, args: &[OsString]) -> Result<i32, CliError> {
    let status = Command::new(python)
        .arg("-m")
        .arg(REPORT_MODULE)
        .args(args)
        .status()
        .map_err(|e| CliError::Failed(format!("cannot start {}: {e}", python.to_string_lossy())))?;
    Ok(status.code().unwrap_or(1))
}
