//! Exit codes and error classification.

use niq_core::Error;

pub const PASS: i32 = 0;
pub const NEGATIVE: i32 = 2;
pub const INCONCLUSIVE: i32 = 3;
pub const CONFIG: i32 = 64;
pub const NUMERIC: i32 = 70;

#[derive(Debug, Clone, PartialEq)]
pub struct CliError {
    pub code: i32,
    pub message: String,
}

impl CliError {
    pub fn config(message: impl Into<String>) -> Self {
        CliError { code: CONFIG, message: message.into() }
    }

    pub fn numeric(message: impl Into<String>) -> Self {
        CliError { code: NUMERIC, message: message.into() }
    }

    pub fn io(e: std::io::Error, what: &str) -> Self {
        CliError::numeric(format!("cannot write {what}: {e}"))
    }

    /// Errors raised while building systems or validating settings.
    pub fn from_core_config(e: Error) -> Self {
        CliError::config(e.to_string())
    }
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        let code = match e {
            Error::InvalidArgument(_)
            | Error::DimensionMismatch { .. }
            | Error::TooShort { .. }
            | Error::AboveNyquist { .. }
            | Error::Syntax { .. }
            | Error::UnknownIdentifier { .. }
            | Error::Improper
            | Error::NotHurwitz
            | Error::NotLti
            | Error::NotHermitian(_)
            | Error::EmptyBattery
            | Error::UnknownBuiltin(_) => CONFIG,
            Error::GridMismatch
            | Error::DivisionByZero
            | Error::Simulation { .. }
            | Error::FixedPoint { .. }
            | Error::GainProbe
            | Error::ZeroNormInput(_) => NUMERIC,
        };
        CliError { code, message: e.to_string() }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.message)
    }
}
