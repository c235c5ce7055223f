use thiserror::Error;

/// Errors raised by signal processing, modelling and verification routines.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("signals or spectra are not on the same grid")]
    GridMismatch,

    #[error("signal too short: {len} samples, at least {min} required")]
    TooShort { len: usize, min: usize },

    #[error("frequency grid reaches {omega_max} rad/s, above the Nyquist limit {nyquist} rad/s")]
    AboveNyquist { omega_max: f64, nyquist: f64 },

    #[error("syntax error at offset {offset}: {message}")]
    Syntax { offset: usize, message: String },

    #[error("unknown identifier `{name}` at offset {offset}")]
    UnknownIdentifier { name: String, offset: usize },

    #[error("division by zero while evaluating expression")]
    DivisionByZero,

    #[error("transfer function is improper (numerator degree exceeds denominator degree)")]
    Improper,

    #[error("transfer function is not stable: denominator fails the Routh-Hurwitz test")]
    NotHurwitz,

    #[error("operation requires an LTI-composed system")]
    NotLti,

    #[error("matrix is not Hermitian (deviation {0:e})")]
    NotHermitian(f64),

    #[error("numerical failure during simulation at t = {time}: {reason}")]
    Simulation { time: f64, reason: String },

    #[error("algebraic loop did not converge at t = {time}")]
    FixedPoint { time: f64 },

    #[error("instantaneous gain probe diverged")]
    GainProbe,

    #[error("input battery is empty")]
    EmptyBattery,

    #[error("battery contains an input with zero norm (member {0})")]
    ZeroNormInput(usize),

    #[error("unknown builtin system `{0}`")]
    UnknownBuiltin(String),
}

pub type Result<T> = std::result::Result<T, Error>;
