//! Error type for the multi-precision and Montgomery layers.

use thiserror::Error;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum ArithError {
    #[error("modulus must be odd")]
    EvenModulus,
    #[error("modulus must be at least 3")]
    ModulusTooSmall,
    #[error("modulus does not fit the requested word count")]
    WordCountTooSmall,
    #[error("operand out of range: expected value below 2M")]
    OperandOutOfRange,
    #[error("operand out of range: expected value below M")]
    OperandNotCanonical,
    #[error("exponent has {bits} bits but the call site is fixed at {limit}")]
    ExponentTooWide { bits: usize, limit: usize },
    #[error("value of {bits} bits does not fit in {width_bytes} bytes")]
    ValueTooWide { bits: usize, width_bytes: usize },
    #[error("value bound to a different Montgomery context")]
    ContextMismatch,
    #[error("invalid hexadecimal string")]
    BadHex,
}
