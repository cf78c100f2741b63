//! Encrypted feedback control over the Paillier cryptosystem.
//!
//! The crate has three layers:
//!
//! * arithmetic — [`bignum`] and [`mont`]: multi-precision integers on
//!   16-bit words and subtraction-free Montgomery multiplication and
//!   exponentiation with one radix shared across the system moduli;
//! * cryptography and control — [`paillier`], [`codec`], [`controller`]:
//!   key handling, the binomial-shortcut encryption and three-modulus
//!   decryption pipeline, fixed-point coding into `Z_{2^n'}`, and the
//!   resetting linear controller in real, integer and encrypted form;
//! * system — [`plant`], [`net`], [`config`]: a discrete-time plant
//!   simulator, the plant-interface/controller services with their binary
//!   wire protocol, and the latency harness.

pub mod bignum;
pub mod codec;
pub mod config;
pub mod controller;
pub mod error;
pub mod keyfile;
pub mod mont;
pub mod net;
pub mod paillier;
pub mod plant;
pub mod presets;

pub use bignum::BigUint;
pub use error::ArithError;
pub use mont::{MontCtx, MontForm};
