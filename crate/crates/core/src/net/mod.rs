//! The two services of the encrypted loop — plant interface and controller
//! — their wire protocol, the in-process reference loop, and the latency
//! harness.
//!
//! The privacy boundary runs between the two services: the controller
//! endpoint is constructed from a [`crate::paillier::PublicKey`] alone and
//! has no code path to `lambda` or `mu`; plaintexts exist only inside the
//! plant interface.

pub mod runner;
pub mod session;
pub mod timing;
pub mod wire;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum NetError {
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Wire(#[from] wire::WireError),
    #[error("session refused: {0}")]
    Refused(String),
    #[error("protocol violation: {0}")]
    Protocol(String),
    #[error(transparent)]
    Controller(#[from] crate::controller::ControllerError),
    #[error(transparent)]
    Paillier(#[from] crate::paillier::PaillierError),
    #[error(transparent)]
    Codec(#[from] crate::codec::CodecError),
    #[error(transparent)]
    Plant(#[from] crate::plant::PlantError),
    #[error(transparent)]
    Arith(#[from] crate::error::ArithError),
}
