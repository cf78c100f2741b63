//! Binary wire protocol between the plant interface and the controller.
//!
//! Frame layout, all integers big-endian:
//!
//! ```text
//! offset 0   msg_type     u8   (0x01 measurement, 0x02 control,
//!                               0x03 setpoint, 0x04 hello, 0x05 shutdown)
//! offset 1   seq          u64  (step counter, strictly increasing)
//! offset 9   payload_len  u32
//! offset 13  payload
//! ```
//!
//! Ciphertext batches concatenate fixed-width big-endian residues of
//! `2(w+1)` bytes each; transmitted values stay in the modified Montgomery
//! range `< 2N^2`. The hello payload carries the session parameters below
//! (44 bytes); both endpoints must agree on all of them before any
//! ciphertext flows.

use std::io::{Read, Write};

use thiserror::Error;

use crate::codec::ResetPeriod;
use crate::controller::ControllerSpec;
use crate::paillier::{Ciphertext, PublicKey};

pub const MSG_MEASUREMENT: u8 = 0x01;
pub const MSG_CONTROL: u8 = 0x02;
pub const MSG_SETPOINT: u8 = 0x03;
pub const MSG_HELLO: u8 = 0x04;
pub const MSG_SHUTDOWN: u8 = 0x05;

pub const HEADER_LEN: usize = 13;
pub const HELLO_LEN: usize = 44;
/// Upper bound accepted for a payload, against garbage lengths.
pub const MAX_PAYLOAD: u32 = 1 << 24;

#[derive(Debug, Error)]
pub enum WireError {
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("unknown message type 0x{0:02x}")]
    UnknownType(u8),
    #[error("payload length {got} invalid: {reason}")]
    BadLength { got: usize, reason: String },
    #[error("hello payload malformed")]
    BadHello,
    #[error("ciphertext out of range")]
    BadCiphertext,
}

#[derive(Clone, PartialEq, Eq, Debug)]
pub struct Frame {
    pub msg_type: u8,
    pub seq: u64,
    pub payload: Vec<u8>,
}

pub fn write_frame<W: Write>(w: &mut W, frame: &Frame) -> std::io::Result<()> {
    let mut header = [0u8; HEADER_LEN];
    header[0] = frame.msg_type;
    header[1..9].copy_from_slice(&frame.seq.to_be_bytes());
    header[9..13].copy_from_slice(&(frame.payload.len() as u32).to_be_bytes());
    w.write_all(&header)?;
    w.write_all(&frame.payload)?;
    w.flush()
}

pub fn read_frame<R: Read>(r: &mut R) -> Result<Frame, WireError> {
    let mut header = [0u8; HEADER_LEN];
    r.read_exact(&mut header)?;
    let msg_type = header[0];
    if !(MSG_MEASUREMENT..=MSG_SHUTDOWN).contains(&msg_type) {
        return Err(WireError::UnknownType(msg_type));
    }
    let seq = u64::from_be_bytes(header[1..9].try_into().unwrap());
    let len = u32::from_be_bytes(header[9..13].try_into().unwrap());
    if len > MAX_PAYLOAD {
        return Err(WireError::BadLength {
            got: len as usize,
            reason: "exceeds maximum".into(),
        });
    }
    let mut payload = vec![0u8; len as usize];
    r.read_exact(&mut payload)?;
    Ok(Frame {
        msg_type,
        seq,
        payload,
    })
}

/// Structural parameters both endpoints must agree on, exchanged in hello.
#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub struct SessionParams {
    pub key_bits: u32,
    pub word_count: u32,
    pub n_prime: u32,
    pub m: u32,
    pub n_x: u32,
    pub n_y: u32,
    pub n_u: u32,
    /// Reset period; 0 encodes the infinite period.
    pub reset_period: u64,
    pub sample_period_us: u64,
}

impl SessionParams {
    pub fn for_session(
        spec: &ControllerSpec,
        pk: &PublicKey,
        sample_period_us: u64,
    ) -> SessionParams {
        let d = spec.dims();
        SessionParams {
            key_bits: pk.key_bits() as u32,
            word_count: pk.word_count() as u32,
            n_prime: spec.codec().n_prime,
            m: spec.codec().m,
            n_x: d.n_x as u32,
            n_y: d.n_y as u32,
            n_u: d.n_u as u32,
            reset_period: match spec.reset() {
                ResetPeriod::Steps(t) => t as u64,
                ResetPeriod::Infinite => 0,
            },
            sample_period_us,
        }
    }

    pub fn encode(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(HELLO_LEN);
        for v in [
            self.key_bits,
            self.word_count,
            self.n_prime,
            self.m,
            self.n_x,
            self.n_y,
            self.n_u,
        ] {
            out.extend_from_slice(&v.to_be_bytes());
        }
        out.extend_from_slice(&self.reset_period.to_be_bytes());
        out.extend_from_slice(&self.sample_period_us.to_be_bytes());
        out
    }

    pub fn decode(payload: &[u8]) -> Result<SessionParams, WireError> {
        if payload.len() != HELLO_LEN {
            return Err(WireError::BadHello);
        }
        let u32_at = |i: usize| u32::from_be_bytes(payload[i..i + 4].try_into().unwrap());
        Ok(SessionParams {
            key_bits: u32_at(0),
            word_count: u32_at(4),
            n_prime: u32_at(8),
            m: u32_at(12),
            n_x: u32_at(16),
            n_y: u32_at(20),
            n_u: u32_at(24),
            reset_period: u64::from_be_bytes(payload[28..36].try_into().unwrap()),
            sample_period_us: u64::from_be_bytes(payload[36..44].try_into().unwrap()),
        })
    }
}

/// Concatenate ciphertexts into a batch payload of fixed-width fields.
pub fn encode_batch(pk: &PublicKey, cts: &[Ciphertext]) -> Result<Vec<u8>, WireError> {
    let width = pk.ciphertext_width();
    let mut out = Vec::with_capacity(width * cts.len());
    for ct in cts {
        out.extend_from_slice(&ct.to_bytes(pk).map_err(|_| WireError::BadCiphertext)?);
    }
    Ok(out)
}

/// Split a batch payload into exactly `expect` ciphertexts.
pub fn decode_batch(
    pk: &PublicKey,
    payload: &[u8],
    expect: usize,
) -> Result<Vec<Ciphertext>, WireError> {
    let width = pk.ciphertext_width();
    if payload.len() != width * expect {
        return Err(WireError::BadLength {
            got: payload.len(),
            reason: format!("expected {expect} ciphertexts of {width} bytes"),
        });
    }
    payload
        .chunks(width)
        .map(|chunk| Ciphertext::from_bytes(pk, chunk).map_err(|_| WireError::BadCiphertext))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bignum::BigUint;
    use crate::paillier::{encrypt_deterministic, KeyPair};

    #[test]
    fn frame_bytes_are_pinned() {
        let frame = Frame {
            msg_type: MSG_CONTROL,
            seq: 0x0102_0304_0506_0708,
            payload: vec![0xAA, 0xBB],
        };
        let mut buf = Vec::new();
        write_frame(&mut buf, &frame).unwrap();
        assert_eq!(
            buf,
            vec![
                0x02, // type
                0x01, 0x02, 0x03, 0x04, 0x05, 0x06, 0x07, 0x08, // seq
                0x00, 0x00, 0x00, 0x02, // len
                0xAA, 0xBB,
            ]
        );
        let back = read_frame(&mut buf.as_slice()).unwrap();
        assert_eq!(back, frame);
    }

    #[test]
    fn rejects_unknown_type_and_oversize() {
        let mut buf = Vec::new();
        write_frame(
            &mut buf,
            &Frame {
                msg_type: 0x09,
                seq: 0,
                payload: vec![],
            },
        )
        .unwrap();
        assert!(matches!(
            read_frame(&mut buf.as_slice()),
            Err(WireError::UnknownType(0x09))
        ));

        let mut bad = vec![MSG_HELLO];
        bad.extend_from_slice(&0u64.to_be_bytes());
        bad.extend_from_slice(&(MAX_PAYLOAD + 1).to_be_bytes());
        assert!(matches!(
            read_frame(&mut bad.as_slice()),
            Err(WireError::BadLength { .. })
        ));
    }

    #[test]
    fn hello_roundtrip_pinned_layout() {
        let p = SessionParams {
            key_bits: 64,
            word_count: 9,
            n_prime: 32,
            m: 7,
            n_x: 4,
            n_y: 3,
            n_u: 1,
            reset_period: 0,
            sample_period_us: 2000,
        };
        let enc = p.encode();
        assert_eq!(enc.len(), HELLO_LEN);
        assert_eq!(&enc[0..4], &[0, 0, 0, 64]);
        assert_eq!(&enc[36..44], &2000u64.to_be_bytes());
        assert_eq!(SessionParams::decode(&enc).unwrap(), p);
        assert!(SessionParams::decode(&enc[1..]).is_err());
    }

    #[test]
    fn batch_roundtrip_and_length_check() {
        let kp = KeyPair::from_primes_u64(5, 7).unwrap();
        let pk = &kp.public;
        let cts: Vec<Ciphertext> = (0..3)
            .map(|t| encrypt_deterministic(pk, &BigUint::from_u64(t)).unwrap())
            .collect();
        let payload = encode_batch(pk, &cts).unwrap();
        assert_eq!(payload.len(), 3 * pk.ciphertext_width());
        let back = decode_batch(pk, &payload, 3).unwrap();
        for (a, b) in back.iter().zip(&cts) {
            assert_eq!(a.value(), b.value());
        }
        assert!(decode_batch(pk, &payload, 2).is_err());
        assert!(decode_batch(pk, &payload[1..], 3).is_err());
    }
}
