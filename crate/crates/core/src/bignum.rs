//! Arbitrary-precision unsigned integers over 16-bit words.
//!
//! The word size matches the word-serial multiplication schedule in
//! [`crate::mont`]: all values are little-endian vectors of `u16` with no
//! trailing zero words. Only the operations that the Montgomery data path
//! and the key/wire formats need are provided; anything heavier (gcd,
//! division, primality) lives with key generation, which uses a general
//! big-integer library.

use std::cmp::Ordering;
use std::fmt;

use crate::error::ArithError;

/// Bits per word. Fixed by the multiplication schedule.
pub const WORD_BITS: usize = 16;

/// Unsigned arbitrary-precision integer, little-endian 16-bit words.
#[derive(Clone, PartialEq, Eq, Hash)]
pub struct BigUint {
    words: Vec<u16>,
}

impl BigUint {
    pub fn zero() -> Self {
        BigUint { words: Vec::new() }
    }

    pub fn one() -> Self {
        BigUint { words: vec![1] }
    }

    pub fn from_u64(v: u64) -> Self {
        Self::from_u128(v as u128)
    }

    pub fn from_u128(v: u128) -> Self {
        let mut words = Vec::new();
        let mut rem = v;
        while rem != 0 {
            words.push((rem & 0xFFFF) as u16);
            rem >>= 16;
        }
        BigUint { words }
    }

    /// Build from little-endian words, trimming trailing zeros.
    pub fn from_words(mut words: Vec<u16>) -> Self {
        while words.last() == Some(&0) {
            words.pop();
        }
        BigUint { words }
    }

    /// Word at index `i`, zero beyond the stored length.
    #[inline]
    pub fn word(&self, i: usize) -> u16 {
        self.words.get(i).copied().unwrap_or(0)
    }

    pub fn words(&self) -> &[u16] {
        &self.words
    }

    pub fn word_len(&self) -> usize {
        self.words.len()
    }

    pub fn is_zero(&self) -> bool {
        self.words.is_empty()
    }

    pub fn is_odd(&self) -> bool {
        self.word(0) & 1 == 1
    }

    /// Bit length: position of the highest set bit plus one, 0 for zero.
    pub fn bits(&self) -> usize {
        match self.words.last() {
            None => 0,
            Some(&top) => (self.words.len() - 1) * WORD_BITS + (16 - top.leading_zeros() as usize),
        }
    }

    /// Bit at position `i` (little-endian).
    #[inline]
    pub fn bit(&self, i: usize) -> bool {
        (self.word(i / WORD_BITS) >> (i % WORD_BITS)) & 1 == 1
    }

    pub fn add(&self, other: &BigUint) -> BigUint {
        let n = self.words.len().max(other.words.len());
        let mut out = Vec::with_capacity(n + 1);
        let mut carry = 0u32;
        for i in 0..n {
            let s = self.word(i) as u32 + other.word(i) as u32 + carry;
            out.push((s & 0xFFFF) as u16);
            carry = s >> 16;
        }
        if carry != 0 {
            out.push(carry as u16);
        }
        BigUint::from_words(out)
    }

    /// `self - other`, or `None` if the result would be negative.
    pub fn checked_sub(&self, other: &BigUint) -> Option<BigUint> {
        if self < other {
            return None;
        }
        let mut out = Vec::with_capacity(self.words.len());
        let mut borrow = 0i32;
        for i in 0..self.words.len() {
            let d = self.word(i) as i32 - other.word(i) as i32 - borrow;
            if d < 0 {
                out.push((d + 0x10000) as u16);
                borrow = 1;
            } else {
                out.push(d as u16);
                borrow = 0;
            }
        }
        debug_assert_eq!(borrow, 0);
        Some(BigUint::from_words(out))
    }

    /// `2a mod m`; requires `a < m`.
    pub fn double_mod(&self, m: &BigUint) -> BigUint {
        debug_assert!(self < m);
        let d = self.add(self);
        if &d >= m {
            d.checked_sub(m).unwrap()
        } else {
            d
        }
    }

    /// Low `bits` bits as a new value.
    pub fn low_bits(&self, bits: usize) -> BigUint {
        let full = bits / WORD_BITS;
        let rem = bits % WORD_BITS;
        let mut words: Vec<u16> = self.words.iter().take(full).copied().collect();
        if rem != 0 {
            words.push(self.word(full) & ((1u16 << rem) - 1));
        }
        BigUint::from_words(words)
    }

    /// Low `bits` bits as a `u128`; `bits` must be at most 128.
    pub fn low_u128(&self, bits: usize) -> u128 {
        assert!(bits <= 128);
        let mut v = 0u128;
        for i in (0..bits.div_ceil(WORD_BITS)).rev() {
            v = (v << 16) | self.word(i) as u128;
        }
        if bits < 128 {
            v &= (1u128 << bits) - 1;
        }
        v
    }

    /// Whole value as `u128` if it fits.
    pub fn to_u128(&self) -> Option<u128> {
        if self.bits() > 128 {
            return None;
        }
        Some(self.low_u128(128))
    }

    /// Fixed-width big-endian byte encoding, as used on the wire.
    pub fn to_be_bytes(&self, width: usize) -> Result<Vec<u8>, ArithError> {
        let le = self.to_le_bytes();
        if le.len() > width {
            return Err(ArithError::ValueTooWide {
                bits: self.bits(),
                width_bytes: width,
            });
        }
        let mut out = vec![0u8; width];
        for (i, b) in le.iter().enumerate() {
            out[width - 1 - i] = *b;
        }
        Ok(out)
    }

    pub fn from_be_bytes(bytes: &[u8]) -> BigUint {
        let mut le: Vec<u8> = bytes.to_vec();
        le.reverse();
        BigUint::from_le_bytes(&le)
    }

    pub fn to_le_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(self.words.len() * 2);
        for w in &self.words {
            out.push((w & 0xFF) as u8);
            out.push((w >> 8) as u8);
        }
        while out.last() == Some(&0) {
            out.pop();
        }
        out
    }

    pub fn from_le_bytes(bytes: &[u8]) -> BigUint {
        let mut words = Vec::with_capacity(bytes.len() / 2 + 1);
        for chunk in bytes.chunks(2) {
            let lo = chunk[0] as u16;
            let hi = if chunk.len() > 1 { chunk[1] as u16 } else { 0 };
            words.push(lo | (hi << 8));
        }
        BigUint::from_words(words)
    }

    /// Lowercase hex, no prefix; zero renders as "0".
    pub fn to_hex(&self) -> String {
        if self.is_zero() {
            return "0".to_string();
        }
        let mut s = String::new();
        for (i, w) in self.words.iter().enumerate().rev() {
            if i == self.words.len() - 1 {
                s.push_str(&format!("{:x}", w));
            } else {
                s.push_str(&format!("{:04x}", w));
            }
        }
        s
    }

    pub fn from_hex(s: &str) -> Result<BigUint, ArithError> {
        let s = s.trim();
        if s.is_empty() || !s.bytes().all(|b| b.is_ascii_hexdigit()) {
            return Err(ArithError::BadHex);
        }
        let mut words = Vec::new();
        let bytes = s.as_bytes();
        let mut pos = bytes.len();
        while pos > 0 {
            let start = pos.saturating_sub(4);
            let chunk = std::str::from_utf8(&bytes[start..pos]).unwrap();
            words.push(u16::from_str_radix(chunk, 16).map_err(|_| ArithError::BadHex)?);
            pos = start;
        }
        Ok(BigUint::from_words(words))
    }
}

impl Ord for BigUint {
    fn cmp(&self, other: &Self) -> Ordering {
        match self.words.len().cmp(&other.words.len()) {
            Ordering::Equal => {}
            ord => return ord,
        }
        for i in (0..self.words.len()).rev() {
            match self.words[i].cmp(&other.words[i]) {
                Ordering::Equal => {}
                ord => return ord,
            }
        }
        Ordering::Equal
    }
}

impl PartialOrd for BigUint {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl fmt::Debug for BigUint {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "0x{}", self.to_hex())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trips_u128() {
        for v in [0u128, 1, 0xFFFF, 0x10000, u64::MAX as u128, u128::MAX] {
            assert_eq!(BigUint::from_u128(v).to_u128(), Some(v));
        }
    }

    #[test]
    fn bits_and_bit_access() {
        assert_eq!(BigUint::zero().bits(), 0);
        assert_eq!(BigUint::from_u64(1).bits(), 1);
        assert_eq!(BigUint::from_u64(35).bits(), 6);
        assert_eq!(BigUint::from_u64(0x10001).bits(), 17);
        let v = BigUint::from_u64(0b1011);
        assert!(v.bit(0) && v.bit(1) && !v.bit(2) && v.bit(3) && !v.bit(64));
    }

    #[test]
    fn add_sub_inverse() {
        let a = BigUint::from_u128(0x1234_5678_9abc_def0_1111);
        let b = BigUint::from_u128(0xffff_ffff_ffff_ffff);
        let s = a.add(&b);
        assert_eq!(s.checked_sub(&b).unwrap(), a);
        assert_eq!(b.checked_sub(&a), None);
    }

    #[test]
    fn hex_round_trip() {
        for v in [0u128, 9, 0xdead_beef, 0x1_0000_0000_0000_0000] {
            let x = BigUint::from_u128(v);
            assert_eq!(BigUint::from_hex(&x.to_hex()).unwrap(), x);
        }
        assert!(BigUint::from_hex("xyz").is_err());
        assert!(BigUint::from_hex("").is_err());
    }

    #[test]
    fn be_bytes_fixed_width() {
        let x = BigUint::from_u64(0x0102_0304);
        let b = x.to_be_bytes(6).unwrap();
        assert_eq!(b, vec![0, 0, 1, 2, 3, 4]);
        assert_eq!(BigUint::from_be_bytes(&b), x);
        assert!(x.to_be_bytes(3).is_err());
    }

    #[test]
    fn low_bits_mask() {
        let x = BigUint::from_u128(0xABCDE);
        assert_eq!(x.low_u128(8), 0xDE);
        assert_eq!(x.low_bits(12).to_u128(), Some(0xCDE));
        assert_eq!(x.low_u128(128), 0xABCDE);
    }

    #[test]
    fn double_mod_stays_reduced() {
        let m = BigUint::from_u64(1_000_003);
        let mut a = BigUint::one();
        for _ in 0..200 {
            a = a.double_mod(&m);
            assert!(a < m);
        }
        // 2^200 mod 1000003 computed independently.
        let mut expect = 1u64;
        for _ in 0..200 {
            expect = (expect * 2) % 1_000_003;
        }
        assert_eq!(a.to_u128(), Some(expect as u128));
    }
}
