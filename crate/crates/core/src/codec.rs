//! Fixed-point coding between reals, the grid `Q(n, m)` and the integer
//! ring `Z_{2^n'}` that rides inside Paillier plaintexts.
//!
//! `Q(n, m)` is the set of two's-complement fixed-point numbers with `n`
//! total bits, `m` of them fractional: multiples of `2^-m` in
//! `[-2^(n-m-1), 2^(n-m-1) - 2^-m]`. A value enters the integer ring scaled
//! by a step-dependent power `2^(s*m)` and reduced mod `2^n'`; negatives
//! wrap two's-complement style. The scale exponent `s` is tracked beside
//! the residue so decoding can undo it.

use thiserror::Error;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum CodecError {
    #[error("invalid fixed-point spec: require 0 <= m < n <= n' <= {max}", max = MAX_N_PRIME)]
    BadSpec,
    #[error("encoded magnitude needs {needed} bits but n' = {n_prime}")]
    Overflow { needed: u32, n_prime: u32 },
    #[error("value with {frac} fractional bits cannot be encoded at scale {scale}")]
    ScaleTooSmall { frac: u32, scale: u32 },
    #[error("infinite reset period requires an explicit n' override")]
    UnboundedWidth,
}

/// Residues are carried in `u128`; one bit is reserved for the sign read.
pub const MAX_N_PRIME: u32 = 120;

/// Reset period of the controller state: every `T` steps, or never.
#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub enum ResetPeriod {
    Steps(u32),
    Infinite,
}

impl ResetPeriod {
    /// True at step indices `k` with `(k + 1) mod T = 0`.
    pub fn resets_after(&self, k: u64) -> bool {
        match self {
            ResetPeriod::Steps(t) => (k + 1).is_multiple_of(*t as u64),
            ResetPeriod::Infinite => false,
        }
    }

    /// `k mod T`, which is `k` itself for the infinite period.
    pub fn phase(&self, k: u64) -> u64 {
        match self {
            ResetPeriod::Steps(t) => k % (*t as u64),
            ResetPeriod::Infinite => k,
        }
    }
}

/// Width parameters: `n` total bits, `m` fractional bits, `n'` ring width.
#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub struct FixedSpec {
    pub n: u32,
    pub m: u32,
    pub n_prime: u32,
}

/// An exact dyadic rational `mantissa * 2^-frac_bits`.
#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub struct Fixed {
    pub mantissa: i128,
    pub frac_bits: u32,
}

impl Fixed {
    pub fn from_int(v: i64) -> Fixed {
        Fixed {
            mantissa: v as i128,
            frac_bits: 0,
        }
    }

    pub fn to_f64(&self) -> f64 {
        self.mantissa as f64 / (self.frac_bits as f64).exp2()
    }

    pub fn is_integer(&self) -> bool {
        self.frac_bits == 0 || self.mantissa % (1i128 << self.frac_bits) == 0
    }
}

/// Element of `Z_{2^n'}` tagged with its scale exponent `s`: the residue is
/// `2^(s*m)` times the represented value, mod `2^n'`.
#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub struct EncodedInt {
    pub residue: u128,
    pub scale_exp: u32,
}

impl FixedSpec {
    pub fn new(n: u32, m: u32, n_prime: u32) -> Result<FixedSpec, CodecError> {
        if m >= n || n > n_prime || n_prime > MAX_N_PRIME {
            return Err(CodecError::BadSpec);
        }
        Ok(FixedSpec { n, m, n_prime })
    }

    fn mantissa_max(&self) -> i128 {
        (1i128 << (self.n - 1)) - 1
    }

    fn mantissa_min(&self) -> i128 {
        -(1i128 << (self.n - 1))
    }

    /// Largest representable value, `2^(n-m-1) - 2^-m`.
    pub fn max_value(&self) -> f64 {
        self.mantissa_max() as f64 / (self.m as f64).exp2()
    }

    /// Nearest element of `Q(n, m)`, ties away from zero, out-of-range
    /// values saturating to the grid extremes.
    pub fn quantize(&self, x: f64) -> Fixed {
        self.quantize_flagged(x).0
    }

    /// Quantize and report whether saturation occurred.
    pub fn quantize_flagged(&self, x: f64) -> (Fixed, bool) {
        let scaled = x * (self.m as f64).exp2();
        let (mantissa, saturated) = if scaled.is_nan() {
            (0, true)
        } else if scaled >= self.mantissa_max() as f64 {
            (self.mantissa_max(), scaled > self.mantissa_max() as f64)
        } else if scaled <= self.mantissa_min() as f64 {
            (self.mantissa_min(), scaled < self.mantissa_min() as f64)
        } else {
            // f64::round ties away from zero, matching the grid convention.
            (scaled.round() as i128, false)
        };
        (
            Fixed {
                mantissa,
                frac_bits: self.m,
            },
            saturated,
        )
    }

    fn mask(&self) -> u128 {
        if self.n_prime == 128 {
            u128::MAX
        } else {
            (1u128 << self.n_prime) - 1
        }
    }

    /// Map `2^(s*m) * f` into `Z_{2^n'}` (two's complement for negatives).
    pub fn encode(&self, f: &Fixed, scale_exp: u32) -> Result<EncodedInt, CodecError> {
        let target_frac = scale_exp * self.m;
        let signed = if target_frac >= f.frac_bits {
            let shift = target_frac - f.frac_bits;
            if shift >= 127 {
                return Err(CodecError::Overflow {
                    needed: shift + 1,
                    n_prime: self.n_prime,
                });
            }
            f.mantissa.checked_shl(shift).ok_or(CodecError::Overflow {
                needed: 128,
                n_prime: self.n_prime,
            })?
        } else {
            let shift = f.frac_bits - target_frac;
            if f.mantissa % (1i128 << shift) != 0 {
                return Err(CodecError::ScaleTooSmall {
                    frac: f.frac_bits,
                    scale: scale_exp,
                });
            }
            f.mantissa >> shift
        };
        // The signed magnitude must sit inside the two's-complement range of
        // n' bits, otherwise the wraparound is not invertible.
        let limit = 1i128 << (self.n_prime - 1);
        if signed >= limit || signed < -limit {
            let needed = 128 - signed.unsigned_abs().leading_zeros() + 1;
            return Err(CodecError::Overflow {
                needed,
                n_prime: self.n_prime,
            });
        }
        Ok(EncodedInt {
            residue: (signed as u128) & self.mask(),
            scale_exp,
        })
    }

    /// Encode an already-integer signal at scale 0 (the arrangement used
    /// when sensors deliver integer counts).
    pub fn encode_integer(&self, v: i64) -> Result<EncodedInt, CodecError> {
        self.encode(&Fixed::from_int(v), 0)
    }

    /// Two's-complement sign recovery and rescale: the exact rational the
    /// residue represents, as a `Fixed` with `s*m` fractional bits.
    pub fn decode(&self, e: &EncodedInt) -> Fixed {
        let residue = e.residue & self.mask();
        let signed = if residue >= 1u128 << (self.n_prime - 1) {
            residue as i128 - (1i128 << self.n_prime)
        } else {
            residue as i128
        };
        Fixed {
            mantissa: signed,
            frac_bits: e.scale_exp * self.m,
        }
    }
}

/// Ring width that keeps the resetting recursion overflow-free:
/// `(n_x + 1)T + n_u + n(T + 2)`. The experiment overrides this with an
/// explicit width; an infinite reset period has no finite default.
pub fn derive_n_prime(
    n_x: u32,
    n_u: u32,
    reset: ResetPeriod,
    n: u32,
) -> Result<u32, CodecError> {
    match reset {
        ResetPeriod::Steps(t) => Ok((n_x + 1) * t + n_u + n * (t + 2)),
        ResetPeriod::Infinite => Err(CodecError::UnboundedWidth),
    }
}
