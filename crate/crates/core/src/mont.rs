//! Word-serial Montgomery arithmetic over an odd modulus.
//!
//! Multiplication is the coarsely integrated operand scanning (CIOS) method
//! on 16-bit words, modified to omit the final conditional subtraction:
//! operands and results live in the half-open range `[0, 2M)` rather than
//! `[0, M)`. A value leaves this "modified" form only through an explicit
//! multiplication by 1 ([`MontCtx::canonicalize`]).
//!
//! The radix is `R = 2^(16(w+1))` for a context with `w` words. A system
//! that runs several moduli side by side (e.g. `N`, `N^2`, `N^2 + 2`)
//! builds every context with [`MontCtx::with_word_count`] so that all of
//! them share one radix; `R >= 4M` always holds, which is what keeps the
//! subtraction-free multiplier closed over `[0, 2M)`.
//!
//! Exponentiation is the right-to-left binary ladder. Both multiplications
//! of an iteration are always performed; when the exponent bit is 0 the
//! accumulator result is discarded. The number of multiplications per call
//! therefore depends only on the fixed per-call-site exponent width, never
//! on the exponent value.

use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;

use crate::bignum::{BigUint, WORD_BITS};
use crate::error::ArithError;

static NEXT_CTX_ID: AtomicU64 = AtomicU64::new(1);

/// Precomputed parameters for Montgomery arithmetic modulo one odd `M`.
pub struct MontCtx {
    modulus: BigUint,
    two_m: BigUint,
    word_count: usize,
    m_prime: u16,
    r_mod_m: BigUint,
    r2_mod_m: BigUint,
    /// Modulus words padded to `word_count + 1` for the inner loop.
    mod_words: Vec<u16>,
    id: u64,
    mults: AtomicU64,
}

/// A residue in the modified Montgomery form of one context: `value < 2M`
/// and `value = aR (mod M)` for the represented integer `a`.
#[derive(Clone, PartialEq, Eq, Debug)]
pub struct MontForm {
    value: BigUint,
    ctx_id: u64,
}

impl MontForm {
    pub fn value(&self) -> &BigUint {
        &self.value
    }

    pub fn ctx_id(&self) -> u64 {
        self.ctx_id
    }

    /// Rebind a raw residue to a context, checking only the range contract.
    pub fn from_raw(ctx: &MontCtx, value: BigUint) -> Result<MontForm, ArithError> {
        ctx.check_range(&value)?;
        Ok(MontForm {
            value,
            ctx_id: ctx.id,
        })
    }
}

/// Smallest `w` with `modulus < 2^(16w)`.
pub fn word_count_for(modulus: &BigUint) -> usize {
    modulus.bits().div_ceil(WORD_BITS)
}

impl MontCtx {
    /// Context for a standalone modulus; `w` is the smallest word count
    /// that holds the modulus.
    pub fn new(modulus: BigUint) -> Result<Arc<MontCtx>, ArithError> {
        let w = word_count_for(&modulus);
        Self::with_word_count(modulus, w)
    }

    /// Context with an externally chosen word count, for modulus families
    /// sharing one radix.
    pub fn with_word_count(modulus: BigUint, word_count: usize) -> Result<Arc<MontCtx>, ArithError> {
        if !modulus.is_odd() {
            return Err(ArithError::EvenModulus);
        }
        if modulus.bits() < 2 {
            return Err(ArithError::ModulusTooSmall);
        }
        if modulus.bits() > WORD_BITS * word_count {
            return Err(ArithError::WordCountTooSmall);
        }

        // M' with M*M' = -1 (mod 2^16), by Hensel lifting of the word inverse.
        let m0 = modulus.word(0) as u32;
        let mut inv: u32 = 1;
        for _ in 0..4 {
            inv = inv.wrapping_mul(2u32.wrapping_sub(m0.wrapping_mul(inv)));
        }
        let inv16 = inv & 0xFFFF;
        let m_prime = ((0x1_0000 - inv16) & 0xFFFF) as u16;
        debug_assert_eq!((m0.wrapping_mul(m_prime as u32)) & 0xFFFF, 0xFFFF);

        // R mod M and R^2 mod M by repeated doubling; exact and division-free.
        let radix_bits = WORD_BITS * (word_count + 1);
        let mut acc = BigUint::one();
        for _ in 0..radix_bits {
            acc = acc.double_mod(&modulus);
        }
        let r_mod_m = acc.clone();
        for _ in 0..radix_bits {
            acc = acc.double_mod(&modulus);
        }
        let r2_mod_m = acc;

        let mut mod_words = vec![0u16; word_count + 1];
        for (i, w) in mod_words.iter_mut().enumerate() {
            *w = modulus.word(i);
        }

        Ok(Arc::new(MontCtx {
            two_m: modulus.add(&modulus),
            modulus,
            word_count,
            m_prime,
            r_mod_m,
            r2_mod_m,
            mod_words,
            id: NEXT_CTX_ID.fetch_add(1, Ordering::Relaxed),
            mults: AtomicU64::new(0),
        }))
    }

    pub fn modulus(&self) -> &BigUint {
        &self.modulus
    }

    pub fn word_count(&self) -> usize {
        self.word_count
    }

    pub fn m_prime(&self) -> u16 {
        self.m_prime
    }

    /// `R mod M`: the Montgomery form of 1.
    pub fn r_mod_m(&self) -> &BigUint {
        &self.r_mod_m
    }

    /// `R^2 mod M`: the to-Montgomery conversion constant.
    pub fn r2_mod_m(&self) -> &BigUint {
        &self.r2_mod_m
    }

    /// Radix exponent: `R = 2^radix_bits`.
    pub fn radix_bits(&self) -> usize {
        WORD_BITS * (self.word_count + 1)
    }

    pub fn id(&self) -> u64 {
        self.id
    }

    /// Count of multiplications executed so far on this context.
    pub fn mult_count(&self) -> u64 {
        self.mults.load(Ordering::Relaxed)
    }

    #[inline]
    fn check_range(&self, v: &BigUint) -> Result<(), ArithError> {
        if v >= &self.two_m {
            return Err(ArithError::OperandOutOfRange);
        }
        Ok(())
    }

    /// CIOS multiplication without the final conditional subtraction:
    /// returns `T < 2M` with `T = x*y*R^(-1) (mod M)`. Exactly `w + 1`
    /// outer iterations are executed regardless of the operand values.
    pub fn mont_mult(&self, x: &BigUint, y: &BigUint) -> Result<BigUint, ArithError> {
        self.check_range(x)?;
        self.check_range(y)?;
        let wp1 = self.word_count + 1;
        let mut t = vec![0u16; wp1 + 1];
        let x0 = x.word(0) as u64;
        for i in 0..wp1 {
            let yi = y.word(i) as u64;
            let sum0 = t[0] as u64 + ((x0 * yi) & 0xFFFF);
            let m = sum0.wrapping_mul(self.m_prime as u64) & 0xFFFF;
            // Fused pass: (T + X*yi + m*M) >> 16. The low word cancels by
            // the choice of m, so the shift is a one-slot write offset.
            let acc0 = t[0] as u64 + x0 * yi + m * self.mod_words[0] as u64;
            debug_assert_eq!(acc0 & 0xFFFF, 0);
            let mut carry = acc0 >> 16;
            for j in 1..wp1 {
                let acc =
                    t[j] as u64 + x.word(j) as u64 * yi + m * self.mod_words[j] as u64 + carry;
                t[j - 1] = acc as u16;
                carry = acc >> 16;
            }
            let acc = t[wp1] as u64 + carry;
            t[wp1 - 1] = acc as u16;
            t[wp1] = (acc >> 16) as u16;
        }
        self.mults.fetch_add(1, Ordering::Relaxed);
        let out = BigUint::from_words(t);
        debug_assert!(out < self.two_m);
        Ok(out)
    }

    /// Right-to-left binary exponentiation in the modified Montgomery form:
    /// `base` is a Montgomery-form residue (`< 2M`), the result is the
    /// Montgomery form of `base_int^exponent`. `exp_bits` is the per-call-site
    /// exponent width; exactly `2*exp_bits` multiplications are issued.
    pub fn mont_exp(
        &self,
        base: &BigUint,
        exponent: &BigUint,
        exp_bits: usize,
    ) -> Result<BigUint, ArithError> {
        self.exp_inner(base, exponent, exp_bits, false)
    }

    /// Same as [`MontCtx::mont_exp`] but evaluates the accumulate and the
    /// square of each iteration on two threads. Output is bit-identical to
    /// the sequential ladder.
    pub fn mont_exp_concurrent(
        &self,
        base: &BigUint,
        exponent: &BigUint,
        exp_bits: usize,
    ) -> Result<BigUint, ArithError> {
        self.exp_inner(base, exponent, exp_bits, true)
    }

    fn exp_inner(
        &self,
        base: &BigUint,
        exponent: &BigUint,
        exp_bits: usize,
        concurrent: bool,
    ) -> Result<BigUint, ArithError> {
        self.check_range(base)?;
        if exp_bits == 0 || exponent.bits() > exp_bits {
            return Err(ArithError::ExponentTooWide {
                bits: exponent.bits(),
                limit: exp_bits,
            });
        }
        let mut p = self.r_mod_m.clone();
        let mut b = base.clone();
        for i in 0..exp_bits {
            let (acc, sq) = if concurrent {
                rayon::join(|| self.mont_mult(&p, &b), || self.mont_mult(&b, &b))
            } else {
                (self.mont_mult(&p, &b), self.mont_mult(&b, &b))
            };
            // The accumulate is computed unconditionally and discarded on a
            // zero bit, keeping the multiplication count exponent-independent.
            let acc = acc?;
            if exponent.bit(i) {
                p = acc;
            }
            b = sq?;
        }
        Ok(p)
    }

    /// Conversion into Montgomery form; `a` must be canonical (`< M`).
    pub fn to_mont(&self, a: &BigUint) -> Result<MontForm, ArithError> {
        if a >= &self.modulus {
            return Err(ArithError::OperandNotCanonical);
        }
        Ok(MontForm {
            value: self.mont_mult(a, &self.r2_mod_m)?,
            ctx_id: self.id,
        })
    }

    /// Conversion out of Montgomery form to the canonical representative.
    pub fn from_mont(&self, x: &MontForm) -> Result<BigUint, ArithError> {
        if x.ctx_id != self.id {
            return Err(ArithError::ContextMismatch);
        }
        self.canonicalize(&x.value)
    }

    /// Montgomery multiplication by 1 followed by the one subtraction that
    /// the multiplier itself omits: maps any `v < 2M` in Montgomery form to
    /// the exact represented integer `< M`.
    pub fn canonicalize(&self, v: &BigUint) -> Result<BigUint, ArithError> {
        let t = self.mont_mult(v, &BigUint::one())?;
        Ok(match t.checked_sub(&self.modulus) {
            Some(reduced) => reduced,
            None => t,
        })
    }
}

impl std::fmt::Debug for MontCtx {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("MontCtx")
            .field("modulus", &self.modulus)
            .field("word_count", &self.word_count)
            .field("m_prime", &self.m_prime)
            .finish()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ctx35() -> Arc<MontCtx> {
        MontCtx::new(BigUint::from_u64(35)).unwrap()
    }

    #[test]
    fn ctx_parameters_m35() {
        let ctx = ctx35();
        assert_eq!(ctx.word_count(), 1);
        assert_eq!(ctx.radix_bits(), 32);
        assert_eq!(ctx.m_prime(), 20597);
        assert_eq!((35u64 * 20597) % 65536, 65535);
        // R = 2^32, R mod 35 and R^2 mod 35 against direct arithmetic.
        assert_eq!(ctx.r_mod_m().to_u128(), Some((1u128 << 32) % 35));
        assert_eq!(
            ctx.r2_mod_m().to_u128(),
            Some((((1u128 << 32) % 35) * ((1u128 << 32) % 35)) % 35)
        );
    }

    #[test]
    fn word_count_rules() {
        assert_eq!(word_count_for(&BigUint::from_u64(35)), 1);
        assert_eq!(word_count_for(&BigUint::from_u64(0xFFFF)), 1);
        assert_eq!(word_count_for(&BigUint::from_u64(0x10001)), 2);
    }

    #[test]
    fn rejects_bad_moduli() {
        assert_eq!(
            MontCtx::new(BigUint::from_u64(36)).err(),
            Some(ArithError::EvenModulus)
        );
        assert_eq!(
            MontCtx::new(BigUint::from_u64(1)).err(),
            Some(ArithError::ModulusTooSmall)
        );
        assert_eq!(
            MontCtx::with_word_count(BigUint::from_u64(0x10001), 1).err(),
            Some(ArithError::WordCountTooSmall)
        );
    }

    /// Naive oracle: x*y*R^(-1) mod m via scan for the inverse of R.
    fn oracle_mult(m: u64, radix_bits: usize, x: u64, y: u64) -> u64 {
        let r = (1u128 << radix_bits) % m as u128;
        let r_inv = (0..m).find(|cand| (r * *cand as u128) % m as u128 == 1).unwrap();
        ((x as u128 * y as u128 % m as u128) * r_inv as u128 % m as u128) as u64
    }

    #[test]
    fn mult_identity_case() {
        let ctx = ctx35();
        let r = ctx.r_mod_m().clone();
        let out = ctx.mont_mult(&r, &r).unwrap();
        assert_eq!(
            ctx.canonicalize(&out).unwrap().to_u128(),
            ctx.canonicalize(&r).unwrap().to_u128()
        );
    }

    #[test]
    fn mult_exhaustive_small_moduli() {
        for m in [35u64, 77, 143] {
            let ctx = MontCtx::new(BigUint::from_u64(m)).unwrap();
            for x in 0..2 * m {
                for y in 0..2 * m {
                    let t = ctx
                        .mont_mult(&BigUint::from_u64(x), &BigUint::from_u64(y))
                        .unwrap();
                    assert!(t < BigUint::from_u64(2 * m));
                    let got = t.to_u128().unwrap() % m as u128;
                    assert_eq!(got as u64, oracle_mult(m, ctx.radix_bits(), x, y));
                }
            }
        }
    }

    #[test]
    fn mult_range_check() {
        let ctx = ctx35();
        assert_eq!(
            ctx.mont_mult(&BigUint::from_u64(70), &BigUint::one()).err(),
            Some(ArithError::OperandOutOfRange)
        );
    }

    #[test]
    fn to_from_roundtrip_exhaustive() {
        let ctx = ctx35();
        for a in 0..35u64 {
            let f = ctx.to_mont(&BigUint::from_u64(a)).unwrap();
            assert_eq!(ctx.from_mont(&f).unwrap().to_u128(), Some(a as u128));
            // Modified form: the same residue with M added decodes identically.
            let shifted = f.value().add(&BigUint::from_u64(35));
            assert_eq!(ctx.canonicalize(&shifted).unwrap().to_u128(), Some(a as u128));
        }
        assert!(ctx.to_mont(&BigUint::from_u64(35)).is_err());
    }

    #[test]
    fn from_mont_of_r_is_one() {
        let ctx = ctx35();
        assert_eq!(ctx.canonicalize(ctx.r_mod_m()).unwrap().to_u128(), Some(1));
    }

    #[test]
    fn context_binding_enforced() {
        let a = ctx35();
        let b = MontCtx::new(BigUint::from_u64(77)).unwrap();
        let f = a.to_mont(&BigUint::from_u64(3)).unwrap();
        assert_eq!(b.from_mont(&f).err(), Some(ArithError::ContextMismatch));
    }

    #[test]
    fn exp_edge_exponents() {
        let ctx = ctx35();
        let base = ctx.to_mont(&BigUint::from_u64(2)).unwrap();
        // exponent 0 -> Montgomery 1
        let p = ctx.mont_exp(base.value(), &BigUint::zero(), 4).unwrap();
        assert_eq!(ctx.canonicalize(&p).unwrap().to_u128(), Some(1));
        // exponent 1 -> base value
        let p = ctx.mont_exp(base.value(), &BigUint::one(), 4).unwrap();
        assert_eq!(ctx.canonicalize(&p).unwrap().to_u128(), Some(2));
        // 2^12 mod 35 = 1
        let p = ctx.mont_exp(base.value(), &BigUint::from_u64(12), 4).unwrap();
        assert_eq!(ctx.canonicalize(&p).unwrap().to_u128(), Some(1));
    }

    #[test]
    fn exp_width_contract() {
        let ctx = ctx35();
        let base = ctx.to_mont(&BigUint::from_u64(2)).unwrap();
        assert!(matches!(
            ctx.mont_exp(base.value(), &BigUint::from_u64(12), 3),
            Err(ArithError::ExponentTooWide { .. })
        ));
    }

    #[test]
    fn exp_matches_naive_powers() {
        let ctx = ctx35();
        for base in 0..35u64 {
            let bf = ctx.to_mont(&BigUint::from_u64(base)).unwrap();
            let mut expect = 1u64;
            for e in 0..=16u64 {
                let p = ctx.mont_exp(bf.value(), &BigUint::from_u64(e), 5).unwrap();
                assert_eq!(ctx.canonicalize(&p).unwrap().to_u128(), Some(expect as u128));
                expect = expect * base % 35;
            }
        }
    }

    #[test]
    fn exp_work_is_exponent_independent() {
        let ctx = ctx35();
        let base = ctx.to_mont(&BigUint::from_u64(3)).unwrap();
        let l = 8;
        let count_for = |e: u64| {
            let before = ctx.mult_count();
            ctx.mont_exp(base.value(), &BigUint::from_u64(e), l).unwrap();
            ctx.mult_count() - before
        };
        let zero = count_for(0);
        assert_eq!(zero, 2 * l as u64);
        assert_eq!(count_for((1 << l) - 1), zero);
        for e in [1u64, 5, 100, 170, 255] {
            assert_eq!(count_for(e), zero);
        }
    }

    #[test]
    fn extreme_operands_stay_closed() {
        // operands at the very top of the modified range
        for m in [35u64, 65_537, 999_999_937] {
            let ctx = MontCtx::new(BigUint::from_u64(m)).unwrap();
            let top = BigUint::from_u64(2 * m - 1);
            let t = ctx.mont_mult(&top, &top).unwrap();
            assert!(t < BigUint::from_u64(2 * m));
            let tv = t.to_u128().unwrap() % m as u128;
            let r = (1u128 << ctx.radix_bits()) % m as u128;
            // t * R = top^2 (mod M)
            assert_eq!(
                tv * r % m as u128,
                (2 * m as u128 - 1) * (2 * m as u128 - 1) % m as u128
            );
        }
    }

    #[test]
    fn concurrent_exp_bit_identical() {
        let ctx = MontCtx::new(BigUint::from_u64(1_000_003)).unwrap();
        for (b, e) in [(2u64, 12345u64), (999_999, 54321), (12345, 0xFFFF)] {
            let bf = ctx.to_mont(&BigUint::from_u64(b)).unwrap();
            let seq = ctx.mont_exp(bf.value(), &BigUint::from_u64(e), 17).unwrap();
            let par = ctx
                .mont_exp_concurrent(bf.value(), &BigUint::from_u64(e), 17)
                .unwrap();
            assert_eq!(seq, par);
        }
    }
}
