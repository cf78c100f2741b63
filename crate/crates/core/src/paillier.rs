//! Paillier cryptosystem on the shared-radix Montgomery multipliers.
//!
//! Three moduli are in play: `N` (public key), `N^2` (ciphertext ring) and
//! `N^2 + 2` (exact-quotient step of decryption). All three contexts share
//! one word count `w`, sized so that any key of the requested length fits:
//! `16w > 2*key_bits`.
//!
//! Encryption uses the closed form `(Nt + 1) r^N mod N^2` of
//! `(N + 1)^t r^N mod N^2`, realized as three Montgomery multiplications on
//! a precomputed randomizer power. The randomizer power itself is computed
//! by exponentiating the raw random value without converting it to
//! Montgomery form first: a uniform `r` *is* the Montgomery form of
//! `r R^{-1} mod N^2`, whose residue mod `N` is uniform again, so the
//! result is a valid Montgomery-form `r'^N`.
//!
//! Decryption never divides: `L(u) = (u - 1)/N` is evaluated as a
//! multiplication by `N^{-1}` modulo the odd modulus `N^2 + 2`, which is
//! exact because the quotient is below `N`.

use std::sync::Arc;

use num_bigint::{BigInt, BigUint as NbUint, RandBigInt, Sign};
use num_integer::Integer;
use num_traits::{One, Signed, Zero};
use rand::{CryptoRng, RngCore};
use thiserror::Error;

use crate::bignum::BigUint;
use crate::error::ArithError;
use crate::mont::{MontCtx, MontForm};

/// Key lengths reachable from operational entry points. Anything smaller is
/// a test-only path via [`KeyPair::from_primes_u64`].
pub const SUPPORTED_KEY_BITS: [usize; 5] = [64, 128, 256, 512, 1024];

const MILLER_RABIN_ROUNDS: usize = 64;
const SMALL_PRIMES: [u32; 12] = [3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37, 41];

#[derive(Debug, Error)]
pub enum PaillierError {
    #[error("unsupported key length {0} (choose one of 64, 128, 256, 512, 1024)")]
    UnsupportedKeySize(usize),
    #[error("prime search failed within the attempt budget")]
    PrimeSearchFailed,
    #[error("invalid key components: {0}")]
    InvalidKey(&'static str),
    #[error("plaintext not in Z_N")]
    PlaintextOutOfRange,
    #[error(transparent)]
    Arith(#[from] ArithError),
}

/// Shared word count for a key length: smallest `w` with `16w > 2*key_bits`,
/// so every modulus up to `N^2 + 2` of any key of that length fits.
pub fn system_word_count(key_bits: usize) -> usize {
    2 * key_bits / 16 + 1
}

/// Public half: enough to encrypt and to evaluate the homomorphic operators.
#[derive(Clone)]
pub struct PublicKey {
    n: BigUint,
    key_bits: usize,
    ctx_n2: Arc<MontCtx>,
    /// Montgomery form of `N` modulo `N^2` (the `NR mod N^2` constant).
    n_mont: BigUint,
}

/// Private half: decryption exponent and the derived pipeline constants.
pub struct PrivateKey {
    lambda: BigUint,
    mu: BigUint,
    p: BigUint,
    q: BigUint,
    ctx_n: Arc<MontCtx>,
    ctx_n2p2: Arc<MontCtx>,
    /// `N^{-1} R^2 mod (N^2 + 2)`.
    n_inv_r2: BigUint,
    /// `mu R^2 mod N`.
    mu_r2: BigUint,
}

pub struct KeyPair {
    pub public: PublicKey,
    pub private: PrivateKey,
}

/// A Paillier ciphertext: Montgomery-form residue modulo `N^2`, `< 2N^2`.
#[derive(Clone, PartialEq, Eq, Debug)]
pub struct Ciphertext(MontForm);

/// Montgomery-form `r^N mod N^2`, precomputable independently of the
/// plaintext it will randomize.
#[derive(Clone, Debug)]
pub struct RandomizerPower {
    z: BigUint,
}

impl RandomizerPower {
    pub fn value(&self) -> &BigUint {
        &self.z
    }
}

fn nb_to_big(v: &NbUint) -> BigUint {
    BigUint::from_le_bytes(&v.to_bytes_le())
}

fn big_to_nb(v: &BigUint) -> NbUint {
    NbUint::from_bytes_le(&v.to_le_bytes())
}

fn modinv(a: &NbUint, m: &NbUint) -> Option<NbUint> {
    let a = BigInt::from_biguint(Sign::Plus, a.clone());
    let m_int = BigInt::from_biguint(Sign::Plus, m.clone());
    let ext = a.extended_gcd(&m_int);
    if !ext.gcd.is_one() {
        return None;
    }
    let mut x = ext.x % &m_int;
    if x.is_negative() {
        x += &m_int;
    }
    Some(x.to_biguint().unwrap())
}

fn is_probable_prime<R: RngCore + CryptoRng>(n: &NbUint, rng: &mut R) -> bool {
    if n < &NbUint::from(2u32) {
        return false;
    }
    for p in SMALL_PRIMES {
        let p = NbUint::from(p);
        if n == &p {
            return true;
        }
        if (n % &p).is_zero() {
            return false;
        }
    }
    if n.is_even() {
        return false;
    }
    // n - 1 = d * 2^s with d odd
    let one = NbUint::one();
    let n_minus_1 = n - &one;
    let s = n_minus_1.trailing_zeros().unwrap_or(0);
    let d = &n_minus_1 >> s;
    'witness: for _ in 0..MILLER_RABIN_ROUNDS {
        let a = rng.gen_biguint_range(&NbUint::from(2u32), &n_minus_1);
        let mut x = a.modpow(&d, n);
        if x.is_one() || x == n_minus_1 {
            continue;
        }
        for _ in 0..s.saturating_sub(1) {
            x = x.modpow(&NbUint::from(2u32), n);
            if x == n_minus_1 {
                continue 'witness;
            }
        }
        return false;
    }
    true
}

fn gen_prime<R: RngCore + CryptoRng>(bits: usize, rng: &mut R) -> Result<NbUint, PaillierError> {
    // Cap the search; with the top two bits pinned the expected number of
    // candidates stays far below this.
    let attempts = 400 * bits.max(16);
    for _ in 0..attempts {
        let mut cand = rng.gen_biguint(bits as u64);
        cand.set_bit(bits as u64 - 1, true);
        cand.set_bit(bits as u64 - 2, true);
        cand.set_bit(0, true);
        if is_probable_prime(&cand, rng) {
            return Ok(cand);
        }
    }
    Err(PaillierError::PrimeSearchFailed)
}

impl PublicKey {
    /// Build from the modulus alone; this is all a controller endpoint holds.
    pub fn from_n(n: BigUint) -> Result<PublicKey, PaillierError> {
        let key_bits = n.bits();
        if key_bits < 3 {
            return Err(PaillierError::InvalidKey("modulus too small"));
        }
        let w = system_word_count(key_bits);
        let n_nb = big_to_nb(&n);
        let n2 = nb_to_big(&(&n_nb * &n_nb));
        let ctx_n2 = MontCtx::with_word_count(n2, w)?;
        let n_mont = ctx_n2.to_mont(&n)?.value().clone();
        Ok(PublicKey {
            n,
            key_bits,
            ctx_n2,
            n_mont,
        })
    }

    pub fn n(&self) -> &BigUint {
        &self.n
    }

    pub fn key_bits(&self) -> usize {
        self.key_bits
    }

    pub fn word_count(&self) -> usize {
        self.ctx_n2.word_count()
    }

    pub fn ctx_n2(&self) -> &Arc<MontCtx> {
        &self.ctx_n2
    }

    /// Serialized ciphertext width in bytes: `2(w+1)`.
    pub fn ciphertext_width(&self) -> usize {
        2 * (self.word_count() + 1)
    }
}

impl PrivateKey {
    pub fn lambda(&self) -> &BigUint {
        &self.lambda
    }

    pub fn mu(&self) -> &BigUint {
        &self.mu
    }

    pub fn p(&self) -> &BigUint {
        &self.p
    }

    pub fn q(&self) -> &BigUint {
        &self.q
    }
}

impl KeyPair {
    /// Generate a fresh key of one of the supported lengths.
    pub fn generate<R: RngCore + CryptoRng>(
        key_bits: usize,
        rng: &mut R,
    ) -> Result<KeyPair, PaillierError> {
        if !SUPPORTED_KEY_BITS.contains(&key_bits) {
            return Err(PaillierError::UnsupportedKeySize(key_bits));
        }
        let half = key_bits / 2;
        for _ in 0..64 {
            let p = gen_prime(half, rng)?;
            let q = gen_prime(half, rng)?;
            if p == q {
                continue;
            }
            let n = &p * &q;
            if n.bits() as usize != key_bits {
                continue;
            }
            let phi = (&p - 1u32) * (&q - 1u32);
            if !n.gcd(&phi).is_one() {
                continue;
            }
            return KeyPair::build(&p, &q);
        }
        Err(PaillierError::PrimeSearchFailed)
    }

    /// Construction from explicit small primes (e.g. 5 and 7), for tests and
    /// exhaustive tables. Operational entry points never route here; key
    /// lengths below 64 bits offer no security.
    pub fn from_primes_u64(p: u64, q: u64) -> Result<KeyPair, PaillierError> {
        KeyPair::build(&NbUint::from(p), &NbUint::from(q))
    }

    /// Reconstruct from stored components, revalidating their algebra.
    pub fn from_components(
        n: &BigUint,
        lambda: &BigUint,
        mu: &BigUint,
        p: &BigUint,
        q: &BigUint,
    ) -> Result<KeyPair, PaillierError> {
        let kp = KeyPair::build(&big_to_nb(p), &big_to_nb(q))?;
        if kp.public.n != *n {
            return Err(PaillierError::InvalidKey("n does not equal p*q"));
        }
        if kp.private.lambda != *lambda || kp.private.mu != *mu {
            return Err(PaillierError::InvalidKey("lambda/mu inconsistent with p, q"));
        }
        Ok(kp)
    }

    fn build(p: &NbUint, q: &NbUint) -> Result<KeyPair, PaillierError> {
        if p == q {
            return Err(PaillierError::InvalidKey("primes must be distinct"));
        }
        if p < &NbUint::from(3u32) || q < &NbUint::from(3u32) {
            return Err(PaillierError::InvalidKey("primes must be odd and >= 3"));
        }
        let n = p * q;
        let phi = (p - 1u32) * (q - 1u32);
        if !n.gcd(&phi).is_one() {
            return Err(PaillierError::InvalidKey("gcd(N, (p-1)(q-1)) != 1"));
        }
        let lambda = (p - 1u32).lcm(&(q - 1u32));
        let mu = modinv(&lambda, &n).ok_or(PaillierError::InvalidKey("lambda not invertible"))?;

        let public = PublicKey::from_n(nb_to_big(&n))?;
        let w = public.word_count();
        let n2p2 = &n * &n + 2u32;
        let ctx_n = MontCtx::with_word_count(nb_to_big(&n), w)?;
        let ctx_n2p2 = MontCtx::with_word_count(nb_to_big(&n2p2), w)?;

        // Pipeline constants, computed once with general big-integer
        // arithmetic: N^{-1} R^2 mod (N^2+2) and mu R^2 mod N.
        let r = NbUint::one() << ctx_n.radix_bits();
        let n_inv = modinv(&n, &n2p2).ok_or(PaillierError::InvalidKey("N not invertible"))?;
        let n_inv_r2 = (&n_inv * &r % &n2p2) * &r % &n2p2;
        let mu_r2 = (&mu * &r % &n) * &r % &n;

        Ok(KeyPair {
            public,
            private: PrivateKey {
                lambda: nb_to_big(&lambda),
                mu: nb_to_big(&mu),
                p: nb_to_big(p),
                q: nb_to_big(q),
                ctx_n,
                ctx_n2p2,
                n_inv_r2: nb_to_big(&n_inv_r2),
                mu_r2: nb_to_big(&mu_r2),
            },
        })
    }
}

/// Uniform randomizer input in `Z_N`. Keys below 64 bits additionally
/// reject values sharing a factor with `N`; at operational sizes that event
/// is negligible and the check is skipped.
pub fn sample_randomizer<R: RngCore + CryptoRng>(pk: &PublicKey, rng: &mut R) -> BigUint {
    let n_nb = big_to_nb(pk.n());
    loop {
        let r = rng.gen_biguint_below(&n_nb);
        if pk.key_bits < 64 && !r.gcd(&n_nb).is_one() {
            continue;
        }
        return nb_to_big(&r);
    }
}

/// `z = r^N R mod N^2` from a raw uniform `r`, fed to the exponentiator
/// without a to-Montgomery conversion.
pub fn calc_randomizer(pk: &PublicKey, r: &BigUint) -> Result<RandomizerPower, ArithError> {
    let z = pk.ctx_n2.mont_exp(r, pk.n(), pk.key_bits)?;
    Ok(RandomizerPower { z })
}

/// The degenerate randomizer power of `r = 1` (Montgomery form of 1).
pub fn unit_randomizer(pk: &PublicKey) -> RandomizerPower {
    RandomizerPower {
        z: pk.ctx_n2.r_mod_m().clone(),
    }
}

/// Encrypt `t` in `Z_N` under a precomputed randomizer power: three
/// multiplications producing the Montgomery form of `(Nt + 1) r^N mod N^2`.
pub fn encrypt(
    pk: &PublicKey,
    t: &BigUint,
    z: &RandomizerPower,
) -> Result<Ciphertext, PaillierError> {
    if t >= pk.n() {
        return Err(PaillierError::PlaintextOutOfRange);
    }
    let ctx = &pk.ctx_n2;
    let var1 = ctx.mont_mult(&pk.n_mont, t)?;
    let var2 = ctx.mont_mult(&var1.add(&BigUint::one()), ctx.r2_mod_m())?;
    let c = ctx.mont_mult(&z.z, &var2)?;
    Ok(Ciphertext(MontForm::from_raw(ctx, c)?))
}

/// Encrypt with a fresh randomizer drawn from `rng`.
pub fn encrypt_with_rng<R: RngCore + CryptoRng>(
    pk: &PublicKey,
    t: &BigUint,
    rng: &mut R,
) -> Result<Ciphertext, PaillierError> {
    let r = sample_randomizer(pk, rng);
    let z = calc_randomizer(pk, &r)?;
    encrypt(pk, t, &z)
}

/// Deterministic encryption with `r = 1`, as used for locally produced
/// setpoints in the benchmark arrangement.
pub fn encrypt_deterministic(pk: &PublicKey, t: &BigUint) -> Result<Ciphertext, PaillierError> {
    encrypt(pk, t, &unit_randomizer(pk))
}

/// The fixed encryption of zero with unit randomizer: `R mod N^2`.
pub fn encrypt_zero_unit(pk: &PublicKey) -> Ciphertext {
    Ciphertext(MontForm::from_raw(&pk.ctx_n2, pk.ctx_n2.r_mod_m().clone()).unwrap())
}

/// Decrypt to the plaintext in `Z_N`. A ciphertext that was not honestly
/// generated decrypts to an unspecified element of `Z_N`; the pipeline is
/// total and never divides.
pub fn decrypt(sk: &PrivateKey, pk: &PublicKey, c: &Ciphertext) -> Result<BigUint, PaillierError> {
    let ctx_n2 = &pk.ctx_n2;
    if c.0.ctx_id() != ctx_n2.id() {
        return Err(ArithError::ContextMismatch.into());
    }
    let t1 = ctx_n2.mont_exp(c.0.value(), &sk.lambda, pk.key_bits)?;
    let t2 = ctx_n2.canonicalize(&t1)?;
    // (t2 - 1) as a residue modulo N^2 + 2; t2 = 0 only for dishonest input.
    let t2m1 = match t2.checked_sub(&BigUint::one()) {
        Some(v) => v,
        None => sk.ctx_n2p2.modulus().checked_sub(&BigUint::one()).unwrap(),
    };
    let t3 = sk.ctx_n2p2.mont_mult(&t2m1, &sk.n_inv_r2)?;
    let t4 = sk.ctx_n2p2.canonicalize(&t3)?;
    // Honest quotients satisfy t4 < N; capping the width keeps dishonest
    // input inside the operand contract of the N context.
    let t4 = t4.low_bits(pk.key_bits);
    let t5 = sk.ctx_n.mont_mult(&t4, &sk.mu_r2)?;
    Ok(sk.ctx_n.canonicalize(&t5)?)
}

/// Additive homomorphic operator: ciphertext product, decrypting to
/// `t1 + t2 mod N`.
pub fn hom_add(
    pk: &PublicKey,
    c1: &Ciphertext,
    c2: &Ciphertext,
) -> Result<Ciphertext, PaillierError> {
    let ctx = &pk.ctx_n2;
    if c1.0.ctx_id() != ctx.id() || c2.0.ctx_id() != ctx.id() {
        return Err(ArithError::ContextMismatch.into());
    }
    let v = ctx.mont_mult(c1.0.value(), c2.0.value())?;
    Ok(Ciphertext(MontForm::from_raw(ctx, v)?))
}

/// Plaintext-scalar operator with an explicit call-site exponent width:
/// `c^t`, decrypting to `t * t_c mod N`.
pub fn hom_scale_bits(
    pk: &PublicKey,
    t: &BigUint,
    exp_bits: usize,
    c: &Ciphertext,
) -> Result<Ciphertext, PaillierError> {
    let ctx = &pk.ctx_n2;
    if c.0.ctx_id() != ctx.id() {
        return Err(ArithError::ContextMismatch.into());
    }
    let v = ctx.mont_exp(c.0.value(), t, exp_bits)?;
    Ok(Ciphertext(MontForm::from_raw(ctx, v)?))
}

/// Plaintext-scalar operator at the full key width (`t < N`).
pub fn hom_scale(pk: &PublicKey, t: &BigUint, c: &Ciphertext) -> Result<Ciphertext, PaillierError> {
    if t >= pk.n() {
        return Err(PaillierError::PlaintextOutOfRange);
    }
    hom_scale_bits(pk, t, pk.key_bits, c)
}

impl Ciphertext {
    pub fn value(&self) -> &BigUint {
        self.0.value()
    }

    pub fn mont_form(&self) -> &MontForm {
        &self.0
    }

    /// Rebind a raw Montgomery-form residue (`< 2N^2`) to a key.
    pub fn from_raw(pk: &PublicKey, v: BigUint) -> Result<Ciphertext, ArithError> {
        Ok(Ciphertext(MontForm::from_raw(&pk.ctx_n2, v)?))
    }

    /// Fixed-width big-endian wire encoding of the Montgomery-form residue.
    pub fn to_bytes(&self, pk: &PublicKey) -> Result<Vec<u8>, ArithError> {
        self.0.value().to_be_bytes(pk.ciphertext_width())
    }

    /// Parse and bind to `pk`, enforcing the `< 2N^2` range.
    pub fn from_bytes(pk: &PublicKey, bytes: &[u8]) -> Result<Ciphertext, ArithError> {
        Ciphertext::from_raw(pk, BigUint::from_be_bytes(bytes))
    }

    /// Canonical (non-Montgomery) residue, for debugging and oracles.
    pub fn canonical(&self, pk: &PublicKey) -> Result<BigUint, ArithError> {
        pk.ctx_n2.canonicalize(self.0.value())
    }
}
