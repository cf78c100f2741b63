//! Differential tests of the Montgomery and Paillier data paths against an
//! independent arbitrary-precision oracle (num-bigint). The oracle side
//! never touches the word-serial multiplier.

use num_bigint::BigUint as NbUint;
use num_traits::One;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;

use cipherloop::bignum::BigUint;
use cipherloop::mont::MontCtx;
use cipherloop::paillier::{calc_randomizer, encrypt, sample_randomizer, KeyPair};

fn to_nb(v: &BigUint) -> NbUint {
    NbUint::from_bytes_le(&v.to_le_bytes())
}

fn from_nb(v: &NbUint) -> BigUint {
    BigUint::from_le_bytes(&v.to_bytes_le())
}

fn modinv(a: &NbUint, m: &NbUint) -> NbUint {
    // Fermat is unavailable for composite m; use the extended Euclid from
    // num-integer via BigInt.
    use num_bigint::{BigInt, Sign};
    use num_integer::Integer;
    use num_traits::Signed;
    let ext = BigInt::from_biguint(Sign::Plus, a.clone())
        .extended_gcd(&BigInt::from_biguint(Sign::Plus, m.clone()));
    assert!(ext.gcd.is_one());
    let m_int = BigInt::from_biguint(Sign::Plus, m.clone());
    let mut x = ext.x % &m_int;
    if x.is_negative() {
        x += &m_int;
    }
    x.to_biguint().unwrap()
}

fn rand_below(rng: &mut ChaCha20Rng, bound: &NbUint) -> NbUint {
    use num_bigint::RandBigInt;
    rng.gen_biguint_below(bound)
}

/// mont_mult == x*y*R^(-1) mod M, randomized at operational key lengths.
#[test]
fn mont_mult_matches_oracle_at_key_lengths() {
    for (bits, cases) in [(64usize, 10_000usize), (256, 10_000), (512, 10_000)] {
        let mut rng = ChaCha20Rng::seed_from_u64(bits as u64);
        let kp = KeyPair::generate(bits, &mut rng).unwrap();
        let ctx = kp.public.ctx_n2();
        let m = to_nb(ctx.modulus());
        let two_m = &m * 2u32;
        let r = NbUint::one() << ctx.radix_bits();
        let r_inv = modinv(&(&r % &m), &m);
        for i in 0..cases {
            let x = rand_below(&mut rng, &two_m);
            let y = rand_below(&mut rng, &two_m);
            let t = ctx.mont_mult(&from_nb(&x), &from_nb(&y)).unwrap();
            assert!(to_nb(&t) < two_m);
            let expect = &x * &y % &m * &r_inv % &m;
            assert_eq!(to_nb(&t) % &m, expect, "bits={bits} case={i}");
        }
    }
}

/// mont_mult exhaustive over small moduli, all operands below 2M.
#[test]
fn mont_mult_exhaustive_small_moduli_vs_oracle() {
    for m_val in [35u64, 77, 143] {
        let ctx = MontCtx::new(BigUint::from_u64(m_val)).unwrap();
        let m = NbUint::from(m_val);
        let r = NbUint::one() << ctx.radix_bits();
        let r_inv = modinv(&(&r % &m), &m);
        for x in 0..2 * m_val {
            for y in 0..2 * m_val {
                let t = ctx
                    .mont_mult(&BigUint::from_u64(x), &BigUint::from_u64(y))
                    .unwrap();
                let expect = NbUint::from(x) * NbUint::from(y) % &m * &r_inv % &m;
                assert_eq!(to_nb(&t) % &m, expect);
            }
        }
    }
}

/// mont_exp against square-and-multiply modpow, mixed exponent widths.
#[test]
fn mont_exp_matches_naive_oracle() {
    for bits in [64usize, 256, 512] {
        let mut rng = ChaCha20Rng::seed_from_u64(1000 + bits as u64);
        let kp = KeyPair::generate(bits, &mut rng).unwrap();
        let ctx = kp.public.ctx_n2();
        let m = to_nb(ctx.modulus());
        // Spread exponent widths: full-width ladders dominate the runtime,
        // so most cases use short controller-style exponents.
        let cases: &[(usize, usize)] = &[(32, 9_000), (bits, 1_000)];
        for &(width, count) in cases {
            for i in 0..count {
                let a = rand_below(&mut rng, &m);
                let e_bits = rng.gen_range(0..=width);
                let e = if e_bits == 0 {
                    NbUint::from(0u32)
                } else {
                    rand_below(&mut rng, &(NbUint::one() << e_bits))
                };
                let base = ctx.to_mont(&from_nb(&a)).unwrap();
                let p = ctx.mont_exp(base.value(), &from_nb(&e), width).unwrap();
                let got = to_nb(&ctx.canonicalize(&p).unwrap());
                let expect = a.modpow(&e, &m);
                assert_eq!(got, expect, "bits={bits} width={width} case={i}");
            }
        }
    }
}

/// Binomial-shortcut encryption equals the full (N+1)^t exponentiation.
#[test]
fn binomial_shortcut_matches_generic_exponentiation() {
    let mut rng = ChaCha20Rng::seed_from_u64(42);
    let kp = KeyPair::generate(64, &mut rng).unwrap();
    let pk = &kp.public;
    let n = to_nb(pk.n());
    let n2 = &n * &n;
    for i in 0..1_000 {
        let t = rand_below(&mut rng, &n);
        let r = sample_randomizer(pk, &mut rng);
        let z = calc_randomizer(pk, &r).unwrap();
        let ct = encrypt(pk, &from_nb(&t), &z).unwrap();
        let got = to_nb(&ct.canonical(pk).unwrap());
        // oracle: (N+1)^t * r'^N mod N^2 with r' the effective randomizer
        // rR^{-1} mod N^2 of the no-preconversion trick
        let radix = NbUint::one() << pk.ctx_n2().radix_bits();
        let r_eff = to_nb(&r) * modinv(&(&radix % &n2), &n2) % &n2;
        let expect = (&n + 1u32).modpow(&t, &n2) * r_eff.modpow(&n, &n2) % &n2;
        assert_eq!(got, expect, "case {i}");
    }
}

/// The no-preconversion randomizer: from_mont(z) equals
/// ((r R^{-1} mod N^2) mod N)^N mod N^2.
#[test]
fn randomizer_power_oracle() {
    let mut rng = ChaCha20Rng::seed_from_u64(43);
    let kp = KeyPair::generate(64, &mut rng).unwrap();
    let pk = &kp.public;
    let n = to_nb(pk.n());
    let n2 = &n * &n;
    let radix = NbUint::one() << pk.ctx_n2().radix_bits();
    let radix_inv = modinv(&(&radix % &n2), &n2);
    for _ in 0..200 {
        let r = sample_randomizer(pk, &mut rng);
        let z = calc_randomizer(pk, &r).unwrap();
        let got = to_nb(&pk.ctx_n2().canonicalize(z.value()).unwrap());
        let r_eff = (to_nb(&r) * &radix_inv % &n2) % &n;
        assert_eq!(got, r_eff.modpow(&n, &n2));
    }
}

/// Key-length arithmetic: a 256-bit key squares to 511-512 bits and all
/// contexts share the worst-case word count 33.
#[test]
fn key_geometry_at_256_bits() {
    let mut rng = ChaCha20Rng::seed_from_u64(44);
    let kp = KeyPair::generate(256, &mut rng).unwrap();
    let n2_bits = kp.public.ctx_n2().modulus().bits();
    assert!((511..=512).contains(&n2_bits));
    assert_eq!(kp.public.word_count(), 33);
    assert_eq!(kp.public.ctx_n2().radix_bits(), 544);
    assert_eq!(kp.public.ciphertext_width(), 68);
}
