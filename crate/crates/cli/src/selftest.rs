//! Built-in consistency checks: fast spot checks of each layer, printing
//! one line per check.

use cipherloop::bignum::BigUint;
use cipherloop::codec::{EncodedInt, FixedSpec};
use cipherloop::mont::MontCtx;
use cipherloop::net::runner::{run_in_process, LoopSetup};
use cipherloop::paillier::{calc_randomizer, decrypt, encrypt, KeyPair};
use cipherloop::presets::LoopPreset;
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;

use crate::CliError;

pub fn run(seed: u64) -> Result<(), CliError> {
    let mut failures = 0usize;
    let mut check = |name: &str, ok: bool| {
        println!("{} {}", if ok { "PASS" } else { "FAIL" }, name);
        if !ok {
            failures += 1;
        }
    };

    // Montgomery multiplication against the naive residue oracle, M = 35.
    let ctx = MontCtx::new(BigUint::from_u64(35)).unwrap();
    let r_inv = {
        let r = (1u128 << ctx.radix_bits()) % 35;
        (0..35u128).find(|c| r * c % 35 == 1).unwrap()
    };
    let mut mont_ok = true;
    for x in 0..70u64 {
        for y in 0..70u64 {
            let t = ctx
                .mont_mult(&BigUint::from_u64(x), &BigUint::from_u64(y))
                .unwrap();
            let expect = x as u128 * y as u128 % 35 * r_inv % 35;
            if t.to_u128().unwrap() % 35 != expect {
                mont_ok = false;
            }
        }
    }
    check("montgomery multiplication (M=35, exhaustive)", mont_ok);

    // Montgomery form round trip on a generated 64-bit key's N^2 context.
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let kp = KeyPair::generate(64, &mut rng).map_err(CliError::runtime)?;
    let ctx2 = kp.public.ctx_n2();
    let mut round_ok = true;
    for i in 0..200u64 {
        let a = BigUint::from_u64(i.wrapping_mul(0x9E3779B97F4A7C15));
        let f = ctx2.to_mont(&a).unwrap();
        if ctx2.from_mont(&f).unwrap() != a {
            round_ok = false;
        }
    }
    check("montgomery form round trip (64-bit key)", round_ok);

    // Tiny-key Paillier round trip with explicit randomizers.
    let tiny = KeyPair::from_primes_u64(5, 7).map_err(CliError::runtime)?;
    let mut paillier_ok = true;
    for t in 0..35u64 {
        for r in [1u64, 2, 4, 17, 34] {
            let z = calc_randomizer(&tiny.public, &BigUint::from_u64(r)).unwrap();
            let c = encrypt(&tiny.public, &BigUint::from_u64(t), &z).unwrap();
            if decrypt(&tiny.private, &tiny.public, &c).unwrap().to_u128() != Some(t as u128) {
                paillier_ok = false;
            }
        }
    }
    check("paillier round trip (N=35, all plaintexts)", paillier_ok);

    // Two's-complement decode, exhaustive at a narrow width.
    let spec = FixedSpec::new(8, 2, 12).unwrap();
    let codec_ok = (0u128..1 << 12).all(|residue| {
        let d = spec.decode(&EncodedInt {
            residue,
            scale_exp: 1,
        });
        let expect = if residue >= 1 << 11 {
            residue as i128 - (1 << 12)
        } else {
            residue as i128
        };
        d.mantissa == expect
    });
    check("two's-complement decode (n'=12, exhaustive)", codec_ok);

    // Short encrypted loop equality against the integer reference.
    let preset = LoopPreset::by_name("reset_pi", 1.0).map_err(CliError::runtime)?;
    let setup = LoopSetup::new(preset, 20, seed);
    let report = run_in_process(&setup, &kp).map_err(CliError::runtime)?;
    check(
        "encrypted loop equals integer reference (20 steps)",
        report.equivalence_exact(),
    );

    if failures > 0 {
        Err(CliError::Runtime(format!("{failures} selftest check(s) failed")))
    } else {
        println!("all selftest checks passed");
        Ok(())
    }
}
