//! Per-step latency dispersion: with every operation count fixed by
//! construction, the software loop's p99/median total-time ratio stays
//! small. This file holds only this one test so no sibling test competes
//! for cores while it measures.

use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;

use cipherloop::net::runner::{run_in_process_with_spec, LoopSetup};
use cipherloop::net::timing::series_stats;
use cipherloop::paillier::KeyPair;
use cipherloop::presets::qube_preset;

#[test]
fn per_step_work_constancy_statistics() {
    let kp = KeyPair::generate(64, &mut ChaCha20Rng::seed_from_u64(71)).unwrap();
    let preset = qube_preset(0.0);
    let spec = preset.build_spec_for_timing().unwrap();
    let setup = LoopSetup::new(preset, 1200, 72);
    // warmup
    run_in_process_with_spec(
        &LoopSetup {
            steps: 50,
            ..setup.clone()
        },
        &kp,
        &spec,
    )
    .unwrap();
    let report = run_in_process_with_spec(&setup, &kp, &spec).unwrap();
    let totals: Vec<u64> = report.timings.iter().map(|t| t.total_us).collect();
    let s = series_stats(&totals);
    let ratio = s.p99 as f64 / s.median as f64;
    println!("total_us median={} p99={} ratio={ratio:.2}", s.median, s.p99);
    assert!(
        ratio < 3.0,
        "p99/median {ratio:.2} exceeds 3x (median {} p99 {})",
        s.median,
        s.p99
    );
}
