//! Per-step timing records and the key-length latency study.
//!
//! The per-step decomposition follows the critical path from sample to
//! actuation: randomizer (inline computation, or residual wait on the
//! precompute pipeline), encryption, network out, control-law evaluation,
//! network back, decryption. The state update runs off the critical path —
//! it overlaps the decrypt/actuate/sample phase — but the controller cannot
//! start the next control evaluation before it finishes, so the derived
//! minimum sampling period is
//!
//! ```text
//! min_period = max(randomizer + encrypt + net_out + control + net_back
//!                  + decrypt,
//!                  control + update)
//! ```
//!
//! Networked runs cannot observe the controller's internal split; there the
//! reply wait is attributed to `network_back_us` and `control_us`/
//! `update_us` read zero.

use std::time::Duration;

use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;

use crate::net::runner::{run_in_process_with_spec, LoopSetup, RandomizerMode};
use crate::net::NetError;
use crate::paillier::KeyPair;
use crate::presets::{qube_preset, LoopPreset};

#[derive(Clone, Copy, Debug, Default)]
pub struct StepTiming {
    pub step: u64,
    pub randomizer_us: u64,
    pub encrypt_us: u64,
    pub network_out_us: u64,
    pub control_us: u64,
    pub network_back_us: u64,
    pub decrypt_us: u64,
    pub update_us: u64,
    pub total_us: u64,
    pub deadline_missed: bool,
    pub held: bool,
}

impl StepTiming {
    /// Sample-to-actuation path length.
    pub fn critical_path_us(&self) -> u64 {
        self.randomizer_us
            + self.encrypt_us
            + self.network_out_us
            + self.control_us
            + self.network_back_us
            + self.decrypt_us
    }

    /// Smallest sampling period this step could have sustained.
    pub fn min_period_us(&self) -> u64 {
        self.critical_path_us()
            .max(self.control_us + self.update_us)
    }
}

pub fn micros(d: Duration) -> u64 {
    d.as_micros() as u64
}

/// Order statistics over a per-step series.
#[derive(Clone, Copy, Debug)]
pub struct SeriesStats {
    pub min: u64,
    pub median: u64,
    pub p99: u64,
    pub max: u64,
}

pub fn series_stats(values: &[u64]) -> SeriesStats {
    assert!(!values.is_empty());
    let mut sorted = values.to_vec();
    sorted.sort_unstable();
    let at = |q: f64| {
        let idx = ((sorted.len() - 1) as f64 * q).round() as usize;
        sorted[idx]
    };
    SeriesStats {
        min: sorted[0],
        median: at(0.5),
        p99: at(0.99),
        max: *sorted.last().unwrap(),
    }
}

/// Aggregate of one key length in the latency study.
#[derive(Clone, Copy, Debug)]
pub struct BenchRow {
    pub key_bits: usize,
    pub word_count: usize,
    pub critical: SeriesStats,
    pub min_period: SeriesStats,
    pub encrypt_median_us: u64,
    pub control_median_us: u64,
    pub decrypt_median_us: u64,
    pub update_median_us: u64,
    /// Critical path with the randomizer computed inline instead of
    /// overlapped, for the pipeline-benefit comparison.
    pub inline_critical_median_us: u64,
}

pub fn bench_csv_header() -> &'static str {
    "key_bits,word_count,encrypt_us_median,control_us_median,decrypt_us_median,update_us_median,\
critical_us_min,critical_us_median,critical_us_p99,min_period_us_min,min_period_us_median,\
min_period_us_p99,inline_critical_us_median"
}

/// Measure the achievable sampling period across key lengths.
///
/// Each key length runs the given controller structure (the
/// rotary-pendulum experiment by default, see [`measure_min_period`])
/// through the full in-process pipeline for `steps` ticks, once with the
/// randomizer precompute overlapped and once with it inline. Only latency
/// is read off these runs: at key lengths below the plaintext budget the
/// decoded values wrap, but every operation count is value-independent by
/// construction, so the timing stands.
pub fn measure_min_period_with(
    preset: &LoopPreset,
    key_bits_list: &[usize],
    steps: u64,
    seed: u64,
) -> Result<Vec<BenchRow>, NetError> {
    let mut rows = Vec::with_capacity(key_bits_list.len());
    for &bits in key_bits_list {
        let mut rng = ChaCha20Rng::seed_from_u64(seed ^ bits as u64);
        let kp = KeyPair::generate(bits, &mut rng)?;
        let preset = preset.clone();
        let spec = preset.build_spec_for_timing()?;
        let mut setup = LoopSetup::new(preset, steps, seed);
        // warmup pass, excluded from the statistics
        let warm = LoopSetup {
            steps: steps.min(8),
            ..setup.clone()
        };
        run_in_process_with_spec(&warm, &kp, &spec)?;

        setup.randomizer = RandomizerMode::Precompute;
        let overlap = run_in_process_with_spec(&setup, &kp, &spec)?;
        setup.randomizer = RandomizerMode::Inline;
        let inline = run_in_process_with_spec(&setup, &kp, &spec)?;

        let series = |f: &dyn Fn(&StepTiming) -> u64, report: &[StepTiming]| -> Vec<u64> {
            report.iter().map(f).collect()
        };
        let critical = series(&|t| t.critical_path_us(), &overlap.timings);
        let min_period = series(&|t| t.min_period_us(), &overlap.timings);
        let inline_critical = series(&|t| t.critical_path_us(), &inline.timings);
        rows.push(BenchRow {
            key_bits: bits,
            word_count: kp.public.word_count(),
            critical: series_stats(&critical),
            min_period: series_stats(&min_period),
            encrypt_median_us: series_stats(&series(&|t| t.encrypt_us, &overlap.timings)).median,
            control_median_us: series_stats(&series(&|t| t.control_us, &overlap.timings)).median,
            decrypt_median_us: series_stats(&series(&|t| t.decrypt_us, &overlap.timings)).median,
            update_median_us: series_stats(&series(&|t| t.update_us, &overlap.timings)).median,
            inline_critical_median_us: series_stats(&inline_critical).median,
        });
    }
    Ok(rows)
}

/// [`measure_min_period_with`] on the experiment controller structure.
pub fn measure_min_period(
    key_bits_list: &[usize],
    steps: u64,
    seed: u64,
) -> Result<Vec<BenchRow>, NetError> {
    measure_min_period_with(&qube_preset(0.0), key_bits_list, steps, seed)
}

pub fn bench_csv_row(r: &BenchRow) -> String {
    format!(
        "{},{},{},{},{},{},{},{},{},{},{},{},{}",
        r.key_bits,
        r.word_count,
        r.encrypt_median_us,
        r.control_median_us,
        r.decrypt_median_us,
        r.update_median_us,
        r.critical.min,
        r.critical.median,
        r.critical.p99,
        r.min_period.min,
        r.min_period.median,
        r.min_period.p99,
        r.inline_critical_median_us,
    )
}
