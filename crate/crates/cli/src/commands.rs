//! Command implementations.

use std::path::Path;

use cipherloop::codec::ResetPeriod;
use cipherloop::config::LoopConfig;
use cipherloop::keyfile;
use cipherloop::net::runner::{run_in_process, trajectory_csv, LoopReport, LoopSetup, RandomizerMode};
use cipherloop::net::session::{self, controller_endpoint_for, run_networked_pair};
use cipherloop::net::timing::{bench_csv_header, bench_csv_row, measure_min_period_with, series_stats};
use cipherloop::paillier::{KeyPair, SUPPORTED_KEY_BITS};

use crate::{BenchArgs, CliError, RunArgs};

pub fn keygen(bits: usize, out: &Path) -> Result<(), CliError> {
    if !SUPPORTED_KEY_BITS.contains(&bits) {
        return Err(CliError::Validation(format!(
            "unsupported key length {bits}; choose one of {SUPPORTED_KEY_BITS:?}"
        )));
    }
    let mut rng = rand::rngs::OsRng;
    let kp = KeyPair::generate(bits, &mut rng).map_err(CliError::runtime)?;
    keyfile::save_keypair(&kp, out).map_err(CliError::runtime)?;
    println!("wrote {} (private) and {} (public)", out.display(), keyfile::public_path(out).display());
    println!("key_bits = {}", kp.public.key_bits());
    println!("word_count w = {}", kp.public.word_count());
    println!("radix_bits = {}", 16 * (kp.public.word_count() + 1));
    println!("ciphertext_bytes = {}", kp.public.ciphertext_width());
    Ok(())
}

/// Merge CLI flags over the optional config file into a run setup.
fn resolve_setup(args: &RunArgs) -> Result<LoopSetup, CliError> {
    let mut cfg = match &args.config {
        Some(path) => LoopConfig::load(path).map_err(CliError::validation)?,
        None => LoopConfig::default(),
    };
    if let Some(p) = &args.preset {
        cfg.preset = Some(p.clone());
    }
    if let Some(s) = args.steps {
        cfg.steps = Some(s);
    }
    if let Some(s) = args.seed {
        cfg.seed = Some(s);
    }
    if let Some(s) = args.setpoint {
        cfg.setpoint = Some(s);
    }
    if let Some(np) = args.n_prime {
        cfg.n_prime = Some(np);
    }
    if let Some(m) = args.m {
        cfg.m = Some(m);
    }
    if let Some(r) = &args.reset {
        cfg.reset = Some(if r.eq_ignore_ascii_case("inf") {
            ResetPeriod::Infinite
        } else {
            ResetPeriod::Steps(
                r.parse()
                    .map_err(|_| CliError::Validation(format!("bad reset period {r:?}")))?,
            )
        });
    }
    if let Some(mode) = &args.randomizer {
        cfg.randomizer_mode = Some(match mode.as_str() {
            "precompute" => RandomizerMode::Precompute,
            "inline" => RandomizerMode::Inline,
            other => {
                return Err(CliError::Validation(format!(
                    "randomizer must be precompute or inline, got {other:?}"
                )))
            }
        });
    }
    cfg.loop_setup().map_err(CliError::validation)
}

fn print_report(setup: &LoopSetup, report: &LoopReport) {
    println!("preset: {}", setup.preset.name);
    println!("steps: {}", report.rows.len());
    if report.equivalence_exact() {
        println!("equivalence (encrypted vs plaintext-integer): exact");
    } else {
        println!(
            "equivalence (encrypted vs plaintext-integer): {} MISMATCHES",
            report.equivalence_mismatches
        );
    }
    println!(
        "deadline misses: {} (sample period {} us), held steps: {}",
        report.missed_deadlines, setup.preset.sample_period_us, report.held_steps
    );
    if report.saturation_events > 0 || report.range_flags > 0 {
        println!(
            "diagnostics: {} signal saturations, {} state range flags",
            report.saturation_events, report.range_flags
        );
    }
    if !report.timings.is_empty() {
        let med = |f: &dyn Fn(&cipherloop::net::timing::StepTiming) -> u64| {
            series_stats(&report.timings.iter().map(f).collect::<Vec<_>>()).median
        };
        println!(
            "latency medians (us): randomizer={} encrypt={} net_out={} control={} net_back={} decrypt={} update={} total={}",
            med(&|t| t.randomizer_us),
            med(&|t| t.encrypt_us),
            med(&|t| t.network_out_us),
            med(&|t| t.control_us),
            med(&|t| t.network_back_us),
            med(&|t| t.decrypt_us),
            med(&|t| t.update_us),
            med(&|t| t.total_us),
        );
        println!("min sampling period (us, median): {}", med(&|t| t.min_period_us()));
    }
}

fn write_csv_if(path: Option<&Path>, report: &LoopReport) -> Result<(), CliError> {
    if let Some(path) = path {
        std::fs::write(path, trajectory_csv(report)).map_err(CliError::runtime)?;
        println!("trajectory written to {}", path.display());
    }
    Ok(())
}

fn check_key_bits(declared: Option<usize>, actual: usize) -> Result<(), CliError> {
    match declared {
        Some(d) if d != actual => Err(CliError::Validation(format!(
            "config declares key_bits = {d} but the key file holds a {actual}-bit key"
        ))),
        _ => Ok(()),
    }
}

pub fn run(args: RunArgs) -> Result<(), CliError> {
    let setup = resolve_setup(&args)?;
    let declared = match &args.config {
        Some(path) => LoopConfig::load(path).map_err(CliError::validation)?.key_bits,
        None => None,
    };
    let kp = keyfile::load_keypair(&args.key).map_err(CliError::validation)?;
    check_key_bits(declared, kp.public.key_bits())?;
    // Surface controller validation (budget, scales) before any traffic.
    setup
        .preset
        .build_spec(kp.public.key_bits())
        .map_err(CliError::validation)?;
    let report = if args.networked {
        let (report, _) = run_networked_pair(&setup, &kp).map_err(CliError::runtime)?;
        report
    } else {
        run_in_process(&setup, &kp).map_err(CliError::runtime)?
    };
    print_report(&setup, &report);
    write_csv_if(args.out.as_deref(), &report)
}

pub fn serve_plant(config: &Path, key: &Path) -> Result<(), CliError> {
    let cfg = LoopConfig::load(config).map_err(CliError::validation)?;
    let peer = cfg
        .peer_addr
        .clone()
        .ok_or_else(|| CliError::Validation("config needs peer_addr".into()))?;
    let setup = cfg.loop_setup().map_err(CliError::validation)?;
    let kp = keyfile::load_keypair(key).map_err(CliError::validation)?;
    check_key_bits(cfg.key_bits, kp.public.key_bits())?;
    setup
        .preset
        .build_spec(kp.public.key_bits())
        .map_err(CliError::validation)?;
    let report =
        cipherloop::net::session::run_plant_networked(&setup, &kp, &peer).map_err(CliError::runtime)?;
    print_report(&setup, &report);
    write_csv_if(cfg.log_path.as_deref(), &report)
}

pub fn serve_controller(config: &Path, pubkey: &Path, keep_serving: bool) -> Result<(), CliError> {
    let cfg = LoopConfig::load(config).map_err(CliError::validation)?;
    let listen = cfg
        .listen_addr
        .clone()
        .ok_or_else(|| CliError::Validation("config needs listen_addr".into()))?;
    let setup = cfg.loop_setup().map_err(CliError::validation)?;
    let pk = keyfile::load_public(pubkey).map_err(CliError::validation)?;
    check_key_bits(cfg.key_bits, pk.key_bits())?;
    let ep = controller_endpoint_for(&setup, &pk).map_err(CliError::validation)?;
    let listener = std::net::TcpListener::bind(&listen).map_err(CliError::runtime)?;
    println!("controller listening on {listen}");
    loop {
        match session::serve_controller(&listener, &ep) {
            Ok(report) => println!(
                "session done: {} steps served, {} frames discarded",
                report.steps_served, report.discarded_frames
            ),
            Err(e) => eprintln!("session error: {e}"),
        }
        if !keep_serving {
            break;
        }
    }
    Ok(())
}

pub fn bench(args: BenchArgs) -> Result<(), CliError> {
    for bits in &args.bits {
        if !SUPPORTED_KEY_BITS.contains(bits) {
            return Err(CliError::Validation(format!("unsupported key length {bits}")));
        }
    }
    if args.reps == 0 {
        return Err(CliError::Validation("reps must be positive".into()));
    }
    let preset = cipherloop::presets::LoopPreset::by_name(&args.preset, 0.0)
        .map_err(CliError::validation)?;
    let rows = measure_min_period_with(&preset, &args.bits, args.reps, args.seed)
        .map_err(CliError::runtime)?;
    println!(
        "{:>8} {:>4} {:>14} {:>16} {:>18}",
        "key_bits", "w", "critical_us", "min_period_us", "inline_critical_us"
    );
    for r in &rows {
        println!(
            "{:>8} {:>4} {:>14} {:>16} {:>18}",
            r.key_bits, r.word_count, r.critical.median, r.min_period.median, r.inline_critical_median_us
        );
    }
    let mut csv = String::from(bench_csv_header());
    csv.push('\n');
    for r in &rows {
        csv.push_str(&bench_csv_row(r));
        csv.push('\n');
    }
    if let Some(path) = &args.out {
        std::fs::write(path, csv).map_err(CliError::runtime)?;
        println!("bench table written to {}", path.display());
    } else {
        print!("{csv}");
    }
    Ok(())
}

/// Column-wise summary of a numeric CSV (trajectory or bench output).
pub fn export(input: &Path) -> Result<(), CliError> {
    let text = std::fs::read_to_string(input).map_err(CliError::runtime)?;
    let mut lines = text.lines();
    let header = lines
        .next()
        .ok_or_else(|| CliError::Runtime("empty csv".into()))?;
    let columns: Vec<&str> = header.split(',').collect();
    let mut data: Vec<Vec<f64>> = vec![Vec::new(); columns.len()];
    let mut rows = 0usize;
    for line in lines {
        if line.trim().is_empty() {
            continue;
        }
        rows += 1;
        for (i, field) in line.split(',').enumerate() {
            if i < data.len() {
                if let Ok(v) = field.trim().parse::<f64>() {
                    data[i].push(v);
                }
            }
        }
    }
    println!("{}: {} rows", input.display(), rows);
    println!("{:>22} {:>12} {:>12} {:>12} {:>12}", "column", "min", "median", "p99", "max");
    for (name, series) in columns.iter().zip(&data) {
        if series.is_empty() {
            continue;
        }
        let as_int: Vec<u64> = series.iter().map(|v| (v * 1000.0) as u64).collect();
        let s = series_stats(&as_int);
        println!(
            "{:>22} {:>12.3} {:>12.3} {:>12.3} {:>12.3}",
            name,
            s.min as f64 / 1000.0,
            s.median as f64 / 1000.0,
            s.p99 as f64 / 1000.0,
            s.max as f64 / 1000.0
        );
    }
    Ok(())
}
