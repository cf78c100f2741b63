//! `cipherloop` — operator entry points: key generation, self-tests,
//! closed-loop runs (in-process or networked), services, benchmarks and
//! report export.
//!
//! Exit codes: 0 success, 1 configuration/validation failure, 2 runtime
//! fault. Log verbosity comes from `CIPHERLOOP_LOG` (error/warn/info/debug).

mod commands;
mod selftest;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

#[derive(Parser)]
#[command(name = "cipherloop", version, about = "Encrypted feedback control loop")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a key pair and write it to --out (private) and --out.pub.
    Keygen {
        /// Key length in bits: 64, 128, 256, 512 or 1024.
        #[arg(long)]
        bits: usize,
        #[arg(long)]
        out: PathBuf,
    },
    /// Quick built-in consistency checks.
    Selftest {
        #[arg(long, default_value_t = 1)]
        seed: u64,
    },
    /// Run a closed loop and report equivalence and latency.
    Run(RunArgs),
    /// Plant-interface service: connects to a controller (needs peer_addr).
    ServePlant {
        #[arg(long)]
        config: PathBuf,
        /// Private key file.
        #[arg(long)]
        key: PathBuf,
    },
    /// Controller service: listens for one session (needs listen_addr).
    ServeController {
        #[arg(long)]
        config: PathBuf,
        /// Public key file (the controller never sees the private key).
        #[arg(long)]
        pubkey: PathBuf,
        /// Serve sessions until killed instead of exiting after one.
        #[arg(long)]
        keep_serving: bool,
    },
    /// Latency study across key lengths; emits a CSV table.
    Bench(BenchArgs),
    /// Summarize a CSV produced by run/bench.
    Export {
        #[arg(long)]
        input: PathBuf,
    },
}

#[derive(Args)]
struct RunArgs {
    /// Preset name: qube, static or reset_pi (or set it in --config).
    #[arg(long)]
    preset: Option<String>,
    #[arg(long)]
    steps: Option<u64>,
    /// Private key file.
    #[arg(long)]
    key: PathBuf,
    /// Run the two services over loopback instead of in-process.
    #[arg(long)]
    networked: bool,
    #[arg(long)]
    seed: Option<u64>,
    /// Scalar setpoint (theta_s in encoder counts for qube).
    #[arg(long)]
    setpoint: Option<f64>,
    /// Trajectory CSV output path.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Loop configuration file; CLI flags override its values.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Randomizer scheduling: precompute (overlapped) or inline.
    #[arg(long)]
    randomizer: Option<String>,
    /// Ring width override (validated against the preset and key).
    #[arg(long)]
    n_prime: Option<u32>,
    /// Fractional bits override.
    #[arg(long)]
    m: Option<u32>,
    /// Reset period override: a step count or "inf".
    #[arg(long, value_name = "STEPS|inf")]
    reset: Option<String>,
}

#[derive(Args)]
struct BenchArgs {
    /// Comma-separated key lengths.
    #[arg(long, value_delimiter = ',', default_value = "64,128,256,512")]
    bits: Vec<usize>,
    /// Controller structure to time (default: the experiment preset).
    #[arg(long, default_value = "qube")]
    preset: String,
    /// Measured steps per key length.
    #[arg(long, default_value_t = 100)]
    reps: u64,
    /// CSV output path.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, default_value_t = 1)]
    seed: u64,
}

/// Failure classes mapped onto the exit-code contract.
pub enum CliError {
    /// Bad configuration, parameters or validation: exit 1.
    Validation(String),
    /// Faults while running: exit 2.
    Runtime(String),
}

impl CliError {
    fn validation(e: impl std::fmt::Display) -> CliError {
        CliError::Validation(e.to_string())
    }

    fn runtime(e: impl std::fmt::Display) -> CliError {
        CliError::Runtime(e.to_string())
    }
}

fn main() -> ExitCode {
    // die quietly when stdout is a closed pipe (e.g. piped into head)
    #[cfg(unix)]
    unsafe {
        libc::signal(libc::SIGPIPE, libc::SIG_DFL);
    }
    env_logger::Builder::from_env(
        env_logger::Env::new()
            .filter("CIPHERLOOP_LOG")
            .default_filter_or("warn"),
    )
    .init();
    let cli = Cli::parse();
    match dispatch(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(CliError::Validation(msg)) => {
            eprintln!("error (validation): {msg}");
            ExitCode::from(1)
        }
        Err(CliError::Runtime(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
    }
}

fn dispatch(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Keygen { bits, out } => commands::keygen(bits, &out),
        Command::Selftest { seed } => selftest::run(seed),
        Command::Run(args) => commands::run(args),
        Command::ServePlant { config, key } => commands::serve_plant(&config, &key),
        Command::ServeController {
            config,
            pubkey,
            keep_serving,
        } => commands::serve_controller(&config, &pubkey, keep_serving),
        Command::Bench(args) => commands::bench(args),
        Command::Export { input } => commands::export(&input),
    }
}
