//! Loop configuration file: plain text, one `key = value` per line, `#`
//! comments.
//!
//! Recognized keys (all optional except `preset`):
//!
//! ```text
//! preset            = qube | static | reset_pi
//! key_bits          = 64 | 128 | 256 | 512 | 1024
//! n_prime           = ring width override
//! m                 = fractional bits override
//! n                 = total bits override
//! T                 = reset period in steps, or "inf"
//! sample_period_us  = loop period in microseconds
//! steps             = number of loop iterations
//! seed              = deterministic seed for disturbances/randomizers
//! setpoint          = scalar setpoint (theta_s in counts for qube)
//! listen_addr       = controller bind address (serve-controller)
//! peer_addr         = controller address (plant side)
//! log_path          = trajectory CSV path
//! reply_timeout_us  = plant-side control reply deadline
//! randomizer_mode   = precompute | inline
//! pace              = true | false (real-time pacing)
//! disturbance       = step,channel,magnitude,impulse|step  (repeatable)
//! ```
//!
//! Codec/period overrides are applied onto the named preset before
//! validation, so an inconsistent combination fails at build time, before
//! any traffic.

use std::path::{Path, PathBuf};

use thiserror::Error;

use crate::codec::{CodecError, FixedSpec, ResetPeriod};
use crate::net::runner::{LoopSetup, RandomizerMode};
use crate::plant::{Disturbance, DisturbanceEvent, DisturbanceKind};
use crate::presets::{LoopPreset, PresetError};

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("config line {line}: {reason}")]
    Parse { line: usize, reason: String },
    #[error("missing required key {0:?}")]
    Missing(&'static str),
    #[error(transparent)]
    Preset(#[from] PresetError),
    #[error(transparent)]
    Codec(#[from] CodecError),
}

#[derive(Clone, Debug, Default)]
pub struct LoopConfig {
    pub preset: Option<String>,
    pub key_bits: Option<usize>,
    pub n_prime: Option<u32>,
    pub m: Option<u32>,
    pub n: Option<u32>,
    pub reset: Option<ResetPeriod>,
    pub sample_period_us: Option<u64>,
    pub steps: Option<u64>,
    pub seed: Option<u64>,
    pub setpoint: Option<f64>,
    pub listen_addr: Option<String>,
    pub peer_addr: Option<String>,
    pub log_path: Option<PathBuf>,
    pub reply_timeout_us: Option<u64>,
    pub randomizer_mode: Option<RandomizerMode>,
    pub pace: Option<bool>,
    pub disturbances: Vec<DisturbanceEvent>,
}

fn parse_err(line: usize, reason: impl Into<String>) -> ConfigError {
    ConfigError::Parse {
        line,
        reason: reason.into(),
    }
}

impl LoopConfig {
    pub fn load(path: &Path) -> Result<LoopConfig, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        LoopConfig::parse(&text)
    }

    pub fn parse(text: &str) -> Result<LoopConfig, ConfigError> {
        let mut cfg = LoopConfig::default();
        for (idx, raw) in text.lines().enumerate() {
            let lineno = idx + 1;
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| parse_err(lineno, format!("expected `key = value`: {line:?}")))?;
            let (key, value) = (key.trim(), value.trim());
            let bad = |what: &str| parse_err(lineno, format!("invalid {what}: {value:?}"));
            match key {
                "preset" => cfg.preset = Some(value.to_string()),
                "key_bits" => cfg.key_bits = Some(value.parse().map_err(|_| bad("key_bits"))?),
                "n_prime" => cfg.n_prime = Some(value.parse().map_err(|_| bad("n_prime"))?),
                "m" => cfg.m = Some(value.parse().map_err(|_| bad("m"))?),
                "n" => cfg.n = Some(value.parse().map_err(|_| bad("n"))?),
                "T" => {
                    cfg.reset = Some(if value.eq_ignore_ascii_case("inf") {
                        ResetPeriod::Infinite
                    } else {
                        ResetPeriod::Steps(value.parse().map_err(|_| bad("T"))?)
                    })
                }
                "sample_period_us" => {
                    cfg.sample_period_us = Some(value.parse().map_err(|_| bad("period"))?)
                }
                "steps" => cfg.steps = Some(value.parse().map_err(|_| bad("steps"))?),
                "seed" => cfg.seed = Some(value.parse().map_err(|_| bad("seed"))?),
                "setpoint" => cfg.setpoint = Some(value.parse().map_err(|_| bad("setpoint"))?),
                "listen_addr" => cfg.listen_addr = Some(value.to_string()),
                "peer_addr" => cfg.peer_addr = Some(value.to_string()),
                "log_path" => cfg.log_path = Some(PathBuf::from(value)),
                "reply_timeout_us" => {
                    cfg.reply_timeout_us = Some(value.parse().map_err(|_| bad("timeout"))?)
                }
                "randomizer_mode" => {
                    cfg.randomizer_mode = Some(match value {
                        "precompute" => RandomizerMode::Precompute,
                        "inline" => RandomizerMode::Inline,
                        _ => return Err(bad("randomizer_mode")),
                    })
                }
                "pace" => cfg.pace = Some(value.parse().map_err(|_| bad("pace"))?),
                "disturbance" => cfg.disturbances.push(parse_disturbance(lineno, value)?),
                other => {
                    return Err(parse_err(lineno, format!("unknown key {other:?}")));
                }
            }
        }
        Ok(cfg)
    }

    /// Resolve the named preset and apply every override.
    pub fn resolved_preset(&self) -> Result<LoopPreset, ConfigError> {
        let name = self.preset.as_deref().ok_or(ConfigError::Missing("preset"))?;
        let mut preset = LoopPreset::by_name(name, self.setpoint.unwrap_or(0.0))?;
        if self.n.is_some() || self.m.is_some() || self.n_prime.is_some() {
            preset.codec = FixedSpec::new(
                self.n.unwrap_or(preset.codec.n),
                self.m.unwrap_or(preset.codec.m),
                self.n_prime.unwrap_or(preset.codec.n_prime),
            )?;
        }
        if let Some(reset) = self.reset {
            preset.gains.reset = reset;
        }
        if let Some(p) = self.sample_period_us {
            preset.sample_period_us = p;
        }
        if !self.disturbances.is_empty() {
            preset.default_disturbances = Disturbance {
                events: self.disturbances.clone(),
            };
        }
        Ok(preset)
    }

    /// Full run setup (preset plus run-shape knobs).
    pub fn loop_setup(&self) -> Result<LoopSetup, ConfigError> {
        let preset = self.resolved_preset()?;
        let mut setup = LoopSetup::new(
            preset,
            self.steps.unwrap_or(1000),
            self.seed.unwrap_or(0),
        );
        if let Some(mode) = self.randomizer_mode {
            setup.randomizer = mode;
        }
        if let Some(t) = self.reply_timeout_us {
            setup.reply_timeout_us = t;
        }
        if let Some(p) = self.pace {
            setup.pace = p;
        }
        Ok(setup)
    }
}

fn parse_disturbance(lineno: usize, value: &str) -> Result<DisturbanceEvent, ConfigError> {
    let parts: Vec<&str> = value.split(',').map(|p| p.trim()).collect();
    if parts.len() != 4 {
        return Err(parse_err(
            lineno,
            "disturbance needs step,channel,magnitude,kind",
        ));
    }
    let kind = match parts[3] {
        "impulse" => DisturbanceKind::Impulse,
        "step" => DisturbanceKind::Step,
        other => return Err(parse_err(lineno, format!("unknown disturbance kind {other:?}"))),
    };
    Ok(DisturbanceEvent {
        step: parts[0]
            .parse()
            .map_err(|_| parse_err(lineno, "bad disturbance step"))?,
        channel: parts[1]
            .parse()
            .map_err(|_| parse_err(lineno, "bad disturbance channel"))?,
        magnitude: parts[2]
            .parse()
            .map_err(|_| parse_err(lineno, "bad disturbance magnitude"))?,
        kind,
    })
}
