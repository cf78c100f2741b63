//! Named loop presets bundling controller gains, codec parameters, a plant
//! and the signal wiring.
//!
//! `qube` is the rotary inverted-pendulum controller: a 4-state delay
//! structure computing first-difference velocities, run at 500 Hz with
//! `n' = 32`, `m = 7` and integer encoder-count signals. Signals are
//! `y[k] = [theta, theta, alpha]` and `s[k] = [0, theta_s, 1024]`, all in
//! encoder counts (2048 per revolution), and the control is a signed duty
//! cycle in `[-999, 999]`.
//!
//! The physical pendulum itself is out of reach of a simulation; the plant
//! behind the preset is a *surrogate* — a small stable linear model in
//! count units whose parameters are made up for exercising the loop, not
//! identified from hardware. Every correctness claim in this crate rests on
//! encrypted-vs-plaintext equivalence, never on trajectory fidelity.

use std::f64::consts::PI;

use thiserror::Error;

use crate::codec::{FixedSpec, ResetPeriod};
use crate::controller::{ControllerError, ControllerGains, ControllerSpec, QuantizedController};
use crate::controller::quantize_gains;
use crate::plant::{Disturbance, DisturbanceEvent, DisturbanceKind, PlantModel};

#[derive(Debug, Error)]
pub enum PresetError {
    #[error("unknown preset {0:?} (available: static, reset_pi, qube)")]
    Unknown(String),
}

/// How plant outputs become controller measurement signals.
#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub enum MeasurementMap {
    /// Controller signals are the plant outputs, rounded to counts when the
    /// signal scale is integer.
    Direct,
    /// Rotary-pendulum wiring: plant outputs `(theta, alpha_dev)` map to
    /// `[theta, theta, 1024 + alpha_dev]`.
    Qube,
}

impl MeasurementMap {
    pub fn apply(&self, y_plant: &[f64]) -> Vec<f64> {
        match self {
            MeasurementMap::Direct => y_plant.to_vec(),
            MeasurementMap::Qube => vec![y_plant[0], y_plant[0], 1024.0 + y_plant[1]],
        }
    }
}

/// Everything needed to close a loop: gains, codec, plant and wiring.
#[derive(Clone, Debug)]
pub struct LoopPreset {
    pub name: &'static str,
    pub gains: ControllerGains,
    pub codec: FixedSpec,
    pub signal_scale: u32,
    pub plant: PlantModel,
    pub measurement_map: MeasurementMap,
    pub setpoint: Vec<f64>,
    pub sample_period_us: u64,
    pub clamp: (i64, i64),
    pub default_disturbances: Disturbance,
}

impl LoopPreset {
    pub fn by_name(name: &str, setpoint: f64) -> Result<LoopPreset, PresetError> {
        match name {
            "static" => Ok(static_preset(setpoint)),
            "reset_pi" | "reset-pi" => Ok(reset_pi_preset(setpoint)),
            "qube" => Ok(qube_preset(setpoint)),
            other => Err(PresetError::Unknown(other.to_string())),
        }
    }

    pub fn quantized(&self) -> (QuantizedController, u32) {
        quantize_gains(&self.gains, &self.codec)
    }

    /// Quantize, encode and validate against a key length.
    pub fn build_spec(&self, key_bits: usize) -> Result<ControllerSpec, ControllerError> {
        let (q, _) = self.quantized();
        ControllerSpec::build(&q, self.codec, self.signal_scale, key_bits)
    }

    /// Encode without the plaintext-budget validation (latency harness).
    pub fn build_spec_for_timing(&self) -> Result<ControllerSpec, ControllerError> {
        let (q, _) = self.quantized();
        ControllerSpec::build_for_timing(&q, self.codec, self.signal_scale)
    }
}

/// Stable scalar plant used by the scalar presets.
fn scalar_plant() -> PlantModel {
    PlantModel {
        a: vec![vec![0.95]],
        b: vec![vec![0.02]],
        c: vec![vec![1.0]],
        dt: 0.002,
    }
}

/// Static gain controller: `A = 0`, `B = I`, `C = K`; the state is a pure
/// one-step delay, so no reset is needed.
pub fn static_preset(setpoint: f64) -> LoopPreset {
    LoopPreset {
        name: "static",
        gains: ControllerGains {
            a: vec![vec![0.0]],
            b: vec![vec![1.0]],
            c: vec![vec![0.5]],
            reset: ResetPeriod::Infinite,
        },
        codec: FixedSpec::new(8, 4, 16).unwrap(),
        signal_scale: 1,
        plant: scalar_plant(),
        measurement_map: MeasurementMap::Direct,
        setpoint: vec![setpoint],
        sample_period_us: 2000,
        clamp: (-999, 999),
        default_disturbances: Disturbance {
            events: vec![DisturbanceEvent {
                step: 50,
                channel: 0,
                magnitude: 2.0,
                kind: DisturbanceKind::Impulse,
            }],
        },
    }
}

/// Resetting PI controller: `A = diag(1, 0)`, `B = [dt, 1]^T`,
/// `C = [K_I, K_p]`, integral state zeroed every other step. The sample
/// period is coarse (4 Hz) so that `dt` sits exactly on the `m = 3`
/// quantization grid; a finer grid would push the decode scale past what a
/// 64-bit key's plaintext budget can hold.
pub fn reset_pi_preset(setpoint: f64) -> LoopPreset {
    let dt = 0.25;
    LoopPreset {
        name: "reset_pi",
        gains: ControllerGains {
            a: vec![vec![1.0, 0.0], vec![0.0, 0.0]],
            b: vec![vec![dt], vec![1.0]],
            c: vec![vec![1.0, 2.0]],
            reset: ResetPeriod::Steps(2),
        },
        codec: FixedSpec::new(7, 3, 14).unwrap(),
        signal_scale: 1,
        plant: PlantModel {
            a: vec![vec![0.8]],
            b: vec![vec![0.1]],
            c: vec![vec![1.0]],
            dt,
        },
        measurement_map: MeasurementMap::Direct,
        setpoint: vec![setpoint],
        sample_period_us: 250_000,
        clamp: (-999, 999),
        default_disturbances: Disturbance {
            events: vec![DisturbanceEvent {
                step: 50,
                channel: 0,
                magnitude: 1.0,
                kind: DisturbanceKind::Impulse,
            }],
        },
    }
}

/// The rotary inverted-pendulum controller, 500 Hz, `n' = 32`, `m = 7`,
/// integer encoder-count signals. `theta_s` is the arm setpoint in counts.
pub fn qube_preset(theta_s: f64) -> LoopPreset {
    let g = 125.0 * PI / 3072.0;
    let gains = ControllerGains {
        a: vec![
            vec![0.0, 0.0, 0.0, 0.0],
            vec![0.0, 0.0, 0.0, 0.0],
            vec![0.0, 0.0, 0.0, 0.0],
            vec![g * 500.0, 0.0, g * 625.0, 0.0],
        ],
        b: vec![
            vec![1.0, 0.0, 0.0],
            vec![0.0, 1.0, 0.0],
            vec![0.0, 0.0, 1.0],
            vec![0.0, 0.0, 0.0],
        ],
        c: vec![vec![g * -500.0, g * -2.0, g * -655.0, 1.0]],
        reset: ResetPeriod::Infinite,
    };
    // m = 7 puts the gains on the 1/128 grid; n = 26 spans +-2^18 in count
    // units, holding both full encoder swings and the gain-scaled error
    // combinations the fourth state component accumulates.
    LoopPreset {
        name: "qube",
        gains,
        codec: FixedSpec::new(26, 7, 32).unwrap(),
        signal_scale: 0,
        plant: qube_surrogate_plant(),
        measurement_map: MeasurementMap::Qube,
        setpoint: vec![0.0, theta_s, 1024.0],
        sample_period_us: 2000,
        clamp: (-999, 999),
        default_disturbances: Disturbance {
            events: vec![
                DisturbanceEvent {
                    step: 150,
                    channel: 1,
                    magnitude: 80.0,
                    kind: DisturbanceKind::Impulse,
                },
                DisturbanceEvent {
                    step: 600,
                    channel: 1,
                    magnitude: -60.0,
                    kind: DisturbanceKind::Impulse,
                },
            ],
        },
    }
}

/// Surrogate rotary-pendulum plant. NOT identified from hardware: a stable
/// two-oscillator model in encoder-count units (states theta, theta_dot,
/// alpha_dev, alpha_dev_dot) with input coupling chosen so trajectories stay
/// in a realistic count range. Parameters are adjustable folklore, kept
/// here only to drive the loop.
pub fn qube_surrogate_plant() -> PlantModel {
    let dt = 0.002;
    let (c0, d1, ku) = (200.0, 8.0, -40.0);
    let (w2, d2, kc) = (150.0, 6.0, -20.0);
    PlantModel {
        a: vec![
            vec![1.0, dt, 0.0, 0.0],
            vec![-c0 * dt, 1.0 - d1 * dt, 0.0, 0.0],
            vec![0.0, 0.0, 1.0, dt],
            vec![0.0, 0.0, -w2 * dt, 1.0 - d2 * dt],
        ],
        b: vec![vec![0.0], vec![ku * dt], vec![0.0], vec![kc * dt]],
        c: vec![
            vec![1.0, 0.0, 0.0, 0.0],
            vec![0.0, 0.0, 1.0, 0.0],
        ],
        dt,
    }
}

/// Arm/pendulum encoder readings and the arm setpoint, in counts.
#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub struct QubeSignals {
    pub theta: i64,
    pub alpha: i64,
    pub theta_s: i64,
}

impl QubeSignals {
    /// `y[k] = [theta, theta, alpha]`.
    pub fn measurement(&self) -> [i64; 3] {
        [self.theta, self.theta, self.alpha]
    }

    /// `s[k] = [0, theta_s, 1024]`.
    pub fn setpoint(&self) -> [i64; 3] {
        [0, self.theta_s, 1024]
    }
}
