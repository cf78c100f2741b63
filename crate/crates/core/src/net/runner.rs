//! The plant-interface loop body, shared between the in-process reference
//! loop and the networked session.
//!
//! Per tick `k`: sample the plant, map the outputs to controller signals,
//! encode and encrypt them (consuming randomizer powers that a worker
//! thread precomputes one tick ahead, unless inline mode is selected),
//! exchange ciphertexts with the controller, decrypt, decode, clamp, and
//! actuate. A plaintext-integer shadow controller advances in lockstep and
//! every decrypted control residue is compared against it, so each run
//! carries its own exactness audit.

use std::sync::mpsc;
use std::thread::JoinHandle;
use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;

use crate::bignum::BigUint;
use crate::controller::{ControllerSpec, EncState, PlainIntState};
use crate::net::timing::{micros, StepTiming};
use crate::net::NetError;
use crate::paillier::{
    calc_randomizer, decrypt, encrypt, encrypt_deterministic, sample_randomizer, Ciphertext,
    KeyPair, PublicKey, RandomizerPower,
};
use crate::plant::{clamp_round, PlantSim};
use crate::presets::LoopPreset;

/// Where the `r^N` powers come from.
#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub enum RandomizerMode {
    /// A worker thread computes the batch for tick `k+1` while tick `k` is
    /// in flight; the critical path pays only the residual wait.
    Precompute,
    /// Computed on the critical path, for comparison.
    Inline,
}

/// One run's settings, independent of transport.
#[derive(Clone, Debug)]
pub struct LoopSetup {
    pub preset: LoopPreset,
    pub steps: u64,
    pub seed: u64,
    pub randomizer: RandomizerMode,
    /// Pace ticks to the preset sample period (real-time mode) instead of
    /// free-running.
    pub pace: bool,
    pub reply_timeout_us: u64,
}

impl LoopSetup {
    pub fn new(preset: LoopPreset, steps: u64, seed: u64) -> LoopSetup {
        LoopSetup {
            preset,
            steps,
            seed,
            randomizer: RandomizerMode::Precompute,
            pace: false,
            reply_timeout_us: 5_000_000,
        }
    }
}

/// Trajectory row as logged to CSV.
#[derive(Clone, Debug)]
pub struct TrajectoryRow {
    pub step: u64,
    pub time_s: f64,
    pub signals: Vec<f64>,
    pub u_duty: Vec<i64>,
}

/// Outcome of a plant-interface run.
#[derive(Debug, Default)]
pub struct LoopReport {
    pub rows: Vec<TrajectoryRow>,
    pub timings: Vec<StepTiming>,
    pub missed_deadlines: u64,
    pub held_steps: u64,
    pub equivalence_mismatches: u64,
    pub saturation_events: u64,
    pub range_flags: u64,
}

impl LoopReport {
    pub fn equivalence_exact(&self) -> bool {
        self.equivalence_mismatches == 0
    }
}

/// One measurement->control exchange. `None` means the control did not
/// arrive in time and the caller holds the last input.
pub trait ControlRound {
    fn round(
        &mut self,
        k: u64,
        y_cts: &[Ciphertext],
        timing: &mut StepTiming,
    ) -> Result<Option<Vec<Ciphertext>>, NetError>;

    /// Signal the end of the session.
    fn finish(&mut self) -> Result<(), NetError> {
        Ok(())
    }
}

/// Direct function-call transport: the controller lives in this process.
pub struct InProcessChannel<'a> {
    spec: &'a ControllerSpec,
    pk: &'a PublicKey,
    state: EncState,
    setpoint_cts: Vec<Ciphertext>,
}

impl<'a> InProcessChannel<'a> {
    pub fn new(
        spec: &'a ControllerSpec,
        pk: &'a PublicKey,
        setpoint_residues: &[u128],
    ) -> Result<InProcessChannel<'a>, NetError> {
        // Setpoints are encrypted at the controller without randomness,
        // mirroring the benchmark arrangement.
        let setpoint_cts = setpoint_residues
            .iter()
            .map(|&r| encrypt_deterministic(pk, &BigUint::from_u128(r)))
            .collect::<Result<_, _>>()?;
        Ok(InProcessChannel {
            spec,
            pk,
            state: spec.enc_initial(pk),
            setpoint_cts,
        })
    }
}

impl ControlRound for InProcessChannel<'_> {
    fn round(
        &mut self,
        _k: u64,
        y_cts: &[Ciphertext],
        timing: &mut StepTiming,
    ) -> Result<Option<Vec<Ciphertext>>, NetError> {
        let t = Instant::now();
        let u = self.spec.encrypted_generate_control(self.pk, &self.state)?;
        timing.control_us = micros(t.elapsed());

        let t = Instant::now();
        self.state =
            self.spec
                .encrypted_update_state(self.pk, &self.state, &self.setpoint_cts, y_cts)?;
        timing.update_us = micros(t.elapsed());
        Ok(Some(u))
    }
}

/// Worker thread precomputing randomizer-power batches one tick ahead.
pub struct RandomizerPipeline {
    req_tx: Option<mpsc::Sender<usize>>,
    batch_rx: mpsc::Receiver<Vec<RandomizerPower>>,
    handle: Option<JoinHandle<()>>,
}

impl RandomizerPipeline {
    pub fn spawn(pk: PublicKey, seed: u64) -> RandomizerPipeline {
        let (req_tx, req_rx) = mpsc::channel::<usize>();
        let (batch_tx, batch_rx) = mpsc::channel();
        let handle = std::thread::spawn(move || {
            let mut rng = ChaCha20Rng::seed_from_u64(seed);
            while let Ok(count) = req_rx.recv() {
                let batch: Vec<RandomizerPower> = (0..count)
                    .map(|_| {
                        let r = sample_randomizer(&pk, &mut rng);
                        calc_randomizer(&pk, &r).expect("randomizer in range")
                    })
                    .collect();
                if batch_tx.send(batch).is_err() {
                    break;
                }
            }
        });
        RandomizerPipeline {
            req_tx: Some(req_tx),
            batch_rx,
            handle: Some(handle),
        }
    }

    pub fn request(&self, count: usize) {
        if let Some(tx) = &self.req_tx {
            let _ = tx.send(count);
        }
    }

    /// Blocking take of the next batch; the caller times the wait.
    pub fn take(&self) -> Vec<RandomizerPower> {
        self.batch_rx.recv().expect("randomizer worker alive")
    }
}

impl Drop for RandomizerPipeline {
    fn drop(&mut self) {
        self.req_tx.take();
        if let Some(h) = self.handle.take() {
            let _ = h.join();
        }
    }
}

/// Encoded per-tick signals: the setpoint and measurement residues plus the
/// logged (post-rounding) signal values.
fn encode_signals(
    spec: &ControllerSpec,
    values: &[f64],
    saturations: &mut u64,
) -> Result<Vec<u128>, NetError> {
    values
        .iter()
        .map(|&v| {
            let (res, sat) = spec.encode_signal(v)?;
            if sat {
                *saturations += 1;
            }
            Ok(res)
        })
        .collect()
}

/// Drive the full plant-interface loop over an arbitrary transport.
pub fn run_plant_loop(
    setup: &LoopSetup,
    kp: &KeyPair,
    spec: &ControllerSpec,
    channel: &mut dyn ControlRound,
) -> Result<LoopReport, NetError> {
    let pk = &kp.public;
    let preset = &setup.preset;
    let dims = spec.dims();
    let mut plant = PlantSim::new(preset.plant.clone(), preset.default_disturbances.clone());
    let mut report = LoopReport::default();
    let mut shadow: PlainIntState = spec.int_initial();
    let mut rng = ChaCha20Rng::seed_from_u64(setup.seed ^ 0x11);
    let setpoint_res = encode_signals(spec, &preset.setpoint, &mut report.saturation_events)?;

    let pipeline = match setup.randomizer {
        RandomizerMode::Precompute => {
            let p = RandomizerPipeline::spawn(pk.clone(), setup.seed ^ 0x22);
            p.request(dims.n_y);
            Some(p)
        }
        RandomizerMode::Inline => None,
    };

    let mut held_u: Vec<i64> = vec![0; dims.n_u];
    let period_us = preset.sample_period_us;
    let start = Instant::now();
    let mut next_tick = Instant::now();

    for k in 0..setup.steps {
        if setup.pace {
            let now = Instant::now();
            if now < next_tick {
                std::thread::sleep(next_tick - now);
            }
            next_tick += std::time::Duration::from_micros(period_us);
        }
        let tick_start = Instant::now();
        let mut timing = StepTiming {
            step: k,
            ..Default::default()
        };

        // sample and encode
        let mapped = preset.measurement_map.apply(&plant.output());
        let logged: Vec<f64> = if spec.signal_scale() == 0 {
            mapped.iter().map(|v| v.round()).collect()
        } else {
            mapped.clone()
        };
        let y_res = encode_signals(spec, &mapped, &mut report.saturation_events)?;

        // randomizer powers for this tick
        let t = Instant::now();
        let zs: Vec<RandomizerPower> = match &pipeline {
            Some(p) => {
                let batch = p.take();
                // immediately start the batch for the next tick
                p.request(dims.n_y);
                batch
            }
            None => (0..dims.n_y)
                .map(|_| {
                    let r = sample_randomizer(pk, &mut rng);
                    calc_randomizer(pk, &r).map_err(NetError::from)
                })
                .collect::<Result<_, _>>()?,
        };
        timing.randomizer_us = micros(t.elapsed());

        // encrypt measurements
        let t = Instant::now();
        let y_cts: Vec<Ciphertext> = y_res
            .iter()
            .zip(&zs)
            .map(|(&res, z)| encrypt(pk, &BigUint::from_u128(res), z))
            .collect::<Result<_, _>>()?;
        timing.encrypt_us = micros(t.elapsed());

        // exchange with the controller
        let reply = channel.round(k, &y_cts, &mut timing)?;

        // shadow integer controller, advanced with the same inputs the real
        // controller received
        let u_int = spec.int_generate(&shadow);
        let (next_shadow, range_flag) = spec.int_update(&shadow, &setpoint_res, &y_res)?;
        shadow = next_shadow;
        if range_flag {
            report.range_flags += 1;
        }

        let u_duty: Vec<i64> = match reply {
            Some(u_cts) => {
                let t = Instant::now();
                let residues: Vec<u128> = u_cts
                    .iter()
                    .map(|c| {
                        decrypt(&kp.private, pk, c)
                            .map(|p| p.low_u128(spec.codec().n_prime as usize))
                    })
                    .collect::<Result<_, _>>()?;
                timing.decrypt_us = micros(t.elapsed());

                for (i, &res) in residues.iter().enumerate() {
                    if res != u_int[i] {
                        report.equivalence_mismatches += 1;
                    }
                }
                residues
                    .iter()
                    .enumerate()
                    .map(|(i, &res)| {
                        let value = spec.decode_control(res, k, i).to_f64();
                        clamp_round(value, preset.clamp.0, preset.clamp.1)
                    })
                    .collect()
            }
            None => {
                report.held_steps += 1;
                held_u.clone()
            }
        };
        held_u = u_duty.clone();

        // actuate
        let u_f: Vec<f64> = u_duty.iter().map(|&v| v as f64).collect();
        plant.apply(&u_f)?;

        timing.total_us = micros(tick_start.elapsed());
        if timing.total_us > period_us {
            timing.deadline_missed = true;
            report.missed_deadlines += 1;
        }
        report.rows.push(TrajectoryRow {
            step: k,
            time_s: start.elapsed().as_secs_f64(),
            signals: logged,
            u_duty: u_duty.clone(),
        });
        report.timings.push(timing);
    }
    channel.finish()?;
    Ok(report)
}

/// Whole loop in one process: plant interface and controller side by side.
pub fn run_in_process(setup: &LoopSetup, kp: &KeyPair) -> Result<LoopReport, NetError> {
    let spec = setup.preset.build_spec(kp.public.key_bits())?;
    run_in_process_with_spec(setup, kp, &spec)
}

/// In-process run over a caller-provided controller spec (used by the
/// latency harness, which skips budget validation).
pub fn run_in_process_with_spec(
    setup: &LoopSetup,
    kp: &KeyPair,
    spec: &ControllerSpec,
) -> Result<LoopReport, NetError> {
    let mut sat = 0u64;
    let setpoint_res = encode_signals(spec, &setup.preset.setpoint, &mut sat)?;
    let mut channel = InProcessChannel::new(spec, &kp.public, &setpoint_res)?;
    run_plant_loop(setup, kp, spec, &mut channel)
}

/// Write the trajectory/timing CSV (the documented log schema).
pub fn trajectory_csv(report: &LoopReport) -> String {
    let mut out = String::from(
        "step,time_s,theta_counts,alpha_counts,u_duty,randomizer_us,encrypt_us,network_out_us,\
control_us,network_back_us,decrypt_us,update_us,total_us\n",
    );
    for (row, t) in report.rows.iter().zip(&report.timings) {
        let theta = row.signals.first().copied().unwrap_or(0.0);
        let alpha = row
            .signals
            .get(2)
            .or_else(|| row.signals.last())
            .copied()
            .unwrap_or(0.0);
        out.push_str(&format!(
            "{},{:.6},{},{},{},{},{},{},{},{},{},{},{}\n",
            row.step,
            row.time_s,
            theta,
            alpha,
            row.u_duty.first().copied().unwrap_or(0),
            t.randomizer_us,
            t.encrypt_us,
            t.network_out_us,
            t.control_us,
            t.network_back_us,
            t.decrypt_us,
            t.update_us,
            t.total_us,
        ));
    }
    out
}
