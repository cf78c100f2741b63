//! Plant-interface and controller services over a persistent TCP stream.
//!
//! Session shape: the plant interface connects, sends a hello frame with
//! its session parameters, and the controller replies with its own hello
//! after verifying every field matches (anything else refuses the
//! session). Then, per tick `k`, the plant sends a measurement batch with
//! `seq = k` (preceded by a setpoint batch when setpoints are remote), and
//! the controller answers with a control batch carrying the same `seq`
//! before updating its state. A shutdown frame ends the session.
//!
//! The controller side holds the public key only; out-of-order frames are
//! discarded with a warning, malformed frames abort the session, and a
//! missing control reply makes the plant hold its last input.

use std::io::ErrorKind;
use std::net::{TcpListener, TcpStream};
use std::time::{Duration, Instant};

use log::{info, warn};

use crate::bignum::BigUint;
use crate::controller::ControllerSpec;
use crate::net::timing::{micros, StepTiming};
use crate::net::wire::{
    decode_batch, encode_batch, read_frame, write_frame, Frame, SessionParams, MSG_CONTROL,
    MSG_HELLO, MSG_MEASUREMENT, MSG_SETPOINT, MSG_SHUTDOWN,
};
use crate::net::NetError;
use crate::paillier::{encrypt_deterministic, Ciphertext, KeyPair, PublicKey};
use crate::net::runner::{run_plant_loop, ControlRound, LoopReport, LoopSetup};

/// Controller-side endpoint: spec, public key, expected session shape and
/// the locally encrypted setpoints. No private key material exists here.
pub struct ControllerEndpoint {
    pub spec: ControllerSpec,
    pub pk: PublicKey,
    pub params: SessionParams,
    pub setpoint_residues: Vec<u128>,
}

#[derive(Debug, Default)]
pub struct ControllerReport {
    pub steps_served: u64,
    pub discarded_frames: u64,
}

/// Accept one session on `listener` and serve it to completion.
pub fn serve_controller(
    listener: &TcpListener,
    ep: &ControllerEndpoint,
) -> Result<ControllerReport, NetError> {
    let (stream, peer) = listener.accept()?;
    info!("controller: session from {peer}");
    serve_controller_stream(stream, ep)
}

pub fn serve_controller_stream(
    mut stream: TcpStream,
    ep: &ControllerEndpoint,
) -> Result<ControllerReport, NetError> {
    stream.set_nodelay(true)?;
    let hello = read_frame(&mut stream)?;
    if hello.msg_type != MSG_HELLO {
        return Err(NetError::Protocol("expected hello first".into()));
    }
    let theirs = SessionParams::decode(&hello.payload)?;
    if theirs != ep.params {
        let _ = write_frame(
            &mut stream,
            &Frame {
                msg_type: MSG_SHUTDOWN,
                seq: 0,
                payload: Vec::new(),
            },
        );
        return Err(NetError::Refused(format!(
            "session parameters mismatch: theirs {theirs:?}, ours {:?}",
            ep.params
        )));
    }
    write_frame(
        &mut stream,
        &Frame {
            msg_type: MSG_HELLO,
            seq: 0,
            payload: ep.params.encode(),
        },
    )?;

    let pk = &ep.pk;
    let dims = ep.spec.dims();
    let mut state = ep.spec.enc_initial(pk);
    let mut report = ControllerReport::default();
    let local_setpoints: Vec<Ciphertext> = ep
        .setpoint_residues
        .iter()
        .map(|&r| encrypt_deterministic(pk, &BigUint::from_u128(r)))
        .collect::<Result<_, _>>()?;
    let mut remote_setpoints: Option<Vec<Ciphertext>> = None;

    loop {
        let frame = match read_frame(&mut stream) {
            Ok(f) => f,
            Err(crate::net::wire::WireError::Io(e))
                if e.kind() == ErrorKind::UnexpectedEof =>
            {
                info!("controller: peer closed");
                break;
            }
            Err(e) => return Err(e.into()),
        };
        match frame.msg_type {
            MSG_SETPOINT => {
                remote_setpoints = Some(decode_batch(pk, &frame.payload, dims.n_y)?);
            }
            MSG_MEASUREMENT => {
                // The state advances once per step; anything but the step
                // the state sits at is out of order.
                if frame.seq != state.step {
                    warn!(
                        "controller: out-of-order measurement seq {} at state step {}, discarding",
                        frame.seq, state.step
                    );
                    report.discarded_frames += 1;
                    continue;
                }
                let y = decode_batch(pk, &frame.payload, dims.n_y)?;
                let u = ep.spec.encrypted_generate_control(pk, &state)?;
                write_frame(
                    &mut stream,
                    &Frame {
                        msg_type: MSG_CONTROL,
                        seq: frame.seq,
                        payload: encode_batch(pk, &u)?,
                    },
                )?;
                let s = remote_setpoints.as_ref().unwrap_or(&local_setpoints);
                state = ep.spec.encrypted_update_state(pk, &state, s, &y)?;
                report.steps_served += 1;
            }
            MSG_SHUTDOWN => break,
            other => {
                warn!("controller: unexpected frame type 0x{other:02x}, discarding");
                report.discarded_frames += 1;
            }
        }
    }
    Ok(report)
}

/// Plant-side TCP transport implementing one measurement/control exchange
/// per tick, with a reply deadline and hold-on-timeout.
pub struct TcpChannel<'a> {
    stream: TcpStream,
    pk: &'a PublicKey,
    n_u: usize,
    timeout: Duration,
}

impl<'a> TcpChannel<'a> {
    /// Connect and run the hello handshake.
    pub fn connect(
        addr: &str,
        pk: &'a PublicKey,
        params: &SessionParams,
        n_u: usize,
        timeout: Duration,
    ) -> Result<TcpChannel<'a>, NetError> {
        let mut stream = TcpStream::connect(addr)?;
        stream.set_nodelay(true)?;
        write_frame(
            &mut stream,
            &Frame {
                msg_type: MSG_HELLO,
                seq: 0,
                payload: params.encode(),
            },
        )?;
        stream.set_read_timeout(Some(timeout.max(Duration::from_millis(1))))?;
        let reply = read_frame(&mut stream)?;
        match reply.msg_type {
            MSG_HELLO => {
                let theirs = SessionParams::decode(&reply.payload)?;
                if &theirs != params {
                    return Err(NetError::Refused(format!(
                        "controller parameters differ: {theirs:?}"
                    )));
                }
            }
            MSG_SHUTDOWN => {
                return Err(NetError::Refused("controller refused the session".into()))
            }
            other => {
                return Err(NetError::Protocol(format!(
                    "unexpected handshake frame 0x{other:02x}"
                )))
            }
        }
        Ok(TcpChannel {
            stream,
            pk,
            n_u,
            timeout,
        })
    }
}

impl ControlRound for TcpChannel<'_> {
    fn round(
        &mut self,
        k: u64,
        y_cts: &[Ciphertext],
        timing: &mut StepTiming,
    ) -> Result<Option<Vec<Ciphertext>>, NetError> {
        let t = Instant::now();
        write_frame(
            &mut self.stream,
            &Frame {
                msg_type: MSG_MEASUREMENT,
                seq: k,
                payload: encode_batch(self.pk, y_cts)?,
            },
        )?;
        timing.network_out_us = micros(t.elapsed());

        let deadline = Instant::now() + self.timeout;
        let t = Instant::now();
        loop {
            let remaining = deadline.saturating_duration_since(Instant::now());
            if remaining.is_zero() {
                warn!("plant: control reply for seq {k} timed out, holding last input");
                timing.network_back_us = micros(t.elapsed());
                return Ok(None);
            }
            self.stream
                .set_read_timeout(Some(remaining.max(Duration::from_millis(1))))?;
            let frame = match read_frame(&mut self.stream) {
                Ok(f) => f,
                Err(crate::net::wire::WireError::Io(e))
                    if matches!(e.kind(), ErrorKind::WouldBlock | ErrorKind::TimedOut) =>
                {
                    continue;
                }
                Err(e) => return Err(e.into()),
            };
            match frame.msg_type {
                MSG_CONTROL if frame.seq == k => {
                    timing.network_back_us = micros(t.elapsed());
                    return Ok(Some(decode_batch(self.pk, &frame.payload, self.n_u)?));
                }
                MSG_CONTROL => {
                    warn!("plant: stale control seq {} (want {k}), discarding", frame.seq);
                }
                MSG_SHUTDOWN => {
                    return Err(NetError::Protocol("controller shut down mid-session".into()))
                }
                other => {
                    warn!("plant: unexpected frame 0x{other:02x}, discarding");
                }
            }
        }
    }

    fn finish(&mut self) -> Result<(), NetError> {
        write_frame(
            &mut self.stream,
            &Frame {
                msg_type: MSG_SHUTDOWN,
                seq: 0,
                payload: Vec::new(),
            },
        )?;
        Ok(())
    }
}

/// Run the plant interface against a remote controller at `peer_addr`.
pub fn run_plant_networked(
    setup: &LoopSetup,
    kp: &KeyPair,
    peer_addr: &str,
) -> Result<LoopReport, NetError> {
    let spec = setup.preset.build_spec(kp.public.key_bits())?;
    let params = SessionParams::for_session(&spec, &kp.public, setup.preset.sample_period_us);
    let mut channel = TcpChannel::connect(
        peer_addr,
        &kp.public,
        &params,
        spec.dims().n_u,
        Duration::from_micros(setup.reply_timeout_us),
    )?;
    run_plant_loop(setup, kp, &spec, &mut channel)
}

/// Controller endpoint matching a plant-side setup (same preset and key).
pub fn controller_endpoint_for(
    setup: &LoopSetup,
    pk: &PublicKey,
) -> Result<ControllerEndpoint, NetError> {
    let spec = setup.preset.build_spec(pk.key_bits())?;
    let params = SessionParams::for_session(&spec, pk, setup.preset.sample_period_us);
    let setpoint_residues = setup
        .preset
        .setpoint
        .iter()
        .map(|&v| spec.encode_signal(v).map(|(r, _)| r))
        .collect::<Result<_, _>>()?;
    Ok(ControllerEndpoint {
        spec,
        pk: pk.clone(),
        params,
        setpoint_residues,
    })
}

/// Spawn a loopback controller and run the plant against it; the networked
/// counterpart of `run_in_process` for tests and the `--networked` flag.
pub fn run_networked_pair(
    setup: &LoopSetup,
    kp: &KeyPair,
) -> Result<(LoopReport, ControllerReport), NetError> {
    let listener = TcpListener::bind("127.0.0.1:0")?;
    let addr = listener.local_addr()?;
    let ep = controller_endpoint_for(setup, &kp.public)?;
    let server = std::thread::spawn(move || serve_controller(&listener, &ep));
    let report = run_plant_networked(setup, kp, &addr.to_string())?;
    let ctrl = server
        .join()
        .map_err(|_| NetError::Protocol("controller thread panicked".into()))??;
    Ok((report, ctrl))
}
