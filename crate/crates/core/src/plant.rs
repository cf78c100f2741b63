//! Discrete-time LTI plant simulation with sample-and-hold semantics.
//!
//! The loop driver reads `y[k] = C x[k]` plus any scheduled disturbance,
//! hands the measurement to the controller, and applies the resulting
//! (clamped, rounded) control: `x[k+1] = A x[k] + B u[k]`. Stepping is
//! deterministic, so a trajectory is replayable from the disturbance
//! schedule alone.

use thiserror::Error;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum PlantError {
    #[error("dimension mismatch: {0}")]
    Dimension(&'static str),
}

/// Discrete-time linear plant `x+ = A x + B u`, `y = C x`.
#[derive(Clone, Debug)]
pub struct PlantModel {
    pub a: Vec<Vec<f64>>,
    pub b: Vec<Vec<f64>>,
    pub c: Vec<Vec<f64>>,
    /// Sample period in seconds (the discretization step).
    pub dt: f64,
}

#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub enum DisturbanceKind {
    /// Added to the output at exactly one step.
    Impulse,
    /// Added to the output from its step onward.
    Step,
}

#[derive(Clone, Copy, Debug)]
pub struct DisturbanceEvent {
    pub step: u64,
    pub channel: usize,
    pub magnitude: f64,
    pub kind: DisturbanceKind,
}

/// Finite schedule of output disturbances.
#[derive(Clone, Debug, Default)]
pub struct Disturbance {
    pub events: Vec<DisturbanceEvent>,
}

impl Disturbance {
    pub fn contribution(&self, step: u64, channels: usize) -> Vec<f64> {
        let mut out = vec![0.0; channels];
        for ev in &self.events {
            if ev.channel >= channels {
                continue;
            }
            let active = match ev.kind {
                DisturbanceKind::Impulse => ev.step == step,
                DisturbanceKind::Step => ev.step <= step,
            };
            if active {
                out[ev.channel] += ev.magnitude;
            }
        }
        out
    }
}

fn mat_vec(m: &[Vec<f64>], v: &[f64]) -> Vec<f64> {
    m.iter()
        .map(|row| row.iter().zip(v).map(|(a, b)| a * b).sum())
        .collect()
}

impl PlantModel {
    pub fn state_dim(&self) -> usize {
        self.a.len()
    }

    pub fn output_dim(&self) -> usize {
        self.c.len()
    }

    pub fn input_dim(&self) -> usize {
        self.b.first().map_or(0, |r| r.len())
    }

    fn check(&self) -> Result<(), PlantError> {
        let n = self.state_dim();
        if self.a.iter().any(|r| r.len() != n)
            || self.b.len() != n
            || self.c.iter().any(|r| r.len() != n)
            || n == 0
        {
            return Err(PlantError::Dimension("plant matrices"));
        }
        Ok(())
    }
}

/// One update of the plant: `(x[k+1], y[k])` for a held input `u[k]`. The
/// output is read from the pre-update state.
pub fn plant_step(
    model: &PlantModel,
    x: &[f64],
    u: &[f64],
) -> Result<(Vec<f64>, Vec<f64>), PlantError> {
    model.check()?;
    if x.len() != model.state_dim() || u.len() != model.input_dim() {
        return Err(PlantError::Dimension("plant_step inputs"));
    }
    let y = mat_vec(&model.c, x);
    let ax = mat_vec(&model.a, x);
    let bu = mat_vec(&model.b, u);
    let x_next = ax.iter().zip(&bu).map(|(a, b)| a + b).collect();
    Ok((x_next, y))
}

/// Stateful wrapper owning the plant state, step counter and disturbances.
#[derive(Clone, Debug)]
pub struct PlantSim {
    pub model: PlantModel,
    pub disturbance: Disturbance,
    x: Vec<f64>,
    step: u64,
}

impl PlantSim {
    pub fn new(model: PlantModel, disturbance: Disturbance) -> PlantSim {
        let n = model.state_dim();
        PlantSim {
            model,
            disturbance,
            x: vec![0.0; n],
            step: 0,
        }
    }

    pub fn step(&self) -> u64 {
        self.step
    }

    pub fn state(&self) -> &[f64] {
        &self.x
    }

    /// `y[k]` including the disturbance contribution at the current step.
    pub fn output(&self) -> Vec<f64> {
        let mut y = mat_vec(&self.model.c, &self.x);
        let d = self
            .disturbance
            .contribution(self.step, self.model.output_dim());
        for (yi, di) in y.iter_mut().zip(&d) {
            *yi += di;
        }
        y
    }

    /// Apply the held control and advance one sample.
    pub fn apply(&mut self, u: &[f64]) -> Result<(), PlantError> {
        let (x_next, _) = plant_step(&self.model, &self.x, u)?;
        self.x = x_next;
        self.step += 1;
        Ok(())
    }
}

/// Round to the nearest integer (ties away from zero) and clamp into
/// `[lo, hi]` — the actuator-side conditioning applied outside the
/// encrypted path.
pub fn clamp_round(u: f64, lo: i64, hi: i64) -> i64 {
    let r = u.round();
    let r = if r.is_nan() { 0.0 } else { r };
    (r as i64).clamp(lo, hi)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn scalar_plant(a: f64) -> PlantModel {
        PlantModel {
            a: vec![vec![a]],
            b: vec![vec![1.0]],
            c: vec![vec![1.0]],
            dt: 0.002,
        }
    }

    #[test]
    fn zero_state_zero_output() {
        let (x, y) = plant_step(&scalar_plant(0.5), &[0.0], &[0.0]).unwrap();
        assert_eq!(x, vec![0.0]);
        assert_eq!(y, vec![0.0]);
    }

    #[test]
    fn identity_dynamics_hold_state() {
        let model = PlantModel {
            a: vec![vec![1.0]],
            b: vec![vec![0.0]],
            c: vec![vec![1.0]],
            dt: 0.002,
        };
        let (x, y) = plant_step(&model, &[3.25], &[9.0]).unwrap();
        assert_eq!(x, vec![3.25]);
        assert_eq!(y, vec![3.25]);
    }

    #[test]
    fn scalar_recursion_three_steps() {
        // x+ = 0.5 x + u with u = 1 from x = 0: 1, 1.5, 1.75
        let model = scalar_plant(0.5);
        let mut x = vec![0.0];
        for _ in 0..3 {
            let (xn, _) = plant_step(&model, &x, &[1.0]).unwrap();
            x = xn;
        }
        assert_eq!(x, vec![1.75]);
    }

    #[test]
    fn disturbance_kinds() {
        let d = Disturbance {
            events: vec![
                DisturbanceEvent {
                    step: 2,
                    channel: 0,
                    magnitude: 5.0,
                    kind: DisturbanceKind::Impulse,
                },
                DisturbanceEvent {
                    step: 3,
                    channel: 1,
                    magnitude: -1.0,
                    kind: DisturbanceKind::Step,
                },
            ],
        };
        assert_eq!(d.contribution(1, 2), vec![0.0, 0.0]);
        assert_eq!(d.contribution(2, 2), vec![5.0, 0.0]);
        assert_eq!(d.contribution(3, 2), vec![0.0, -1.0]);
        assert_eq!(d.contribution(9, 2), vec![0.0, -1.0]);
    }

    #[test]
    fn sim_replayable() {
        let model = scalar_plant(0.9);
        let d = Disturbance {
            events: vec![DisturbanceEvent {
                step: 1,
                channel: 0,
                magnitude: 2.0,
                kind: DisturbanceKind::Impulse,
            }],
        };
        let run = || {
            let mut sim = PlantSim::new(model.clone(), d.clone());
            let mut trace = Vec::new();
            for _ in 0..5 {
                trace.push(sim.output()[0]);
                sim.apply(&[0.5]).unwrap();
            }
            trace
        };
        assert_eq!(run(), run());
    }

    #[test]
    fn clamp_round_cases() {
        assert_eq!(clamp_round(1000.2, -999, 999), 999);
        assert_eq!(clamp_round(0.4, -999, 999), 0);
        assert_eq!(clamp_round(-999.7, -999, 999), -999);
        assert_eq!(clamp_round(0.5, -999, 999), 1);
        assert_eq!(clamp_round(-0.5, -999, 999), -1);
        assert_eq!(clamp_round(f64::NAN, -999, 999), 0);
    }

    #[test]
    fn dimension_errors() {
        let model = scalar_plant(0.5);
        assert!(plant_step(&model, &[0.0, 1.0], &[0.0]).is_err());
        assert!(plant_step(&model, &[0.0], &[0.0, 1.0]).is_err());
    }
}
