//! Simulated vehicle: kinematic bicycle with first-order steering and speed
//! lags behind an actuation delay line.

use std::collections::VecDeque;

use hercules_core::control::{ControlCommand, Longitudinal};
use hercules_core::{Pose2D, VehicleState};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PlantParams {
    pub wheelbase: f64,
    pub steer_limit: f64,
    /// Steering actuator time constant, s. Zero means instantaneous.
    pub steer_tau: f64,
    /// Speed-loop time constant for speed commands, s.
    pub speed_tau: f64,
}

impl Default for PlantParams {
    fn default() -> Self {
        Self {
            wheelbase: 1.8,
            steer_limit: 0.5,
            steer_tau: 0.1,
            speed_tau: 0.3,
        }
    }
}

/// Number of control ticks a latency corresponds to.
pub fn latency_ticks(latency: f64, control_hz: f64) -> usize {
    (latency * control_hz).round().max(0.0) as usize
}

/// Fixed-length FIFO between the controller and the actuators. A command
/// pushed at tick `k` comes out at tick `k + ticks`.
#[derive(Debug, Clone, PartialEq)]
pub struct DelayLine {
    queue: VecDeque<ControlCommand>,
    last: Option<ControlCommand>,
}

impl DelayLine {
    /// `hold` is what the actuators see until the first real command arrives.
    pub fn new(ticks: usize, hold: ControlCommand) -> Self {
        Self {
            queue: std::iter::repeat_n(hold, ticks).collect(),
            last: None,
        }
    }

    pub fn ticks(&self) -> usize {
        self.queue.len()
    }

    /// Queues `cmd` and returns the command due for actuation now.
    pub fn push(&mut self, cmd: ControlCommand) -> ControlCommand {
        let out = if self.queue.is_empty() {
            cmd
        } else {
            self.queue.push_back(cmd);
            self.queue.pop_front().expect("non-empty")
        };
        self.last = Some(out);
        out
    }

    /// Command actuated by the most recent [`DelayLine::push`].
    pub fn last_applied(&self) -> Option<ControlCommand> {
        self.last
    }
}

/// Below this speed a zero speed command brings the vehicle to rest.
pub const STANDSTILL_SPEED: f64 = 1e-3;

type Plant = [f64; 5]; // x, y, heading, speed, steer

fn derivative(s: &Plant, cmd: &ControlCommand, p: &PlantParams) -> Plant {
    let [_, _, th, v, delta] = *s;
    let steer_cmd = cmd.steer_angle.clamp(-p.steer_limit, p.steer_limit);
    let steer_rate = if p.steer_tau > 0.0 { (steer_cmd - delta) / p.steer_tau } else { 0.0 };
    let accel = match cmd.longitudinal {
        Longitudinal::Speed(vc) if p.speed_tau > 0.0 => (vc - v) / p.speed_tau,
        Longitudinal::Speed(_) => 0.0,
        Longitudinal::Accel(a) if v <= 0.0 && a < 0.0 => 0.0,
        Longitudinal::Accel(a) => a,
    };
    [v * th.cos(), v * th.sin(), v * delta.tan() / p.wheelbase, accel, steer_rate]
}

fn axpy(s: &Plant, k: &Plant, h: f64) -> Plant {
    std::array::from_fn(|i| s[i] + h * k[i])
}

/// Integrates the plant over `dt` with the command already taken off the
/// delay line, using one classical Runge–Kutta step.
pub fn integrate(state: &VehicleState, applied: &ControlCommand, dt: f64, p: &PlantParams) -> VehicleState {
    let mut s0: Plant = [state.pose.x, state.pose.y, state.pose.heading, state.speed, state.steer_angle];
    // Zero time constants act as ideal actuators.
    if !(p.steer_tau > 0.0) {
        s0[4] = applied.steer_angle.clamp(-p.steer_limit, p.steer_limit);
    }
    if let Longitudinal::Speed(vc) = applied.longitudinal {
        if !(p.speed_tau > 0.0) {
            s0[3] = vc;
        }
    }
    let k1 = derivative(&s0, applied, p);
    let k2 = derivative(&axpy(&s0, &k1, dt / 2.0), applied, p);
    let k3 = derivative(&axpy(&s0, &k2, dt / 2.0), applied, p);
    let k4 = derivative(&axpy(&s0, &k3, dt), applied, p);
    let s1: Plant = std::array::from_fn(|i| s0[i] + dt / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]));
    let mut speed = s1[3];
    match applied.longitudinal {
        // braking ends at standstill, never in reverse
        Longitudinal::Accel(_) if state.speed >= 0.0 => speed = speed.max(0.0),
        // static friction holds a vehicle that has all but stopped
        Longitudinal::Speed(vc) if vc == 0.0 && speed.abs() < STANDSTILL_SPEED => speed = 0.0,
        _ => {}
    }
    VehicleState {
        pose: Pose2D::new(s1[0], s1[1], s1[2]),
        speed,
        accel: (speed - state.speed) / dt,
        steer_angle: s1[4].clamp(-p.steer_limit, p.steer_limit),
        timestamp: state.timestamp + dt,
    }
}

/// Advances the plant one control tick: `cmd` enters the delay line and the
/// command leaving it is actuated.
pub fn step_plant(
    state: &VehicleState,
    cmd: &ControlCommand,
    dt: f64,
    line: &mut DelayLine,
    params: &PlantParams,
) -> VehicleState {
    let applied = line.push(*cmd);
    integrate(state, &applied, dt, params)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use std::f64::consts::TAU;

    fn speed_cmd(steer: f64, v: f64) -> ControlCommand {
        ControlCommand {
            steer_angle: steer,
            longitudinal: Longitudinal::Speed(v),
        }
    }

    #[test]
    fn resting_vehicle_stays_put() {
        let s = VehicleState::at_rest(Pose2D::new(1.0, -2.0, 0.3), 0.0);
        let mut line = DelayLine::new(0, speed_cmd(0.0, 0.0));
        let next = step_plant(&s, &speed_cmd(0.0, 0.0), 0.01, &mut line, &PlantParams::default());
        assert_eq!(next.pose, s.pose);
        assert_eq!((next.speed, next.accel, next.steer_angle), (0.0, 0.0, 0.0));
    }

    #[test]
    fn straight_line_displacement() {
        let heading: f64 = 0.7;
        let mut s = VehicleState {
            speed: 1.0,
            ..VehicleState::at_rest(Pose2D::new(0.0, 0.0, heading), 0.0)
        };
        let mut line = DelayLine::new(0, speed_cmd(0.0, 1.0));
        for _ in 0..100 {
            s = step_plant(&s, &speed_cmd(0.0, 1.0), 0.01, &mut line, &PlantParams::default());
        }
        assert!((s.pose.x - heading.cos()).abs() < 1e-9);
        assert!((s.pose.y - heading.sin()).abs() < 1e-9);
    }

    #[test]
    fn constant_steer_closes_the_circle() {
        let p = PlantParams::default();
        let (delta, v) = (0.2f64, 2.0);
        let radius = p.wheelbase / delta.tan();
        let n = 2000;
        let dt = TAU * radius / v / n as f64;
        let mut s = VehicleState {
            speed: v,
            steer_angle: delta,
            ..VehicleState::at_rest(Pose2D::new(0.0, 0.0, 0.0), 0.0)
        };
        let mut line = DelayLine::new(0, speed_cmd(delta, v));
        let mut max_r_err: f64 = 0.0;
        for _ in 0..n {
            s = step_plant(&s, &speed_cmd(delta, v), dt, &mut line, &p);
            // centre of the turn is at (0, radius)
            max_r_err = max_r_err.max(((s.pose.x).hypot(s.pose.y - radius) - radius).abs());
        }
        assert!(s.pose.position().norm() < 1e-4, "{:?}", s.pose);
        assert!(max_r_err < 1e-4);
    }

    #[test]
    fn accel_command_brakes_to_standstill_not_reverse() {
        let p = PlantParams::default();
        let mut s = VehicleState {
            speed: 0.05,
            ..VehicleState::at_rest(Pose2D::new(0.0, 0.0, 0.0), 0.0)
        };
        let brake = ControlCommand {
            steer_angle: 0.0,
            longitudinal: Longitudinal::Accel(-2.0),
        };
        let mut line = DelayLine::new(0, brake);
        for _ in 0..10 {
            s = step_plant(&s, &brake, 0.01, &mut line, &p);
            assert!(s.speed >= 0.0);
        }
        assert_eq!(s.speed, 0.0);
    }

    #[test]
    fn steering_lag_time_constant() {
        let p = PlantParams::default();
        let mut s = VehicleState::at_rest(Pose2D::new(0.0, 0.0, 0.0), 0.0);
        let mut line = DelayLine::new(0, speed_cmd(0.0, 0.0));
        for _ in 0..10 {
            s = step_plant(&s, &speed_cmd(0.4, 0.0), 0.01, &mut line, &p);
        }
        // one time constant: 1 - e^-1 of the step
        let expect = 0.4 * (1.0 - (-1.0f64).exp());
        assert!((s.steer_angle - expect).abs() < 1e-6, "{}", s.steer_angle);
    }

    #[test]
    fn delay_line_shifts_by_its_length() {
        let hold = speed_cmd(0.0, 0.0);
        let mut line = DelayLine::new(4, hold);
        let out: Vec<ControlCommand> = (0..10).map(|k| line.push(speed_cmd(0.0, k as f64 + 1.0))).collect();
        assert!(out[..4].iter().all(|c| *c == hold));
        for (k, c) in out.iter().enumerate().skip(4) {
            assert_eq!(*c, speed_cmd(0.0, (k - 4) as f64 + 1.0));
        }
        assert_eq!(line.last_applied(), Some(out[9]));
    }

    proptest! {
        #[test]
        fn four_g_latencies_map_to_three_to_six_ticks(latency in 0.03f64..=0.06) {
            let k = latency_ticks(latency, 100.0);
            prop_assert!((3..=6).contains(&k));
        }
    }
}
