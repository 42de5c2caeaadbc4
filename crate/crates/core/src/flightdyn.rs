//! Kinematic aircraft model with a fixed-step semi-implicit Euler integrator.
//!
//! The model keeps the trades that matter to the rewards — turn rate against
//! bank angle, speed against throttle and drag — while staying deterministic
//! and dependency-free. Attitude rates follow surface commands through a
//! first-order lag, speed follows throttle against quadratic drag under a
//! hard axial-acceleration cap, and the coordinated-turn coupling feeds bank
//! angle into yaw rate.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::config::DynamicsConfig;
use crate::error::CoreError;
use crate::Result;

pub const GRAVITY: f64 = 9.81;

/// One aircraft's kinematic record.
///
/// Velocity components are always derived from `(v, theta, psi)`; the
/// coordinated-flight assumption keeps velocity on the body forward axis.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct UavState {
    pub p_x: f64,
    pub p_y: f64,
    pub p_z: f64,
    /// Airspeed magnitude, m/s.
    pub v: f64,
    pub v_x: f64,
    pub v_y: f64,
    pub v_z: f64,
    /// Roll, rad, wrapped to [-pi, pi].
    pub phi: f64,
    /// Pitch, rad, wrapped to [-pi, pi].
    pub theta: f64,
    /// Yaw, rad, wrapped to [-pi, pi].
    pub psi: f64,
    pub roll_rate: f64,
    pub pitch_rate: f64,
    pub yaw_rate: f64,
    pub alive: bool,
}

impl UavState {
    /// Level flight at the given position, heading and speed, zero rates.
    pub fn level(p: [f64; 3], psi: f64, v: f64) -> Self {
        let mut s = UavState {
            p_x: p[0],
            p_y: p[1],
            p_z: p[2],
            v,
            v_x: 0.0,
            v_y: 0.0,
            v_z: 0.0,
            phi: 0.0,
            theta: 0.0,
            psi,
            roll_rate: 0.0,
            pitch_rate: 0.0,
            yaw_rate: 0.0,
            alive: true,
        };
        s.refresh_velocity();
        s
    }

    /// Unit body-forward vector.
    pub fn heading_vector(&self) -> [f64; 3] {
        let ct = self.theta.cos();
        [ct * self.psi.cos(), ct * self.psi.sin(), self.theta.sin()]
    }

    /// Recompute velocity components from `(v, theta, psi)`.
    pub fn refresh_velocity(&mut self) {
        let h = self.heading_vector();
        self.v_x = self.v * h[0];
        self.v_y = self.v * h[1];
        self.v_z = self.v * h[2];
    }

    pub fn is_finite(&self) -> bool {
        [
            self.p_x,
            self.p_y,
            self.p_z,
            self.v,
            self.v_x,
            self.v_y,
            self.v_z,
            self.phi,
            self.theta,
            self.psi,
            self.roll_rate,
            self.pitch_rate,
            self.yaw_rate,
        ]
        .iter()
        .all(|x| x.is_finite())
    }

    /// Reflect across the y = 0 plane. Pure sign flips, so the transform is
    /// bit-exact and involutive; it is the canonical-frame map that lets one
    /// policy fly both teams.
    pub fn reflect_y(&self) -> Self {
        UavState {
            p_x: self.p_x,
            p_y: -self.p_y,
            p_z: self.p_z,
            v: self.v,
            v_x: self.v_x,
            v_y: -self.v_y,
            v_z: self.v_z,
            phi: -self.phi,
            theta: self.theta,
            psi: -self.psi,
            roll_rate: -self.roll_rate,
            pitch_rate: self.pitch_rate,
            yaw_rate: -self.yaw_rate,
            alive: self.alive,
        }
    }
}

/// Normalized surface and throttle commands, each in [-1, 1].
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct ControlInput {
    /// Aileron.
    pub d_phi: f64,
    /// Elevator.
    pub d_theta: f64,
    /// Rudder.
    pub d_psi: f64,
    /// Throttle; mapped to [0, 1] internally as (d_th + 1) / 2.
    pub d_th: f64,
}

impl ControlInput {
    /// Throttle fraction in [0, 1].
    pub fn throttle_frac(&self) -> f64 {
        (self.d_th + 1.0) / 2.0
    }

    /// Mirror of [`UavState::reflect_y`] in command space.
    pub fn reflect_y(&self) -> Self {
        ControlInput { d_phi: -self.d_phi, d_theta: self.d_theta, d_psi: -self.d_psi, d_th: self.d_th }
    }

    pub fn is_finite(&self) -> bool {
        [self.d_phi, self.d_theta, self.d_psi, self.d_th].iter().all(|x| x.is_finite())
    }
}

/// Flight-envelope verdict for one step.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct EnvelopeStatus {
    pub within_envelope: bool,
    pub violation: EnvelopeViolation,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EnvelopeViolation {
    None,
    AltitudeFloor,
    Overload,
}

/// Wrap an angle to [-pi, pi]. Odd-symmetric: wrap(-x) == -wrap(x).
pub fn wrap_angle(x: f64) -> f64 {
    x - 2.0 * PI * (x / (2.0 * PI)).round()
}

/// Clamp raw commands into [-1, 1]; NaN maps to 0.
pub fn clamp_controls(raw: [f64; 4]) -> ControlInput {
    fn clamp1(x: f64) -> f64 {
        if x.is_nan() {
            0.0
        } else {
            x.clamp(-1.0, 1.0)
        }
    }
    ControlInput {
        d_phi: clamp1(raw[0]),
        d_theta: clamp1(raw[1]),
        d_psi: clamp1(raw[2]),
        d_th: clamp1(raw[3]),
    }
}

/// Quadratic drag fraction: the throttle fraction that exactly holds speed.
pub fn drag_frac(v: f64, cfg: &DynamicsConfig) -> f64 {
    let r = v / cfg.v_max;
    r * r
}

/// Throttle command that trims the aircraft at speed `v`.
pub fn trim_throttle(v: f64, cfg: &DynamicsConfig) -> f64 {
    2.0 * drag_frac(v, cfg) - 1.0
}

/// Advance one aircraft by `dt` seconds.
///
/// Update order: attitude rates (first-order lag toward commanded rates),
/// attitude angles, speed, velocity components, then position from the
/// updated velocity.
pub fn step_dynamics(
    state: &UavState,
    controls: &ControlInput,
    dt: f64,
    cfg: &DynamicsConfig,
) -> Result<UavState> {
    if !(dt > 0.0) {
        return Err(CoreError::MalformedState(format!("non-positive dt {dt}")));
    }
    if !state.is_finite() {
        return Err(CoreError::MalformedState("non-finite state field".into()));
    }
    if !controls.is_finite() {
        return Err(CoreError::MalformedState("non-finite control field".into()));
    }
    if !state.alive {
        return Err(CoreError::MalformedState("step_dynamics on a destroyed aircraft".into()));
    }

    let mut next = *state;
    let lag = dt / cfg.attitude_tau;

    next.roll_rate += lag * (cfg.roll_rate_max * controls.d_phi - next.roll_rate);
    next.pitch_rate += lag * (cfg.pitch_rate_max * controls.d_theta - next.pitch_rate);
    next.yaw_rate += lag * (cfg.yaw_rate_max * controls.d_psi - next.yaw_rate);

    next.phi = wrap_angle(next.phi + next.roll_rate * dt);
    next.theta = wrap_angle(next.theta + next.pitch_rate * dt);

    // Coordinated turn: bank feeds yaw. The coupling bank is clamped so tan
    // stays bounded near knife-edge attitudes.
    let bank = next.phi.clamp(-cfg.bank_couple_max, cfg.bank_couple_max);
    let turn_coupling = (GRAVITY / next.v) * bank.tan();
    next.psi = wrap_angle(next.psi + (next.yaw_rate + turn_coupling) * dt);

    let accel = (cfg.accel_max * (controls.throttle_frac() - drag_frac(next.v, cfg)))
        .clamp(-cfg.accel_max, cfg.accel_max);
    next.v = (next.v + accel * dt).clamp(cfg.v_min, cfg.v_max);

    next.refresh_velocity();
    next.p_x += next.v_x * dt;
    next.p_y += next.v_y * dt;
    next.p_z += next.v_z * dt;

    Ok(next)
}

/// Load-factor and altitude check over the step from `prev` to `state`.
///
/// Load factor is total non-gravitational acceleration in g units:
/// `n = |dv_vec/dt + g*z_hat| / g`, which is 1 in steady level flight.
pub fn check_flight_envelope(
    state: &UavState,
    prev: &UavState,
    dt: f64,
    cfg: &DynamicsConfig,
) -> EnvelopeStatus {
    debug_assert!(dt > 0.0);
    let ax = (state.v_x - prev.v_x) / dt;
    let ay = (state.v_y - prev.v_y) / dt;
    let az = (state.v_z - prev.v_z) / dt + GRAVITY;
    let load_factor = (ax * ax + ay * ay + az * az).sqrt() / GRAVITY;

    if state.p_z < cfg.altitude_min {
        EnvelopeStatus { within_envelope: false, violation: EnvelopeViolation::AltitudeFloor }
    } else if load_factor > cfg.load_factor_max {
        EnvelopeStatus { within_envelope: false, violation: EnvelopeViolation::Overload }
    } else {
        EnvelopeStatus { within_envelope: true, violation: EnvelopeViolation::None }
    }
}
