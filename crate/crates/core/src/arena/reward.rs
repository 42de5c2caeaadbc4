//! Shaping and event rewards.
//!
//! The posture term scores flight orientation through the sum of the angle
//! off and the aspect angle; the distance term is a three-branch curve over
//! the range ratio whose free constants are fixed by continuity at the branch
//! knots.

use std::f64::consts::PI;

use crate::config::RewardConfig;

use super::EngagementEvent;
use super::EventKind;

/// Branch steepness of the distance curve.
pub const DIST_K1: f64 = 10.0;
pub const DIST_K2: f64 = 10.0;

/// Offset making the lower branch meet `x` at `x = 1/3`.
pub fn dist_b1() -> f64 {
    let e = (DIST_K1 / 3.0).exp();
    1.0 / 3.0 - e / (e + 3.0)
}

/// Exponent shift making the upper branch meet `x` at `x = 2/3`:
/// `b2 = k2/3 - ln 3` solves `1 - e^(2*k2/3 + b2)/b3 = 2/3` with `b3 = e^k2`.
pub fn dist_b2() -> f64 {
    DIST_K2 / 3.0 - 3f64.ln()
}

pub fn dist_b3() -> f64 {
    DIST_K2.exp()
}

pub const DIST_B4: f64 = 1.0;

/// Orientation score over the summed angle off and aspect, higher when both
/// aircraft geometry favors us. 1.5 at perfect alignment, decreasing in
/// `alpha + beta`; the inverse-tanh term only activates past `alpha + beta =
/// pi` and its argument is clamped to the open unit interval.
pub fn posture_reward(alpha: f64, beta: f64) -> f64 {
    let s = alpha + beta;
    let arg = (1.0 - (s / PI).max(1e-4)).clamp(-(1.0 - 1e-6), 1.0 - 1e-6);
    let tanh_term = (arg.atanh() / PI).min(0.0);
    tanh_term + 2.0 * PI / (25.0 * s + 2.0 * PI) + 0.5
}

/// Distance score over the range ratio `x = d / d_max`. Rises steeply from
/// standoff, follows `x` through the middle band, and falls exponentially
/// beyond it; continuous at both knots.
pub fn distance_reward(d: f64, d_max: f64) -> f64 {
    debug_assert!(d >= 0.0 && d_max > 0.0);
    let x = d / d_max;
    if x < 1.0 / 3.0 {
        let e = (DIST_K1 * x).exp();
        e / (e + 1.0 / x) + dist_b1()
    } else if x < 2.0 / 3.0 {
        x
    } else {
        -((DIST_K2 * x + dist_b2()).exp()) / dist_b3() + DIST_B4
    }
}

/// Sum of event bonuses and penalties for one aircraft over one step's
/// events: kills credit the shooter, being destroyed costs the victim, and
/// flying into the ground or over the load limit costs the crasher.
pub fn event_reward(events: &[EngagementEvent], uav_id: usize, cfg: &RewardConfig) -> f64 {
    let mut r = 0.0;
    for ev in events {
        match ev.kind {
            EventKind::MissileHit => {
                if ev.shooter == Some(uav_id) {
                    r += cfg.kill;
                }
                if ev.victim == uav_id {
                    r -= cfg.death;
                }
            }
            EventKind::Collision => {
                if ev.victim == uav_id {
                    r -= cfg.death;
                }
            }
            EventKind::FloorCrash | EventKind::OverloadDestruct => {
                if ev.victim == uav_id {
                    r -= cfg.crash;
                }
            }
        }
    }
    r
}
