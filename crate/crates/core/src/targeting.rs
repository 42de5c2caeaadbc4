//! Situational target selection.
//!
//! Each candidate is scored on three bounded attributes — position, posture
//! and capability — and scores are averaged over a short constant-velocity
//! projection so closing threats outrank receding ones.

use crate::arena::geometry::{relative_geometry, RelativeGeometry};
use crate::arena::{Role, UavRecord};
use crate::config::{PostureView, TargetingConfig};
use crate::flightdyn::UavState;

/// Attribute weights; all non-negative with a positive sum.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ThreatWeights {
    pub w_d: f64,
    pub w_a: f64,
    pub w_i: f64,
}

impl ThreatWeights {
    pub fn from_config(cfg: &TargetingConfig) -> Self {
        ThreatWeights { w_d: cfg.w_d, w_a: cfg.w_a, w_i: cfg.w_i }
    }
}

/// Score decomposition for one candidate target.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ThreatScore {
    pub total: f64,
    /// Position attribute, 1 at zero range falling to 0 at detection range.
    pub t_d: f64,
    /// Posture attribute in [0, 1].
    pub t_a: f64,
    /// Capability attribute by role.
    pub i: f64,
}

fn capability(role: Role, cfg: &TargetingConfig) -> f64 {
    match role {
        Role::Leader => cfg.capability_leader,
        Role::Follower => cfg.capability_follower,
    }
}

fn posture_attribute(own: &UavState, target: &UavState, cfg: &TargetingConfig) -> f64 {
    // Default view scores how well the target is set up against us: its
    // angle off and our aspect to it, both small when it is boring in.
    let g = match cfg.posture_view {
        PostureView::TargetVsOwn => relative_geometry(target, own),
        PostureView::OwnVsTarget => relative_geometry(own, target),
    };
    (1.0 - (g.alpha + g.beta) / (2.0 * std::f64::consts::PI)).clamp(0.0, 1.0)
}

/// Score a single candidate on the current geometry.
pub fn score_target(
    own: &UavState,
    target: &UavState,
    target_role: Role,
    weights: &ThreatWeights,
    cfg: &TargetingConfig,
) -> ThreatScore {
    let g = relative_geometry(own, target);
    let t_d = (1.0 - g.d / cfg.d_detect_m).clamp(0.0, 1.0);
    let t_a = posture_attribute(own, target, cfg);
    let i = capability(target_role, cfg);
    ThreatScore { total: weights.w_d * t_d + weights.w_a * t_a + weights.w_i * i, t_d, t_a, i }
}

fn advance(state: &UavState, dt: f64) -> UavState {
    let mut s = *state;
    s.p_x += s.v_x * dt;
    s.p_y += s.v_y * dt;
    s.p_z += s.v_z * dt;
    s
}

/// Geometry after each of `n` constant-velocity steps of `dt`.
pub fn n_step_projection(
    own: &UavState,
    target: &UavState,
    n: usize,
    dt: f64,
) -> Vec<RelativeGeometry> {
    debug_assert!(n >= 1);
    let mut own_s = *own;
    let mut tgt_s = *target;
    let mut out = Vec::with_capacity(n);
    for _ in 0..n {
        own_s = advance(&own_s, dt);
        tgt_s = advance(&tgt_s, dt);
        out.push(relative_geometry(&own_s, &tgt_s));
    }
    out
}

/// Mean threat score over the projection horizon.
pub fn projected_score(
    own: &UavState,
    target: &UavState,
    target_role: Role,
    weights: &ThreatWeights,
    cfg: &TargetingConfig,
) -> f64 {
    let mut own_s = *own;
    let mut tgt_s = *target;
    let mut sum = 0.0;
    for _ in 0..cfg.n_steps {
        own_s = advance(&own_s, cfg.step_dt);
        tgt_s = advance(&tgt_s, cfg.step_dt);
        sum += score_target(&own_s, &tgt_s, target_role, weights, cfg).total;
    }
    sum / cfg.n_steps as f64
}

/// Pick the highest projected threat among alive enemies; ties go to the
/// lowest id. `None` when no candidate is alive.
pub fn select_target(
    own: &UavState,
    enemies: &[&UavRecord],
    weights: &ThreatWeights,
    cfg: &TargetingConfig,
) -> Option<usize> {
    let mut best: Option<(usize, f64)> = None;
    for enemy in enemies {
        if !enemy.state.alive {
            continue;
        }
        let score = projected_score(own, &enemy.state, enemy.role, weights, cfg);
        let better = match best {
            None => true,
            Some((best_id, best_score)) => {
                score > best_score || (score == best_score && enemy.id < best_id)
            }
        };
        if better {
            best = Some((enemy.id, score));
        }
    }
    best.map(|(id, _)| id)
}
