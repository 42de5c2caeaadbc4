//! The three-level decision hierarchy.
//!
//! The top level is a categorical selector over three maneuver sub-policies,
//! re-decided once per selector epoch. The middle level is the active
//! sub-policy: a Gaussian head emitting heading/pitch deltas and a throttle
//! setting, held for one agent decision. The bottom level is a fixed
//! bank-to-turn PD controller translating the desired attitude into surface
//! commands at the physics rate.

use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::arena::Role;
use crate::config::{ControllerGains, HierarchyConfig};
use crate::error::CoreError;
use crate::flightdyn::{wrap_angle, ControlInput, UavState};
use crate::neuralcore::{
    categorical_log_probs, categorical_sample, gaussian_log_prob, gaussian_sample,
    tanh_squash_correction, Mlp,
};
use crate::Result;

/// Maneuver sub-policies selectable by the top level.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum SubPolicyId {
    Approach,
    Offensive,
    Defensive,
}

impl SubPolicyId {
    pub const ALL: [SubPolicyId; 3] = [
        SubPolicyId::Approach,
        SubPolicyId::Offensive,
        SubPolicyId::Defensive,
    ];
    pub const COUNT: usize = 3;

    pub fn index(self) -> usize {
        match self {
            SubPolicyId::Approach => 0,
            SubPolicyId::Offensive => 1,
            SubPolicyId::Defensive => 2,
        }
    }

    pub fn from_index(k: usize) -> Result<Self> {
        Self::ALL
            .get(k)
            .copied()
            .ok_or_else(|| CoreError::protocol(format!("sub-policy index {k} out of range")))
    }

    pub fn one_hot(self) -> [f64; 3] {
        let mut v = [0.0; 3];
        v[self.index()] = 1.0;
        v
    }

    pub fn label(self) -> &'static str {
        match self {
            SubPolicyId::Approach => "approach",
            SubPolicyId::Offensive => "offensive",
            SubPolicyId::Defensive => "defensive",
        }
    }
}

/// Middle-level output: the attitude the bottom level should fly.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DesiredAttitude {
    /// Commanded heading, rad, wrapped to [-pi, pi].
    pub heading_cmd: f64,
    /// Commanded pitch, rad.
    pub pitch_cmd: f64,
    /// Throttle in [0, 1].
    pub throttle_cmd: f64,
}

impl DesiredAttitude {
    /// Command-space counterpart of the y-reflection canonical frame map.
    pub fn reflect_y(&self) -> Self {
        DesiredAttitude {
            heading_cmd: -self.heading_cmd,
            pitch_cmd: self.pitch_cmd,
            throttle_cmd: self.throttle_cmd,
        }
    }
}

/// Continuous sub-policy: a mean network plus learned state-independent
/// log standard deviations.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GaussianPolicy {
    pub mean: Mlp,
    pub log_std: Vec<f64>,
}

impl GaussianPolicy {
    pub fn init(dims: &[usize], rng: &mut ChaCha8Rng, log_std_init: f64) -> Self {
        let out = *dims.last().expect("non-empty dims");
        GaussianPolicy { mean: Mlp::init(dims, rng, 0.01), log_std: vec![log_std_init; out] }
    }
}

/// Top-level selection: categorical draw over the three sub-policies
/// (argmax in deterministic mode, ties to the lowest index).
pub fn select_subpolicy(
    selector: &Mlp,
    macro_obs: &[f64],
    rng: &mut ChaCha8Rng,
    deterministic: bool,
) -> Result<(SubPolicyId, f64)> {
    let logits = selector.infer(macro_obs)?;
    if logits.len() != SubPolicyId::COUNT {
        return Err(CoreError::shape(format!("selector emitted {} logits", logits.len())));
    }
    let (index, log_prob) = if deterministic {
        let mut best = 0usize;
        for k in 1..logits.len() {
            if logits[k] > logits[best] {
                best = k;
            }
        }
        (best, categorical_log_probs(&logits)[best])
    } else {
        categorical_sample(&logits, rng)
    };
    Ok((SubPolicyId::from_index(index)?, log_prob))
}

/// Raw middle-level decision, kept for training.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SubpolicyDecision {
    pub desired: DesiredAttitude,
    /// Pre-squash Gaussian draw.
    pub raw: [f64; 3],
    /// Log density of the squashed action.
    pub log_prob: f64,
}

/// Run one sub-policy on an observation: sample (or take the mean of) the
/// Gaussian head, squash into bounds, and turn deltas into an absolute
/// attitude command relative to the current state.
pub fn subpolicy_act(
    policy: &GaussianPolicy,
    obs: &[f64],
    state: &UavState,
    role: Role,
    cfg: &HierarchyConfig,
    rng: &mut ChaCha8Rng,
    deterministic: bool,
) -> Result<SubpolicyDecision> {
    let mean = policy.mean.infer(obs)?;
    if mean.len() != 3 {
        return Err(CoreError::shape(format!("sub-policy head emitted {} dims", mean.len())));
    }
    let (raw, base_lp) = if deterministic {
        let lp = gaussian_log_prob(&mean, &mean, &policy.log_std);
        (mean.clone(), lp)
    } else {
        gaussian_sample(&mean, &policy.log_std, rng)
    };
    let log_prob = base_lp - tanh_squash_correction(&raw);

    let a: Vec<f64> = raw.iter().map(|u| u.tanh()).collect();
    let throttle_gain = match role {
        Role::Leader => 1.0,
        Role::Follower => cfg.follower_throttle_gain,
    };
    let desired = DesiredAttitude {
        heading_cmd: wrap_angle(state.psi + a[0] * cfg.heading_delta_max),
        pitch_cmd: (state.theta + a[1] * cfg.pitch_delta_max)
            .clamp(-cfg.pitch_cmd_max, cfg.pitch_cmd_max),
        throttle_cmd: (throttle_gain * (a[2] + 1.0) / 2.0).clamp(0.0, 1.0),
    };
    Ok(SubpolicyDecision { desired, raw: [raw[0], raw[1], raw[2]], log_prob })
}

/// Bottom level: bank-to-turn PD attitude controller. Stateless and
/// deterministic; the same state and command always produce the same output.
pub fn low_level_control(
    state: &UavState,
    desired: &DesiredAttitude,
    gains: &ControllerGains,
) -> ControlInput {
    let heading_err = wrap_angle(desired.heading_cmd - state.psi);
    let bank_target = (gains.bank * heading_err).clamp(-gains.bank_max, gains.bank_max);
    let d_phi = gains.roll_p * (bank_target - state.phi) - gains.roll_d * state.roll_rate;

    let pitch_err = wrap_angle(desired.pitch_cmd - state.theta);
    let d_theta = gains.pitch_p * pitch_err - gains.pitch_d * state.pitch_rate;

    let d_psi = gains.yaw_p * heading_err - gains.yaw_d * state.yaw_rate;

    ControlInput {
        d_phi: d_phi.clamp(-1.0, 1.0),
        d_theta: d_theta.clamp(-1.0, 1.0),
        d_psi: d_psi.clamp(-1.0, 1.0),
        d_th: 2.0 * desired.throttle_cmd - 1.0,
    }
}

/// Group structure of one team: contiguous id chunks, first member leads.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RoleAssignment {
    /// Group membership in id order.
    pub groups: Vec<Vec<usize>>,
    /// Current leader of each group.
    pub leaders: Vec<usize>,
}

impl RoleAssignment {
    pub fn role_of(&self, id: usize) -> Role {
        if self.leaders.contains(&id) {
            Role::Leader
        } else {
            Role::Follower
        }
    }

    pub fn group_of(&self, id: usize) -> Option<usize> {
        self.groups.iter().position(|g| g.contains(&id))
    }

    pub fn leader_of(&self, id: usize) -> Option<usize> {
        self.group_of(id).map(|g| self.leaders[g])
    }

    /// Promote the lowest-id living member wherever the leader has been
    /// destroyed. Called at selector-epoch boundaries.
    pub fn refresh_promotions(&mut self, alive: impl Fn(usize) -> bool) {
        for (g, members) in self.groups.iter().enumerate() {
            if !alive(self.leaders[g]) {
                if let Some(&next) = members.iter().find(|&&id| alive(id)) {
                    self.leaders[g] = next;
                }
            }
        }
    }
}

/// Deterministic partition of a team roster into fixed-size groups; the
/// first id of each group leads.
pub fn assign_roles(roster: &[usize], group_size: usize) -> Result<RoleAssignment> {
    if group_size == 0 || roster.len() % group_size != 0 {
        return Err(CoreError::config(format!(
            "team of {} does not divide into groups of {group_size}",
            roster.len()
        )));
    }
    let groups: Vec<Vec<usize>> = roster.chunks(group_size).map(|c| c.to_vec()).collect();
    let leaders = groups.iter().map(|g| g[0]).collect();
    Ok(RoleAssignment { groups, leaders })
}
