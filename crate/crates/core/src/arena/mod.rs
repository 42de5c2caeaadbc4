//! Multi-UAV combat environment: spawning, stepping, events, rewards,
//! observations and outcome classification.
//!
//! Aircraft are indexed globally; blue occupies `0..team_size`, red the rest.
//! Policies always see the world through their team's canonical frame: blue
//! observes raw coordinates, red observes through the exact reflection across
//! the y = 0 plane. The reflection is bit-exact (pure sign flips), so a
//! mirrored engagement between identical deterministic policies stays
//! symmetric forever.

pub mod geometry;
pub mod reward;

use serde::{Deserialize, Serialize};

pub use geometry::{in_wez, missile_hit, relative_geometry, RelativeGeometry};
pub use reward::{distance_reward, event_reward, posture_reward};

use crate::config::{RunConfig, SpawnProfile};
use crate::error::CoreError;
use crate::flightdyn::{
    self, check_flight_envelope, step_dynamics, ControlInput, EnvelopeViolation, UavState,
};
use crate::rng::SeedTree;
use crate::Result;
use rand::Rng;
use std::f64::consts::PI;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Team {
    Blue,
    Red,
}

impl Team {
    pub fn opponent(self) -> Team {
        match self {
            Team::Blue => Team::Red,
            Team::Red => Team::Blue,
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            Team::Blue => "blue",
            Team::Red => "red",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Role {
    Leader,
    Follower,
}

impl Role {
    pub fn label(self) -> &'static str {
        match self {
            Role::Leader => "leader",
            Role::Follower => "follower",
        }
    }
}

/// One aircraft plus its team bookkeeping.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct UavRecord {
    pub id: usize,
    pub team: Team,
    pub role: Role,
    pub group: usize,
    pub state: UavState,
}

impl UavRecord {
    /// State as seen from this aircraft's team-canonical frame.
    pub fn canonical_state(&self) -> UavState {
        canonicalize(&self.state, self.team)
    }
}

/// Map a state into a team's canonical frame (identity for blue, exact
/// y-reflection for red).
pub fn canonicalize(state: &UavState, team: Team) -> UavState {
    match team {
        Team::Blue => *state,
        Team::Red => state.reflect_y(),
    }
}

/// Map a control command out of a team's canonical frame into world frame.
pub fn decanonicalize_controls(controls: &ControlInput, team: Team) -> ControlInput {
    match team {
        Team::Blue => *controls,
        Team::Red => controls.reflect_y(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum EventKind {
    MissileHit,
    Collision,
    FloorCrash,
    OverloadDestruct,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EngagementEvent {
    pub kind: EventKind,
    /// Credited aircraft for missile hits; none for the other kinds.
    pub shooter: Option<usize>,
    pub victim: usize,
    pub time: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum MatchResult {
    Win,
    Draw,
    Loss,
}

impl MatchResult {
    pub fn label(self) -> &'static str {
        match self {
            MatchResult::Win => "win",
            MatchResult::Draw => "draw",
            MatchResult::Loss => "loss",
        }
    }
}

/// Final classification from blue's perspective.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EngagementOutcome {
    pub result: MatchResult,
    pub blue_survivors: usize,
    pub red_survivors: usize,
    pub duration: f64,
}

/// Per-step shaping/event decomposition for one aircraft.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct RewardComponents {
    pub posture: f64,
    pub distance: f64,
    pub event: f64,
}

impl RewardComponents {
    pub fn total(&self, w_posture: f64, w_distance: f64) -> f64 {
        w_posture * self.posture + w_distance * self.distance + self.event
    }
}

/// Environment state for one engagement.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ArenaState {
    pub uavs: Vec<UavRecord>,
    pub sim_time: f64,
    pub events: Vec<EngagementEvent>,
    /// Currently selected target per aircraft, set by the decision layer.
    pub targets: Vec<Option<usize>>,
    pub done: bool,
    /// Controls supplied for dead aircraft, counted and ignored.
    pub dead_control_warnings: u64,
    pub seed: u64,
}

/// Result of advancing the arena one physics step.
#[derive(Debug, Clone)]
pub struct StepOutput {
    /// Total reward per aircraft (shaping weights applied, events added).
    pub rewards: Vec<f64>,
    pub components: Vec<RewardComponents>,
    pub events: Vec<EngagementEvent>,
    pub done: bool,
}

impl ArenaState {
    pub fn team_of(&self, id: usize) -> Team {
        self.uavs[id].team
    }

    pub fn alive(&self, id: usize) -> bool {
        self.uavs[id].state.alive
    }

    pub fn alive_count(&self, team: Team) -> usize {
        self.uavs.iter().filter(|u| u.team == team && u.state.alive).count()
    }

    pub fn team_ids(&self, team: Team) -> Vec<usize> {
        self.uavs.iter().filter(|u| u.team == team).map(|u| u.id).collect()
    }

    /// Alive enemy ids of the given aircraft.
    pub fn alive_enemies(&self, id: usize) -> Vec<usize> {
        let enemy = self.team_of(id).opponent();
        self.uavs
            .iter()
            .filter(|u| u.team == enemy && u.state.alive)
            .map(|u| u.id)
            .collect()
    }

    /// Members of the aircraft's formation group, excluding itself.
    pub fn group_mates(&self, id: usize) -> Vec<usize> {
        let me = &self.uavs[id];
        self.uavs
            .iter()
            .filter(|u| u.team == me.team && u.group == me.group && u.id != id)
            .map(|u| u.id)
            .collect()
    }
}

fn spawn_profile_params(profile: SpawnProfile, cfg_y: [f64; 2]) -> ([f64; 2], f64, f64) {
    // Returns (blue y range, blue heading center, red canonical heading
    // center). Canonical heading pi/2 faces the enemy team.
    match profile {
        SpawnProfile::Standard => (cfg_y, PI / 2.0, PI / 2.0),
        SpawnProfile::Approach => ([-5000.0, -3000.0], PI / 2.0, PI / 2.0),
        // Close-in with blue holding tail aspect on a fleeing target.
        SpawnProfile::Offensive => ([-2500.0, -1000.0], PI / 2.0, -PI / 2.0),
        // Blue starts inside the opponent's engagement cone, running away.
        SpawnProfile::Defensive => ([-2000.0, -800.0], -PI / 2.0, PI / 2.0),
    }
}

/// Place both teams. Blue samples inside its spawn box; red samples inside
/// the reflected box, or is the exact bitwise reflection of blue when
/// `mirrored` is set. Deterministic for a given seed.
pub fn reset(cfg: &RunConfig, seed: u64, mirrored: bool) -> Result<ArenaState> {
    cfg.validate()?;
    let n = cfg.arena.team_size;
    let spawn = &cfg.arena.spawn;
    let (y_range, blue_heading, red_heading) =
        spawn_profile_params(spawn.profile, spawn.y_range);
    if y_range[1] >= 0.0 {
        return Err(CoreError::config("effective spawn box crosses y = 0"));
    }

    let mut rng = SeedTree::new(seed).rng("spawn", &[]);
    let mut sample_team = |heading_center: f64| -> Result<Vec<UavState>> {
        let mut states: Vec<UavState> = Vec::with_capacity(n);
        for _ in 0..n {
            let mut placed = false;
            for _attempt in 0..1000 {
                let p = [
                    rng.random_range(spawn.x_range[0]..=spawn.x_range[1]),
                    rng.random_range(y_range[0]..=y_range[1]),
                    rng.random_range(spawn.z_range[0]..=spawn.z_range[1]),
                ];
                let spaced = states.iter().all(|s| {
                    let dx = s.p_x - p[0];
                    let dy = s.p_y - p[1];
                    let dz = s.p_z - p[2];
                    (dx * dx + dy * dy + dz * dz).sqrt() >= spawn.min_spacing_m
                });
                if !spaced {
                    continue;
                }
                let psi = flightdyn::wrap_angle(
                    heading_center
                        + rng.random_range(-spawn.heading_spread..=spawn.heading_spread),
                );
                let v = rng.random_range(spawn.speed_range[0]..=spawn.speed_range[1]);
                states.push(UavState::level(p, psi, v));
                placed = true;
                break;
            }
            if !placed {
                return Err(CoreError::config(
                    "spawn box too small for team size at the configured spacing",
                ));
            }
        }
        Ok(states)
    };

    let blue_states = sample_team(blue_heading)?;
    let red_states: Vec<UavState> = if mirrored {
        blue_states.iter().map(|s| s.reflect_y()).collect()
    } else {
        // Sample in canonical frame, then reflect into world coordinates.
        sample_team(red_heading)?.iter().map(|s| s.reflect_y()).collect()
    };

    let group_size = cfg.arena.group_size;
    let mut uavs = Vec::with_capacity(2 * n);
    for (team, states, base) in
        [(Team::Blue, &blue_states, 0usize), (Team::Red, &red_states, n)]
    {
        for (i, state) in states.iter().enumerate() {
            let group = i / group_size;
            let role = if i % group_size == 0 { Role::Leader } else { Role::Follower };
            uavs.push(UavRecord { id: base + i, team, role, group, state: *state });
        }
    }

    Ok(ArenaState {
        targets: vec![None; uavs.len()],
        uavs,
        sim_time: 0.0,
        events: Vec::new(),
        done: false,
        dead_control_warnings: 0,
        seed,
    })
}

/// Advance every living aircraft one physics step, then evaluate envelope
/// violations, collisions and missile hits simultaneously on the moved
/// states. Rewards decompose exactly into posture, distance and event parts.
pub fn step(
    arena: &mut ArenaState,
    controls: &[Option<ControlInput>],
    cfg: &RunConfig,
) -> Result<StepOutput> {
    if arena.done {
        return Err(CoreError::protocol("step called on a finished arena"));
    }
    if controls.len() != arena.uavs.len() {
        return Err(CoreError::shape(format!(
            "{} controls for {} aircraft",
            controls.len(),
            arena.uavs.len()
        )));
    }
    let dt = cfg.dynamics.dt;
    let n_all = arena.uavs.len();
    let alive_at_start: Vec<bool> = arena.uavs.iter().map(|u| u.state.alive).collect();

    // Integrate.
    let mut prev_states: Vec<UavState> = Vec::with_capacity(n_all);
    for i in 0..n_all {
        prev_states.push(arena.uavs[i].state);
        if !alive_at_start[i] {
            if controls[i].is_some() {
                arena.dead_control_warnings += 1;
            }
            continue;
        }
        let c = controls[i].unwrap_or_default();
        arena.uavs[i].state = step_dynamics(&arena.uavs[i].state, &c, dt, &cfg.dynamics)?;
    }
    arena.sim_time += dt;

    // Destruction predicates, all evaluated on the post-move snapshot so
    // mutual kills land simultaneously.
    let mut step_events: Vec<EngagementEvent> = Vec::new();
    for i in 0..n_all {
        if !alive_at_start[i] {
            continue;
        }
        let status =
            check_flight_envelope(&arena.uavs[i].state, &prev_states[i], dt, &cfg.dynamics);
        match status.violation {
            EnvelopeViolation::AltitudeFloor => step_events.push(EngagementEvent {
                kind: EventKind::FloorCrash,
                shooter: None,
                victim: i,
                time: arena.sim_time,
            }),
            EnvelopeViolation::Overload => step_events.push(EngagementEvent {
                kind: EventKind::OverloadDestruct,
                shooter: None,
                victim: i,
                time: arena.sim_time,
            }),
            EnvelopeViolation::None => {}
        }
    }
    for i in 0..n_all {
        for j in (i + 1)..n_all {
            if !alive_at_start[i] || !alive_at_start[j] {
                continue;
            }
            let a = &arena.uavs[i].state;
            let b = &arena.uavs[j].state;
            let dx = a.p_x - b.p_x;
            let dy = a.p_y - b.p_y;
            let dz = a.p_z - b.p_z;
            if (dx * dx + dy * dy + dz * dz).sqrt() < cfg.arena.collision_radius_m {
                for victim in [i, j] {
                    step_events.push(EngagementEvent {
                        kind: EventKind::Collision,
                        shooter: None,
                        victim,
                        time: arena.sim_time,
                    });
                }
            }
        }
    }
    for shooter in 0..n_all {
        if !alive_at_start[shooter] {
            continue;
        }
        for victim in 0..n_all {
            if victim == shooter
                || !alive_at_start[victim]
                || arena.uavs[victim].team == arena.uavs[shooter].team
            {
                continue;
            }
            if missile_hit(&arena.uavs[shooter].state, &arena.uavs[victim].state, &cfg.arena) {
                step_events.push(EngagementEvent {
                    kind: EventKind::MissileHit,
                    shooter: Some(shooter),
                    victim,
                    time: arena.sim_time,
                });
            }
        }
    }

    for ev in &step_events {
        arena.uavs[ev.victim].state.alive = false;
    }
    arena.events.extend(step_events.iter().copied());

    // Rewards for aircraft that were alive during the step.
    let w_a = cfg.arena.rewards.w_posture;
    let w_d = cfg.arena.rewards.w_distance;
    let mut components = vec![RewardComponents::default(); n_all];
    let mut rewards = vec![0.0; n_all];
    for i in 0..n_all {
        if !alive_at_start[i] {
            continue;
        }
        let mut comp = RewardComponents {
            event: event_reward(&step_events, i, &cfg.arena.rewards),
            ..Default::default()
        };
        if let Some(t) = arena.targets[i] {
            if alive_at_start[t] {
                let g = relative_geometry(&arena.uavs[i].state, &arena.uavs[t].state);
                comp.posture = posture_reward(g.alpha, g.beta);
                comp.distance = distance_reward(g.d, cfg.arena.wez_radius_m);
            }
        }
        components[i] = comp;
        rewards[i] = comp.total(w_a, w_d);
    }

    let blue_alive = arena.alive_count(Team::Blue);
    let red_alive = arena.alive_count(Team::Red);
    if blue_alive == 0 || red_alive == 0 || arena.sim_time >= cfg.arena.t_limit_s {
        arena.done = true;
    }

    Ok(StepOutput { rewards, components, events: step_events, done: arena.done })
}

/// Classify the finished engagement from blue's perspective.
pub fn outcome(arena: &ArenaState) -> Result<EngagementOutcome> {
    if !arena.done {
        return Err(CoreError::protocol("outcome requested before the engagement ended"));
    }
    let blue = arena.alive_count(Team::Blue);
    let red = arena.alive_count(Team::Red);
    let result = if red == 0 && blue > 0 {
        MatchResult::Win
    } else if blue == 0 && red > 0 {
        MatchResult::Loss
    } else {
        MatchResult::Draw
    };
    Ok(EngagementOutcome {
        result,
        blue_survivors: blue,
        red_survivors: red,
        duration: arena.sim_time,
    })
}

fn affine01(x: f64, range: [f64; 2]) -> f64 {
    (x - range[0]) / (range[1] - range[0])
}

/// Observation length for the given configuration.
pub fn obs_dim(cfg: &RunConfig, with_leader_onehot: bool) -> usize {
    1 + 11 + 3 + 7 * (cfg.arena.group_size - 1) + if with_leader_onehot { 3 } else { 0 }
}

/// Build one aircraft's observation in its team-canonical frame.
///
/// Layout: alive flag, 11 own-state features (position, velocity, attitude,
/// angle off and aspect toward the selected target), target geometry
/// (angle off, aspect, range), then one relative block per formation
/// teammate, and for followers the leader's current sub-policy one-hot.
/// Destroyed aircraft observe all zeros.
pub fn observe(
    arena: &ArenaState,
    uav_id: usize,
    leader_onehot: Option<[f64; 3]>,
    cfg: &RunConfig,
) -> Vec<f64> {
    let dim = obs_dim(cfg, leader_onehot.is_some());
    let me = &arena.uavs[uav_id];
    if !me.state.alive {
        return vec![0.0; dim];
    }
    let norm = &cfg.arena.obs;
    let own = me.canonical_state();
    let mut obs = Vec::with_capacity(dim);

    let target_geom = arena.targets[uav_id].and_then(|t| {
        let tgt = &arena.uavs[t];
        if tgt.state.alive {
            Some(relative_geometry(&own, &canonicalize(&tgt.state, me.team)))
        } else {
            None
        }
    });

    obs.push(1.0);
    obs.push(affine01(own.p_x, norm.pos_xy_range));
    obs.push(affine01(own.p_y, norm.pos_xy_range));
    obs.push(affine01(own.p_z, norm.pos_z_range));
    obs.push(affine01(own.v_x, norm.vel_range));
    obs.push(affine01(own.v_y, norm.vel_range));
    obs.push(affine01(own.v_z, norm.vel_range));
    obs.push(own.phi / PI);
    obs.push(own.theta / PI);
    obs.push(own.psi / PI);
    match &target_geom {
        Some(g) => {
            obs.push(g.alpha_signed / PI);
            obs.push(g.beta / (2.0 * PI));
        }
        None => {
            obs.push(0.0);
            obs.push(0.0);
        }
    }
    match &target_geom {
        Some(g) => {
            obs.push(g.alpha / PI);
            obs.push(g.beta / PI);
            obs.push(g.d / norm.dist_max);
        }
        None => obs.extend_from_slice(&[0.0, 0.0, 0.0]),
    }

    for mate_id in arena.group_mates(uav_id) {
        let mate = &arena.uavs[mate_id];
        if mate.state.alive {
            let m = canonicalize(&mate.state, me.team);
            obs.push((m.p_x - own.p_x) / norm.dist_max);
            obs.push((m.p_y - own.p_y) / norm.dist_max);
            obs.push((m.p_z - own.p_z) / norm.dist_max);
            obs.push(affine01(m.v_x, norm.vel_range));
            obs.push(affine01(m.v_y, norm.vel_range));
            obs.push(affine01(m.v_z, norm.vel_range));
            obs.push(1.0);
        } else {
            obs.extend_from_slice(&[0.0; 7]);
        }
    }

    if let Some(onehot) = leader_onehot {
        obs.extend_from_slice(&onehot);
    }

    debug_assert_eq!(obs.len(), dim);
    obs
}

/// CSV header for trajectory exports.
pub const TRAJECTORY_HEADER: &str =
    "time,uav_id,team,role,px,py,pz,v,phi,theta,psi,alive,target_id,reward";

/// One agent-decision-step snapshot for trajectory export.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryRow {
    pub time: f64,
    pub uav_id: usize,
    pub team: Team,
    pub role: Role,
    pub px: f64,
    pub py: f64,
    pub pz: f64,
    pub v: f64,
    pub phi: f64,
    pub theta: f64,
    pub psi: f64,
    pub alive: bool,
    /// -1 encodes no selected target.
    pub target_id: i64,
    pub reward: f64,
}

impl TrajectoryRow {
    pub fn to_csv(&self) -> String {
        format!(
            "{},{},{},{},{},{},{},{},{},{},{},{},{},{}",
            self.time,
            self.uav_id,
            self.team.label(),
            self.role.label(),
            self.px,
            self.py,
            self.pz,
            self.v,
            self.phi,
            self.theta,
            self.psi,
            self.alive as u8,
            self.target_id,
            self.reward
        )
    }
}
