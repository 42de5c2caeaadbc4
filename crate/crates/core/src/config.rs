//! Run configuration: one validated struct tree mirroring the config file.
//!
//! The file format is TOML with dotted sections named after the modules they
//! configure. Unknown keys are hard errors so typos cannot silently fall back
//! to defaults. A canonical hash of the full configuration is embedded in
//! checkpoints and output files to guard against mixing incompatible
//! artifacts.

use std::f64::consts::PI;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::CoreError;
use crate::Result;

/// Full run configuration. Top-level fields plus one section per module.
#[derive(Debug, Clone, Default, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    /// Master seed; every random stream in the run derives from it.
    pub seed: u64,
    pub dynamics: DynamicsConfig,
    pub arena: ArenaConfig,
    pub targeting: TargetingConfig,
    pub hierarchy: HierarchyConfig,
    pub controller: ControllerConfig,
    pub net: NetConfig,
    pub train: TrainConfig,
    pub eval: EvalConfig,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct DynamicsConfig {
    /// Integration step, seconds (50 Hz).
    pub dt: f64,
    /// Airspeed bounds, m/s.
    pub v_min: f64,
    pub v_max: f64,
    /// Axial acceleration cap, m/s^2.
    pub accel_max: f64,
    /// First-order attitude-rate lag, seconds.
    pub attitude_tau: f64,
    /// Attitude rates at full surface deflection, rad/s.
    pub roll_rate_max: f64,
    pub pitch_rate_max: f64,
    pub yaw_rate_max: f64,
    /// Bank angle beyond which the turn coupling saturates, rad.
    pub bank_couple_max: f64,
    /// Destruction floor, meters.
    pub altitude_min: f64,
    /// Load-factor destruction limit, g.
    pub load_factor_max: f64,
}

impl Default for DynamicsConfig {
    fn default() -> Self {
        DynamicsConfig {
            dt: 0.02,
            v_min: 60.0,
            v_max: 340.0,
            accel_max: 10.0,
            attitude_tau: 0.5,
            roll_rate_max: 2.0 * PI / 3.0,
            pitch_rate_max: PI / 6.0,
            yaw_rate_max: PI / 6.0,
            bank_couple_max: 1.45,
            altitude_min: 3000.0,
            load_factor_max: 9.0,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct ArenaConfig {
    /// Aircraft per team.
    pub team_size: usize,
    /// Formation group size; each group has one leader.
    pub group_size: usize,
    /// Episode time limit, seconds.
    pub t_limit_s: f64,
    /// Pairwise destruction distance, meters.
    pub collision_radius_m: f64,
    /// Weapon engagement zone radius, meters. Also the distance-reward
    /// normalizer (maximum attack range).
    pub wez_radius_m: f64,
    /// Weapon engagement zone apex angle, rad.
    pub wez_angle_rad: f64,
    /// Missile hit range, meters (strict upper bound).
    pub missile_range_m: f64,
    /// Missile field of view apex angle, rad.
    pub missile_fov_rad: f64,
    /// Whether the configured sector angles are full apex angles ("full",
    /// halved before use) or already half-angles ("half").
    pub angle_convention: AngleConvention,
    pub spawn: SpawnConfig,
    pub rewards: RewardConfig,
    pub obs: ObsNormConfig,
}

impl Default for ArenaConfig {
    fn default() -> Self {
        ArenaConfig {
            team_size: 6,
            group_size: 3,
            t_limit_s: 300.0,
            collision_radius_m: 50.0,
            wez_radius_m: 4000.0,
            wez_angle_rad: PI / 4.0,
            missile_range_m: 300.0,
            missile_fov_rad: PI / 4.0,
            angle_convention: AngleConvention::Full,
            spawn: SpawnConfig::default(),
            rewards: RewardConfig::default(),
            obs: ObsNormConfig::default(),
        }
    }
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize, PartialEq, Eq)]
#[serde(rename_all = "snake_case")]
pub enum AngleConvention {
    Full,
    Half,
}

impl AngleConvention {
    /// Half-angle actually compared against line-of-sight angles.
    pub fn half_angle(self, configured: f64) -> f64 {
        match self {
            AngleConvention::Full => configured / 2.0,
            AngleConvention::Half => configured,
        }
    }
}

/// Spawn volume for the blue team; red spawns in its mirror across y = 0.
/// Initial state scenarios for sub-policy curricula are selected by name.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct SpawnConfig {
    pub x_range: [f64; 2],
    /// Must be entirely below y = 0.
    pub y_range: [f64; 2],
    pub z_range: [f64; 2],
    pub speed_range: [f64; 2],
    /// Heading spread around the enemy-facing direction, rad.
    pub heading_spread: f64,
    /// Minimum pairwise spacing within a team, meters.
    pub min_spacing_m: f64,
    /// standard | approach | offensive | defensive
    pub profile: SpawnProfile,
}

impl Default for SpawnConfig {
    fn default() -> Self {
        SpawnConfig {
            x_range: [-3000.0, 3000.0],
            y_range: [-2400.0, -1400.0],
            z_range: [4500.0, 7500.0],
            speed_range: [160.0, 240.0],
            heading_spread: PI / 6.0,
            min_spacing_m: 150.0,
            profile: SpawnProfile::Standard,
        }
    }
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize, PartialEq, Eq)]
#[serde(rename_all = "snake_case")]
pub enum SpawnProfile {
    /// Use the configured ranges as-is.
    Standard,
    /// Long-range starts, 6-10 km separation.
    Approach,
    /// Close starts with angular advantage, 2-5 km separation.
    Offensive,
    /// Blue starts inside the opponent's engagement zone.
    Defensive,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct RewardConfig {
    /// Weight on the posture shaping term.
    pub w_posture: f64,
    /// Weight on the distance shaping term.
    pub w_distance: f64,
    pub kill: f64,
    pub death: f64,
    pub crash: f64,
}

impl Default for RewardConfig {
    fn default() -> Self {
        RewardConfig { w_posture: 1.0, w_distance: 1.0, kill: 200.0, death: 200.0, crash: 100.0 }
    }
}

/// Affine normalization ranges for observation features.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct ObsNormConfig {
    pub pos_xy_range: [f64; 2],
    pub pos_z_range: [f64; 2],
    pub vel_range: [f64; 2],
    /// Range normalizer for target distance, meters.
    pub dist_max: f64,
}

impl Default for ObsNormConfig {
    fn default() -> Self {
        ObsNormConfig {
            pos_xy_range: [-15000.0, 15000.0],
            pos_z_range: [3000.0, 12000.0],
            vel_range: [-340.0, 340.0],
            dist_max: 20000.0,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct TargetingConfig {
    /// Weight on the position attribute.
    pub w_d: f64,
    /// Weight on the posture attribute.
    pub w_a: f64,
    /// Weight on the capability attribute.
    pub w_i: f64,
    /// Projection horizon, steps.
    pub n_steps: usize,
    /// Projection step, seconds.
    pub step_dt: f64,
    /// Detection range normalizing the position attribute, meters.
    pub d_detect_m: f64,
    pub capability_leader: f64,
    pub capability_follower: f64,
    /// Whose posture the threat score reads: the target's posture against us
    /// ("target_vs_own", default) or ours against the target.
    pub posture_view: PostureView,
}

impl Default for TargetingConfig {
    fn default() -> Self {
        TargetingConfig {
            w_d: 0.4,
            w_a: 0.4,
            w_i: 0.2,
            n_steps: 5,
            step_dt: 1.0,
            d_detect_m: 10000.0,
            capability_leader: 1.0,
            capability_follower: 0.6,
            posture_view: PostureView::TargetVsOwn,
        }
    }
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize, PartialEq, Eq)]
#[serde(rename_all = "snake_case")]
pub enum PostureView {
    TargetVsOwn,
    OwnVsTarget,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct HierarchyConfig {
    /// Agent decisions per selector decision.
    pub selector_epoch: usize,
    /// Physics steps per agent decision.
    pub agent_decimation: usize,
    /// Largest heading change an agent may command per decision, rad.
    pub heading_delta_max: f64,
    /// Largest pitch change an agent may command per decision, rad.
    pub pitch_delta_max: f64,
    /// Commanded pitch is clamped to this magnitude, rad.
    pub pitch_cmd_max: f64,
    /// Follower throttle multiplier (more aggressive flight at lower cost).
    pub follower_throttle_gain: f64,
}

impl Default for HierarchyConfig {
    fn default() -> Self {
        HierarchyConfig {
            selector_epoch: 10,
            agent_decimation: 5,
            heading_delta_max: PI / 2.0,
            pitch_delta_max: PI / 6.0,
            pitch_cmd_max: PI / 3.0,
            follower_throttle_gain: 1.25,
        }
    }
}

#[derive(Debug, Clone, Default, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct ControllerConfig {
    pub gains: ControllerGains,
}

/// Bank-to-turn PD gains for the bottom-level attitude controller.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct ControllerGains {
    /// Desired bank per radian of heading error.
    pub bank: f64,
    /// Bank command magnitude limit, rad.
    pub bank_max: f64,
    pub roll_p: f64,
    pub roll_d: f64,
    pub pitch_p: f64,
    pub pitch_d: f64,
    pub yaw_p: f64,
    pub yaw_d: f64,
}

impl Default for ControllerGains {
    fn default() -> Self {
        ControllerGains {
            bank: 2.5,
            bank_max: PI / 3.0,
            roll_p: 2.5,
            roll_d: 0.6,
            pitch_p: 3.0,
            pitch_d: 0.8,
            yaw_p: 0.4,
            yaw_d: 0.3,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct NetConfig {
    /// Hidden layer widths for every actor and critic.
    pub hidden: Vec<usize>,
    /// Initial log standard deviation of continuous action heads.
    pub log_std_init: f64,
}

impl Default for NetConfig {
    fn default() -> Self {
        NetConfig { hidden: vec![128, 128], log_std_init: -0.5 }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    /// lfmappo | mappo | ippo
    pub algo: Algo,
    pub gamma: f64,
    pub gae_lambda: f64,
    pub clip_epsilon: f64,
    pub lr: f64,
    pub entropy_coef: f64,
    pub critic_coef: f64,
    /// Mixing rate of the leader-follower value target.
    pub lf_alpha: f64,
    /// Multiplier applied to rewards before advantage and value-target
    /// estimation. Keeps critic regression well conditioned when shaping
    /// magnitudes are large; reported metrics stay in raw reward units.
    pub reward_scale: f64,
    /// Optimization epochs per iteration.
    pub epochs: usize,
    pub minibatch_size: usize,
    /// Global gradient-norm clip per network.
    pub grad_clip: f64,
    /// Experience buffer capacity, transitions.
    pub buffer_capacity: usize,
    /// Parallel arenas per rollout.
    pub arenas: usize,
    /// Agent decisions collected per arena per iteration.
    pub steps_per_arena: usize,
    /// Training iterations.
    pub iters: usize,
    /// Opponent during training: "scripted:<kind>" or "mirror".
    pub opponent: String,
    /// Tournament evaluation cadence in iterations (0 = never).
    pub eval_every: usize,
    /// Matches per training-time evaluation stage.
    pub eval_matches: usize,
    /// Checkpoint cadence in iterations (0 = final only).
    pub checkpoint_every: usize,
    /// Verify the pointwise clipped-surrogate min property on every
    /// minibatch (costs a little time; used by the acceptance suite).
    pub audit_clip: bool,
    pub curriculum: CurriculumConfig,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            algo: Algo::Lfmappo,
            gamma: 0.99,
            gae_lambda: 0.95,
            clip_epsilon: 0.2,
            lr: 3e-4,
            entropy_coef: 0.01,
            critic_coef: 0.5,
            lf_alpha: 0.1,
            reward_scale: 0.02,
            epochs: 4,
            minibatch_size: 256,
            grad_clip: 5.0,
            buffer_capacity: 3000,
            arenas: 4,
            steps_per_arena: 64,
            iters: 200,
            opponent: "scripted:pure_pursuit".to_string(),
            eval_every: 10,
            eval_matches: 128,
            checkpoint_every: 10,
            audit_clip: false,
            curriculum: CurriculumConfig::default(),
        }
    }
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize, PartialEq, Eq)]
#[serde(rename_all = "snake_case")]
pub enum Algo {
    /// Role-split critics, follower value conditioned on the leader's action
    /// with pessimistic (min-over-leader) bootstrap targets.
    Lfmappo,
    /// Shared networks for all agents, no role conditioning.
    Mappo,
    /// Per-role networks, no leader conditioning.
    Ippo,
}

/// Reward mixes used when training each maneuver sub-policy.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct CurriculumConfig {
    pub approach_posture_w: f64,
    pub approach_distance_w: f64,
    pub offensive_posture_w: f64,
    pub offensive_distance_w: f64,
    pub defensive_posture_w: f64,
    pub defensive_distance_w: f64,
    /// Per-decision bonus for staying alive under the defensive policy.
    pub defensive_survival_bonus: f64,
}

impl Default for CurriculumConfig {
    fn default() -> Self {
        CurriculumConfig {
            approach_posture_w: 0.25,
            approach_distance_w: 1.0,
            offensive_posture_w: 1.0,
            offensive_distance_w: 0.25,
            defensive_posture_w: 0.1,
            defensive_distance_w: 0.1,
            defensive_survival_bonus: 0.2,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct EvalConfig {
    /// Matches per tournament.
    pub matches: usize,
    /// Evaluate policies at distribution means / argmax instead of sampling.
    pub deterministic: bool,
    /// Spawn red as the exact mirror of blue.
    pub mirrored: bool,
    /// Heading oscillation period of the evasive-weave opponent, seconds.
    pub weave_period_s: f64,
    /// Heading oscillation amplitude of the evasive-weave opponent, rad.
    pub weave_amp_rad: f64,
}

impl Default for EvalConfig {
    fn default() -> Self {
        EvalConfig {
            matches: 128,
            deterministic: true,
            mirrored: false,
            weave_period_s: 8.0,
            weave_amp_rad: 0.8,
        }
    }
}

impl RunConfig {
    /// Parse a TOML document. Unknown keys are hard errors.
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: RunConfig =
            toml::from_str(text).map_err(|e| CoreError::Config(format!("{e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CoreError::Config(format!("{}: {e}", path.display())))?;
        Self::from_toml(&text)
    }

    /// Parse a TOML document and apply `key=value` overrides on dotted paths
    /// before validation.
    pub fn from_toml_with_overrides(text: &str, overrides: &[(String, String)]) -> Result<Self> {
        let mut table: toml::Table =
            text.parse().map_err(|e| CoreError::Config(format!("{e}")))?;
        for (key, value) in overrides {
            apply_override(&mut table, key, value)?;
        }
        let merged = toml::to_string(&table).map_err(|e| CoreError::Config(format!("{e}")))?;
        Self::from_toml(&merged)
    }

    /// Canonical serialization used for hashing and for the copy written into
    /// each run directory.
    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("config serializes")
    }

    /// Hash of the canonical serialization; embedded in checkpoints and
    /// output headers.
    pub fn hash(&self) -> String {
        let canonical = serde_json::to_string(self).expect("config serializes");
        let digest = Sha256::digest(canonical.as_bytes());
        let mut hex = String::with_capacity(64);
        for b in digest {
            hex.push_str(&format!("{b:02x}"));
        }
        hex
    }

    /// Deterministic run identifier: config hash prefix plus seed.
    pub fn run_id(&self) -> String {
        format!("{}-s{}", &self.hash()[..8], self.seed)
    }

    pub fn validate(&self) -> Result<()> {
        let d = &self.dynamics;
        if !(d.dt > 0.0) {
            return Err(CoreError::config("dynamics.dt must be > 0"));
        }
        if !(d.v_min > 0.0 && d.v_max > d.v_min) {
            return Err(CoreError::config("dynamics speed bounds must satisfy 0 < v_min < v_max"));
        }
        if !(d.accel_max > 0.0) {
            return Err(CoreError::config("dynamics.accel_max must be > 0"));
        }
        let a = &self.arena;
        if a.team_size == 0 {
            return Err(CoreError::config("arena.team_size must be >= 1"));
        }
        if a.group_size == 0 || a.team_size % a.group_size != 0 {
            return Err(CoreError::config(format!(
                "arena.team_size ({}) must be divisible by arena.group_size ({})",
                a.team_size, a.group_size
            )));
        }
        let s = &a.spawn;
        for (name, r) in [
            ("x_range", s.x_range),
            ("y_range", s.y_range),
            ("z_range", s.z_range),
            ("speed_range", s.speed_range),
        ] {
            if !(r[0] <= r[1]) || !r[0].is_finite() || !r[1].is_finite() {
                return Err(CoreError::config(format!("arena.spawn.{name} is not an interval")));
            }
        }
        if s.y_range[1] >= 0.0 {
            return Err(CoreError::config(
                "arena.spawn.y_range must lie below y = 0; the red spawn box is its mirror \
                 and the boxes may not overlap",
            ));
        }
        if s.z_range[0] < d.altitude_min {
            return Err(CoreError::config(format!(
                "arena.spawn.z_range starts at {} m, below the {} m altitude floor",
                s.z_range[0], d.altitude_min
            )));
        }
        if s.speed_range[0] < d.v_min || s.speed_range[1] > d.v_max {
            return Err(CoreError::config("arena.spawn.speed_range outside dynamics speed bounds"));
        }
        let t = &self.targeting;
        if t.w_d < 0.0 || t.w_a < 0.0 || t.w_i < 0.0 || t.w_d + t.w_a + t.w_i <= 0.0 {
            return Err(CoreError::config(
                "targeting weights must be non-negative with a positive sum",
            ));
        }
        if t.n_steps == 0 {
            return Err(CoreError::config("targeting.n_steps must be >= 1"));
        }
        let h = &self.hierarchy;
        if h.selector_epoch == 0 || h.agent_decimation == 0 {
            return Err(CoreError::config("hierarchy cadences must be >= 1"));
        }
        if self.net.hidden.is_empty() || self.net.hidden.contains(&0) {
            return Err(CoreError::config("net.hidden must list positive layer widths"));
        }
        let tr = &self.train;
        if !(0.0..=1.0).contains(&tr.gamma) || !(0.0..=1.0).contains(&tr.gae_lambda) {
            return Err(CoreError::config("train.gamma and train.gae_lambda must be in [0, 1]"));
        }
        if !(tr.clip_epsilon > 0.0) {
            return Err(CoreError::config("train.clip_epsilon must be > 0"));
        }
        if !(tr.lf_alpha > 0.0 && tr.lf_alpha <= 1.0) {
            return Err(CoreError::config("train.lf_alpha must be in (0, 1]"));
        }
        if !(tr.reward_scale > 0.0) {
            return Err(CoreError::config("train.reward_scale must be > 0"));
        }
        if tr.minibatch_size == 0 || tr.epochs == 0 || tr.arenas == 0 || tr.steps_per_arena == 0 {
            return Err(CoreError::config("train batch/epoch/arena sizes must be >= 1"));
        }
        if tr.buffer_capacity == 0 {
            return Err(CoreError::config("train.buffer_capacity must be >= 1"));
        }
        parse_opponent(&tr.opponent)?;
        if self.eval.matches == 0 {
            return Err(CoreError::config("eval.matches must be >= 1"));
        }
        Ok(())
    }
}

/// Opponent specification: either a scripted controller or the mirrored
/// current policy.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OpponentSpec {
    Scripted(crate::evalharness::ScriptedKind),
    Mirror,
}

pub fn parse_opponent(s: &str) -> Result<OpponentSpec> {
    if s == "mirror" {
        return Ok(OpponentSpec::Mirror);
    }
    if let Some(kind) = s.strip_prefix("scripted:") {
        return Ok(OpponentSpec::Scripted(kind.parse()?));
    }
    Err(CoreError::config(format!(
        "unknown opponent '{s}' (expected 'mirror' or 'scripted:<kind>')"
    )))
}

fn apply_override(table: &mut toml::Table, key: &str, value: &str) -> Result<()> {
    let parts: Vec<&str> = key.split('.').collect();
    if parts.iter().any(|p| p.is_empty()) {
        return Err(CoreError::config(format!("bad override key '{key}'")));
    }
    let mut current = table;
    for part in &parts[..parts.len() - 1] {
        current = current
            .entry(part.to_string())
            .or_insert_with(|| toml::Value::Table(toml::Table::new()))
            .as_table_mut()
            .ok_or_else(|| CoreError::config(format!("override '{key}' crosses a non-table")))?;
    }
    // Values parse with TOML syntax; bare words fall back to strings.
    let parsed: toml::Value = match value.parse::<toml::Value>() {
        Ok(v) => v,
        Err(_) => toml::Value::String(value.to_string()),
    };
    current.insert(parts[parts.len() - 1].to_string(), parsed);
    Ok(())
}
