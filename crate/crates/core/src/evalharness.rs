//! Match runner, scripted opponents and tournament statistics.

use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::arena::{
    self, EngagementOutcome, Team, TrajectoryRow,
};
use crate::config::RunConfig;
use crate::error::CoreError;
use crate::flightdyn::ControlInput;
use crate::hrl::{low_level_control, DesiredAttitude};
use crate::lfmappo::rollout::{EpisodeDriver, TeamController};
use crate::Result;

/// Deterministic classical controllers used as evaluation opponents.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ScriptedKind {
    PurePursuit,
    StraightLine,
    EvasiveWeave,
}

impl ScriptedKind {
    pub fn label(self) -> &'static str {
        match self {
            ScriptedKind::PurePursuit => "pure_pursuit",
            ScriptedKind::StraightLine => "straight_line",
            ScriptedKind::EvasiveWeave => "evasive_weave",
        }
    }
}

impl FromStr for ScriptedKind {
    type Err = CoreError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "pure_pursuit" => Ok(ScriptedKind::PurePursuit),
            "straight_line" => Ok(ScriptedKind::StraightLine),
            "evasive_weave" => Ok(ScriptedKind::EvasiveWeave),
            other => Err(CoreError::config(format!(
                "unknown scripted opponent '{other}' \
                 (expected pure_pursuit, straight_line or evasive_weave)"
            ))),
        }
    }
}

const PURSUIT_THROTTLE: f64 = 0.8;
const STRAIGHT_THROTTLE: f64 = 0.6;
const WEAVE_THROTTLE: f64 = 0.9;

/// Desired attitude for a scripted aircraft, in world frame.
pub fn scripted_desired(
    kind: ScriptedKind,
    uav_id: usize,
    arena: &arena::ArenaState,
    cfg: &RunConfig,
) -> DesiredAttitude {
    let me = &arena.uavs[uav_id].state;
    match kind {
        ScriptedKind::StraightLine => DesiredAttitude {
            heading_cmd: me.psi,
            pitch_cmd: 0.0,
            throttle_cmd: STRAIGHT_THROTTLE,
        },
        ScriptedKind::EvasiveWeave => {
            let phase = 2.0 * std::f64::consts::PI * arena.sim_time / cfg.eval.weave_period_s;
            DesiredAttitude {
                heading_cmd: crate::flightdyn::wrap_angle(
                    me.psi + cfg.eval.weave_amp_rad * phase.sin(),
                ),
                pitch_cmd: 0.0,
                throttle_cmd: WEAVE_THROTTLE,
            }
        }
        ScriptedKind::PurePursuit => {
            // Chase the assigned target, or the nearest living enemy.
            let target = arena.targets[uav_id].filter(|&t| arena.alive(t)).or_else(|| {
                arena
                    .alive_enemies(uav_id)
                    .into_iter()
                    .min_by(|&a, &b| {
                        let da = arena::relative_geometry(me, &arena.uavs[a].state).d;
                        let db = arena::relative_geometry(me, &arena.uavs[b].state).d;
                        da.partial_cmp(&db).unwrap()
                    })
            });
            match target {
                None => DesiredAttitude {
                    heading_cmd: me.psi,
                    pitch_cmd: 0.0,
                    throttle_cmd: STRAIGHT_THROTTLE,
                },
                Some(t) => {
                    let tgt = &arena.uavs[t].state;
                    let dx = tgt.p_x - me.p_x;
                    let dy = tgt.p_y - me.p_y;
                    let dz = tgt.p_z - me.p_z;
                    let horiz = (dx * dx + dy * dy).sqrt();
                    DesiredAttitude {
                        heading_cmd: dy.atan2(dx),
                        pitch_cmd: dz
                            .atan2(horiz)
                            .clamp(-cfg.hierarchy.pitch_cmd_max, cfg.hierarchy.pitch_cmd_max),
                        throttle_cmd: PURSUIT_THROTTLE,
                    }
                }
            }
        }
    }
}

/// Surface commands for a scripted aircraft: the desired attitude run
/// through the shared PD controller.
pub fn scripted_opponent(
    kind: ScriptedKind,
    uav_id: usize,
    arena: &arena::ArenaState,
    cfg: &RunConfig,
) -> ControlInput {
    let desired = scripted_desired(kind, uav_id, arena, cfg);
    low_level_control(&arena.uavs[uav_id].state, &desired, &cfg.controller.gains)
}

/// Full record of one evaluated engagement.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatchRecord {
    pub seed: u64,
    pub mirrored: bool,
    /// Hash of the configuration the match ran under.
    pub config_hash: String,
    pub outcome: EngagementOutcome,
    /// Cumulative environment reward per team `[blue, red]`.
    pub team_rewards: [f64; 2],
    /// One row per living agent per decision step; empty unless trajectory
    /// recording was requested.
    pub rows: Vec<TrajectoryRow>,
}

/// Refuse to pit artifacts built under different configurations against
/// each other unless forced.
pub fn ensure_compatible(hash_a: &str, hash_b: &str, force: bool) -> Result<()> {
    if hash_a != hash_b && !force {
        return Err(CoreError::Checkpoint(format!(
            "config hash mismatch: {} vs {} (pass --force to override)",
            &hash_a[..8.min(hash_a.len())],
            &hash_b[..8.min(hash_b.len())]
        )));
    }
    Ok(())
}

/// Run one engagement to termination. Deterministic given the seed and
/// deterministic controllers.
pub fn run_match(
    blue: TeamController<'_>,
    red: TeamController<'_>,
    cfg: &RunConfig,
    seed: u64,
    mirrored: bool,
    record_rows: bool,
) -> Result<MatchRecord> {
    let mut driver = EpisodeDriver::new(cfg, seed, blue, red, mirrored, None, 0)?;
    let mut sink = Vec::new();
    let mut rows = Vec::new();
    let mut team_rewards = [0.0f64; 2];

    loop {
        let summary = driver.agent_step(&mut sink)?;
        let time = driver.arena.sim_time;
        for id in 0..driver.arena.uavs.len() {
            if !summary.acted[id] {
                continue;
            }
            let u = &driver.arena.uavs[id];
            match u.team {
                Team::Blue => team_rewards[0] += summary.env_rewards[id],
                Team::Red => team_rewards[1] += summary.env_rewards[id],
            }
            if record_rows {
                rows.push(TrajectoryRow {
                    time,
                    uav_id: id,
                    team: u.team,
                    role: u.role,
                    px: u.state.p_x,
                    py: u.state.p_y,
                    pz: u.state.p_z,
                    v: u.state.v,
                    phi: u.state.phi,
                    theta: u.state.theta,
                    psi: u.state.psi,
                    alive: u.state.alive,
                    target_id: driver.arena.targets[id].map(|t| t as i64).unwrap_or(-1),
                    reward: summary.env_rewards[id],
                });
            }
        }
        if summary.done {
            break;
        }
    }

    let outcome = arena::outcome(&driver.arena)?;
    Ok(MatchRecord {
        seed,
        mirrored,
        config_hash: cfg.hash(),
        outcome,
        team_rewards,
        rows,
    })
}

/// Aggregated result of a repeated-engagement evaluation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TournamentResult {
    pub matches: usize,
    pub wins: usize,
    pub draws: usize,
    pub losses: usize,
    pub win_rate: f64,
    pub draw_rate: f64,
    pub loss_rate: f64,
}

impl TournamentResult {
    fn from_counts(wins: usize, draws: usize, losses: usize) -> Self {
        let n = wins + draws + losses;
        let win_rate = wins as f64 / n as f64;
        let draw_rate = draws as f64 / n as f64;
        // The three rates partition unity exactly: the loss rate is defined
        // as the complement of the other two.
        let loss_rate = 1.0 - (win_rate + draw_rate);
        TournamentResult {
            matches: n,
            wins,
            draws,
            losses,
            win_rate,
            draw_rate,
            loss_rate,
        }
    }
}

/// Play `n` independent matches with seeds `base_seed..base_seed + n`,
/// in parallel, and fold the outcomes into rates.
pub fn tournament(
    blue: TeamController<'_>,
    red: TeamController<'_>,
    cfg: &RunConfig,
    n: usize,
    base_seed: u64,
    mirrored: bool,
) -> Result<(TournamentResult, Vec<MatchRecord>)> {
    if n == 0 {
        return Err(CoreError::config("tournament needs at least one match"));
    }
    let records: Vec<Result<MatchRecord>> = (0..n)
        .into_par_iter()
        .map(|k| run_match(blue, red, cfg, base_seed + k as u64, mirrored, false))
        .collect();
    let records: Result<Vec<MatchRecord>> = records.into_iter().collect();
    let records = records?;

    let mut wins = 0;
    let mut draws = 0;
    let mut losses = 0;
    for r in &records {
        match r.outcome.result {
            arena::MatchResult::Win => wins += 1,
            arena::MatchResult::Draw => draws += 1,
            arena::MatchResult::Loss => losses += 1,
        }
    }
    Ok((TournamentResult::from_counts(wins, draws, losses), records))
}
