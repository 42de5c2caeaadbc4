//! Hierarchical episode driver and parallel rollout collection.
//!
//! The driver owns the decision cadences: selector epochs every K agent
//! steps (role promotion, target re-selection, sub-policy selection with
//! leaders deciding before their followers), agent decisions every
//! `agent_decimation` physics steps, and the PD controller at the physics
//! rate. The same driver runs training rollouts and evaluation matches.

use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::arena::{
    self, canonicalize, ArenaState, RewardComponents, Role, Team,
};
use crate::config::{OpponentSpec, RunConfig};
use crate::error::CoreError;
use crate::evalharness::{scripted_desired, ScriptedKind};
use crate::flightdyn::ControlInput;
use crate::hrl::{
    self, low_level_control, select_subpolicy, subpolicy_act, DesiredAttitude, RoleAssignment,
    SubPolicyId,
};
use crate::lfmappo::buffer::{RolloutBuffer, Transition};
use crate::lfmappo::params::PolicyBundle;
use crate::rng::SeedTree;
use crate::targeting::{self, ThreatWeights};
use crate::Result;

/// Action source for one team.
#[derive(Clone, Copy)]
pub enum TeamController<'a> {
    Learned { bundle: &'a PolicyBundle, deterministic: bool },
    Scripted(ScriptedKind),
}

#[derive(Debug, Clone)]
struct AgentCtx {
    subpolicy: SubPolicyId,
    selector_log_prob: f64,
    desired: DesiredAttitude,
}

/// Summary of one agent decision step.
#[derive(Debug, Clone)]
pub struct AgentStepSummary {
    pub done: bool,
    /// Environment reward accumulated over the decision, per aircraft.
    pub env_rewards: Vec<f64>,
    /// Which aircraft were alive when the decision was taken.
    pub acted: Vec<bool>,
}

pub struct EpisodeDriver<'a> {
    pub arena: ArenaState,
    cfg: &'a RunConfig,
    controllers: [TeamController<'a>; 2],
    roles: [RoleAssignment; 2],
    ctx: Vec<AgentCtx>,
    rng: ChaCha8Rng,
    agent_step: usize,
    epoch_base: usize,
    record_team: Option<Team>,
    /// Index of each agent's most recent transition in the output vector.
    last_tx: Vec<Option<usize>>,
}

impl<'a> EpisodeDriver<'a> {
    pub fn new(
        cfg: &'a RunConfig,
        seed: u64,
        blue: TeamController<'a>,
        red: TeamController<'a>,
        mirrored: bool,
        record_team: Option<Team>,
        epoch_base: usize,
    ) -> Result<Self> {
        let arena = arena::reset(cfg, seed, mirrored)?;
        let n_all = arena.uavs.len();
        let blue_roster = arena.team_ids(Team::Blue);
        let red_roster = arena.team_ids(Team::Red);
        let roles = [
            hrl::assign_roles(&blue_roster, cfg.arena.group_size)?,
            hrl::assign_roles(&red_roster, cfg.arena.group_size)?,
        ];
        let ctx = vec![
            AgentCtx {
                subpolicy: SubPolicyId::Approach,
                selector_log_prob: 0.0,
                desired: DesiredAttitude { heading_cmd: 0.0, pitch_cmd: 0.0, throttle_cmd: 0.5 },
            };
            n_all
        ];
        Ok(EpisodeDriver {
            arena,
            cfg,
            controllers: [blue, red],
            roles,
            ctx,
            rng: SeedTree::new(seed).rng("driver", &[]),
            agent_step: 0,
            epoch_base,
            record_team,
            last_tx: vec![None; n_all],
        })
    }

    fn team_index(team: Team) -> usize {
        match team {
            Team::Blue => 0,
            Team::Red => 1,
        }
    }

    fn controller(&self, team: Team) -> TeamController<'a> {
        self.controllers[Self::team_index(team)]
    }

    fn current_epoch(&self) -> usize {
        self.epoch_base + self.agent_step / self.cfg.hierarchy.selector_epoch
    }

    /// Leader one-hot for a follower when the algorithm conditions on it.
    fn follower_onehot(&self, id: usize, bundle: &PolicyBundle) -> Option<[f64; 3]> {
        if !bundle.uses_leader_onehot() {
            return None;
        }
        let team_idx = Self::team_index(self.arena.team_of(id));
        let leader = self.roles[team_idx].leader_of(id)?;
        if leader == id {
            return None;
        }
        Some(self.ctx[leader].subpolicy.one_hot())
    }

    /// Observation for one learned agent under the bundle's layout.
    fn agent_obs(&self, id: usize, bundle: &PolicyBundle) -> Vec<f64> {
        let team_idx = Self::team_index(self.arena.team_of(id));
        let onehot = match self.roles[team_idx].role_of(id) {
            Role::Leader => None,
            Role::Follower => self.follower_onehot(id, bundle),
        };
        arena::observe(&self.arena, id, onehot, self.cfg)
    }

    fn epoch_boundary(&mut self, out: &mut [Transition]) -> Result<()> {
        // The boundary state bootstraps the previous epoch's transitions.
        // Built before promotions and re-targeting so the observation layout
        // matches the role the agent had while collecting that epoch.
        if let Some(record_team) = self.record_team {
            if let TeamController::Learned { bundle, .. } = self.controller(record_team) {
                for id in self.arena.team_ids(record_team) {
                    if let Some(tx) = self.last_tx[id] {
                        if !out[tx].done && out[tx].next_obs.is_none() {
                            let obs = self.agent_obs(id, bundle);
                            out[tx].next_obs = Some(obs.clone());
                            out[tx].next_macro_obs = Some(obs);
                        }
                    }
                }
            }
        }

        // Promotions, then sync the arena's role bookkeeping.
        for team in [Team::Blue, Team::Red] {
            let idx = Self::team_index(team);
            let arena_ref = &self.arena;
            self.roles[idx].refresh_promotions(|id| arena_ref.uavs[id].state.alive);
            for id in self.arena.team_ids(team) {
                self.arena.uavs[id].role = self.roles[idx].role_of(id);
            }
        }

        // Re-score targets for every living aircraft.
        let weights = ThreatWeights::from_config(&self.cfg.targeting);
        let mut new_targets = self.arena.targets.clone();
        for id in 0..self.arena.uavs.len() {
            if !self.arena.alive(id) {
                new_targets[id] = None;
                continue;
            }
            let enemy_ids = self.arena.alive_enemies(id);
            let enemies: Vec<&arena::UavRecord> =
                enemy_ids.iter().map(|&e| &self.arena.uavs[e]).collect();
            new_targets[id] = targeting::select_target(
                &self.arena.uavs[id].state,
                &enemies,
                &weights,
                &self.cfg.targeting,
            );
        }
        self.arena.targets = new_targets;

        // Sub-policy selection: leaders decide before followers so follower
        // observations carry the fresh leader action.
        for team in [Team::Blue, Team::Red] {
            let bundle = match self.controller(team) {
                TeamController::Learned { bundle, .. } => bundle,
                TeamController::Scripted(_) => continue,
            };
            let deterministic = match self.controller(team) {
                TeamController::Learned { deterministic, .. } => deterministic,
                TeamController::Scripted(_) => false,
            };
            let team_idx = Self::team_index(team);
            let mut ordered: Vec<usize> = self
                .arena
                .team_ids(team)
                .into_iter()
                .filter(|&id| self.arena.alive(id))
                .collect();
            ordered.sort_by_key(|&id| (self.roles[team_idx].role_of(id) == Role::Follower, id));
            for id in ordered {
                let role = self.roles[team_idx].role_of(id);
                let macro_obs = self.agent_obs(id, bundle);
                let (sp, lp) = select_subpolicy(
                    &bundle.nets(role).selector,
                    &macro_obs,
                    &mut self.rng,
                    deterministic,
                )?;
                self.ctx[id].subpolicy = sp;
                self.ctx[id].selector_log_prob = lp;
            }
        }

        Ok(())
    }

    /// Sub-policy training reward for one decision: the curriculum mix for
    /// the active maneuver plus shared event credit.
    fn curriculum_reward(
        &self,
        subpolicy: SubPolicyId,
        comp: &RewardComponents,
        alive_after: bool,
    ) -> f64 {
        let cur = &self.cfg.train.curriculum;
        let (wp, wd, survival) = match subpolicy {
            SubPolicyId::Approach => (cur.approach_posture_w, cur.approach_distance_w, 0.0),
            SubPolicyId::Offensive => (cur.offensive_posture_w, cur.offensive_distance_w, 0.0),
            SubPolicyId::Defensive => (
                cur.defensive_posture_w,
                cur.defensive_distance_w,
                if alive_after { cur.defensive_survival_bonus } else { 0.0 },
            ),
        };
        wp * comp.posture + wd * comp.distance + comp.event + survival
    }

    /// Run one agent decision for every living aircraft: selector epoch
    /// bookkeeping when due, middle-level commands, then `agent_decimation`
    /// physics steps under the PD controller.
    pub fn agent_step(&mut self, out: &mut Vec<Transition>) -> Result<AgentStepSummary> {
        if self.arena.done {
            return Err(CoreError::protocol("agent_step on a finished episode"));
        }
        let epoch_start = self.agent_step % self.cfg.hierarchy.selector_epoch == 0;
        if epoch_start {
            self.epoch_boundary(out)?;
        }

        let n_all = self.arena.uavs.len();
        let acted: Vec<bool> = (0..n_all).map(|id| self.arena.alive(id)).collect();

        // Middle level: refresh each living agent's desired attitude and
        // capture what training needs before the world moves.
        struct Pending {
            id: usize,
            obs: Vec<f64>,
            raw: [f64; 3],
            log_prob: f64,
            value_mid: f64,
            value_sel: f64,
            role: Role,
            subpolicy: SubPolicyId,
            leader_action: Option<SubPolicyId>,
        }
        let mut pending: Vec<Pending> = Vec::new();

        for id in 0..n_all {
            if !acted[id] {
                continue;
            }
            let team = self.arena.team_of(id);
            let team_idx = Self::team_index(team);
            match self.controller(team) {
                TeamController::Scripted(kind) => {
                    self.ctx[id].desired = scripted_desired(kind, id, &self.arena, self.cfg);
                }
                TeamController::Learned { bundle, deterministic } => {
                    let role = self.roles[team_idx].role_of(id);
                    let obs = self.agent_obs(id, bundle);
                    let canon_state = canonicalize(&self.arena.uavs[id].state, team);
                    let nets = bundle.nets(role);
                    let sp = self.ctx[id].subpolicy;
                    let decision = subpolicy_act(
                        &nets.subpolicies[sp.index()],
                        &obs,
                        &canon_state,
                        role,
                        &self.cfg.hierarchy,
                        &mut self.rng,
                        deterministic,
                    )?;
                    self.ctx[id].desired = match team {
                        Team::Blue => decision.desired,
                        Team::Red => decision.desired.reflect_y(),
                    };
                    if self.record_team == Some(team) {
                        let value_mid = nets.subpolicy_critics[sp.index()].infer(&obs)?[0];
                        let value_sel = nets.selector_critic.infer(&obs)?[0];
                        let leader_action = match role {
                            Role::Follower if bundle.uses_leader_onehot() => self.roles
                                [team_idx]
                                .leader_of(id)
                                .map(|l| self.ctx[l].subpolicy),
                            _ => None,
                        };
                        pending.push(Pending {
                            id,
                            obs,
                            raw: decision.raw,
                            log_prob: decision.log_prob,
                            value_mid,
                            value_sel,
                            role,
                            subpolicy: sp,
                            leader_action,
                        });
                    }
                }
            }
        }

        // Bottom level at the physics rate.
        let mut env_rewards = vec![0.0; n_all];
        let mut comp_acc = vec![RewardComponents::default(); n_all];
        let mut done = false;
        for _ in 0..self.cfg.hierarchy.agent_decimation {
            let controls: Vec<Option<ControlInput>> = (0..n_all)
                .map(|id| {
                    if self.arena.alive(id) {
                        Some(low_level_control(
                            &self.arena.uavs[id].state,
                            &self.ctx[id].desired,
                            &self.cfg.controller.gains,
                        ))
                    } else {
                        None
                    }
                })
                .collect();
            let step_out = arena::step(&mut self.arena, &controls, self.cfg)?;
            for id in 0..n_all {
                env_rewards[id] += step_out.rewards[id];
                comp_acc[id].posture += step_out.components[id].posture;
                comp_acc[id].distance += step_out.components[id].distance;
                comp_acc[id].event += step_out.components[id].event;
            }
            if step_out.done {
                done = true;
                break;
            }
        }

        let epoch = self.current_epoch();
        for p in pending {
            let alive_after = self.arena.alive(p.id);
            let reward_mid = self.curriculum_reward(p.subpolicy, &comp_acc[p.id], alive_after);
            let tx = Transition {
                arena: 0,
                agent: p.id,
                step: self.agent_step,
                epoch,
                epoch_start,
                role: p.role,
                subpolicy: p.subpolicy,
                macro_obs: p.obs.clone(),
                obs: p.obs,
                raw_action: p.raw,
                action_log_prob: p.log_prob,
                selector_log_prob: if epoch_start {
                    Some(self.ctx[p.id].selector_log_prob)
                } else {
                    None
                },
                leader_action: p.leader_action,
                reward: env_rewards[p.id],
                reward_mid,
                value_mid: p.value_mid,
                value_sel: p.value_sel,
                done: !alive_after || done,
                next_obs: None,
                next_macro_obs: None,
            };
            self.last_tx[p.id] = Some(out.len());
            out.push(tx);
        }

        self.agent_step += 1;
        Ok(AgentStepSummary { done, env_rewards, acted })
    }

    /// Fill bootstrap observations for agents whose streams were truncated
    /// by the end of the collection window.
    pub fn finalize(&mut self, out: &mut [Transition]) {
        let record_team = match self.record_team {
            Some(t) => t,
            None => return,
        };
        let bundle = match self.controller(record_team) {
            TeamController::Learned { bundle, .. } => bundle,
            TeamController::Scripted(_) => return,
        };
        for id in self.arena.team_ids(record_team) {
            if let Some(tx) = self.last_tx[id] {
                if !out[tx].done && out[tx].next_obs.is_none() {
                    let obs = self.agent_obs(id, bundle);
                    out[tx].next_obs = Some(obs.clone());
                    out[tx].next_macro_obs = Some(obs);
                }
            }
        }
    }

    pub fn epochs_consumed(&self) -> usize {
        self.current_epoch() + 1
    }
}

/// Controller for the configured training opponent.
pub fn opponent_controller<'a>(
    spec: OpponentSpec,
    bundle: &'a PolicyBundle,
) -> TeamController<'a> {
    match spec {
        OpponentSpec::Scripted(kind) => TeamController::Scripted(kind),
        OpponentSpec::Mirror => TeamController::Learned { bundle, deterministic: false },
    }
}

/// Collect up to the configured number of transitions across parallel
/// arenas against the training opponent. Deterministic for fixed seeds:
/// every arena derives its own stream and results merge in arena order.
pub fn collect_rollouts(
    bundle: &PolicyBundle,
    cfg: &RunConfig,
    seeds: &SeedTree,
    iteration: u64,
) -> Result<RolloutBuffer> {
    let opponent = crate::config::parse_opponent(&cfg.train.opponent)?;
    let per_arena: Vec<Result<Vec<Transition>>> = (0..cfg.train.arenas)
        .into_par_iter()
        .map(|arena_idx| {
            let mut out: Vec<Transition> = Vec::new();
            let mut resets = 0u64;
            let mut epoch_base = 0usize;
            let mut driver = EpisodeDriver::new(
                cfg,
                seeds.derive("rollout", &[iteration, arena_idx as u64, resets]),
                TeamController::Learned { bundle, deterministic: false },
                opponent_controller(opponent, bundle),
                false,
                Some(Team::Blue),
                epoch_base,
            )?;
            for _ in 0..cfg.train.steps_per_arena {
                let summary = driver.agent_step(&mut out)?;
                if summary.done {
                    epoch_base = driver.epochs_consumed();
                    resets += 1;
                    driver = EpisodeDriver::new(
                        cfg,
                        seeds.derive("rollout", &[iteration, arena_idx as u64, resets]),
                        TeamController::Learned { bundle, deterministic: false },
                        opponent_controller(opponent, bundle),
                        false,
                        Some(Team::Blue),
                        epoch_base,
                    )?;
                }
            }
            driver.finalize(&mut out);
            Ok(out)
        })
        .collect();

    let mut buffer = RolloutBuffer::new(cfg.train.buffer_capacity);
    for (arena_idx, res) in per_arena.into_iter().enumerate() {
        for mut t in res? {
            t.arena = arena_idx;
            buffer.push(t);
        }
    }
    Ok(buffer)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::Algo;

    fn cfg_2v2() -> RunConfig {
        let mut cfg = RunConfig::default();
        cfg.arena.team_size = 2;
        cfg.arena.group_size = 2;
        cfg.net.hidden = vec![8, 8];
        cfg.train.arenas = 2;
        cfg.train.steps_per_arena = 25;
        cfg
    }

    #[test]
    fn collection_counts_transitions() {
        // Two arenas, 25 decisions each, two recorded agents per arena.
        let cfg = cfg_2v2();
        let seeds = SeedTree::new(7);
        let bundle = PolicyBundle::init(&cfg, &seeds);
        let buf = collect_rollouts(&bundle, &cfg, &seeds, 0).unwrap();
        assert_eq!(buf.len(), 2 * 25 * 2);
    }

    #[test]
    fn six_v_six_collects_per_team_transitions() {
        let mut cfg = RunConfig::default();
        cfg.net.hidden = vec![8, 8];
        cfg.train.arenas = 2;
        cfg.train.steps_per_arena = 50;
        let seeds = SeedTree::new(11);
        let bundle = PolicyBundle::init(&cfg, &seeds);
        let buf = collect_rollouts(&bundle, &cfg, &seeds, 0).unwrap();
        assert_eq!(buf.len(), 2 * 50 * 6);
    }

    #[test]
    fn collection_is_deterministic() {
        let cfg = cfg_2v2();
        let seeds = SeedTree::new(13);
        let bundle = PolicyBundle::init(&cfg, &seeds);
        let a = collect_rollouts(&bundle, &cfg, &seeds, 3).unwrap();
        let b = collect_rollouts(&bundle, &cfg, &seeds, 3).unwrap();
        assert_eq!(a.len(), b.len());
        for (x, y) in a.transitions().iter().zip(b.transitions().iter()) {
            assert_eq!(x, y);
        }
    }

    #[test]
    fn epoch_discipline_and_markers() {
        let cfg = cfg_2v2();
        let seeds = SeedTree::new(17);
        let bundle = PolicyBundle::init(&cfg, &seeds);
        let buf = collect_rollouts(&bundle, &cfg, &seeds, 1).unwrap();
        let k = cfg.hierarchy.selector_epoch;
        for t in buf.transitions() {
            assert_eq!(t.epoch_start, t.step % k == 0);
            assert_eq!(t.selector_log_prob.is_some(), t.epoch_start);
            // Sub-policy changes only at epoch boundaries: within an epoch
            // the tag is constant per agent.
            assert_eq!(t.epoch, t.step / k);
        }
        for agent in [0usize, 1] {
            for arena_idx in 0..cfg.train.arenas {
                let stream: Vec<&Transition> = buf
                    .transitions()
                    .iter()
                    .filter(|t| t.agent == agent && t.arena == arena_idx)
                    .collect();
                for w in stream.windows(2) {
                    if w[0].epoch == w[1].epoch {
                        assert_eq!(w[0].subpolicy, w[1].subpolicy);
                    }
                }
            }
        }
    }

    #[test]
    fn follower_transitions_carry_leader_tags() {
        let cfg = cfg_2v2();
        let seeds = SeedTree::new(19);
        let bundle = PolicyBundle::init(&cfg, &seeds);
        let buf = collect_rollouts(&bundle, &cfg, &seeds, 2).unwrap();
        let mut saw_follower = false;
        for t in buf.transitions() {
            match t.role {
                Role::Leader => assert!(t.leader_action.is_none()),
                Role::Follower => {
                    saw_follower = true;
                    assert_eq!(t.obs.len(), bundle.obs_dim_follower);
                    // The trailing one-hot block is the leader's choice for
                    // this exact epoch, with zero lag.
                    let tag = t.leader_action.expect("follower carries a leader tag");
                    let block = &t.obs[t.obs.len() - 3..];
                    assert_eq!(block, tag.one_hot());
                }
            }
        }
        assert!(saw_follower);
    }

    #[test]
    fn pooled_algo_uses_uniform_obs() {
        let mut cfg = cfg_2v2();
        cfg.train.algo = Algo::Mappo;
        let seeds = SeedTree::new(23);
        let bundle = PolicyBundle::init(&cfg, &seeds);
        let buf = collect_rollouts(&bundle, &cfg, &seeds, 0).unwrap();
        for t in buf.transitions() {
            assert_eq!(t.obs.len(), bundle.obs_dim_leader);
            assert!(t.leader_action.is_none());
        }
    }

    #[test]
    fn segment_bootstraps_present() {
        let cfg = cfg_2v2();
        let seeds = SeedTree::new(29);
        let bundle = PolicyBundle::init(&cfg, &seeds);
        let buf = collect_rollouts(&bundle, &cfg, &seeds, 4).unwrap();
        // Group per (arena, agent); every segment-final transition that did
        // not terminate must carry a bootstrap observation.
        for arena_idx in 0..cfg.train.arenas {
            for agent in 0..2 {
                let stream: Vec<&Transition> = buf
                    .transitions()
                    .iter()
                    .filter(|t| t.arena == arena_idx && t.agent == agent)
                    .collect();
                for (i, t) in stream.iter().enumerate() {
                    let segment_end = i + 1 == stream.len()
                        || stream[i + 1].epoch != t.epoch
                        || stream[i + 1].epoch_start;
                    if segment_end && !t.done {
                        assert!(t.next_obs.is_some(), "missing bootstrap at step {}", t.step);
                        assert!(t.next_macro_obs.is_some());
                    }
                }
            }
        }
    }
}
