//! Trainable parameter bundles: per-role selector, selector critic, and the
//! three maneuver sub-policies with their critics, plus optimizer state.

use serde::{Deserialize, Serialize};

use crate::arena::{self, Role};
use crate::config::{Algo, RunConfig};
use crate::error::CoreError;
use crate::hrl::{GaussianPolicy, SubPolicyId};
use crate::neuralcore::{AdamState, Mlp};
use crate::rng::SeedTree;
use crate::Result;

/// Networks for one role slot.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoleNets {
    pub selector: Mlp,
    pub selector_critic: Mlp,
    pub subpolicies: Vec<GaussianPolicy>,
    pub subpolicy_critics: Vec<Mlp>,
}

impl RoleNets {
    fn init(obs_dim: usize, macro_dim: usize, hidden: &[usize], log_std_init: f64, rng_tree: &SeedTree, slot: u64) -> Self {
        let chain = |input: usize, output: usize| -> Vec<usize> {
            let mut dims = vec![input];
            dims.extend_from_slice(hidden);
            dims.push(output);
            dims
        };
        let mut net_idx = 0u64;
        let mut next_rng = || {
            net_idx += 1;
            rng_tree.rng("init-net", &[slot, net_idx])
        };
        RoleNets {
            selector: Mlp::init(&chain(macro_dim, SubPolicyId::COUNT), &mut next_rng(), 0.01),
            selector_critic: Mlp::init(&chain(macro_dim, 1), &mut next_rng(), 1.0),
            subpolicies: (0..SubPolicyId::COUNT)
                .map(|_| GaussianPolicy::init(&chain(obs_dim, 3), &mut next_rng(), log_std_init))
                .collect(),
            subpolicy_critics: (0..SubPolicyId::COUNT)
                .map(|_| Mlp::init(&chain(obs_dim, 1), &mut next_rng(), 1.0))
                .collect(),
        }
    }

    pub fn is_finite(&self) -> bool {
        self.selector.is_finite()
            && self.selector_critic.is_finite()
            && self.subpolicies.iter().all(|p| {
                p.mean.is_finite() && p.log_std.iter().all(|x| x.is_finite())
            })
            && self.subpolicy_critics.iter().all(|c| c.is_finite())
    }
}

/// Adam state mirroring one `RoleNets`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoleOpt {
    pub selector: AdamState,
    pub selector_critic: AdamState,
    pub subpolicy_means: Vec<AdamState>,
    pub subpolicy_log_stds: Vec<AdamState>,
    pub subpolicy_critics: Vec<AdamState>,
}

impl RoleOpt {
    pub fn for_nets(nets: &RoleNets) -> Self {
        RoleOpt {
            selector: AdamState::for_mlp(&nets.selector),
            selector_critic: AdamState::for_mlp(&nets.selector_critic),
            subpolicy_means: nets.subpolicies.iter().map(|p| AdamState::for_mlp(&p.mean)).collect(),
            subpolicy_log_stds: nets
                .subpolicies
                .iter()
                .map(|p| AdamState::new(p.log_std.len()))
                .collect(),
            subpolicy_critics: nets.subpolicy_critics.iter().map(AdamState::for_mlp).collect(),
        }
    }
}

/// Complete policy: role slots plus the observation layout they expect.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolicyBundle {
    pub algo: Algo,
    /// `[leader, follower]` for role-split algorithms, one shared slot for
    /// the pooled baseline.
    pub roles: Vec<RoleNets>,
    pub obs_dim_leader: usize,
    pub obs_dim_follower: usize,
}

/// Optimizer state mirroring a `PolicyBundle`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptBundle {
    pub roles: Vec<RoleOpt>,
}

impl PolicyBundle {
    pub fn init(cfg: &RunConfig, seeds: &SeedTree) -> Self {
        let algo = cfg.train.algo;
        let onehot = algo == Algo::Lfmappo;
        let obs_dim_leader = arena::obs_dim(cfg, false);
        let obs_dim_follower = arena::obs_dim(cfg, onehot);
        let hidden = &cfg.net.hidden;
        let ls = cfg.net.log_std_init;
        let roles = match algo {
            Algo::Lfmappo | Algo::Ippo => vec![
                RoleNets::init(obs_dim_leader, obs_dim_leader, hidden, ls, seeds, 0),
                RoleNets::init(obs_dim_follower, obs_dim_follower, hidden, ls, seeds, 1),
            ],
            Algo::Mappo => {
                vec![RoleNets::init(obs_dim_leader, obs_dim_leader, hidden, ls, seeds, 0)]
            }
        };
        PolicyBundle { algo, roles, obs_dim_leader, obs_dim_follower }
    }

    /// Whether follower observations end with the leader-action one-hot.
    pub fn uses_leader_onehot(&self) -> bool {
        self.algo == Algo::Lfmappo
    }

    /// Index of the role slot serving the given role.
    pub fn role_slot(&self, role: Role) -> usize {
        match self.algo {
            Algo::Mappo => 0,
            Algo::Lfmappo | Algo::Ippo => match role {
                Role::Leader => 0,
                Role::Follower => 1,
            },
        }
    }

    pub fn nets(&self, role: Role) -> &RoleNets {
        &self.roles[self.role_slot(role)]
    }

    pub fn obs_dim(&self, role: Role) -> usize {
        match role {
            Role::Leader => self.obs_dim_leader,
            Role::Follower => {
                if self.uses_leader_onehot() {
                    self.obs_dim_follower
                } else {
                    self.obs_dim_leader
                }
            }
        }
    }

    pub fn is_finite(&self) -> bool {
        self.roles.iter().all(|r| r.is_finite())
    }

    /// Swap the trailing leader-action one-hot block of a follower macro
    /// observation for a candidate action.
    pub fn substitute_leader_action(
        &self,
        follower_macro_obs: &[f64],
        candidate: SubPolicyId,
    ) -> Result<Vec<f64>> {
        if !self.uses_leader_onehot() {
            return Err(CoreError::protocol(
                "leader-action substitution only applies to the role-split algorithm",
            ));
        }
        if follower_macro_obs.len() < 3 {
            return Err(CoreError::shape("macro observation shorter than one-hot block"));
        }
        let mut obs = follower_macro_obs.to_vec();
        let base = obs.len() - 3;
        obs[base..].copy_from_slice(&candidate.one_hot());
        Ok(obs)
    }

    /// Follower selector-critic values at a next state for every candidate
    /// leader action, in sub-policy index order.
    pub fn follower_candidate_values(&self, next_macro_obs: &[f64]) -> Result<Vec<f64>> {
        let critic = &self.nets(Role::Follower).selector_critic;
        let mut out = Vec::with_capacity(SubPolicyId::COUNT);
        for candidate in SubPolicyId::ALL {
            let obs = self.substitute_leader_action(next_macro_obs, candidate)?;
            out.push(critic.infer(&obs)?[0]);
        }
        Ok(out)
    }
}

impl OptBundle {
    pub fn for_bundle(bundle: &PolicyBundle) -> Self {
        OptBundle { roles: bundle.roles.iter().map(RoleOpt::for_nets).collect() }
    }
}
