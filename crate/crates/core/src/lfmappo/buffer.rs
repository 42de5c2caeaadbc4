//! Experience storage for one training iteration.

use serde::{Deserialize, Serialize};

use crate::arena::Role;
use crate::hrl::SubPolicyId;

/// One agent decision step of experience.
///
/// Selector-epoch boundaries are marked on the transition that opens the
/// epoch; the selector-level stream is reconstructed from those markers at
/// training time. Followers carry the leader action that was current when
/// they acted.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Transition {
    pub arena: usize,
    /// Global aircraft id.
    pub agent: usize,
    /// Agent-step index within the collection window.
    pub step: usize,
    /// Selector epoch index within the collection window.
    pub epoch: usize,
    pub epoch_start: bool,
    pub role: Role,
    pub subpolicy: SubPolicyId,
    pub obs: Vec<f64>,
    pub macro_obs: Vec<f64>,
    /// Pre-squash continuous action.
    pub raw_action: [f64; 3],
    /// Log density of the squashed continuous action.
    pub action_log_prob: f64,
    /// Log probability of the selector choice; present on epoch starts.
    pub selector_log_prob: Option<f64>,
    /// The group leader's current sub-policy; followers only.
    pub leader_action: Option<SubPolicyId>,
    /// Environment reward over the decision (drives the selector level).
    pub reward: f64,
    /// Sub-policy curriculum reward over the decision (drives the middle
    /// level).
    pub reward_mid: f64,
    /// Active sub-policy critic value at `obs`.
    pub value_mid: f64,
    /// Selector critic value at `macro_obs`.
    pub value_sel: f64,
    pub done: bool,
    /// First observation after this transition, present on segment-final
    /// transitions that did not terminate (bootstrap input).
    pub next_obs: Option<Vec<f64>>,
    pub next_macro_obs: Option<Vec<f64>>,
}

/// Capacity-bounded transition store, cleared after every update.
#[derive(Debug, Clone, Default)]
pub struct RolloutBuffer {
    capacity: usize,
    transitions: Vec<Transition>,
    /// Times the buffer overflowed and dropped its earliest epoch.
    pub truncation_warnings: u64,
}

impl RolloutBuffer {
    pub fn new(capacity: usize) -> Self {
        RolloutBuffer { capacity, transitions: Vec::new(), truncation_warnings: 0 }
    }

    pub fn len(&self) -> usize {
        self.transitions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.transitions.is_empty()
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn transitions(&self) -> &[Transition] {
        &self.transitions
    }

    /// Append a transition, evicting the earliest epoch when full.
    pub fn push(&mut self, t: Transition) {
        while self.transitions.len() >= self.capacity {
            self.drop_earliest_epoch();
        }
        self.transitions.push(t);
    }

    fn drop_earliest_epoch(&mut self) {
        let earliest = match self.transitions.iter().map(|t| t.epoch).min() {
            Some(e) => e,
            None => return,
        };
        let before = self.transitions.len();
        self.transitions.retain(|t| t.epoch != earliest);
        if self.transitions.len() == before {
            // Degenerate single-epoch overflow; drop the oldest transition.
            self.transitions.remove(0);
        }
        self.truncation_warnings += 1;
    }

    pub fn clear(&mut self) {
        self.transitions.clear();
    }
}
