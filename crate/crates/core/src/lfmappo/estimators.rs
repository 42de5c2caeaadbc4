//! Return, advantage and value-target estimators.

use crate::error::CoreError;
use crate::Result;

/// Discounted returns by backward recursion, truncating at episode ends:
/// `G_t = r_t + gamma * G_{t+1}` with `G` reset to zero across a done flag.
pub fn compute_returns(rewards: &[f64], dones: &[bool], gamma: f64) -> Vec<f64> {
    debug_assert_eq!(rewards.len(), dones.len());
    let mut returns = vec![0.0; rewards.len()];
    let mut acc = 0.0;
    for t in (0..rewards.len()).rev() {
        if dones[t] {
            acc = 0.0;
        }
        acc = rewards[t] + gamma * acc;
        returns[t] = acc;
    }
    returns
}

/// Generalized advantage estimation over one trajectory.
///
/// `bootstrap` is the value of the state after the final transition (zero if
/// that transition terminated). Episode ends inside the slice cut both the
/// value bootstrap and the advantage recursion.
pub fn compute_gae(
    rewards: &[f64],
    values: &[f64],
    bootstrap: f64,
    dones: &[bool],
    gamma: f64,
    lambda: f64,
) -> Result<Vec<f64>> {
    if rewards.len() != values.len() || rewards.len() != dones.len() {
        return Err(CoreError::shape(format!(
            "gae inputs disagree: {} rewards, {} values, {} dones",
            rewards.len(),
            values.len(),
            dones.len()
        )));
    }
    let n = rewards.len();
    let mut advantages = vec![0.0; n];
    let mut acc = 0.0;
    for t in (0..n).rev() {
        let (next_value, carry) = if dones[t] {
            (0.0, 0.0)
        } else if t + 1 < n {
            (values[t + 1], acc)
        } else {
            (bootstrap, acc)
        };
        let delta = rewards[t] + gamma * next_value - values[t];
        acc = delta + gamma * lambda * carry;
        advantages[t] = acc;
    }
    Ok(advantages)
}

/// Soft leader-follower value target: mix the current estimate toward the
/// reward plus the pessimistic (minimum over the leader's candidate actions)
/// discounted next-state value. Terminal transitions bootstrap zero.
pub fn lf_value_target(
    v_now: f64,
    reward: f64,
    next_values_per_leader_action: &[f64],
    gamma: f64,
    lf_alpha: f64,
    done: bool,
) -> Result<f64> {
    if next_values_per_leader_action.is_empty() {
        return Err(CoreError::protocol("leader-follower target needs candidate actions"));
    }
    let worst = next_values_per_leader_action.iter().cloned().fold(f64::INFINITY, f64::min);
    let backup = if done { reward } else { reward + gamma * worst };
    Ok((1.0 - lf_alpha) * v_now + lf_alpha * backup)
}

/// Exact max-min over a rectangular payoff table indexed
/// `[follower_action][leader_action]`; ties break to the lowest row.
pub fn maxmin_solve(table: &[Vec<f64>]) -> Result<(f64, usize)> {
    if table.is_empty() || table[0].is_empty() {
        return Err(CoreError::shape("empty payoff table"));
    }
    let cols = table[0].len();
    if table.iter().any(|row| row.len() != cols) {
        return Err(CoreError::shape("ragged payoff table"));
    }
    let mut best_value = f64::NEG_INFINITY;
    let mut best_row = 0usize;
    for (f, row) in table.iter().enumerate() {
        let row_min = row.iter().cloned().fold(f64::INFINITY, f64::min);
        if row_min > best_value {
            best_value = row_min;
            best_row = f;
        }
    }
    Ok((best_value, best_row))
}
