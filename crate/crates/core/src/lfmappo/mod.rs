//! Leader-follower multi-agent policy optimization.
//!
//! One iteration collects rollouts from parallel arenas over an immutable
//! parameter snapshot, estimates advantages per stream (each sub-policy and
//! each selector separately), then runs clipped-surrogate updates with an
//! entropy bonus. Leader and pooled critics regress on bootstrapped returns;
//! follower selector-critics regress on the pessimistic leader-follower
//! target that backs up the minimum next-state value over the leader's
//! candidate actions.

pub mod buffer;
pub mod estimators;
pub mod params;
pub mod rollout;

pub use buffer::{RolloutBuffer, Transition};
pub use estimators::{compute_gae, compute_returns, lf_value_target, maxmin_solve};
pub use params::{OptBundle, PolicyBundle, RoleNets, RoleOpt};
pub use rollout::{collect_rollouts, EpisodeDriver, TeamController};

use std::collections::BTreeMap;

use rand::seq::SliceRandom;

use crate::arena::Role;
use crate::config::{Algo, RunConfig};
use crate::error::CoreError;
use crate::hrl::SubPolicyId;
use crate::neuralcore::{
    adam::adam_update_vec, adam_update, categorical_entropy, clip_grad_norm, gaussian_log_prob,
    log_softmax, softmax, tanh_squash_correction, AdamParams, MlpGrads,
};
use crate::rng::SeedTree;
use crate::Result;

/// Mean squared error between value predictions and regression targets.
pub fn critic_loss(predicted: &[f64], targets: &[f64]) -> f64 {
    debug_assert_eq!(predicted.len(), targets.len());
    if predicted.is_empty() {
        return 0.0;
    }
    let n = predicted.len() as f64;
    predicted.iter().zip(targets.iter()).map(|(p, t)| (p - t) * (p - t)).sum::<f64>() / n
}

/// Pessimistic clipped surrogate for one sample.
pub fn clipped_surrogate(ratio: f64, advantage: f64, clip_epsilon: f64) -> f64 {
    let clipped = ratio.clamp(1.0 - clip_epsilon, 1.0 + clip_epsilon) * advantage;
    (ratio * advantage).min(clipped)
}

/// Mean clipped surrogate over a batch; the trainer maximizes this (i.e.
/// minimizes its negation).
pub fn actor_loss(
    log_prob_new: &[f64],
    log_prob_old: &[f64],
    advantages: &[f64],
    clip_epsilon: f64,
) -> f64 {
    debug_assert_eq!(log_prob_new.len(), log_prob_old.len());
    debug_assert_eq!(log_prob_new.len(), advantages.len());
    if log_prob_new.is_empty() {
        return 0.0;
    }
    let n = log_prob_new.len() as f64;
    log_prob_new
        .iter()
        .zip(log_prob_old.iter())
        .zip(advantages.iter())
        .map(|((ln, lo), a)| clipped_surrogate((ln - lo).exp(), *a, clip_epsilon))
        .sum::<f64>()
        / n
}

/// Weights of the combined objective.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossCoefficients {
    pub critic: f64,
    pub actor: f64,
    pub entropy: f64,
}

impl Default for LossCoefficients {
    fn default() -> Self {
        LossCoefficients { critic: 0.5, actor: 1.0, entropy: 0.01 }
    }
}

/// Combined scalar objective (minimized): weighted critic error minus the
/// maximized surrogate and entropy terms.
pub fn total_loss(critic: f64, surrogate: f64, entropy: f64, coef: &LossCoefficients) -> f64 {
    coef.critic * critic - coef.actor * surrogate - coef.entropy * entropy
}

/// Per-iteration training metrics.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrainMetrics {
    pub iteration: u64,
    /// Mean environment reward per recorded agent decision.
    pub mean_return: f64,
    pub actor_loss: f64,
    pub critic_loss: f64,
    pub entropy: f64,
    pub clip_fraction: f64,
    pub transitions: usize,
    /// Whether a non-finite loss forced a rollback to the snapshot.
    pub rolled_back: bool,
    /// Pointwise clipped-surrogate min-property violations (audit mode).
    pub clip_audit_violations: u64,
}

struct MidSample {
    obs: Vec<f64>,
    raw: [f64; 3],
    logp_old: f64,
    advantage: f64,
    target: f64,
}

struct SelSample {
    macro_obs: Vec<f64>,
    action: usize,
    logp_old: f64,
    advantage: f64,
    target: f64,
}

struct Accum {
    surrogate_sum: f64,
    critic_sum: f64,
    entropy_sum: f64,
    actor_samples: usize,
    critic_samples: usize,
    clipped: usize,
    audit_violations: u64,
    nonfinite: bool,
}

impl Accum {
    fn new() -> Self {
        Accum {
            surrogate_sum: 0.0,
            critic_sum: 0.0,
            entropy_sum: 0.0,
            actor_samples: 0,
            critic_samples: 0,
            clipped: 0,
            audit_violations: 0,
            nonfinite: false,
        }
    }
}

/// One optimization pass over a collected buffer. Computes advantages and
/// value targets per stream, then runs minibatch epochs on every actor and
/// critic; the buffer is cleared afterwards. A non-finite loss anywhere
/// aborts the iteration and rolls parameters back to the entry snapshot.
pub fn train_iteration(
    bundle: &mut PolicyBundle,
    opt: &mut OptBundle,
    buf: &mut RolloutBuffer,
    cfg: &RunConfig,
    seeds: &SeedTree,
    iteration: u64,
) -> Result<TrainMetrics> {
    if buf.is_empty() {
        return Err(CoreError::protocol("train_iteration on an empty buffer"));
    }
    let snapshot_bundle = bundle.clone();
    let snapshot_opt = opt.clone();

    let (mid_streams, sel_streams, mean_return) = build_streams(bundle, buf, cfg)?;

    let adam = AdamParams::with_lr(cfg.train.lr);
    let mut acc = Accum::new();
    let mut shuffle_rng = seeds.rng("train-shuffle", &[iteration]);

    'train: for _epoch in 0..cfg.train.epochs {
        for slot in 0..bundle.roles.len() {
            for sp in 0..SubPolicyId::COUNT {
                if let Some(samples) = mid_streams.get(&(slot, sp)) {
                    let ok = update_gaussian_stream(
                        bundle,
                        opt,
                        slot,
                        sp,
                        samples,
                        cfg,
                        &adam,
                        &mut shuffle_rng,
                        &mut acc,
                    )?;
                    if !ok {
                        break 'train;
                    }
                }
            }
            if let Some(samples) = sel_streams.get(&slot) {
                let ok = update_selector_stream(
                    bundle,
                    opt,
                    slot,
                    samples,
                    cfg,
                    &adam,
                    &mut shuffle_rng,
                    &mut acc,
                )?;
                if !ok {
                    break 'train;
                }
            }
        }
    }

    let rolled_back = acc.nonfinite;
    if rolled_back {
        *bundle = snapshot_bundle;
        *opt = snapshot_opt;
    }

    let transitions = buf.len();
    buf.clear();

    Ok(TrainMetrics {
        iteration,
        mean_return,
        actor_loss: if acc.actor_samples > 0 {
            -acc.surrogate_sum / acc.actor_samples as f64
        } else {
            0.0
        },
        critic_loss: if acc.critic_samples > 0 {
            acc.critic_sum / acc.critic_samples as f64
        } else {
            0.0
        },
        entropy: if acc.actor_samples > 0 {
            acc.entropy_sum / acc.actor_samples as f64
        } else {
            0.0
        },
        clip_fraction: if acc.actor_samples > 0 {
            acc.clipped as f64 / acc.actor_samples as f64
        } else {
            0.0
        },
        transitions,
        rolled_back,
        clip_audit_violations: acc.audit_violations,
    })
}

type MidStreams = BTreeMap<(usize, usize), Vec<MidSample>>;
type SelStreams = BTreeMap<usize, Vec<SelSample>>;

/// Advantage estimation per stream and the value targets for every critic.
fn build_streams(
    bundle: &PolicyBundle,
    buf: &RolloutBuffer,
    cfg: &RunConfig,
) -> Result<(MidStreams, SelStreams, f64)> {
    let gamma = cfg.train.gamma;
    let lambda = cfg.train.gae_lambda;
    let scale = cfg.train.reward_scale;

    let mut sequences: BTreeMap<(usize, usize), Vec<&Transition>> = BTreeMap::new();
    let mut reward_sum = 0.0;
    for t in buf.transitions() {
        reward_sum += t.reward;
        sequences.entry((t.arena, t.agent)).or_default().push(t);
    }
    // Reported in raw units; estimation below uses scaled rewards.
    let mean_return = reward_sum / buf.len() as f64;

    let mut mid_streams: MidStreams = BTreeMap::new();
    let mut sel_streams: SelStreams = BTreeMap::new();

    for seq in sequences.values() {
        // Middle level: one GAE pass per constant-sub-policy segment.
        let mut start = 0usize;
        while start < seq.len() {
            let mut end = start + 1;
            while end < seq.len()
                && seq[end].epoch == seq[start].epoch
                && !seq[end - 1].done
            {
                end += 1;
            }
            let segment = &seq[start..end];
            let role = segment[0].role;
            let slot = bundle.role_slot(role);
            let sp = segment[0].subpolicy.index();
            let critic = &bundle.roles[slot].subpolicy_critics[sp];

            let rewards: Vec<f64> = segment.iter().map(|t| t.reward_mid * scale).collect();
            let values: Vec<f64> = segment.iter().map(|t| t.value_mid).collect();
            let dones: Vec<bool> = segment.iter().map(|t| t.done).collect();
            let last = segment[segment.len() - 1];
            let bootstrap = if last.done {
                0.0
            } else {
                match &last.next_obs {
                    Some(obs) => critic.infer(obs)?[0],
                    None => last.value_mid,
                }
            };
            let adv = compute_gae(&rewards, &values, bootstrap, &dones, gamma, lambda)?;
            for (t, a) in segment.iter().zip(adv.iter()) {
                mid_streams.entry((slot, sp)).or_default().push(MidSample {
                    obs: t.obs.clone(),
                    raw: t.raw_action,
                    logp_old: t.action_log_prob,
                    advantage: *a,
                    target: *a + t.value_mid,
                });
            }
            start = end;
        }

        // Selector level: one sample per epoch. A leader promotion switches
        // the agent's networks, so sequences split into runs of constant
        // role, each run bootstrapping from its own tail state.
        let mut epochs: Vec<&[&Transition]> = Vec::new();
        let mut start = 0usize;
        while start < seq.len() {
            let mut end = start + 1;
            while end < seq.len() && seq[end].epoch == seq[start].epoch {
                end += 1;
            }
            epochs.push(&seq[start..end]);
            start = end;
        }
        // Partial leading epochs (evicted starts) cannot anchor a selector
        // sample.
        let epochs: Vec<&[&Transition]> = epochs
            .into_iter()
            .filter(|g| g[0].epoch_start && g[0].selector_log_prob.is_some())
            .collect();

        let mut run_start = 0usize;
        while run_start < epochs.len() {
            let role = epochs[run_start][0].role;
            let mut run_end = run_start + 1;
            while run_end < epochs.len() && epochs[run_end][0].role == role {
                run_end += 1;
            }
            let run = &epochs[run_start..run_end];
            let slot = bundle.role_slot(role);

            let rewards: Vec<f64> =
                run.iter().map(|g| g.iter().map(|t| t.reward * scale).sum()).collect();
            let values: Vec<f64> = run.iter().map(|g| g[0].value_sel).collect();
            let dones: Vec<bool> = run.iter().map(|g| g.iter().any(|t| t.done)).collect();
            let last_group = run[run.len() - 1];
            let last_tx = last_group[last_group.len() - 1];
            let tail_macro = last_tx.next_macro_obs.as_ref();
            let bootstrap = if dones[dones.len() - 1] {
                0.0
            } else {
                match tail_macro {
                    Some(obs) => bundle.roles[slot].selector_critic.infer(obs)?[0],
                    None => last_tx.value_sel,
                }
            };
            let adv = compute_gae(&rewards, &values, bootstrap, &dones, gamma, lambda)?;

            let follower_lf = cfg.train.algo == Algo::Lfmappo && role == Role::Follower;
            for (e, group) in run.iter().enumerate() {
                let target = if follower_lf {
                    // Pessimistic backup over the leader's candidate actions
                    // at the next selector state.
                    let next_macro: Option<&Vec<f64>> = if e + 1 < run.len() {
                        Some(&run[e + 1][0].macro_obs)
                    } else {
                        tail_macro
                    };
                    let candidates = match (dones[e], next_macro) {
                        (true, _) | (false, None) => vec![0.0; SubPolicyId::COUNT],
                        (false, Some(obs)) => bundle.follower_candidate_values(obs)?,
                    };
                    lf_value_target(
                        values[e],
                        rewards[e],
                        &candidates,
                        gamma,
                        cfg.train.lf_alpha,
                        dones[e],
                    )?
                } else {
                    adv[e] + values[e]
                };
                sel_streams.entry(slot).or_default().push(SelSample {
                    macro_obs: group[0].macro_obs.clone(),
                    action: group[0].subpolicy.index(),
                    logp_old: group[0].selector_log_prob.expect("filtered above"),
                    advantage: adv[e],
                    target,
                });
            }
            run_start = run_end;
        }
    }

    Ok((mid_streams, sel_streams, mean_return))
}

fn normalized_advantages(advantages: &[f64]) -> Vec<f64> {
    let n = advantages.len() as f64;
    let mean = advantages.iter().sum::<f64>() / n;
    let var = advantages.iter().map(|a| (a - mean) * (a - mean)).sum::<f64>() / n;
    let std = var.sqrt();
    advantages.iter().map(|a| (a - mean) / (std + 1e-8)).collect()
}

/// Returns false when a non-finite loss demands a rollback.
#[allow(clippy::too_many_arguments)]
fn update_gaussian_stream(
    bundle: &mut PolicyBundle,
    opt: &mut OptBundle,
    slot: usize,
    sp: usize,
    samples: &[MidSample],
    cfg: &RunConfig,
    adam: &AdamParams,
    rng: &mut rand_chacha::ChaCha8Rng,
    acc: &mut Accum,
) -> Result<bool> {
    let eps = cfg.train.clip_epsilon;
    let c_ent = cfg.train.entropy_coef;
    let c_critic = cfg.train.critic_coef;
    let mut order: Vec<usize> = (0..samples.len()).collect();
    order.shuffle(rng);

    // Entropy of a diagonal Gaussian depends only on the log-stds.
    let entropy_of = |log_std: &[f64]| -> f64 {
        log_std.iter().map(|ls| ls + 0.5 * (1.0 + (2.0 * std::f64::consts::PI).ln())).sum()
    };

    for chunk in order.chunks(cfg.train.minibatch_size) {
        let advs: Vec<f64> = chunk.iter().map(|&i| samples[i].advantage).collect();
        let norm = normalized_advantages(&advs);
        let b = chunk.len() as f64;

        let actor = &bundle.roles[slot].subpolicies[sp];
        let sigma2: Vec<f64> = actor.log_std.iter().map(|ls| (2.0 * ls).exp()).collect();
        let mut mean_grads = MlpGrads::zeros_like(&actor.mean);
        let mut logstd_grads = vec![0.0; actor.log_std.len()];
        let mut batch_surr = 0.0;

        for (k, &i) in chunk.iter().enumerate() {
            let s = &samples[i];
            let a = norm[k];
            let (mean_out, cache) = actor.mean.forward(&s.obs)?;
            let logp_new = gaussian_log_prob(&s.raw, &mean_out, &actor.log_std)
                - tanh_squash_correction(&s.raw);
            let ratio = (logp_new - s.logp_old).exp();
            let unclipped = ratio * a;
            let clipped = ratio.clamp(1.0 - eps, 1.0 + eps) * a;
            let surr = unclipped.min(clipped);
            batch_surr += surr;
            if (ratio - 1.0).abs() > eps {
                acc.clipped += 1;
            }
            if cfg.train.audit_clip
                && (surr > unclipped + 1e-12 || surr > clipped + 1e-12)
            {
                acc.audit_violations += 1;
            }

            if unclipped <= clipped {
                // Gradient flows through the unclipped branch.
                let coef = a * ratio;
                let mut upstream = vec![0.0; mean_out.len()];
                for j in 0..mean_out.len() {
                    let diff = s.raw[j] - mean_out[j];
                    upstream[j] = -(coef * diff / sigma2[j]) / b;
                    logstd_grads[j] += -(coef * (diff * diff / sigma2[j] - 1.0)) / b;
                }
                let g = actor.mean.backward(&cache, &upstream)?;
                mean_grads.add_scaled(&g, 1.0);
            }
            // Entropy bonus acts on the log-stds alone.
            for g in logstd_grads.iter_mut() {
                *g += -c_ent / b;
            }
        }

        let batch_entropy = entropy_of(&actor.log_std);
        acc.surrogate_sum += batch_surr;
        acc.entropy_sum += batch_entropy * b;
        acc.actor_samples += chunk.len();
        if !batch_surr.is_finite() {
            acc.nonfinite = true;
            return Ok(false);
        }

        clip_grad_norm(&mut mean_grads, cfg.train.grad_clip);
        let logstd_norm = logstd_grads.iter().map(|g| g * g).sum::<f64>().sqrt();
        if logstd_norm > cfg.train.grad_clip {
            let scale = cfg.train.grad_clip / logstd_norm;
            logstd_grads.iter_mut().for_each(|g| *g *= scale);
        }
        {
            let nets = &mut bundle.roles[slot];
            let opts = &mut opt.roles[slot];
            adam_update(
                &mut nets.subpolicies[sp].mean,
                &mean_grads,
                &mut opts.subpolicy_means[sp],
                adam,
            )?;
            adam_update_vec(
                &mut nets.subpolicies[sp].log_std,
                &logstd_grads,
                &mut opts.subpolicy_log_stds[sp],
                adam,
            )?;
        }

        // Critic regression on the same minibatch.
        let mut critic_grads = MlpGrads::zeros_like(&bundle.roles[slot].subpolicy_critics[sp]);
        let mut batch_mse = 0.0;
        for &i in chunk.iter() {
            let s = &samples[i];
            let critic = &bundle.roles[slot].subpolicy_critics[sp];
            let (v, cache) = critic.forward(&s.obs)?;
            let err = v[0] - s.target;
            batch_mse += err * err;
            let g = critic.backward(&cache, &[c_critic * 2.0 * err / b])?;
            critic_grads.add_scaled(&g, 1.0);
        }
        acc.critic_sum += batch_mse;
        acc.critic_samples += chunk.len();
        if !batch_mse.is_finite() {
            acc.nonfinite = true;
            return Ok(false);
        }
        clip_grad_norm(&mut critic_grads, cfg.train.grad_clip);
        adam_update(
            &mut bundle.roles[slot].subpolicy_critics[sp],
            &critic_grads,
            &mut opt.roles[slot].subpolicy_critics[sp],
            adam,
        )?;
    }
    Ok(true)
}

#[allow(clippy::too_many_arguments)]
fn update_selector_stream(
    bundle: &mut PolicyBundle,
    opt: &mut OptBundle,
    slot: usize,
    samples: &[SelSample],
    cfg: &RunConfig,
    adam: &AdamParams,
    rng: &mut rand_chacha::ChaCha8Rng,
    acc: &mut Accum,
) -> Result<bool> {
    let eps = cfg.train.clip_epsilon;
    let c_ent = cfg.train.entropy_coef;
    let c_critic = cfg.train.critic_coef;
    let mut order: Vec<usize> = (0..samples.len()).collect();
    order.shuffle(rng);

    for chunk in order.chunks(cfg.train.minibatch_size) {
        let advs: Vec<f64> = chunk.iter().map(|&i| samples[i].advantage).collect();
        let norm = normalized_advantages(&advs);
        let b = chunk.len() as f64;

        let selector = &bundle.roles[slot].selector;
        let mut grads = MlpGrads::zeros_like(selector);
        let mut batch_surr = 0.0;
        let mut batch_entropy = 0.0;

        for (k, &i) in chunk.iter().enumerate() {
            let s = &samples[i];
            let a = norm[k];
            let (logits, cache) = selector.forward(&s.macro_obs)?;
            let logps = log_softmax(&logits);
            let probs = softmax(&logits);
            let logp_new = logps[s.action];
            let ratio = (logp_new - s.logp_old).exp();
            let unclipped = ratio * a;
            let clipped = ratio.clamp(1.0 - eps, 1.0 + eps) * a;
            let surr = unclipped.min(clipped);
            batch_surr += surr;
            if (ratio - 1.0).abs() > eps {
                acc.clipped += 1;
            }
            if cfg.train.audit_clip
                && (surr > unclipped + 1e-12 || surr > clipped + 1e-12)
            {
                acc.audit_violations += 1;
            }

            let entropy = categorical_entropy(&logits);
            batch_entropy += entropy;

            let mut upstream = vec![0.0; logits.len()];
            if unclipped <= clipped {
                let coef = a * ratio;
                for j in 0..logits.len() {
                    let indicator = if j == s.action { 1.0 } else { 0.0 };
                    upstream[j] += -(coef * (indicator - probs[j])) / b;
                }
            }
            // Entropy gradient: dH/dz_j = -p_j (log p_j + H).
            for j in 0..logits.len() {
                let dh = -probs[j] * (logps[j] + entropy);
                upstream[j] += -(c_ent * dh) / b;
            }
            let g = selector.backward(&cache, &upstream)?;
            grads.add_scaled(&g, 1.0);
        }

        acc.surrogate_sum += batch_surr;
        acc.entropy_sum += batch_entropy;
        acc.actor_samples += chunk.len();
        if !batch_surr.is_finite() || !batch_entropy.is_finite() {
            acc.nonfinite = true;
            return Ok(false);
        }
        clip_grad_norm(&mut grads, cfg.train.grad_clip);
        adam_update(
            &mut bundle.roles[slot].selector,
            &grads,
            &mut opt.roles[slot].selector,
            adam,
        )?;

        let mut critic_grads = MlpGrads::zeros_like(&bundle.roles[slot].selector_critic);
        let mut batch_mse = 0.0;
        for &i in chunk.iter() {
            let s = &samples[i];
            let critic = &bundle.roles[slot].selector_critic;
            let (v, cache) = critic.forward(&s.macro_obs)?;
            let err = v[0] - s.target;
            batch_mse += err * err;
            let g = critic.backward(&cache, &[c_critic * 2.0 * err / b])?;
            critic_grads.add_scaled(&g, 1.0);
        }
        acc.critic_sum += batch_mse;
        acc.critic_samples += chunk.len();
        if !batch_mse.is_finite() {
            acc.nonfinite = true;
            return Ok(false);
        }
        clip_grad_norm(&mut critic_grads, cfg.train.grad_clip);
        adam_update(
            &mut bundle.roles[slot].selector_critic,
            &critic_grads,
            &mut opt.roles[slot].selector_critic,
            adam,
        )?;
    }
    Ok(true)
}
