//! Versioned checkpoint container.
//!
//! Layout: a JSON document holding named tensors (name -> shape -> row-major
//! 64-bit values), the matching Adam accumulators keyed by network path, the
//! iteration counter, the run id and the configuration hash. Keys are sorted
//! so identical state always serializes to identical bytes.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::config::Algo;
use crate::error::CoreError;
use crate::hrl::{GaussianPolicy, SubPolicyId};
use crate::lfmappo::params::{OptBundle, PolicyBundle, RoleNets, RoleOpt};
use crate::neuralcore::mlp::{Dense, Mlp};
use crate::neuralcore::AdamState;
use crate::Result;

pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tensor {
    pub shape: Vec<usize>,
    pub data: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub version: u32,
    pub run_id: String,
    pub config_hash: String,
    pub iteration: u64,
    pub algo: Algo,
    pub obs_dim_leader: usize,
    pub obs_dim_follower: usize,
    pub tensors: BTreeMap<String, Tensor>,
    pub adam: BTreeMap<String, AdamState>,
}

fn push_mlp(tensors: &mut BTreeMap<String, Tensor>, prefix: &str, mlp: &Mlp) {
    for (k, layer) in mlp.layers.iter().enumerate() {
        tensors.insert(
            format!("{prefix}.l{k}.w"),
            Tensor { shape: vec![layer.out_dim, layer.in_dim], data: layer.w.clone() },
        );
        tensors.insert(
            format!("{prefix}.l{k}.b"),
            Tensor { shape: vec![layer.out_dim], data: layer.b.clone() },
        );
    }
}

fn read_mlp(tensors: &BTreeMap<String, Tensor>, prefix: &str) -> Result<Mlp> {
    let mut layers = Vec::new();
    for k in 0.. {
        let w_key = format!("{prefix}.l{k}.w");
        let b_key = format!("{prefix}.l{k}.b");
        let (w, b) = match (tensors.get(&w_key), tensors.get(&b_key)) {
            (Some(w), Some(b)) => (w, b),
            (None, None) => break,
            _ => {
                return Err(CoreError::Checkpoint(format!(
                    "tensor pair for layer {k} of '{prefix}' is incomplete"
                )))
            }
        };
        if w.shape.len() != 2 || b.shape.len() != 1 || w.shape[0] != b.shape[0] {
            return Err(CoreError::Checkpoint(format!("bad shapes for '{w_key}'")));
        }
        let (out_dim, in_dim) = (w.shape[0], w.shape[1]);
        if w.data.len() != out_dim * in_dim || b.data.len() != out_dim {
            return Err(CoreError::Checkpoint(format!("storage mismatch for '{w_key}'")));
        }
        layers.push(Dense { in_dim, out_dim, w: w.data.clone(), b: b.data.clone() });
    }
    if layers.is_empty() {
        return Err(CoreError::Checkpoint(format!("no layers under '{prefix}'")));
    }
    let mlp = Mlp { layers, revision: 0 };
    mlp.validate()?;
    Ok(mlp)
}

fn role_prefix(slot: usize) -> String {
    format!("role{slot}")
}

impl Checkpoint {
    pub fn from_state(
        bundle: &PolicyBundle,
        opt: &OptBundle,
        iteration: u64,
        run_id: &str,
        config_hash: &str,
    ) -> Self {
        let mut tensors = BTreeMap::new();
        let mut adam = BTreeMap::new();
        for (slot, (nets, opts)) in bundle.roles.iter().zip(opt.roles.iter()).enumerate() {
            let p = role_prefix(slot);
            push_mlp(&mut tensors, &format!("{p}.selector"), &nets.selector);
            push_mlp(&mut tensors, &format!("{p}.selector_critic"), &nets.selector_critic);
            adam.insert(format!("{p}.selector"), opts.selector.clone());
            adam.insert(format!("{p}.selector_critic"), opts.selector_critic.clone());
            for i in 0..SubPolicyId::COUNT {
                push_mlp(
                    &mut tensors,
                    &format!("{p}.subpolicy{i}.mean"),
                    &nets.subpolicies[i].mean,
                );
                tensors.insert(
                    format!("{p}.subpolicy{i}.log_std"),
                    Tensor {
                        shape: vec![nets.subpolicies[i].log_std.len()],
                        data: nets.subpolicies[i].log_std.clone(),
                    },
                );
                push_mlp(
                    &mut tensors,
                    &format!("{p}.subpolicy{i}.critic"),
                    &nets.subpolicy_critics[i],
                );
                adam.insert(
                    format!("{p}.subpolicy{i}.mean"),
                    opts.subpolicy_means[i].clone(),
                );
                adam.insert(
                    format!("{p}.subpolicy{i}.log_std"),
                    opts.subpolicy_log_stds[i].clone(),
                );
                adam.insert(
                    format!("{p}.subpolicy{i}.critic"),
                    opts.subpolicy_critics[i].clone(),
                );
            }
        }
        Checkpoint {
            version: CHECKPOINT_VERSION,
            run_id: run_id.to_string(),
            config_hash: config_hash.to_string(),
            iteration,
            algo: bundle.algo,
            obs_dim_leader: bundle.obs_dim_leader,
            obs_dim_follower: bundle.obs_dim_follower,
            tensors,
            adam,
        }
    }

    pub fn into_state(self) -> Result<(PolicyBundle, OptBundle, u64)> {
        if self.version != CHECKPOINT_VERSION {
            return Err(CoreError::Checkpoint(format!(
                "unsupported checkpoint version {}",
                self.version
            )));
        }
        let slots = match self.algo {
            Algo::Mappo => 1,
            Algo::Lfmappo | Algo::Ippo => 2,
        };
        let mut roles = Vec::with_capacity(slots);
        let mut opts = Vec::with_capacity(slots);
        let adam_for = |name: &str| -> Result<AdamState> {
            self.adam
                .get(name)
                .cloned()
                .ok_or_else(|| CoreError::Checkpoint(format!("missing optimizer state '{name}'")))
        };
        for slot in 0..slots {
            let p = role_prefix(slot);
            let selector = read_mlp(&self.tensors, &format!("{p}.selector"))?;
            let selector_critic = read_mlp(&self.tensors, &format!("{p}.selector_critic"))?;
            let mut subpolicies = Vec::new();
            let mut subpolicy_critics = Vec::new();
            let mut sp_means = Vec::new();
            let mut sp_log_stds = Vec::new();
            let mut sp_critics = Vec::new();
            for i in 0..SubPolicyId::COUNT {
                let mean = read_mlp(&self.tensors, &format!("{p}.subpolicy{i}.mean"))?;
                let ls_key = format!("{p}.subpolicy{i}.log_std");
                let log_std = self
                    .tensors
                    .get(&ls_key)
                    .ok_or_else(|| CoreError::Checkpoint(format!("missing tensor '{ls_key}'")))?
                    .data
                    .clone();
                if log_std.len() != mean.output_dim() {
                    return Err(CoreError::Checkpoint(format!("bad shape for '{ls_key}'")));
                }
                let critic = read_mlp(&self.tensors, &format!("{p}.subpolicy{i}.critic"))?;
                sp_means.push(adam_for(&format!("{p}.subpolicy{i}.mean"))?);
                sp_log_stds.push(adam_for(&format!("{p}.subpolicy{i}.log_std"))?);
                sp_critics.push(adam_for(&format!("{p}.subpolicy{i}.critic"))?);
                subpolicies.push(GaussianPolicy { mean, log_std });
                subpolicy_critics.push(critic);
            }
            opts.push(RoleOpt {
                selector: adam_for(&format!("{p}.selector"))?,
                selector_critic: adam_for(&format!("{p}.selector_critic"))?,
                subpolicy_means: sp_means,
                subpolicy_log_stds: sp_log_stds,
                subpolicy_critics: sp_critics,
            });
            roles.push(RoleNets { selector, selector_critic, subpolicies, subpolicy_critics });
        }
        let bundle = PolicyBundle {
            algo: self.algo,
            roles,
            obs_dim_leader: self.obs_dim_leader,
            obs_dim_follower: self.obs_dim_follower,
        };
        if !bundle.is_finite() {
            return Err(CoreError::Checkpoint("checkpoint holds non-finite values".into()));
        }
        Ok((bundle, OptBundle { roles: opts }, self.iteration))
    }

    /// Serialize to canonical JSON bytes (sorted keys, stable order).
    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        Ok(serde_json::to_vec(self)?)
    }

    /// Atomic write: the file appears complete or not at all.
    pub fn save(&self, path: &Path) -> Result<()> {
        let bytes = self.to_bytes()?;
        let tmp = path.with_extension("tmp");
        std::fs::write(&tmp, &bytes)?;
        std::fs::rename(&tmp, path)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path)
            .map_err(|e| CoreError::Checkpoint(format!("{}: {e}", path.display())))?;
        Ok(serde_json::from_slice(&bytes)?)
    }
}
