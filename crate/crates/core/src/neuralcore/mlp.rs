//! Dense multilayer perceptron with ReLU hidden activations and exact
//! reverse-mode gradients.

use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::CoreError;
use crate::Result;

/// One affine layer; weights are row-major `[out_dim x in_dim]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dense {
    pub in_dim: usize,
    pub out_dim: usize,
    pub w: Vec<f64>,
    pub b: Vec<f64>,
}

/// MLP with ReLU on all hidden layers and a linear output layer.
///
/// `revision` counts parameter updates; forward caches remember the revision
/// they were built against so a stale cache cannot feed a backward pass.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Mlp {
    pub layers: Vec<Dense>,
    pub revision: u64,
}

/// Activations retained by a forward pass for the matching backward pass.
#[derive(Debug, Clone)]
pub struct ForwardCache {
    revision: u64,
    /// Input vector of each layer (post-activation of the previous one).
    inputs: Vec<Vec<f64>>,
    /// Pre-activation of each layer.
    preacts: Vec<Vec<f64>>,
}

/// Parameter gradients, shaped exactly like the network.
#[derive(Debug, Clone, PartialEq)]
pub struct MlpGrads {
    pub layers: Vec<DenseGrad>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DenseGrad {
    pub w: Vec<f64>,
    pub b: Vec<f64>,
}

impl Mlp {
    /// He-initialized network over the given dimension chain. The output
    /// layer is scaled down so fresh policies start near-uniform.
    pub fn init(dims: &[usize], rng: &mut ChaCha8Rng, final_scale: f64) -> Self {
        assert!(dims.len() >= 2, "need at least input and output dims");
        let mut layers = Vec::with_capacity(dims.len() - 1);
        for k in 0..dims.len() - 1 {
            let (in_dim, out_dim) = (dims[k], dims[k + 1]);
            let std = (2.0 / in_dim as f64).sqrt()
                * if k == dims.len() - 2 { final_scale } else { 1.0 };
            let normal = Normal::new(0.0, std).expect("valid std");
            let w = (0..in_dim * out_dim).map(|_| normal.sample(rng)).collect();
            layers.push(Dense { in_dim, out_dim, w, b: vec![0.0; out_dim] });
        }
        Mlp { layers, revision: 0 }
    }

    pub fn input_dim(&self) -> usize {
        self.layers.first().map(|l| l.in_dim).unwrap_or(0)
    }

    pub fn output_dim(&self) -> usize {
        self.layers.last().map(|l| l.out_dim).unwrap_or(0)
    }

    pub fn param_count(&self) -> usize {
        self.layers.iter().map(|l| l.w.len() + l.b.len()).sum()
    }

    pub fn is_finite(&self) -> bool {
        self.layers
            .iter()
            .all(|l| l.w.iter().all(|x| x.is_finite()) && l.b.iter().all(|x| x.is_finite()))
    }

    /// Check the layer dimension chain.
    pub fn validate(&self) -> Result<()> {
        for (k, l) in self.layers.iter().enumerate() {
            if l.w.len() != l.in_dim * l.out_dim || l.b.len() != l.out_dim {
                return Err(CoreError::shape(format!("layer {k} storage mismatch")));
            }
            if k > 0 && self.layers[k - 1].out_dim != l.in_dim {
                return Err(CoreError::shape(format!("layer {k} does not chain")));
            }
        }
        Ok(())
    }

    /// Forward pass returning the output and the cache for `backward`.
    pub fn forward(&self, input: &[f64]) -> Result<(Vec<f64>, ForwardCache)> {
        if input.len() != self.input_dim() {
            return Err(CoreError::shape(format!(
                "input length {} for first layer of {}",
                input.len(),
                self.input_dim()
            )));
        }
        let n_layers = self.layers.len();
        let mut inputs = Vec::with_capacity(n_layers);
        let mut preacts = Vec::with_capacity(n_layers);
        let mut x = input.to_vec();
        for (k, layer) in self.layers.iter().enumerate() {
            let mut z = layer.b.clone();
            for o in 0..layer.out_dim {
                let row = &layer.w[o * layer.in_dim..(o + 1) * layer.in_dim];
                let mut acc = 0.0;
                for (wi, xi) in row.iter().zip(x.iter()) {
                    acc += wi * xi;
                }
                z[o] += acc;
            }
            inputs.push(x);
            preacts.push(z.clone());
            x = if k + 1 < n_layers {
                z.iter().map(|&v| v.max(0.0)).collect()
            } else {
                z
            };
        }
        Ok((x, ForwardCache { revision: self.revision, inputs, preacts }))
    }

    /// Output without keeping a cache.
    pub fn infer(&self, input: &[f64]) -> Result<Vec<f64>> {
        self.forward(input).map(|(y, _)| y)
    }

    /// Exact gradients of `upstream . output` with respect to every
    /// parameter. The cache must come from a forward pass against the same
    /// parameter revision.
    pub fn backward(&self, cache: &ForwardCache, upstream: &[f64]) -> Result<MlpGrads> {
        if cache.revision != self.revision {
            return Err(CoreError::protocol(
                "stale forward cache: parameters changed since the forward pass",
            ));
        }
        if cache.inputs.len() != self.layers.len() {
            return Err(CoreError::shape("cache depth does not match network"));
        }
        if upstream.len() != self.output_dim() {
            return Err(CoreError::shape(format!(
                "upstream length {} for output of {}",
                upstream.len(),
                self.output_dim()
            )));
        }

        let mut grads: Vec<DenseGrad> = self
            .layers
            .iter()
            .map(|l| DenseGrad { w: vec![0.0; l.w.len()], b: vec![0.0; l.b.len()] })
            .collect();

        let mut delta = upstream.to_vec();
        for k in (0..self.layers.len()).rev() {
            let layer = &self.layers[k];
            let x = &cache.inputs[k];
            for o in 0..layer.out_dim {
                grads[k].b[o] += delta[o];
                let row = &mut grads[k].w[o * layer.in_dim..(o + 1) * layer.in_dim];
                for (gi, xi) in row.iter_mut().zip(x.iter()) {
                    *gi += delta[o] * xi;
                }
            }
            if k > 0 {
                let mut prev = vec![0.0; layer.in_dim];
                for o in 0..layer.out_dim {
                    let row = &layer.w[o * layer.in_dim..(o + 1) * layer.in_dim];
                    for (pi, wi) in prev.iter_mut().zip(row.iter()) {
                        *pi += wi * delta[o];
                    }
                }
                // ReLU derivative on the previous layer's pre-activation.
                let z = &cache.preacts[k - 1];
                for (pi, zi) in prev.iter_mut().zip(z.iter()) {
                    if *zi <= 0.0 {
                        *pi = 0.0;
                    }
                }
                delta = prev;
            }
        }
        Ok(MlpGrads { layers: grads })
    }
}

impl MlpGrads {
    pub fn zeros_like(mlp: &Mlp) -> Self {
        MlpGrads {
            layers: mlp
                .layers
                .iter()
                .map(|l| DenseGrad { w: vec![0.0; l.w.len()], b: vec![0.0; l.b.len()] })
                .collect(),
        }
    }

    pub fn add_scaled(&mut self, other: &MlpGrads, scale: f64) {
        for (a, b) in self.layers.iter_mut().zip(other.layers.iter()) {
            for (x, y) in a.w.iter_mut().zip(b.w.iter()) {
                *x += scale * y;
            }
            for (x, y) in a.b.iter_mut().zip(b.b.iter()) {
                *x += scale * y;
            }
        }
    }

    pub fn scale(&mut self, s: f64) {
        for l in &mut self.layers {
            for x in &mut l.w {
                *x *= s;
            }
            for x in &mut l.b {
                *x *= s;
            }
        }
    }

    pub fn l2_norm(&self) -> f64 {
        let mut acc = 0.0;
        for l in &self.layers {
            for x in &l.w {
                acc += x * x;
            }
            for x in &l.b {
                acc += x * x;
            }
        }
        acc.sqrt()
    }

    pub fn is_finite(&self) -> bool {
        self.layers
            .iter()
            .all(|l| l.w.iter().all(|x| x.is_finite()) && l.b.iter().all(|x| x.is_finite()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::SeedTree;
    use rand::Rng;

    fn identity_net(dim: usize, layers: usize) -> Mlp {
        let mut net = Mlp { layers: Vec::new(), revision: 0 };
        for _ in 0..layers {
            let mut w = vec![0.0; dim * dim];
            for i in 0..dim {
                w[i * dim + i] = 1.0;
            }
            net.layers.push(Dense { in_dim: dim, out_dim: dim, w, b: vec![0.0; dim] });
        }
        net
    }

    #[test]
    fn identity_passthrough_on_positive_input() {
        let net = identity_net(3, 2);
        let (y, _) = net.forward(&[1.0, 2.0, 0.5]).unwrap();
        assert_eq!(y, vec![1.0, 2.0, 0.5]);
    }

    #[test]
    fn zero_weights_emit_final_bias() {
        let mut net = identity_net(2, 2);
        for l in &mut net.layers {
            l.w.iter_mut().for_each(|w| *w = 0.0);
        }
        net.layers[1].b = vec![3.5, -1.25];
        let (y, _) = net.forward(&[10.0, -4.0]).unwrap();
        assert_eq!(y, vec![3.5, -1.25]);
    }

    #[test]
    fn shape_errors() {
        let net = identity_net(3, 1);
        assert!(matches!(net.forward(&[1.0, 2.0]), Err(CoreError::Shape(_))));
        let (_, cache) = net.forward(&[1.0, 2.0, 3.0]).unwrap();
        assert!(matches!(net.backward(&cache, &[1.0]), Err(CoreError::Shape(_))));
    }

    #[test]
    fn stale_cache_rejected() {
        let mut net = identity_net(2, 1);
        let (_, cache) = net.forward(&[1.0, 2.0]).unwrap();
        net.revision += 1;
        assert!(matches!(net.backward(&cache, &[1.0, 0.0]), Err(CoreError::Protocol(_))));
    }

    #[test]
    fn zero_upstream_gives_zero_grads() {
        let mut rng = SeedTree::new(1).rng("zero-up", &[]);
        let net = Mlp::init(&[4, 8, 3], &mut rng, 1.0);
        let (_, cache) = net.forward(&[0.3, -0.2, 0.9, 0.1]).unwrap();
        let g = net.backward(&cache, &[0.0, 0.0, 0.0]).unwrap();
        assert_eq!(g.l2_norm(), 0.0);
    }

    #[test]
    fn single_linear_layer_closed_form() {
        // y = W x; dL/dW for upstream u is the outer product u x^T.
        let net = Mlp {
            layers: vec![Dense {
                in_dim: 2,
                out_dim: 2,
                w: vec![1.0, -2.0, 0.5, 3.0],
                b: vec![0.0, 0.0],
            }],
            revision: 0,
        };
        let x = [2.0, -1.0];
        let u = [0.7, -0.3];
        let (_, cache) = net.forward(&x).unwrap();
        let g = net.backward(&cache, &u).unwrap();
        let expected = [u[0] * x[0], u[0] * x[1], u[1] * x[0], u[1] * x[1]];
        for (a, b) in g.layers[0].w.iter().zip(expected.iter()) {
            assert!((a - b).abs() < 1e-15);
        }
        assert_eq!(g.layers[0].b, vec![0.7, -0.3]);
    }

    /// Central finite differences over every parameter of small random nets.
    /// Inputs are nudged away from ReLU kinks so the comparison is valid.
    #[test]
    fn gradients_match_finite_differences() {
        let tree = SeedTree::new(2024);
        let h = 1e-5;
        let mut checked = 0usize;
        for case in 0..50u64 {
            let mut rng = tree.rng("fd", &[case]);
            let dims = [
                3 + (case % 3) as usize,
                4 + (case % 2) as usize,
                4,
                2 + (case % 2) as usize,
            ];
            let mut net = Mlp::init(&dims, &mut rng, 1.0);
            let input: Vec<f64> = (0..dims[0]).map(|_| rng.random_range(-1.0..1.0)).collect();
            let upstream: Vec<f64> =
                (0..dims[3]).map(|_| rng.random_range(-1.0..1.0)).collect();

            // Keep every pre-activation away from zero; shift biases if not.
            let kink_margin = 1e-3;
            for _ in 0..50 {
                let (_, cache) = net.forward(&input).unwrap();
                let mut shifted = false;
                for (k, z) in cache.preacts.iter().enumerate() {
                    if k + 1 == net.layers.len() {
                        continue;
                    }
                    for (o, &v) in z.iter().enumerate() {
                        if v.abs() < kink_margin {
                            net.layers[k].b[o] += 0.05;
                            shifted = true;
                        }
                    }
                }
                if !shifted {
                    break;
                }
            }

            let loss = |net: &Mlp| -> f64 {
                let y = net.infer(&input).unwrap();
                y.iter().zip(upstream.iter()).map(|(a, b)| a * b).sum()
            };
            let (_, cache) = net.forward(&input).unwrap();
            let grads = net.backward(&cache, &upstream).unwrap();

            for l in 0..net.layers.len() {
                for idx in 0..net.layers[l].w.len() {
                    let orig = net.layers[l].w[idx];
                    net.layers[l].w[idx] = orig + h;
                    let plus = loss(&net);
                    net.layers[l].w[idx] = orig - h;
                    let minus = loss(&net);
                    net.layers[l].w[idx] = orig;
                    let fd = (plus - minus) / (2.0 * h);
                    let an = grads.layers[l].w[idx];
                    let denom = fd.abs().max(an.abs()).max(1e-6);
                    assert!(
                        (fd - an).abs() / denom < 1e-3,
                        "case {case} layer {l} w[{idx}]: fd {fd} vs {an}"
                    );
                    checked += 1;
                }
                for idx in 0..net.layers[l].b.len() {
                    let orig = net.layers[l].b[idx];
                    net.layers[l].b[idx] = orig + h;
                    let plus = loss(&net);
                    net.layers[l].b[idx] = orig - h;
                    let minus = loss(&net);
                    net.layers[l].b[idx] = orig;
                    let fd = (plus - minus) / (2.0 * h);
                    let an = grads.layers[l].b[idx];
                    let denom = fd.abs().max(an.abs()).max(1e-6);
                    assert!(
                        (fd - an).abs() / denom < 1e-3,
                        "case {case} layer {l} b[{idx}]: fd {fd} vs {an}"
                    );
                    checked += 1;
                }
            }
        }
        assert!(checked > 1000, "only {checked} parameters exercised");
    }
}
