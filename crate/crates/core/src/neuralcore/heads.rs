//! Stochastic policy heads: diagonal Gaussian for continuous commands and
//! categorical over logits for the policy selector.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

const LN_2PI: f64 = 1.8378770664093453;

/// Draw from a diagonal Gaussian; returns the raw (unsquashed) action and
/// its log density. Callers squash or clamp into command bounds afterwards.
pub fn gaussian_sample(
    mean: &[f64],
    log_std: &[f64],
    rng: &mut ChaCha8Rng,
) -> (Vec<f64>, f64) {
    debug_assert_eq!(mean.len(), log_std.len());
    let mut action = Vec::with_capacity(mean.len());
    for (m, ls) in mean.iter().zip(log_std.iter()) {
        let z: f64 = StandardNormal.sample(rng);
        action.push(m + ls.exp() * z);
    }
    let lp = gaussian_log_prob(&action, mean, log_std);
    (action, lp)
}

/// Log density of `action` under the diagonal Gaussian.
pub fn gaussian_log_prob(action: &[f64], mean: &[f64], log_std: &[f64]) -> f64 {
    debug_assert_eq!(action.len(), mean.len());
    let mut lp = 0.0;
    for ((a, m), ls) in action.iter().zip(mean.iter()).zip(log_std.iter()) {
        let z = (a - m) / ls.exp();
        lp += -0.5 * z * z - ls - 0.5 * LN_2PI;
    }
    lp
}

/// Log-density correction for squashing a raw action through tanh:
/// `sum ln(1 - tanh(u)^2)`, computed with the numerically stable identity
/// `ln(1 - tanh(u)^2) = 2 (ln 2 - u - softplus(-2u))`.
pub fn tanh_squash_correction(raw: &[f64]) -> f64 {
    raw.iter().map(|&u| 2.0 * (std::f64::consts::LN_2 - u - softplus(-2.0 * u))).sum()
}

fn softplus(x: f64) -> f64 {
    if x > 0.0 {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

/// Numerically stable softmax.
pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|&l| (l - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / sum).collect()
}

pub fn log_softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let lse = logits.iter().map(|&l| (l - max).exp()).sum::<f64>().ln() + max;
    logits.iter().map(|&l| l - lse).collect()
}

/// Categorical log-probabilities for the given logits.
pub fn categorical_log_probs(logits: &[f64]) -> Vec<f64> {
    log_softmax(logits)
}

/// Sample an index from softmax(logits); returns the index and its log
/// probability.
pub fn categorical_sample(logits: &[f64], rng: &mut ChaCha8Rng) -> (usize, f64) {
    debug_assert!(logits.len() >= 2, "categorical head needs at least two logits");
    let probs = softmax(logits);
    let u: f64 = rng.random_range(0.0..1.0);
    let mut acc = 0.0;
    let mut index = probs.len() - 1;
    for (k, &p) in probs.iter().enumerate() {
        acc += p;
        if u < acc {
            index = k;
            break;
        }
    }
    (index, log_softmax(logits)[index])
}

/// Entropy of softmax(logits) in nats.
pub fn categorical_entropy(logits: &[f64]) -> f64 {
    let probs = softmax(logits);
    let logs = log_softmax(logits);
    -probs.iter().zip(logs.iter()).map(|(p, lp)| if *p > 0.0 { p * lp } else { 0.0 }).sum::<f64>()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::SeedTree;

    #[test]
    fn degenerate_gaussian_collapses_to_mean() {
        let mut rng = SeedTree::new(1).rng("gauss", &[]);
        let mean = vec![0.3, -0.7, 1.1];
        let log_std = vec![-20.0; 3];
        for _ in 0..100 {
            let (a, _) = gaussian_sample(&mean, &log_std, &mut rng);
            for (ai, mi) in a.iter().zip(mean.iter()) {
                assert!((ai - mi).abs() < 1e-6);
            }
        }
    }

    #[test]
    fn log_prob_at_mean_closed_form() {
        for k in 1..=4 {
            let mean = vec![0.25; k];
            let log_std = vec![0.0; k];
            let lp = gaussian_log_prob(&mean, &mean, &log_std);
            let expected = -0.5 * k as f64 * LN_2PI;
            assert!((lp - expected).abs() < 1e-12, "k={k}: {lp} vs {expected}");
        }
    }

    #[test]
    fn empirical_mean_matches() {
        let mut rng = SeedTree::new(7).rng("gauss-mc", &[]);
        let mean = vec![1.5, -2.0];
        let log_std = vec![0.0, 0.5];
        let n = 100_000usize;
        let mut sums = [0.0; 2];
        for _ in 0..n {
            let (a, _) = gaussian_sample(&mean, &log_std, &mut rng);
            sums[0] += a[0];
            sums[1] += a[1];
        }
        for k in 0..2 {
            let emp = sums[k] / n as f64;
            let sigma = log_std[k].exp();
            let bound = 3.0 * sigma / (n as f64).sqrt();
            assert!((emp - mean[k]).abs() < bound, "dim {k}: {emp} vs {}", mean[k]);
        }
    }

    #[test]
    fn tanh_correction_matches_naive_form() {
        for &u in &[0.0f64, 0.3, -1.5, 4.0, -7.0] {
            let naive = (1.0 - u.tanh() * u.tanh()).ln();
            let stable = tanh_squash_correction(&[u]);
            assert!((naive - stable).abs() < 1e-9, "u={u}: {naive} vs {stable}");
        }
        // Stays finite where the naive form underflows to ln(0).
        assert!(tanh_squash_correction(&[25.0]).is_finite());
    }

    #[test]
    fn uniform_entropy_is_log_k() {
        let h = categorical_entropy(&[0.0, 0.0, 0.0]);
        assert!((h - 3f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn near_deterministic_logits() {
        let logits = [1000.0, 0.0, 0.0];
        assert!(categorical_entropy(&logits) < 1e-9);
        let mut rng = SeedTree::new(3).rng("cat-det", &[]);
        for _ in 0..1000 {
            let (k, lp) = categorical_sample(&logits, &mut rng);
            assert_eq!(k, 0);
            assert!(lp.abs() < 1e-9);
        }
    }

    #[test]
    fn sampling_frequency_matches_softmax() {
        let logits = [1.0, 0.0];
        let mut rng = SeedTree::new(11).rng("cat-mc", &[]);
        let n = 100_000usize;
        let mut count0 = 0usize;
        for _ in 0..n {
            if categorical_sample(&logits, &mut rng).0 == 0 {
                count0 += 1;
            }
        }
        let freq = count0 as f64 / n as f64;
        let expected = std::f64::consts::E / (std::f64::consts::E + 1.0);
        assert!((freq - expected).abs() < 0.01, "freq {freq} vs {expected}");
    }

    #[test]
    fn probabilities_partition_and_entropy_bounds() {
        let mut rng = SeedTree::new(13).rng("cat-bounds", &[]);
        use rand::Rng;
        for _ in 0..1000 {
            let k = rng.random_range(2..6);
            let logits: Vec<f64> = (0..k).map(|_| rng.random_range(-30.0..30.0)).collect();
            let p = softmax(&logits);
            let total: f64 = p.iter().sum();
            assert!((total - 1.0).abs() < 1e-12);
            let h = categorical_entropy(&logits);
            assert!(h >= 0.0 && h <= (k as f64).ln() + 1e-12);
        }
    }
}
