//! Cost shaping `C+ = C + alpha * P(enter the unsafe set within T steps)`,
//! with the probability learned online by a small classifier over states.

use crate::estimation::TrajectoryBatch;
use crate::optim::monotone_adam;
use crate::policy::mlp::Mlp;
use crate::policy::StateSet;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ShapingConfig {
    pub enabled: bool,
    pub horizon_t: usize,
    pub alpha: f64,
    pub fit_steps: usize,
    pub step_size: f64,
    pub hidden: usize,
}

impl Default for ShapingConfig {
    fn default() -> Self {
        Self { enabled: true, horizon_t: 10, alpha: 1.0, fit_steps: 25, step_size: 1e-3, hidden: 32 }
    }
}

impl ShapingConfig {
    pub fn disabled() -> Self {
        Self { enabled: false, ..Self::default() }
    }

    pub fn validate(&self) -> crate::Result<()> {
        if self.enabled && self.horizon_t == 0 {
            return Err(crate::Error::Config("shaping horizon must be at least 1".into()));
        }
        if !(self.alpha >= 0.0) {
            return Err(crate::Error::Config("shaping alpha must be nonnegative".into()));
        }
        Ok(())
    }
}

/// `label[t] = 1` iff some step in `(t, t + horizon]` of the same episode
/// is unsafe.
pub fn label_batch(batch: &TrajectoryBatch, unsafe_steps: &[bool], horizon: usize) -> Vec<f64> {
    assert_eq!(unsafe_steps.len(), batch.len(), "one indicator per step");
    let mut labels = vec![0.0; batch.len()];
    for range in batch.episodes() {
        // steps until the next unsafe step, scanning backwards
        let mut next_unsafe: Option<usize> = None;
        for t in range.rev() {
            if next_unsafe.is_some_and(|k| k - t <= horizon) {
                labels[t] = 1.0;
            }
            if unsafe_steps[t] {
                next_unsafe = Some(t);
            }
        }
    }
    labels
}

fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// One hidden `tanh` layer and a sigmoid output unit.
#[derive(Debug, Clone)]
pub struct FailurePredictor {
    net: Mlp,
    params: Vec<f64>,
}

impl FailurePredictor {
    pub fn new(obs_dim: usize, hidden: usize, seed: u64) -> Self {
        let net = Mlp::new(vec![obs_dim, hidden, 1]);
        let params = net.init_params(1.0, &mut ChaCha8Rng::seed_from_u64(seed));
        Self { net, params }
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn predict(&self, state: &[f64]) -> f64 {
        sigmoid(self.net.forward(&self.params, state).output()[0])
    }

    pub fn cross_entropy(&self, states: StateSet<'_>, labels: &[f64]) -> f64 {
        Self::loss_grad(&self.net, &self.params, states, labels).0
    }

    fn loss_grad(net: &Mlp, params: &[f64], states: StateSet<'_>, labels: &[f64]) -> (f64, Vec<f64>) {
        let n = labels.len() as f64;
        let mut loss = 0.0;
        let mut grad = vec![0.0; params.len()];
        for (i, y) in labels.iter().enumerate() {
            let tape = net.forward(params, states.state(i));
            let z = tape.output()[0];
            // log(1 + e^z) - y z, evaluated stably
            loss += (z.max(0.0) + (-z.abs()).exp().ln_1p() - y * z) / n;
            net.backward(params, &tape, &[(sigmoid(z) - y) / n], &mut grad);
        }
        (loss, grad)
    }

    /// Minimise the mean cross-entropy; the loss never increases. Returns
    /// the final loss.
    pub fn fit(&mut self, states: StateSet<'_>, labels: &[f64], steps: usize, step_size: f64) -> f64 {
        assert_eq!(states.len(), labels.len(), "one label per state");
        if labels.is_empty() {
            return 0.0;
        }
        let net = &self.net;
        let hist = monotone_adam(&mut self.params, steps, step_size, |p| Self::loss_grad(net, p, states, labels));
        hist.last().copied().unwrap_or_else(|| self.cross_entropy(states, labels))
    }
}

/// `cost + alpha * prediction`; never below `cost`.
pub fn shaped_cost(cost: f64, predictor: &FailurePredictor, state: &[f64], alpha: f64) -> f64 {
    cost + alpha * predictor.predict(state)
}

/// The predictor together with its configuration.
#[derive(Debug, Clone)]
pub struct CostShaper {
    pub config: ShapingConfig,
    pub predictor: FailurePredictor,
}

impl CostShaper {
    pub fn new(config: ShapingConfig, obs_dim: usize, seed: u64) -> Self {
        let predictor = FailurePredictor::new(obs_dim, config.hidden, seed);
        Self { config, predictor }
    }

    /// Shaped costs for every step of `batch` (raw costs when disabled).
    pub fn shape(&self, batch: &TrajectoryBatch, costs: &[f64]) -> Vec<f64> {
        if !self.config.enabled || self.config.alpha == 0.0 {
            return costs.to_vec();
        }
        (0..batch.len()).map(|t| shaped_cost(costs[t], &self.predictor, batch.state(t), self.config.alpha)).collect()
    }

    /// Refit on the labels of `batch`; returns the training loss, or `None`
    /// when shaping is disabled.
    pub fn update(&mut self, batch: &TrajectoryBatch, unsafe_steps: &[bool]) -> Option<f64> {
        if !self.config.enabled {
            return None;
        }
        let labels = label_batch(batch, unsafe_steps, self.config.horizon_t);
        Some(self.predictor.fit(batch.state_set(), &labels, self.config.fit_steps, self.config.step_size))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    fn batch(lengths: &[usize], obs_dim: usize, states: Vec<f64>) -> TrajectoryBatch {
        let n: usize = lengths.iter().sum();
        TrajectoryBatch { obs_dim, states, rewards: vec![0.0; n], lengths: lengths.to_vec(), ..TrajectoryBatch::default() }
    }

    #[test]
    fn labels_unrolled() {
        let b = batch(&[8], 1, vec![0.0; 8]);
        let mut unsafe_steps = vec![false; 8];
        assert!(label_batch(&b, &unsafe_steps, 3).iter().all(|l| *l == 0.0));
        unsafe_steps[5] = true;
        assert_eq!(label_batch(&b, &unsafe_steps, 3), vec![0.0, 0.0, 1.0, 1.0, 1.0, 0.0, 0.0, 0.0]);
    }

    #[test]
    fn labels_stop_at_episode_boundaries() {
        let b = batch(&[3, 3], 1, vec![0.0; 6]);
        let unsafe_steps = [false, false, false, true, false, false];
        assert_eq!(label_batch(&b, &unsafe_steps, 5), vec![0.0; 6]);
    }

    #[test]
    fn labels_match_brute_force() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let lengths = [10, 3, 17, 1, 9];
        let b = batch(&lengths, 1, vec![0.0; 40]);
        let unsafe_steps: Vec<bool> = (0..40).map(|_| rng.random_bool(0.15)).collect();
        for horizon in [1, 2, 5, 20] {
            let labels = label_batch(&b, &unsafe_steps, horizon);
            for range in b.episodes() {
                for t in range.clone() {
                    let hit = (t + 1..=(t + horizon).min(range.end - 1)).any(|k| unsafe_steps[k]);
                    assert_eq!(labels[t], if hit { 1.0 } else { 0.0 });
                }
            }
        }
    }

    #[test]
    fn all_zero_labels_pull_predictions_down() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let x: Vec<f64> = (0..100).map(|_| rng.random_range(-1.0..1.0)).collect();
        let states = StateSet::uniform(&x, 2);
        let mut pred = FailurePredictor::new(2, 32, 0);
        let before: f64 = (0..50).map(|i| pred.predict(states.state(i))).sum();
        pred.fit(states, &[0.0; 50], 100, 1e-2);
        let after: f64 = (0..50).map(|i| pred.predict(states.state(i))).sum();
        assert!(after < before);
    }

    #[test]
    fn separable_data_is_learned() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let x: Vec<f64> = (0..400).map(|_| rng.random_range(-1.0..1.0)).collect();
        let states = StateSet::uniform(&x, 2);
        let labels: Vec<f64> = (0..200).map(|i| if x[2 * i] + 0.5 * x[2 * i + 1] > 0.1 { 1.0 } else { 0.0 }).collect();
        let mut pred = FailurePredictor::new(2, 32, 3);
        let before = pred.cross_entropy(states, &labels);
        let after = pred.fit(states, &labels, 500, 1e-2);
        assert!(after < before);
        let correct = (0..200).filter(|&i| (pred.predict(states.state(i)) > 0.5) == (labels[i] == 1.0)).count();
        assert!(correct >= 190, "{correct}");
    }

    #[test]
    fn zero_steps_and_zero_alpha() {
        let x = [0.3, -0.2];
        let mut pred = FailurePredictor::new(2, 32, 5);
        let before = pred.params().to_vec();
        pred.fit(StateSet::uniform(&x, 2), &[1.0], 0, 1e-3);
        assert_eq!(pred.params(), before.as_slice());
        assert_eq!(shaped_cost(0.7, &pred, &x, 0.0), 0.7);
        let p = pred.predict(&x);
        assert!(p > 0.0 && p < 1.0);
        assert!(shaped_cost(0.0, &pred, &x, 1.0) >= 0.0);
    }
}
