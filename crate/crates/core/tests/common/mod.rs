#![allow(dead_code)]

use cpo::env::{CircleParams, EnvSpec};
use cpo::estimation::{build_surrogates, discounted_returns_to_go, normalize, rollout, Advantages, SurrogateModel, TrajectoryBatch};
use cpo::policy::{Architecture, Head, ParamPolicy};

pub const GAMMA: f64 = 0.99;

/// Small Gaussian policy and a Point-Circle batch collected with it.
pub fn circle_batch(seed: u64, steps: usize) -> (ParamPolicy, TrajectoryBatch) {
    let policy = ParamPolicy::init(Architecture::new(9, vec![8], Head::Gaussian { act_dim: 2 }), seed, -0.5);
    let mut env = EnvSpec::PointCircle(CircleParams::default()).build();
    let batch = rollout(env.as_mut(), &policy, steps, 65, seed).expect("rollout");
    (policy, batch)
}

/// Reward advantages from normalised returns-to-go; the cost advantage is a
/// synthetic signal (the point's x coordinate) so that `b` is never zero.
pub fn advantages(batch: &TrajectoryBatch) -> Advantages {
    let reward = normalize(&discounted_returns_to_go(batch, &batch.rewards, GAMMA));
    let cost = (0..batch.len()).map(|t| batch.state(t)[0]).collect();
    Advantages { reward, costs: vec![cost] }
}

pub fn model(policy: &ParamPolicy, batch: &TrajectoryBatch, adv: &Advantages, cost_return: f64, limit: f64) -> SurrogateModel {
    build_surrogates(batch, policy, adv, &[cost_return], &[limit], GAMMA, 0.01, 1e-5).expect("surrogates")
}

pub fn rel_diff(a: &[f64], b: &[f64]) -> f64 {
    let diff: f64 = a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt();
    let scale: f64 = b.iter().map(|y| y * y).sum::<f64>().sqrt();
    diff / scale.max(1e-300)
}
