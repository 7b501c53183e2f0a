//! Trajectory collection, advantage estimation, value fitting, and the
//! linearised objective and constraints around the current policy.

mod batch;
mod gae;
mod surrogate;
mod value;

pub use batch::{rollout, rollout_parallel, TrajectoryBatch};
pub use gae::{discounted_returns_to_go, gae_advantages, normalize};
pub use surrogate::{
    build_surrogates, exact_tabular_surrogates, policy_table, Advantages, SampledEvaluator, SurrogateEval,
    SurrogateEvaluator, SurrogateModel, TabularEvaluator,
};
pub use value::ValueFunction;

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EstimatorConfig {
    pub gamma: f64,
    pub lambda_gae: f64,
    pub lambda_gae_cost: f64,
    pub value_fit_iters: usize,
    pub value_fit_step: f64,
}

impl Default for EstimatorConfig {
    fn default() -> Self {
        Self { gamma: 0.995, lambda_gae: 0.95, lambda_gae_cost: 1.0, value_fit_iters: 25, value_fit_step: 1e-2 }
    }
}

impl EstimatorConfig {
    pub fn validate(&self) -> crate::Result<()> {
        let unit = |x: f64| (0.0..=1.0).contains(&x);
        if !(0.0..1.0).contains(&self.gamma) {
            return Err(crate::Error::Config(format!("gamma {} outside [0, 1)", self.gamma)));
        }
        if !unit(self.lambda_gae) || !unit(self.lambda_gae_cost) {
            return Err(crate::Error::Config("GAE lambdas must lie in [0, 1]".into()));
        }
        if !(self.value_fit_step > 0.0) {
            return Err(crate::Error::Config("value_fit_step must be positive".into()));
        }
        Ok(())
    }
}

/// Reward and per-constraint value networks, refit after each batch.
#[derive(Debug, Clone)]
pub struct Critics {
    pub reward: ValueFunction,
    pub costs: Vec<ValueFunction>,
}

impl Critics {
    pub fn new(obs_dim: usize, hidden: &[usize], n_costs: usize, seed: u64) -> Self {
        Self {
            reward: ValueFunction::new(obs_dim, hidden, seed),
            costs: (0..n_costs).map(|i| ValueFunction::new(obs_dim, hidden, seed + 1 + i as u64)).collect(),
        }
    }

    /// GAE advantages from the current critics (reward advantages
    /// normalised, cost advantages left in cost units), then refit every
    /// critic on discounted returns-to-go.
    pub fn advantages(
        &mut self,
        batch: &TrajectoryBatch,
        rewards: &[f64],
        costs: &[Vec<f64>],
        config: &EstimatorConfig,
    ) -> crate::Result<Advantages> {
        if costs.len() != self.costs.len() {
            return Err(crate::Error::Dimension(format!(
                "{} cost signals for {} cost critics",
                costs.len(),
                self.costs.len()
            )));
        }
        let states = batch.state_set();
        let gamma = config.gamma;
        let values = self.reward.predict_all(states);
        let reward = normalize(&gae_advantages(batch, rewards, &values, gamma, config.lambda_gae)?);
        let mut cost_adv = Vec::with_capacity(costs.len());
        for (critic, signal) in self.costs.iter().zip(costs) {
            let values = critic.predict_all(states);
            cost_adv.push(gae_advantages(batch, signal, &values, gamma, config.lambda_gae_cost)?);
        }
        let fit = |critic: &mut ValueFunction, signal: &[f64]| {
            let targets = discounted_returns_to_go(batch, signal, gamma);
            critic.fit(states, &targets, config.value_fit_iters, config.value_fit_step);
        };
        fit(&mut self.reward, rewards);
        for (critic, signal) in self.costs.iter_mut().zip(costs) {
            fit(critic, signal);
        }
        Ok(Advantages { reward, costs: cost_adv })
    }
}
