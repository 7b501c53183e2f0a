use super::{ActionSpace, Env, Step};
use crate::error::{Error, Result};
use crate::policy::Action;
use crate::tabular::TabularCmdp;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Samples trajectories from a finite CMDP. Observations are one-hot state
/// encodings; episodes never terminate on their own and are cut by the
/// rollout's path length.
#[derive(Debug, Clone)]
pub struct TabularEnv {
    mdp: TabularCmdp,
    state: usize,
    rng: ChaCha8Rng,
    t: usize,
}

fn sample_index<R: Rng>(probs: &[f64], rng: &mut R) -> usize {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    for (i, p) in probs.iter().enumerate() {
        acc += p;
        if u < acc {
            return i;
        }
    }
    probs.iter().rposition(|p| *p > 0.0).unwrap_or(0)
}

impl TabularEnv {
    pub fn new(mdp: TabularCmdp) -> Self {
        Self { mdp, state: 0, rng: ChaCha8Rng::seed_from_u64(0), t: 0 }
    }

    pub fn mdp(&self) -> &TabularCmdp {
        &self.mdp
    }

    pub fn state(&self) -> usize {
        self.state
    }

    /// Index of the hot entry of a one-hot observation.
    pub fn state_of(obs: &[f64]) -> usize {
        obs.iter().position(|v| *v == 1.0).expect("one-hot observation")
    }

    fn one_hot(&self) -> Vec<f64> {
        let mut obs = vec![0.0; self.mdp.n_states()];
        obs[self.state] = 1.0;
        obs
    }
}

impl Env for TabularEnv {
    fn obs_dim(&self) -> usize {
        self.mdp.n_states()
    }

    fn action_space(&self) -> ActionSpace {
        ActionSpace::Discrete(self.mdp.n_actions())
    }

    fn n_costs(&self) -> usize {
        self.mdp.n_costs()
    }

    fn reset(&mut self, seed: u64) -> Vec<f64> {
        self.rng = ChaCha8Rng::seed_from_u64(seed);
        self.state = sample_index(self.mdp.start_dist(), &mut self.rng);
        self.t = 0;
        self.one_hot()
    }

    fn step(&mut self, action: &Action) -> Result<Step> {
        let a = match action {
            Action::Discrete(a) if *a < self.mdp.n_actions() => *a,
            _ => {
                return Err(Error::Environment {
                    step: self.t,
                    message: format!("expected a discrete action below {}", self.mdp.n_actions()),
                })
            }
        };
        let s = self.state;
        let next = sample_index(self.mdp.next_state_probs(s, a), &mut self.rng);
        let reward = self.mdp.reward(s, a, next);
        let costs = (0..self.mdp.n_costs()).map(|i| self.mdp.cost(i, s, a, next)).collect();
        self.state = next;
        self.t += 1;
        Ok(Step { obs: self.one_hot(), reward, costs, done: false })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tabular::{policy_return, PolicyTable, Signal};

    fn discounted_episode(env: &mut TabularEnv, pol: &PolicyTable, seed: u64, len: usize, signal: Signal) -> f64 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed);
        let mut obs = env.reset(seed);
        let gamma = env.mdp().gamma();
        let mut total = 0.0;
        for t in 0..len {
            let a = sample_index(pol.row(TabularEnv::state_of(&obs)), &mut rng);
            let step = env.step(&Action::Discrete(a)).unwrap();
            let x = match signal {
                Signal::Reward => step.reward,
                Signal::Cost(i) => step.costs[i],
            };
            total += gamma.powi(t as i32) * x;
            obs = step.obs;
        }
        total
    }

    #[test]
    fn deterministic_chain_follows_its_path() {
        // 0 -> 1 -> 2 -> 2
        let mut p = vec![0.0; 9];
        p[1] = 1.0;
        p[3 + 2] = 1.0;
        p[6 + 2] = 1.0;
        let mdp = TabularCmdp::new(3, 1, p, vec![0.0; 9], vec![], vec![1.0, 0.0, 0.0], 0.9, vec![]).unwrap();
        let mut env = TabularEnv::new(mdp);
        env.reset(4);
        let path: Vec<usize> = (0..4).map(|_| TabularEnv::state_of(&env.step(&Action::Discrete(0)).unwrap().obs)).collect();
        assert_eq!(path, vec![1, 2, 2, 2]);
    }

    #[test]
    fn geometric_return_single_state() {
        let mdp = TabularCmdp::new(1, 1, vec![1.0], vec![1.0], vec![], vec![1.0], 0.9, vec![]).unwrap();
        let mut env = TabularEnv::new(mdp);
        let pol = PolicyTable::uniform(1, 1);
        let j = discounted_episode(&mut env, &pol, 0, 400, Signal::Reward);
        assert!((j - 10.0).abs() < 1e-9);
    }

    #[test]
    fn empirical_cost_return_matches_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mdp = TabularCmdp::random(4, 2, 1, 0.8, &mut rng);
        let pol = PolicyTable::random(4, 2, &mut rng);
        let exact = policy_return(&mdp, &pol, Signal::Cost(0)).unwrap();
        let mut env = TabularEnv::new(mdp);
        let n = 10_000;
        let draws: Vec<f64> = (0..n).map(|ep| discounted_episode(&mut env, &pol, ep, 120, Signal::Cost(0))).collect();
        let m = draws.iter().sum::<f64>() / n as f64;
        let sd = (draws.iter().map(|d| (d - m).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt();
        assert!((m - exact).abs() < 3.0 * sd / (n as f64).sqrt(), "{m} vs {exact}");
    }
}
