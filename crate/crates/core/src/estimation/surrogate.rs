use super::TrajectoryBatch;
use crate::error::{Error, Result};
use crate::linalg::all_finite;
use crate::natural_gradient::HvpHandle;
use crate::policy::{kl_between, kl_hvp, mean_kl_to, Action, DistParams, ParamPolicy, StateSet};
use crate::tabular::{discounted_state_dist, policy_return, signal_values, PolicyTable, Signal, TabularCmdp};

/// Local model of one policy update: the objective gradient `g`, constraint
/// gradients `b_i`, offsets `c_i = J_Ci - d_i`, trust-region size, the KL
/// metric, and a way to score candidate policies.
pub struct SurrogateModel {
    pub g: Vec<f64>,
    pub b_list: Vec<Vec<f64>>,
    pub c_list: Vec<f64>,
    pub delta: f64,
    pub hvp: HvpHandle<'static>,
    pub evaluator: Box<dyn SurrogateEvaluator>,
}

impl std::fmt::Debug for SurrogateModel {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("SurrogateModel")
            .field("g", &self.g)
            .field("b_list", &self.b_list)
            .field("c_list", &self.c_list)
            .field("delta", &self.delta)
            .finish_non_exhaustive()
    }
}

impl SurrogateModel {
    pub fn n_constraints(&self) -> usize {
        self.c_list.len()
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.delta > 0.0) {
            return Err(Error::Config(format!("trust region size must be positive, got {}", self.delta)));
        }
        if !all_finite(&self.g) || !all_finite(&self.c_list) || self.b_list.iter().any(|b| !all_finite(b)) {
            return Err(Error::NonFinite("surrogate gradients".into()));
        }
        Ok(())
    }
}

/// Candidate scores relative to the policy the model was built at.
#[derive(Debug, Clone, PartialEq)]
pub struct SurrogateEval {
    /// Surrogate objective change; zero at the old policy.
    pub improvement: f64,
    /// `c_i` plus the surrogate constraint change, i.e. predicted `J_Ci - d_i`.
    pub constraints: Vec<f64>,
    pub kl: f64,
}

pub trait SurrogateEvaluator: Send + Sync {
    fn evaluate(&self, candidate: &ParamPolicy) -> Result<SurrogateEval>;
}

/// Reward advantages (normalised) and raw cost advantages for a batch.
#[derive(Debug, Clone, PartialEq)]
pub struct Advantages {
    pub reward: Vec<f64>,
    pub costs: Vec<Vec<f64>>,
}

/// Importance-sampled surrogates over the batch states.
pub struct SampledEvaluator {
    states: Vec<f64>,
    obs_dim: usize,
    actions: Vec<Action>,
    old_log_probs: Vec<f64>,
    old_dists: Vec<DistParams>,
    reward_adv: Vec<f64>,
    cost_adv: Vec<Vec<f64>>,
    c_list: Vec<f64>,
    /// Per-step weight turning a batch sum into `(1 / (1 - gamma)) E_{d^pi}`.
    cost_weights: Vec<f64>,
}

impl SurrogateEvaluator for SampledEvaluator {
    fn evaluate(&self, candidate: &ParamPolicy) -> Result<SurrogateEval> {
        let set = StateSet::uniform(&self.states, self.obs_dim);
        let n = self.actions.len() as f64;
        let mut improvement = 0.0;
        let mut deltas = vec![0.0; self.cost_adv.len()];
        for t in 0..self.actions.len() {
            let lp = candidate.log_prob(set.state(t), &self.actions[t])?;
            let w = (lp - self.old_log_probs[t]).exp() - 1.0;
            improvement += w * self.reward_adv[t] / n;
            for (d, adv) in deltas.iter_mut().zip(&self.cost_adv) {
                *d += w * adv[t] * self.cost_weights[t];
            }
        }
        let constraints = self.c_list.iter().zip(&deltas).map(|(c, d)| c + d).collect();
        let kl = mean_kl_to(candidate, &self.old_dists, set);
        Ok(SurrogateEval { improvement, constraints, kl })
    }
}

/// Linearise around the sampling policy: `g = mean(A_t grad log pi)`,
/// `b_i = (1 / (1 - gamma)) E_{d^pi}[A_Ci grad log pi]` and
/// `c_i = cost_returns[i] - limits[i]`. The KL metric uses every batch state.
///
/// Episodes end, so a plain step average is not a sample of `d^pi`: the
/// expectation is estimated as `(1 - gamma) / n_episodes * sum_t gamma^tau
/// X_t` with `tau` the time within the episode. The `1 / (1 - gamma)`
/// factor then cancels and `b_i` is the per-episode discounted sum that
/// matches the scale of `c_i`. A plain average over-weights the constraint
/// gradient by about `1 / ((1 - gamma) * horizon)` on short episodes.
pub fn build_surrogates(
    batch: &TrajectoryBatch,
    policy: &ParamPolicy,
    advantages: &Advantages,
    cost_returns: &[f64],
    limits: &[f64],
    gamma: f64,
    delta: f64,
    damping: f64,
) -> Result<SurrogateModel> {
    if batch.is_empty() {
        return Err(Error::Precondition("cannot build surrogates from an empty batch".into()));
    }
    let m = advantages.costs.len();
    if cost_returns.len() != m || limits.len() != m {
        return Err(Error::Dimension(format!(
            "{m} cost advantage vectors, {} cost returns, {} limits",
            cost_returns.len(),
            limits.len()
        )));
    }
    let n = batch.len();
    if advantages.reward.len() != n || advantages.costs.iter().any(|a| a.len() != n) {
        return Err(Error::Dimension("advantages must have one entry per step".into()));
    }
    let states = batch.state_set();
    let scale = 1.0 / n as f64;
    let coeffs: Vec<f64> = advantages.reward.iter().map(|a| a * scale).collect();
    let g = policy.weighted_score_sum(states, &batch.actions, &coeffs)?;
    let cost_weights = discounted_episode_weights(batch, gamma);
    let b_list = advantages
        .costs
        .iter()
        .map(|adv| {
            let coeffs: Vec<f64> = adv.iter().zip(&cost_weights).map(|(a, w)| a * w).collect();
            policy.weighted_score_sum(states, &batch.actions, &coeffs)
        })
        .collect::<Result<Vec<_>>>()?;
    let c_list: Vec<f64> = cost_returns.iter().zip(limits).map(|(j, d)| j - d).collect();
    let evaluator = SampledEvaluator {
        states: batch.states.clone(),
        obs_dim: batch.obs_dim,
        actions: batch.actions.clone(),
        old_log_probs: batch.log_probs.clone(),
        old_dists: policy.dist_params_batch(states),
        reward_adv: advantages.reward.clone(),
        cost_adv: advantages.costs.clone(),
        c_list: c_list.clone(),
        cost_weights,
    };
    let model = SurrogateModel {
        g,
        b_list,
        c_list,
        delta,
        hvp: kl_hvp(policy, states, damping),
        evaluator: Box::new(evaluator),
    };
    model.validate()?;
    Ok(model)
}

/// `gamma^tau / n_episodes` for every step, `tau` counted from episode start.
fn discounted_episode_weights(batch: &TrajectoryBatch, gamma: f64) -> Vec<f64> {
    let episodes = batch.episodes();
    let n_ep = episodes.len().max(1) as f64;
    let mut weights = Vec::with_capacity(batch.len());
    for ep in episodes {
        let mut discount = 1.0;
        for _ in ep {
            weights.push(discount / n_ep);
            discount *= gamma;
        }
    }
    weights
}

fn one_hot(n: usize, i: usize) -> Vec<f64> {
    let mut v = vec![0.0; n];
    v[i] = 1.0;
    v
}

/// Action probabilities of a categorical policy over one-hot states.
pub fn policy_table(policy: &ParamPolicy, n_states: usize) -> Result<PolicyTable> {
    let mut probs = Vec::new();
    for s in 0..n_states {
        match policy.dist_params(&one_hot(n_states, s))? {
            DistParams::Categorical { logits } => probs.extend(crate::policy::softmax(&logits)),
            DistParams::Gaussian { .. } => {
                return Err(Error::Precondition("tabular policies need a categorical head".into()))
            }
        }
    }
    PolicyTable::new(n_states, probs.len() / n_states.max(1), probs)
}

/// Surrogates evaluated exactly under the discounted state distribution of
/// the current policy.
pub struct TabularEvaluator {
    n_states: usize,
    weights: Vec<f64>,
    reward_adv: Vec<f64>,
    cost_adv: Vec<Vec<f64>>,
    c_list: Vec<f64>,
    cost_scale: f64,
    old_dists: Vec<DistParams>,
}

impl SurrogateEvaluator for TabularEvaluator {
    fn evaluate(&self, candidate: &ParamPolicy) -> Result<SurrogateEval> {
        let table = policy_table(candidate, self.n_states)?;
        let na = table.n_actions();
        let expect = |adv: &[f64]| -> f64 {
            (0..self.n_states)
                .map(|s| self.weights[s] * (0..na).map(|a| table.prob(s, a) * adv[s * na + a]).sum::<f64>())
                .sum()
        };
        let improvement = expect(&self.reward_adv);
        let constraints =
            self.c_list.iter().zip(&self.cost_adv).map(|(c, adv)| c + self.cost_scale * expect(adv)).collect();
        let kl = (0..self.n_states)
            .map(|s| {
                let p = candidate.dist_params(&one_hot(self.n_states, s)).expect("state dimension checked above");
                self.weights[s] * kl_between(&p, &self.old_dists[s])
            })
            .sum();
        Ok(SurrogateEval { improvement, constraints, kl })
    }
}

/// Exact surrogates for a categorical policy on one-hot states of `mdp`:
/// expectations under `d^pi` and `pi` replace batch averages and the
/// advantages are the true ones.
pub fn exact_tabular_surrogates(
    mdp: &TabularCmdp,
    policy: &ParamPolicy,
    delta: f64,
    damping: f64,
) -> Result<SurrogateModel> {
    let ns = mdp.n_states();
    let table = policy_table(policy, ns)?;
    let na = table.n_actions();
    let d = discounted_state_dist(mdp, &table)?;
    let obs: Vec<f64> = (0..ns).flat_map(|s| one_hot(ns, s)).collect();
    let pair_obs: Vec<f64> = (0..ns).flat_map(|s| (0..na).flat_map(move |_| one_hot(ns, s))).collect();
    let pair_actions: Vec<Action> = (0..ns).flat_map(|_| (0..na).map(Action::Discrete)).collect();
    let pairs = StateSet::uniform(&pair_obs, ns);
    let gradient = |adv: &[f64], scale: f64| {
        let coeffs: Vec<f64> =
            (0..ns * na).map(|i| scale * d[i / na] * table.prob(i / na, i % na) * adv[i]).collect();
        policy.weighted_score_sum(pairs, &pair_actions, &coeffs)
    };
    let reward_adv = signal_values(mdp, &table, Signal::Reward)?.adv;
    let cost_scale = 1.0 / (1.0 - mdp.gamma());
    let mut cost_adv = Vec::new();
    let mut c_list = Vec::new();
    for i in 0..mdp.n_costs() {
        cost_adv.push(signal_values(mdp, &table, Signal::Cost(i))?.adv);
        c_list.push(policy_return(mdp, &table, Signal::Cost(i))? - mdp.limits()[i]);
    }
    let g = gradient(&reward_adv, 1.0)?;
    let b_list = cost_adv.iter().map(|adv| gradient(adv, cost_scale)).collect::<Result<Vec<_>>>()?;
    let states = StateSet::weighted(&obs, ns, &d);
    let evaluator = TabularEvaluator {
        n_states: ns,
        weights: d.clone(),
        reward_adv,
        cost_adv,
        c_list: c_list.clone(),
        cost_scale,
        old_dists: policy.dist_params_batch(states),
    };
    let model = SurrogateModel { g, b_list, c_list, delta, hvp: kl_hvp(policy, states, damping), evaluator: Box::new(evaluator) };
    model.validate()?;
    Ok(model)
}
