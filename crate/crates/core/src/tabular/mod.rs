//! Finite constrained MDPs and exact linear-algebra evaluation of them.
//!
//! Everything in this module is computed in closed form with dense LU
//! solves, so it serves as ground truth for the sampled pipeline and for
//! checking the performance-difference bounds.

mod bounds;
mod oracle;

pub use bounds::{
    bound_report, bound_report_for, dist_shift_bound_check, kl_bound_check, kl_divergence,
    mean_kl_under, proposition_bounds, total_variation, trust_region_penalty, BoundReport,
    DistShiftCheck, PinskerCheck, PropositionReport,
};
pub use oracle::{
    discounted_state_dist, expected_signal, performance_difference, policy_return,
    policy_transition_matrix, return_via_probe, signal_values, surrogate_advantage, value_set,
    SignalValues, ValueSet,
};

use crate::error::{Error, Result};
use rand::Rng;
use rand_distr::{Distribution, Exp1};

const PROB_TOL: f64 = 1e-12;

/// Which per-transition signal to evaluate: the reward or one of the costs.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Signal {
    Reward,
    Cost(usize),
}

/// A finite CMDP `(S, A, R, P, mu, gamma)` with auxiliary costs `C_i` and limits `d_i`.
///
/// Tensors indexed by `(s, a, s')` are stored flat in row-major order.
#[derive(Debug, Clone, PartialEq)]
pub struct TabularCmdp {
    n_states: usize,
    n_actions: usize,
    transition: Vec<f64>,
    reward: Vec<f64>,
    costs: Vec<Vec<f64>>,
    start_dist: Vec<f64>,
    gamma: f64,
    limits: Vec<f64>,
}

impl TabularCmdp {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        n_states: usize,
        n_actions: usize,
        transition: Vec<f64>,
        reward: Vec<f64>,
        costs: Vec<Vec<f64>>,
        start_dist: Vec<f64>,
        gamma: f64,
        limits: Vec<f64>,
    ) -> Result<Self> {
        if n_states == 0 || n_actions == 0 {
            return Err(Error::InvalidModel("need at least one state and one action".into()));
        }
        let sas = n_states * n_actions * n_states;
        if transition.len() != sas || reward.len() != sas {
            return Err(Error::Dimension(format!(
                "transition/reward tensors must have {sas} entries"
            )));
        }
        if costs.iter().any(|c| c.len() != sas) {
            return Err(Error::Dimension(format!("cost tensors must have {sas} entries")));
        }
        if costs.len() != limits.len() {
            return Err(Error::Dimension(format!(
                "{} cost functions but {} limits",
                costs.len(),
                limits.len()
            )));
        }
        if start_dist.len() != n_states {
            return Err(Error::Dimension("start distribution length".into()));
        }
        if !(0.0..1.0).contains(&gamma) {
            return Err(Error::InvalidModel(format!("gamma must lie in [0, 1), got {gamma}")));
        }
        if transition.iter().chain(&start_dist).any(|p| !(*p >= 0.0)) {
            return Err(Error::InvalidModel("probabilities must be nonnegative".into()));
        }
        for (row_idx, row) in transition.chunks(n_states).enumerate() {
            let total: f64 = row.iter().sum();
            if (total - 1.0).abs() > PROB_TOL {
                return Err(Error::InvalidModel(format!(
                    "P(.|s={}, a={}) sums to {total}",
                    row_idx / n_actions,
                    row_idx % n_actions
                )));
            }
        }
        let mu_total: f64 = start_dist.iter().sum();
        if (mu_total - 1.0).abs() > PROB_TOL {
            return Err(Error::InvalidModel(format!("start distribution sums to {mu_total}")));
        }
        if reward.iter().chain(costs.iter().flatten()).any(|x| !x.is_finite()) {
            return Err(Error::NonFinite("reward or cost tensor".into()));
        }
        Ok(Self { n_states, n_actions, transition, reward, costs, start_dist, gamma, limits })
    }

    /// Random CMDP: Dirichlet(1) transition rows and start distribution,
    /// rewards and costs uniform on [-1, 1].
    pub fn random<R: Rng + ?Sized>(
        n_states: usize,
        n_actions: usize,
        n_costs: usize,
        gamma: f64,
        rng: &mut R,
    ) -> Self {
        let sas = n_states * n_actions * n_states;
        let mut transition = Vec::with_capacity(sas);
        for _ in 0..n_states * n_actions {
            transition.extend(dirichlet_ones(n_states, rng));
        }
        let reward = (0..sas).map(|_| rng.random_range(-1.0..=1.0)).collect();
        let costs = (0..n_costs)
            .map(|_| (0..sas).map(|_| rng.random_range(-1.0..=1.0)).collect())
            .collect();
        let start_dist = dirichlet_ones(n_states, rng);
        let limits = vec![0.0; n_costs];
        Self::new(n_states, n_actions, transition, reward, costs, start_dist, gamma, limits)
            .expect("random CMDP is valid by construction")
    }

    pub fn n_states(&self) -> usize {
        self.n_states
    }

    pub fn n_actions(&self) -> usize {
        self.n_actions
    }

    pub fn n_costs(&self) -> usize {
        self.costs.len()
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    pub fn start_dist(&self) -> &[f64] {
        &self.start_dist
    }

    pub fn limits(&self) -> &[f64] {
        &self.limits
    }

    pub fn with_limits(mut self, limits: Vec<f64>) -> Result<Self> {
        if limits.len() != self.costs.len() {
            return Err(Error::Dimension("one limit per cost function".into()));
        }
        self.limits = limits;
        Ok(self)
    }

    #[inline]
    pub(crate) fn idx(&self, s: usize, a: usize, s_next: usize) -> usize {
        (s * self.n_actions + a) * self.n_states + s_next
    }

    /// `P(.|s, a)` as a slice over next states.
    pub fn next_state_probs(&self, s: usize, a: usize) -> &[f64] {
        let start = self.idx(s, a, 0);
        &self.transition[start..start + self.n_states]
    }

    pub fn prob(&self, s: usize, a: usize, s_next: usize) -> f64 {
        self.transition[self.idx(s, a, s_next)]
    }

    pub fn reward(&self, s: usize, a: usize, s_next: usize) -> f64 {
        self.reward[self.idx(s, a, s_next)]
    }

    pub fn cost(&self, i: usize, s: usize, a: usize, s_next: usize) -> f64 {
        self.costs[i][self.idx(s, a, s_next)]
    }

    /// Per-transition value of `signal`.
    pub fn signal(&self, signal: Signal, s: usize, a: usize, s_next: usize) -> f64 {
        match signal {
            Signal::Reward => self.reward(s, a, s_next),
            Signal::Cost(i) => self.cost(i, s, a, s_next),
        }
    }

    pub(crate) fn check_signal(&self, signal: Signal) -> Result<()> {
        match signal {
            Signal::Cost(index) if index >= self.costs.len() => {
                Err(Error::CostIndex { index, count: self.costs.len() })
            }
            _ => Ok(()),
        }
    }

    pub(crate) fn check_policy(&self, pol: &PolicyTable) -> Result<()> {
        if pol.n_states() != self.n_states || pol.n_actions() != self.n_actions {
            return Err(Error::Dimension(format!(
                "policy is {}x{}, MDP has {} states and {} actions",
                pol.n_states(),
                pol.n_actions(),
                self.n_states,
                self.n_actions
            )));
        }
        Ok(())
    }
}

/// A stationary policy table `pi(a|s)`.
#[derive(Debug, Clone, PartialEq)]
pub struct PolicyTable {
    n_states: usize,
    n_actions: usize,
    probs: Vec<f64>,
}

impl PolicyTable {
    pub fn new(n_states: usize, n_actions: usize, probs: Vec<f64>) -> Result<Self> {
        if probs.len() != n_states * n_actions {
            return Err(Error::Dimension("policy table size".into()));
        }
        if probs.iter().any(|p| !(*p >= 0.0)) {
            return Err(Error::InvalidModel("policy probabilities must be nonnegative".into()));
        }
        for (s, row) in probs.chunks(n_actions).enumerate() {
            let total: f64 = row.iter().sum();
            if (total - 1.0).abs() > PROB_TOL {
                return Err(Error::InvalidModel(format!("pi(.|{s}) sums to {total}")));
            }
        }
        Ok(Self { n_states, n_actions, probs })
    }

    pub fn uniform(n_states: usize, n_actions: usize) -> Self {
        Self { n_states, n_actions, probs: vec![1.0 / n_actions as f64; n_states * n_actions] }
    }

    /// Deterministic policy choosing `actions[s]` in state `s`.
    pub fn deterministic(n_actions: usize, actions: &[usize]) -> Result<Self> {
        let mut probs = vec![0.0; actions.len() * n_actions];
        for (s, &a) in actions.iter().enumerate() {
            if a >= n_actions {
                return Err(Error::Dimension(format!("action {a} >= {n_actions}")));
            }
            probs[s * n_actions + a] = 1.0;
        }
        Ok(Self { n_states: actions.len(), n_actions, probs })
    }

    /// Dirichlet(1) rows: full support almost surely.
    pub fn random<R: Rng + ?Sized>(n_states: usize, n_actions: usize, rng: &mut R) -> Self {
        let probs = (0..n_states).flat_map(|_| dirichlet_ones(n_actions, rng)).collect();
        Self { n_states, n_actions, probs }
    }

    pub fn n_states(&self) -> usize {
        self.n_states
    }

    pub fn n_actions(&self) -> usize {
        self.n_actions
    }

    pub fn row(&self, s: usize) -> &[f64] {
        &self.probs[s * self.n_actions..(s + 1) * self.n_actions]
    }

    pub fn prob(&self, s: usize, a: usize) -> f64 {
        self.probs[s * self.n_actions + a]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.probs
    }
}

/// Flat Dirichlet(1, ..., 1) sample via normalized exponentials.
fn dirichlet_ones<R: Rng + ?Sized>(n: usize, rng: &mut R) -> Vec<f64> {
    let draws: Vec<f64> = (0..n).map(|_| Exp1.sample(rng)).collect();
    let total: f64 = draws.iter().sum();
    let mut out: Vec<f64> = draws.iter().map(|x| x / total).collect();
    // push the rounding residue into the largest entry so the row sums to 1
    let residue = 1.0 - out.iter().sum::<f64>();
    let (imax, _) = out
        .iter()
        .enumerate()
        .fold((0, f64::MIN), |acc, (i, &v)| if v > acc.1 { (i, v) } else { acc });
    out[imax] += residue;
    out
}
