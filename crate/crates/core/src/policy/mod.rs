//! Differentiable stochastic policies: categorical over a finite action set
//! or diagonal Gaussian with learnable log-standard-deviations, both driven
//! by a small tanh network.

pub mod checkpoint;
mod fisher;
pub mod mlp;

pub use fisher::{kl_hvp, KlHessian};

use crate::error::{Error, Result};
use mlp::{Mlp, Tape};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

const LN_2PI: f64 = 1.837_877_066_409_345_5;

/// Output distribution family.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Head {
    Categorical { n_actions: usize },
    Gaussian { act_dim: usize },
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Architecture {
    pub obs_dim: usize,
    pub hidden: Vec<usize>,
    pub head: Head,
}

impl Architecture {
    pub fn new(obs_dim: usize, hidden: Vec<usize>, head: Head) -> Self {
        Self { obs_dim, hidden, head }
    }

    pub fn network(&self) -> Mlp {
        let mut sizes = Vec::with_capacity(self.hidden.len() + 2);
        sizes.push(self.obs_dim);
        sizes.extend(&self.hidden);
        sizes.push(match self.head {
            Head::Categorical { n_actions } => n_actions,
            Head::Gaussian { act_dim } => act_dim,
        });
        Mlp::new(sizes)
    }

    pub fn n_params(&self) -> usize {
        self.network().n_params() + self.n_log_std()
    }

    fn n_log_std(&self) -> usize {
        match self.head {
            Head::Gaussian { act_dim } => act_dim,
            Head::Categorical { .. } => 0,
        }
    }
}

/// Per-state distribution parameters.
#[derive(Debug, Clone, PartialEq)]
pub enum DistParams {
    Categorical { logits: Vec<f64> },
    Gaussian { mean: Vec<f64>, log_std: Vec<f64> },
}

#[derive(Debug, Clone, PartialEq)]
pub enum Action {
    Discrete(usize),
    Continuous(Vec<f64>),
}

impl Action {
    /// Flat numeric encoding (the index for discrete actions).
    pub fn to_vec(&self) -> Vec<f64> {
        match self {
            Action::Discrete(a) => vec![*a as f64],
            Action::Continuous(v) => v.clone(),
        }
    }
}

/// Observations stored row-major, each row weighted (uniformly by default).
#[derive(Debug, Clone, Copy)]
pub struct StateSet<'a> {
    obs: &'a [f64],
    dim: usize,
    weights: Option<&'a [f64]>,
}

impl<'a> StateSet<'a> {
    pub fn uniform(obs: &'a [f64], dim: usize) -> Self {
        assert!(dim > 0 && obs.len().is_multiple_of(dim), "observation buffer is not a whole number of rows");
        Self { obs, dim, weights: None }
    }

    /// Weights are used as given; they should sum to one.
    pub fn weighted(obs: &'a [f64], dim: usize, weights: &'a [f64]) -> Self {
        assert_eq!(obs.len(), dim * weights.len(), "one weight per observation row");
        Self { obs, dim, weights: Some(weights) }
    }

    pub fn len(&self) -> usize {
        self.obs.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.obs.is_empty()
    }

    pub fn state(&self, i: usize) -> &'a [f64] {
        &self.obs[i * self.dim..(i + 1) * self.dim]
    }

    pub fn weight(&self, i: usize) -> f64 {
        match self.weights {
            Some(w) => w[i],
            None => 1.0 / self.len() as f64,
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }
}

/// A policy is an immutable pair of architecture and flat parameter vector.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamPolicy {
    arch: Architecture,
    net: Mlp,
    theta: Vec<f64>,
}

impl ParamPolicy {
    pub fn new(arch: Architecture, theta: Vec<f64>) -> Result<Self> {
        let net = arch.network();
        let expected = net.n_params() + arch.n_log_std();
        if theta.len() != expected {
            return Err(Error::Dimension(format!(
                "architecture needs {expected} parameters, got {}",
                theta.len()
            )));
        }
        if theta.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("policy parameters".into()));
        }
        Ok(Self { arch, net, theta })
    }

    /// Fan-in uniform weights (output layer scaled by 0.1), zero biases,
    /// and `log_std_init` for every Gaussian log-standard-deviation.
    pub fn init(arch: Architecture, seed: u64, log_std_init: f64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let net = arch.network();
        let mut theta = net.init_params(0.1, &mut rng);
        theta.extend(std::iter::repeat_n(log_std_init, arch.n_log_std()));
        Self { arch, net, theta }
    }

    pub fn arch(&self) -> &Architecture {
        &self.arch
    }

    pub fn theta(&self) -> &[f64] {
        &self.theta
    }

    pub fn n_params(&self) -> usize {
        self.theta.len()
    }

    pub fn obs_dim(&self) -> usize {
        self.arch.obs_dim
    }

    pub fn is_gaussian(&self) -> bool {
        matches!(self.arch.head, Head::Gaussian { .. })
    }

    /// Same architecture, new parameters.
    pub fn with_theta(&self, theta: Vec<f64>) -> Result<Self> {
        Self::new(self.arch.clone(), theta)
    }

    fn net_params(&self) -> &[f64] {
        &self.theta[..self.net.n_params()]
    }

    fn log_std(&self) -> &[f64] {
        &self.theta[self.net.n_params()..]
    }

    pub(crate) fn network(&self) -> &Mlp {
        &self.net
    }

    pub(crate) fn forward(&self, state: &[f64]) -> Tape {
        self.net.forward(self.net_params(), state)
    }

    fn check_state(&self, state: &[f64]) -> Result<()> {
        if state.len() != self.arch.obs_dim {
            return Err(Error::Dimension(format!(
                "state has {} entries, policy expects {}",
                state.len(),
                self.arch.obs_dim
            )));
        }
        if state.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("state".into()));
        }
        Ok(())
    }

    fn params_from_tape(&self, tape: &Tape) -> DistParams {
        match self.arch.head {
            Head::Categorical { .. } => DistParams::Categorical { logits: tape.output().to_vec() },
            Head::Gaussian { .. } => DistParams::Gaussian {
                mean: tape.output().to_vec(),
                log_std: self.log_std().to_vec(),
            },
        }
    }

    pub fn dist_params(&self, state: &[f64]) -> Result<DistParams> {
        self.check_state(state)?;
        Ok(self.params_from_tape(&self.forward(state)))
    }

    pub fn dist_params_batch(&self, states: StateSet<'_>) -> Vec<DistParams> {
        (0..states.len()).map(|i| self.params_from_tape(&self.forward(states.state(i)))).collect()
    }

    pub fn log_prob(&self, state: &[f64], action: &Action) -> Result<f64> {
        let params = self.dist_params(state)?;
        log_prob_of(&params, action)
    }

    /// `log pi(a|s)` and its gradient with respect to `theta`.
    pub fn log_prob_grad(&self, state: &[f64], action: &Action) -> Result<(f64, Vec<f64>)> {
        self.check_state(state)?;
        let mut grad = vec![0.0; self.n_params()];
        let lp = self.accumulate_score(state, action, 1.0, &mut grad)?;
        Ok((lp, grad))
    }

    /// `grad += coeff * d/dtheta log pi(a|s)`; returns `log pi(a|s)`.
    pub(crate) fn accumulate_score(
        &self,
        state: &[f64],
        action: &Action,
        coeff: f64,
        grad: &mut [f64],
    ) -> Result<f64> {
        let tape = self.forward(state);
        let params = self.params_from_tape(&tape);
        let lp = log_prob_of(&params, action)?;
        let n_net = self.net.n_params();
        match (&params, action) {
            (DistParams::Categorical { logits }, Action::Discrete(a)) => {
                let probs = softmax(logits);
                let upstream: Vec<f64> = probs
                    .iter()
                    .enumerate()
                    .map(|(k, p)| coeff * (if k == *a { 1.0 } else { 0.0 } - p))
                    .collect();
                self.net.backward(self.net_params(), &tape, &upstream, &mut grad[..n_net]);
            }
            (DistParams::Gaussian { mean, log_std }, Action::Continuous(x)) => {
                let mut upstream = Vec::with_capacity(mean.len());
                for k in 0..mean.len() {
                    let inv_var = (-2.0 * log_std[k]).exp();
                    let diff = x[k] - mean[k];
                    upstream.push(coeff * diff * inv_var);
                    grad[n_net + k] += coeff * (diff * diff * inv_var - 1.0);
                }
                self.net.backward(self.net_params(), &tape, &upstream, &mut grad[..n_net]);
            }
            _ => unreachable!("log_prob_of rejects mismatched actions"),
        }
        Ok(lp)
    }

    /// `sum_i coeffs[i] * d/dtheta log pi(a_i|s_i)`.
    pub fn weighted_score_sum(
        &self,
        states: StateSet<'_>,
        actions: &[Action],
        coeffs: &[f64],
    ) -> Result<Vec<f64>> {
        if actions.len() != states.len() || coeffs.len() != states.len() {
            return Err(Error::Dimension("states, actions and coefficients must align".into()));
        }
        let mut grad = vec![0.0; self.n_params()];
        for i in 0..states.len() {
            if coeffs[i] != 0.0 {
                self.accumulate_score(states.state(i), &actions[i], coeffs[i], &mut grad)?;
            }
        }
        Ok(grad)
    }

    pub fn sample<R: Rng + ?Sized>(&self, state: &[f64], rng: &mut R) -> Result<Action> {
        let params = self.dist_params(state)?;
        Ok(sample_from(&params, rng))
    }

    /// Sample with a fresh generator seeded by `seed`.
    pub fn sample_seeded(&self, state: &[f64], seed: u64) -> Result<Action> {
        self.sample(state, &mut ChaCha8Rng::seed_from_u64(seed))
    }

    /// Mean of the distribution (argmax for categorical).
    pub fn mode(&self, state: &[f64]) -> Result<Action> {
        Ok(match self.dist_params(state)? {
            DistParams::Categorical { logits } => Action::Discrete(argmax(&logits)),
            DistParams::Gaussian { mean, .. } => Action::Continuous(mean),
        })
    }
}

pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|z| (z - max).exp()).collect();
    let total: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / total).collect()
}

fn log_softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lse = max + logits.iter().map(|z| (z - max).exp()).sum::<f64>().ln();
    logits.iter().map(|z| z - lse).collect()
}

fn argmax(x: &[f64]) -> usize {
    x.iter()
        .enumerate()
        .fold((0, f64::NEG_INFINITY), |acc, (i, &v)| if v > acc.1 { (i, v) } else { acc })
        .0
}

pub fn log_prob_of(params: &DistParams, action: &Action) -> Result<f64> {
    match (params, action) {
        (DistParams::Categorical { logits }, Action::Discrete(a)) => {
            if *a >= logits.len() {
                return Err(Error::Dimension(format!("action {a} out of {} actions", logits.len())));
            }
            Ok(log_softmax(logits)[*a])
        }
        (DistParams::Gaussian { mean, log_std }, Action::Continuous(x)) => {
            if x.len() != mean.len() {
                return Err(Error::Dimension("action dimension".into()));
            }
            let mut lp = -0.5 * mean.len() as f64 * LN_2PI;
            for k in 0..mean.len() {
                let z = (x[k] - mean[k]) * (-log_std[k]).exp();
                lp -= 0.5 * z * z + log_std[k];
            }
            Ok(lp)
        }
        _ => Err(Error::Dimension("action kind does not match policy head".into())),
    }
}

/// Closed-form `D_KL(p || q)`.
pub fn kl_between(p: &DistParams, q: &DistParams) -> f64 {
    match (p, q) {
        (DistParams::Categorical { logits: lp }, DistParams::Categorical { logits: lq }) => {
            let (a, b) = (log_softmax(lp), log_softmax(lq));
            a.iter().zip(&b).map(|(x, y)| x.exp() * (x - y)).sum()
        }
        (
            DistParams::Gaussian { mean: m1, log_std: s1 },
            DistParams::Gaussian { mean: m2, log_std: s2 },
        ) => (0..m1.len())
            .map(|k| {
                let var_ratio = (2.0 * (s1[k] - s2[k])).exp();
                let d = (m1[k] - m2[k]) * (-s2[k]).exp();
                s2[k] - s1[k] + 0.5 * (var_ratio + d * d) - 0.5
            })
            .sum(),
        _ => panic!("KL between different distribution families"),
    }
}

fn sample_from<R: Rng + ?Sized>(params: &DistParams, rng: &mut R) -> Action {
    match params {
        DistParams::Categorical { logits } => {
            let probs = softmax(logits);
            let u: f64 = rng.random();
            let mut acc = 0.0;
            for (k, p) in probs.iter().enumerate() {
                acc += p;
                if u < acc {
                    return Action::Discrete(k);
                }
            }
            // u landed in the rounding gap above the last cumulative sum
            Action::Discrete(probs.iter().rposition(|p| *p > 0.0).unwrap_or(0))
        }
        DistParams::Gaussian { mean, log_std } => Action::Continuous(
            mean.iter()
                .zip(log_std)
                .map(|(m, s)| {
                    let z: f64 = StandardNormal.sample(rng);
                    m + s.exp() * z
                })
                .collect(),
        ),
    }
}

/// `sum_i w_i D_KL(pi_new(.|s_i) || pi_old(.|s_i))`.
pub fn mean_kl(pol_new: &ParamPolicy, pol_old: &ParamPolicy, states: StateSet<'_>) -> f64 {
    (0..states.len())
        .map(|i| {
            let s = states.state(i);
            let p = pol_new.params_from_tape(&pol_new.forward(s));
            let q = pol_old.params_from_tape(&pol_old.forward(s));
            states.weight(i) * kl_between(&p, &q)
        })
        .sum()
}

/// Same as [`mean_kl`] with the old distributions precomputed.
pub fn mean_kl_to(pol_new: &ParamPolicy, old: &[DistParams], states: StateSet<'_>) -> f64 {
    (0..states.len())
        .map(|i| {
            let p = pol_new.params_from_tape(&pol_new.forward(states.state(i)));
            states.weight(i) * kl_between(&p, &old[i])
        })
        .sum()
}

/// Gradient of [`mean_kl`] with respect to the new policy's parameters.
pub fn mean_kl_grad(pol_new: &ParamPolicy, pol_old: &ParamPolicy, states: StateSet<'_>) -> Vec<f64> {
    let n_net = pol_new.net.n_params();
    let mut grad = vec![0.0; pol_new.n_params()];
    for i in 0..states.len() {
        let s = states.state(i);
        let w = states.weight(i);
        let tape = pol_new.forward(s);
        let p = pol_new.params_from_tape(&tape);
        let q = pol_old.params_from_tape(&pol_old.forward(s));
        let upstream: Vec<f64> = match (&p, &q) {
            (DistParams::Categorical { logits: zp }, DistParams::Categorical { logits: zq }) => {
                let (lp, lq) = (log_softmax(zp), log_softmax(zq));
                let kl: f64 = lp.iter().zip(&lq).map(|(a, b)| a.exp() * (a - b)).sum();
                lp.iter().zip(&lq).map(|(a, b)| w * a.exp() * (a - b - kl)).collect()
            }
            (
                DistParams::Gaussian { mean: m1, log_std: s1 },
                DistParams::Gaussian { mean: m2, log_std: s2 },
            ) => {
                let mut up = Vec::with_capacity(m1.len());
                for k in 0..m1.len() {
                    let inv_var_old = (-2.0 * s2[k]).exp();
                    up.push(w * (m1[k] - m2[k]) * inv_var_old);
                    grad[n_net + k] += w * ((2.0 * (s1[k] - s2[k])).exp() - 1.0);
                }
                up
            }
            _ => panic!("KL between different distribution families"),
        };
        pol_new.net.backward(pol_new.net_params(), &tape, &upstream, &mut grad[..n_net]);
    }
    grad
}
