use crate::env::Env;
use crate::error::{Error, Result};
use crate::policy::{Action, ParamPolicy, StateSet};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::io::Write;
use std::ops::Range;

/// Time-major on-policy samples with episode boundaries.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct TrajectoryBatch {
    pub obs_dim: usize,
    /// Row-major `(steps x obs_dim)`.
    pub states: Vec<f64>,
    pub actions: Vec<Action>,
    pub rewards: Vec<f64>,
    /// `costs[i][t]` for constraint `i`.
    pub costs: Vec<Vec<f64>>,
    pub log_probs: Vec<f64>,
    pub episode_start: Vec<bool>,
    /// Episode lengths in order; they sum to the number of steps.
    pub lengths: Vec<usize>,
    /// Per episode: ended by the environment rather than by a length cap.
    pub terminated: Vec<bool>,
}

impl TrajectoryBatch {
    pub fn empty(obs_dim: usize, n_costs: usize) -> Self {
        Self { obs_dim, costs: vec![Vec::new(); n_costs], ..Self::default() }
    }

    pub fn len(&self) -> usize {
        self.rewards.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rewards.is_empty()
    }

    pub fn n_costs(&self) -> usize {
        self.costs.len()
    }

    pub fn n_episodes(&self) -> usize {
        self.lengths.len()
    }

    pub fn state(&self, t: usize) -> &[f64] {
        &self.states[t * self.obs_dim..(t + 1) * self.obs_dim]
    }

    pub fn state_set(&self) -> StateSet<'_> {
        StateSet::uniform(&self.states, self.obs_dim)
    }

    pub fn episodes(&self) -> Vec<Range<usize>> {
        let mut start = 0;
        self.lengths
            .iter()
            .map(|&len| {
                let r = start..start + len;
                start += len;
                r
            })
            .collect()
    }

    /// `sum_t gamma^t x_t` for every episode.
    pub fn episode_discounted_sums(&self, signal: &[f64], gamma: f64) -> Vec<f64> {
        self.episodes()
            .into_iter()
            .map(|r| signal[r].iter().rev().fold(0.0, |acc, x| x + gamma * acc))
            .collect()
    }

    /// Mean over episodes of the discounted sum of `signal`.
    pub fn mean_discounted_return(&self, signal: &[f64], gamma: f64) -> f64 {
        let sums = self.episode_discounted_sums(signal, gamma);
        if sums.is_empty() {
            0.0
        } else {
            sums.iter().sum::<f64>() / sums.len() as f64
        }
    }

    /// Append another batch (same shapes) after this one.
    pub fn extend(&mut self, other: TrajectoryBatch) {
        assert_eq!(self.obs_dim, other.obs_dim);
        assert_eq!(self.costs.len(), other.costs.len());
        self.states.extend(other.states);
        self.actions.extend(other.actions);
        self.rewards.extend(other.rewards);
        for (c, o) in self.costs.iter_mut().zip(other.costs) {
            c.extend(o);
        }
        self.log_probs.extend(other.log_probs);
        self.episode_start.extend(other.episode_start);
        self.lengths.extend(other.lengths);
        self.terminated.extend(other.terminated);
    }

    /// One row per step: `episode,t,s0..,a0..,reward,cost0..,log_prob`.
    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        let act_dim = self.actions.first().map_or(0, |a| a.to_vec().len());
        let mut header = vec!["episode".to_string(), "t".to_string()];
        header.extend((0..self.obs_dim).map(|i| format!("s{i}")));
        header.extend((0..act_dim).map(|i| format!("a{i}")));
        header.push("reward".into());
        header.extend((0..self.n_costs()).map(|i| format!("cost{i}")));
        header.push("log_prob".into());
        writeln!(out, "{}", header.join(","))?;
        for (ep, range) in self.episodes().into_iter().enumerate() {
            for (t, step) in range.enumerate() {
                let mut row = vec![ep.to_string(), t.to_string()];
                row.extend(self.state(step).iter().map(|v| v.to_string()));
                row.extend(self.actions[step].to_vec().iter().map(|v| v.to_string()));
                row.push(self.rewards[step].to_string());
                row.extend(self.costs.iter().map(|c| c[step].to_string()));
                row.push(self.log_probs[step].to_string());
                writeln!(out, "{}", row.join(","))?;
            }
        }
        Ok(())
    }
}

/// Collect `total_steps` transitions, restarting the environment whenever an
/// episode ends or reaches `max_path_length`. The final episode is cut short
/// if the step budget runs out. Everything is determined by `seed`.
pub fn rollout(
    env: &mut dyn Env,
    policy: &ParamPolicy,
    total_steps: usize,
    max_path_length: usize,
    seed: u64,
) -> Result<TrajectoryBatch> {
    if env.obs_dim() != policy.obs_dim() {
        return Err(Error::Dimension(format!(
            "environment observations have {} entries, policy expects {}",
            env.obs_dim(),
            policy.obs_dim()
        )));
    }
    if max_path_length == 0 {
        return Err(Error::Config("max_path_length must be positive".into()));
    }
    let mut batch = TrajectoryBatch::empty(env.obs_dim(), env.n_costs());
    let mut action_rng = ChaCha8Rng::seed_from_u64(seed);
    let mut episode_rng = ChaCha8Rng::seed_from_u64(seed);
    episode_rng.set_stream(1);
    let mut step = 0;
    while step < total_steps {
        let mut obs = env.reset(episode_rng.random());
        let mut len = 0;
        let mut terminated = false;
        while step < total_steps && len < max_path_length {
            let action = policy.sample(&obs, &mut action_rng)?;
            let log_prob = policy.log_prob(&obs, &action)?;
            if !log_prob.is_finite() {
                return Err(Error::Environment { step, message: "sampled action has non-finite log-probability".into() });
            }
            let out = env.step(&action).map_err(|e| match e {
                Error::Environment { message, .. } => Error::Environment { step, message },
                other => other,
            })?;
            if out.obs.iter().any(|v| !v.is_finite()) || !out.reward.is_finite() || out.costs.iter().any(|c| !c.is_finite()) {
                return Err(Error::Environment { step, message: "environment produced a non-finite value".into() });
            }
            batch.states.extend_from_slice(&obs);
            batch.actions.push(action);
            batch.rewards.push(out.reward);
            for (c, v) in batch.costs.iter_mut().zip(&out.costs) {
                c.push(*v);
            }
            batch.log_probs.push(log_prob);
            batch.episode_start.push(len == 0);
            obs = out.obs;
            len += 1;
            step += 1;
            if out.done {
                terminated = true;
                break;
            }
        }
        batch.lengths.push(len);
        batch.terminated.push(terminated);
    }
    Ok(batch)
}

/// [`rollout`] split across `workers` threads, each with its own environment
/// from `make_env` and a seed derived from `seed` and the worker index.
/// Results are concatenated in worker order, so the batch depends only on
/// `(seed, workers)`.
pub fn rollout_parallel<F>(
    make_env: F,
    policy: &ParamPolicy,
    total_steps: usize,
    max_path_length: usize,
    seed: u64,
    workers: usize,
) -> Result<TrajectoryBatch>
where
    F: Fn() -> Box<dyn Env> + Sync,
{
    let workers = workers.max(1);
    if workers == 1 {
        return rollout(make_env().as_mut(), policy, total_steps, max_path_length, seed);
    }
    let share = |w: usize| total_steps / workers + usize::from(w < total_steps % workers);
    let results: Vec<Result<TrajectoryBatch>> = std::thread::scope(|scope| {
        let handles: Vec<_> = (0..workers)
            .map(|w| {
                let make_env = &make_env;
                scope.spawn(move || {
                    let worker_seed = seed.wrapping_mul(0x9E37_79B9_7F4A_7C15).wrapping_add(w as u64);
                    rollout(make_env().as_mut(), policy, share(w), max_path_length, worker_seed)
                })
            })
            .collect();
        handles.into_iter().map(|h| h.join().expect("rollout worker panicked")).collect()
    });
    let mut merged: Option<TrajectoryBatch> = None;
    for r in results {
        let b = r?;
        match merged.as_mut() {
            Some(m) => m.extend(b),
            None => merged = Some(b),
        }
    }
    Ok(merged.expect("at least one worker"))
}
