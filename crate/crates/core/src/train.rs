//! The training loop: rollouts, cost shaping, advantage estimation,
//! surrogate construction, and one policy update per iteration, with a
//! metrics row and periodic checkpoints.

use crate::algorithms::{cpo_update, fpo_update, pdo_update, penalized_rewards, trpo_update, DualState, UpdateResult};
use crate::config::{Algorithm, RunConfig};
use crate::env::{ActionSpace, Env, EnvSpec};
use crate::error::{Error, Result};
use crate::estimation::{build_surrogates, rollout_parallel, Critics, TrajectoryBatch};
use crate::policy::{checkpoint, Architecture, Head, ParamPolicy};
use crate::shaping::CostShaper;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

/// Column order of the metrics file (schema version 1).
pub const METRICS_HEADER: &str = "iteration,steps,mean_return,mean_cost_return,mean_shaped_cost_return,predictor_loss,\
c_estimate,lambda_star,nu_star,case_tag,kl,backtracks,accepted";

#[derive(Debug, Clone, PartialEq)]
pub struct IterationMetrics {
    pub iteration: usize,
    /// Environment steps so far, this iteration included.
    pub steps: usize,
    /// Mean undiscounted episode reward.
    pub mean_return: f64,
    /// Mean discounted raw cost return of the first constraint.
    pub mean_cost_return: f64,
    pub mean_shaped_cost_return: f64,
    pub predictor_loss: Option<f64>,
    pub c_estimate: f64,
    pub lambda_star: f64,
    pub nu_star: f64,
    pub case_tag: String,
    pub kl: f64,
    pub backtracks: usize,
    pub accepted: bool,
}

impl IterationMetrics {
    pub fn csv_row(&self) -> String {
        format!(
            "{},{},{},{},{},{},{},{},{},{},{},{},{}",
            self.iteration,
            self.steps,
            self.mean_return,
            self.mean_cost_return,
            self.mean_shaped_cost_return,
            self.predictor_loss.map_or(String::new(), |l| l.to_string()),
            self.c_estimate,
            self.lambda_star,
            self.nu_star,
            self.case_tag,
            self.kl,
            self.backtracks,
            self.accepted,
        )
    }

    fn is_finite(&self) -> bool {
        [self.mean_return, self.mean_cost_return, self.mean_shaped_cost_return, self.c_estimate, self.kl]
            .iter()
            .all(|v| v.is_finite())
            && self.predictor_loss.is_none_or(f64::is_finite)
    }
}

/// SplitMix64 of `(seed, stream, index)`: independent per-purpose seeds.
pub fn derive_seed(seed: u64, stream: u64, index: u64) -> u64 {
    let mut z = seed
        .wrapping_add(stream.wrapping_mul(0x9E37_79B9_7F4A_7C15))
        .wrapping_add(index.wrapping_mul(0xD1B5_4A32_D192_ED03));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Training state between iterations.
pub struct Trainer {
    config: RunConfig,
    spec: EnvSpec,
    probe_env: Box<dyn Env>,
    policy: ParamPolicy,
    critics: Critics,
    shaper: CostShaper,
    dual: DualState,
    iteration: usize,
    steps: usize,
}

impl Trainer {
    pub fn new(config: RunConfig) -> Result<Self> {
        config.validate()?;
        let spec = config.environment.spec();
        let probe_env = spec.build();
        let head = match probe_env.action_space() {
            ActionSpace::Box { dim } => Head::Gaussian { act_dim: dim },
            ActionSpace::Discrete(n) => Head::Categorical { n_actions: n },
        };
        let obs_dim = probe_env.obs_dim();
        let n_costs = probe_env.n_costs();
        let arch = Architecture::new(obs_dim, config.policy.hidden.clone(), head);
        let policy = ParamPolicy::init(arch, derive_seed(config.seed, 1, 0), config.policy.log_std_init);
        let critics = Critics::new(obs_dim, &config.policy.hidden, n_costs, derive_seed(config.seed, 2, 0));
        let shaper = CostShaper::new(config.shaping.clone(), obs_dim, derive_seed(config.seed, 3, 0));
        let mut dual = DualState::new(n_costs, config.pdo.learning_rate);
        dual.nu.iter_mut().for_each(|nu| *nu = config.pdo.nu_init.max(0.0));
        Ok(Self { config, spec, probe_env, policy, critics, shaper, dual, iteration: 0, steps: 0 })
    }

    pub fn config(&self) -> &RunConfig {
        &self.config
    }

    pub fn policy(&self) -> &ParamPolicy {
        &self.policy
    }

    pub fn dual(&self) -> &DualState {
        &self.dual
    }

    pub fn iteration(&self) -> usize {
        self.iteration
    }

    pub fn collect(&self) -> Result<TrajectoryBatch> {
        let spec = &self.spec;
        rollout_parallel(
            || spec.build(),
            &self.policy,
            self.config.batch_size,
            self.config.max_path_length(),
            derive_seed(self.config.seed, 4, self.iteration as u64),
            self.config.workers,
        )
    }

    /// One full iteration. Returns the metrics row; the policy is replaced
    /// by the update's parameters.
    pub fn step(&mut self) -> Result<IterationMetrics> {
        let cfg = &self.config;
        let gamma = cfg.estimator.gamma;
        let batch = self.collect()?;
        let unsafe_steps: Vec<bool> = (0..batch.len()).map(|t| self.probe_env.is_unsafe(batch.state(t))).collect();
        let shaped: Vec<Vec<f64>> = batch.costs.iter().map(|c| self.shaper.shape(&batch, c)).collect();
        let predictor_loss = self.shaper.update(&batch, &unsafe_steps);
        let cost_returns: Vec<f64> = shaped.iter().map(|c| batch.mean_discounted_return(c, gamma)).collect();
        let limits = vec![cfg.constraint_limit; batch.n_costs()];

        let rewards = match cfg.algorithm {
            Algorithm::Fpo => {
                let total_cost: Vec<f64> = (0..batch.len()).map(|t| shaped.iter().map(|c| c[t]).sum()).collect();
                penalized_rewards(&batch.rewards, &total_cost, cfg.fpo.lambda)
            }
            _ => batch.rewards.clone(),
        };
        let advantages = self.critics.advantages(&batch, &rewards, &shaped, &cfg.estimator)?;
        let model = build_surrogates(
            &batch,
            &self.policy,
            &advantages,
            &cost_returns,
            &limits,
            gamma,
            cfg.trust_region.delta_kl,
            cfg.trust_region.damping,
        )?;
        let mut tr = cfg.trust_region.clone();
        tr.accept_violation_tol += cfg.violation_slack_fraction * cfg.constraint_limit.abs();
        let update: UpdateResult = match cfg.algorithm {
            Algorithm::Cpo => cpo_update(&self.policy, &model, &tr)?,
            Algorithm::Trpo => trpo_update(&self.policy, &model, &tr)?,
            Algorithm::Fpo => fpo_update(&self.policy, &model, &tr)?,
            Algorithm::Pdo => {
                let (u, dual) = pdo_update(&self.policy, &model, &self.dual, &tr)?;
                self.dual = dual;
                u
            }
        };

        self.steps += batch.len();
        let episode_returns = batch.episode_discounted_sums(&batch.rewards, 1.0);
        let mean_return = episode_returns.iter().sum::<f64>() / episode_returns.len().max(1) as f64;
        let metrics = IterationMetrics {
            iteration: self.iteration,
            steps: self.steps,
            mean_return,
            mean_cost_return: batch.costs.first().map_or(0.0, |c| batch.mean_discounted_return(c, gamma)),
            mean_shaped_cost_return: cost_returns.first().copied().unwrap_or(0.0),
            predictor_loss,
            c_estimate: model.c_list.first().copied().unwrap_or(0.0),
            lambda_star: update.lambda_star,
            nu_star: match cfg.algorithm {
                Algorithm::Pdo => self.dual.nu.first().copied().unwrap_or(0.0),
                _ => update.nu_star.first().copied().unwrap_or(0.0),
            },
            case_tag: update.case_label().to_string(),
            kl: update.measured_kl,
            backtracks: update.backtracks,
            accepted: update.accepted,
        };
        self.iteration += 1;
        if !metrics.is_finite() || !crate::linalg::all_finite(&update.theta_new) {
            return Err(Error::NonFinite(format!("training diverged at iteration {}", metrics.iteration)));
        }
        self.policy = self.policy.with_theta(update.theta_new)?;
        Ok(metrics)
    }
}

/// Files written by [`train`].
#[derive(Debug, Clone, PartialEq)]
pub struct TrainSummary {
    pub metrics_path: PathBuf,
    pub checkpoints: Vec<PathBuf>,
    pub rows: Vec<IterationMetrics>,
}

fn save_checkpoint(dir: &Path, name: &str, policy: &ParamPolicy, saved: &mut Vec<PathBuf>) -> Result<()> {
    let path = dir.join(name);
    checkpoint::save(policy, &path)?;
    saved.push(path);
    Ok(())
}

/// Run the configured number of iterations, writing `metrics.csv` and
/// `checkpoints/` below `config.out_dir`. A non-finite value aborts the run
/// after a diagnostic row tagged `nan_abort`.
pub fn train(config: &RunConfig) -> Result<TrainSummary> {
    let out_dir = config.out_dir.clone();
    let ckpt_dir = out_dir.join("checkpoints");
    std::fs::create_dir_all(&ckpt_dir)?;
    let metrics_path = out_dir.join("metrics.csv");
    let mut out = BufWriter::new(File::create(&metrics_path)?);
    writeln!(out, "{METRICS_HEADER}")?;
    out.flush()?;

    let mut trainer = Trainer::new(config.clone())?;
    let mut checkpoints = Vec::new();
    save_checkpoint(&ckpt_dir, "iter_00000.bin", trainer.policy(), &mut checkpoints)?;
    let mut rows = Vec::with_capacity(config.iterations);
    for _ in 0..config.iterations {
        let iteration = trainer.iteration();
        match trainer.step() {
            Ok(row) => {
                writeln!(out, "{}", row.csv_row())?;
                out.flush()?;
                rows.push(row);
            }
            Err(Error::NonFinite(msg)) => {
                writeln!(out, "{iteration},{},NaN,NaN,NaN,,NaN,NaN,NaN,nan_abort,NaN,0,false", trainer.steps)?;
                out.flush()?;
                return Err(Error::NonFinite(msg));
            }
            Err(e) => return Err(e),
        }
        let done = trainer.iteration();
        if done % config.checkpoint_every == 0 {
            save_checkpoint(&ckpt_dir, &format!("iter_{done:05}.bin"), trainer.policy(), &mut checkpoints)?;
        }
    }
    save_checkpoint(&ckpt_dir, "final.bin", trainer.policy(), &mut checkpoints)?;
    Ok(TrainSummary { metrics_path, checkpoints, rows })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::preset;

    fn small(algorithm: Algorithm, dir: &Path) -> RunConfig {
        let mut cfg = preset("point_circle_desk").unwrap();
        cfg.algorithm = algorithm;
        cfg.batch_size = 260;
        cfg.iterations = 2;
        cfg.out_dir = dir.to_path_buf();
        cfg
    }

    #[test]
    fn zero_iterations_write_header_and_checkpoint() {
        let dir = tempfile::tempdir().unwrap();
        let mut cfg = small(Algorithm::Cpo, dir.path());
        cfg.iterations = 0;
        let summary = train(&cfg).unwrap();
        let text = std::fs::read_to_string(&summary.metrics_path).unwrap();
        assert_eq!(text, format!("{METRICS_HEADER}\n"));
        assert!(dir.path().join("checkpoints/iter_00000.bin").exists());
        let initial = checkpoint::load(&dir.path().join("checkpoints/iter_00000.bin")).unwrap();
        assert_eq!(&initial, Trainer::new(cfg).unwrap().policy());
    }

    #[test]
    fn every_algorithm_runs() {
        for alg in [Algorithm::Cpo, Algorithm::Trpo, Algorithm::Pdo, Algorithm::Fpo] {
            let dir = tempfile::tempdir().unwrap();
            let summary = train(&small(alg, dir.path())).unwrap();
            assert_eq!(summary.rows.len(), 2);
            let text = std::fs::read_to_string(&summary.metrics_path).unwrap();
            assert_eq!(text.lines().count(), 3);
            assert!(summary.rows.iter().all(|r| r.predictor_loss.is_some()));
        }
    }

    #[test]
    fn derived_seeds_differ() {
        assert_ne!(derive_seed(0, 1, 0), derive_seed(0, 1, 1));
        assert_ne!(derive_seed(0, 1, 0), derive_seed(0, 2, 0));
        assert_eq!(derive_seed(5, 3, 9), derive_seed(5, 3, 9));
    }
}
