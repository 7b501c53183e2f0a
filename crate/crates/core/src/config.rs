//! Run configuration (TOML) and shipped presets.
//!
//! ```toml
//! algorithm = "cpo"          # cpo | trpo | pdo | fpo
//! seed = 0
//! iterations = 150
//! batch_size = 4000
//! constraint_limit = 0.1
//!
//! [environment]
//! id = "point_gather"        # or "point_circle"; remaining keys are the task parameters
//! horizon = 15
//!
//! [policy]
//! hidden = [16, 8]
//!
//! [estimator]
//! gamma = 0.995
//! ```
//!
//! Every section and key is optional; omitted values take the defaults of
//! the corresponding type.

use crate::algorithms::TrustRegionConfig;
use crate::env::{CircleParams, EnvSpec, GatherParams};
use crate::error::{Error, Result};
use crate::estimation::EstimatorConfig;
use crate::shaping::ShapingConfig;
use serde::{Deserialize, Serialize};
use std::path::{Path, PathBuf};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Algorithm {
    Cpo,
    Trpo,
    Pdo,
    Fpo,
}

impl Algorithm {
    pub fn as_str(self) -> &'static str {
        match self {
            Algorithm::Cpo => "cpo",
            Algorithm::Trpo => "trpo",
            Algorithm::Pdo => "pdo",
            Algorithm::Fpo => "fpo",
        }
    }
}

impl std::str::FromStr for Algorithm {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "cpo" => Ok(Algorithm::Cpo),
            "trpo" => Ok(Algorithm::Trpo),
            "pdo" => Ok(Algorithm::Pdo),
            "fpo" => Ok(Algorithm::Fpo),
            other => Err(Error::Config(format!("unknown algorithm {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "id", rename_all = "snake_case")]
pub enum EnvironmentConfig {
    PointCircle(CircleParams),
    PointGather(GatherParams),
}

impl EnvironmentConfig {
    pub fn spec(&self) -> EnvSpec {
        match self {
            EnvironmentConfig::PointCircle(p) => EnvSpec::PointCircle(p.clone()),
            EnvironmentConfig::PointGather(p) => EnvSpec::PointGather(p.clone()),
        }
    }

    pub fn horizon(&self) -> usize {
        self.spec().horizon()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PolicyConfig {
    pub hidden: Vec<usize>,
    pub log_std_init: f64,
}

impl Default for PolicyConfig {
    fn default() -> Self {
        Self { hidden: vec![16, 8], log_std_init: -0.5 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PdoConfig {
    pub learning_rate: f64,
    pub nu_init: f64,
}

impl Default for PdoConfig {
    fn default() -> Self {
        Self { learning_rate: 0.01, nu_init: 0.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FpoConfig {
    pub lambda: f64,
}

impl Default for FpoConfig {
    fn default() -> Self {
        Self { lambda: 1.0 }
    }
}

/// Penalty weights of the fixed-penalty experiment grid.
pub const FPO_LAMBDA_GRID: [f64; 3] = [1.0, 5.0, 50.0];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub algorithm: Algorithm,
    pub seed: u64,
    pub iterations: usize,
    /// Environment steps per iteration.
    pub batch_size: usize,
    /// Episode cap inside rollouts; defaults to the environment horizon.
    pub max_path_length: Option<usize>,
    /// Limit `d` on the discounted cost return.
    pub constraint_limit: f64,
    /// If positive, surrogate constraints may be violated by this fraction of the limit.
    pub violation_slack_fraction: f64,
    /// Rollout threads; part of the reproducibility key.
    pub workers: usize,
    pub checkpoint_every: usize,
    pub out_dir: PathBuf,
    pub environment: EnvironmentConfig,
    pub policy: PolicyConfig,
    pub estimator: EstimatorConfig,
    pub trust_region: TrustRegionConfig,
    pub shaping: ShapingConfig,
    pub pdo: PdoConfig,
    pub fpo: FpoConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        preset("point_gather_desk").expect("built-in preset")
    }
}

fn base(environment: EnvironmentConfig, constraint_limit: f64, shaping: ShapingConfig) -> RunConfig {
    RunConfig {
        algorithm: Algorithm::Cpo,
        seed: 0,
        iterations: 100,
        batch_size: 4000,
        max_path_length: None,
        constraint_limit,
        violation_slack_fraction: 0.0,
        workers: 1,
        checkpoint_every: 10,
        out_dir: PathBuf::from("runs/latest"),
        environment,
        policy: PolicyConfig::default(),
        estimator: EstimatorConfig::default(),
        trust_region: TrustRegionConfig { cg_iters: Some(10), ..TrustRegionConfig::default() },
        shaping,
        pdo: PdoConfig::default(),
        fpo: FpoConfig::default(),
    }
}

pub const PRESETS: [&str; 4] = ["point_circle_desk", "point_circle_paper", "point_gather_desk", "point_gather_paper"];

/// Built-in configurations. The `_paper` presets carry the published
/// hyperparameters (batch 50,000, hidden (64, 32)); the `_desk` variants
/// shrink batch and network for quick runs.
pub fn preset(name: &str) -> Result<RunConfig> {
    let circle_shaping = ShapingConfig::default();
    let mut cfg = match name {
        "point_circle_desk" => base(EnvironmentConfig::PointCircle(CircleParams::default()), 5.0, circle_shaping),
        "point_circle_paper" => base(EnvironmentConfig::PointCircle(CircleParams::paper()), 5.0, circle_shaping),
        "point_gather_desk" | "point_gather_paper" => {
            base(EnvironmentConfig::PointGather(GatherParams::default()), 0.1, ShapingConfig::disabled())
        }
        other => return Err(Error::Config(format!("unknown preset {other:?}; known: {}", PRESETS.join(", ")))),
    };
    if name.ends_with("_paper") {
        cfg.batch_size = 50_000;
        cfg.policy.hidden = vec![64, 32];
    }
    Ok(cfg)
}

impl RunConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let cfg: RunConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Load a file; the value `preset:<name>` in place of a path selects a
    /// built-in configuration.
    pub fn load(path: &Path) -> Result<Self> {
        if let Some(name) = path.to_str().and_then(|p| p.strip_prefix("preset:")) {
            return preset(name);
        }
        Self::from_toml_str(&std::fs::read_to_string(path)?)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("configuration serialises")
    }

    pub fn max_path_length(&self) -> usize {
        self.max_path_length.unwrap_or_else(|| self.environment.horizon())
    }

    /// Restore the published environment values: circle radius 15, band
    /// 2.5 and horizon 65 for Point-Circle; horizon 15 and limit 0.1 for
    /// Point-Gather.
    pub fn apply_paper_params(&mut self) {
        match &mut self.environment {
            EnvironmentConfig::PointCircle(p) => {
                p.d = 15.0;
                p.x_lim = 2.5;
                p.horizon = 65;
                self.constraint_limit = 5.0;
            }
            EnvironmentConfig::PointGather(p) => {
                p.horizon = 15;
                self.constraint_limit = 0.1;
            }
        }
        self.max_path_length = None;
    }

    pub fn validate(&self) -> Result<()> {
        self.estimator.validate()?;
        self.trust_region.validate()?;
        self.shaping.validate()?;
        if self.max_path_length() == 0 {
            return Err(Error::Config("episodes need at least one step".into()));
        }
        if self.batch_size < self.max_path_length() {
            return Err(Error::Config(format!(
                "batch_size {} is shorter than one episode ({} steps)",
                self.batch_size,
                self.max_path_length()
            )));
        }
        if self.workers == 0 || self.workers > self.batch_size {
            return Err(Error::Config("workers must lie between 1 and batch_size".into()));
        }
        if !(self.constraint_limit.is_finite()) || !(self.violation_slack_fraction >= 0.0) {
            return Err(Error::Config("constraint limit must be finite and the slack fraction nonnegative".into()));
        }
        if self.checkpoint_every == 0 {
            return Err(Error::Config("checkpoint_every must be at least 1".into()));
        }
        if self.policy.hidden.contains(&0) {
            return Err(Error::Config("hidden layers must be non-empty".into()));
        }
        Ok(())
    }
}
