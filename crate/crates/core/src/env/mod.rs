//! Stepping environments: point-mass Circle and Gather tasks and an adapter
//! that samples from any [`TabularCmdp`](crate::tabular::TabularCmdp).

mod circle;
mod gather;
mod point;
mod tabular;

pub use circle::{CircleParams, PointCircle};
pub use gather::{GatherParams, PointGather};
pub use point::PointDynamics;
pub use tabular::TabularEnv;

use crate::error::Result;
use crate::policy::Action;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ActionSpace {
    Discrete(usize),
    /// Box `[-1, 1]^dim`; actions outside are clipped.
    Box { dim: usize },
}

#[derive(Debug, Clone, PartialEq)]
pub struct Step {
    pub obs: Vec<f64>,
    pub reward: f64,
    pub costs: Vec<f64>,
    /// The episode is over (horizon reached or terminal state).
    pub done: bool,
}

pub trait Env: Send {
    fn obs_dim(&self) -> usize;
    fn action_space(&self) -> ActionSpace;
    fn n_costs(&self) -> usize;
    /// Start a new episode; all randomness of the episode derives from `seed`.
    fn reset(&mut self, seed: u64) -> Vec<f64>;
    fn step(&mut self, action: &Action) -> Result<Step>;
    /// Whether an observation lies in the unsafe set (used for cost shaping).
    fn is_unsafe(&self, _obs: &[f64]) -> bool {
        false
    }
}

/// Environments selectable from a run configuration.
#[derive(Debug, Clone, PartialEq)]
pub enum EnvSpec {
    PointCircle(CircleParams),
    PointGather(GatherParams),
}

impl EnvSpec {
    pub fn build(&self) -> Box<dyn Env> {
        match self {
            EnvSpec::PointCircle(p) => Box::new(PointCircle::new(p.clone())),
            EnvSpec::PointGather(p) => Box::new(PointGather::new(p.clone())),
        }
    }

    pub fn horizon(&self) -> usize {
        match self {
            EnvSpec::PointCircle(p) => p.horizon,
            EnvSpec::PointGather(p) => p.horizon,
        }
    }
}

pub(crate) fn clip_unit(action: &Action, dim: usize, step: usize) -> Result<Vec<f64>> {
    match action {
        Action::Continuous(a) if a.len() == dim => {
            if a.iter().any(|v| !v.is_finite()) {
                return Err(crate::Error::Environment { step, message: "non-finite action".into() });
            }
            Ok(a.iter().map(|v| v.clamp(-1.0, 1.0)).collect())
        }
        _ => Err(crate::Error::Environment {
            step,
            message: format!("expected a continuous action of dimension {dim}"),
        }),
    }
}
