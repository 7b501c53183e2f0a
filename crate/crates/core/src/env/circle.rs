use super::{clip_unit, ActionSpace, Env, PointDynamics, Step};
use crate::error::Result;
use crate::policy::Action;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

pub const CIRCLE_OBS_DIM: usize = 9;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CircleParams {
    /// Target circle radius.
    pub d: f64,
    /// Half-width of the safe band `|x| <= x_lim`.
    pub x_lim: f64,
    pub horizon: usize,
    /// Half-width of the uniform jitter applied to the start position.
    pub start_noise: f64,
    pub dynamics: PointDynamics,
}

impl Default for CircleParams {
    fn default() -> Self {
        Self { d: 5.0, x_lim: 1.0, horizon: 65, start_noise: 0.1, dynamics: PointDynamics::default() }
    }
}

impl CircleParams {
    pub fn paper() -> Self {
        Self { d: 15.0, x_lim: 2.5, ..Self::default() }
    }
}

/// `v . (-y, x) / (1 + | |p| - d |)`: speed along the counter-clockwise
/// tangent, discounted by distance from the target circle.
pub fn circle_reward(pos: [f64; 2], vel: [f64; 2], d: f64) -> f64 {
    let tangential = -vel[0] * pos[1] + vel[1] * pos[0];
    tangential / (1.0 + ((pos[0] * pos[0] + pos[1] * pos[1]).sqrt() - d).abs())
}

pub fn circle_cost(pos: [f64; 2], x_lim: f64) -> f64 {
    if pos[0].abs() > x_lim {
        1.0
    } else {
        0.0
    }
}

/// Run counter-clockwise around a circle of radius `d` while staying inside
/// the band `|x| <= x_lim`. Observations are `(x, y, vx, vy)` zero-padded to
/// nine entries.
#[derive(Debug, Clone)]
pub struct PointCircle {
    params: CircleParams,
    pos: [f64; 2],
    vel: [f64; 2],
    t: usize,
}

impl PointCircle {
    pub fn new(params: CircleParams) -> Self {
        Self { params, pos: [0.0; 2], vel: [0.0; 2], t: 0 }
    }

    pub fn params(&self) -> &CircleParams {
        &self.params
    }

    pub fn position(&self) -> [f64; 2] {
        self.pos
    }

    pub fn velocity(&self) -> [f64; 2] {
        self.vel
    }

    /// Place the point directly (for tests and demonstrations).
    pub fn set_state(&mut self, pos: [f64; 2], vel: [f64; 2]) {
        self.pos = pos;
        self.vel = vel;
    }

    fn observe(&self) -> Vec<f64> {
        let mut obs = vec![0.0; CIRCLE_OBS_DIM];
        obs[..2].copy_from_slice(&self.pos);
        obs[2..4].copy_from_slice(&self.vel);
        obs
    }
}

impl Env for PointCircle {
    fn obs_dim(&self) -> usize {
        CIRCLE_OBS_DIM
    }

    fn action_space(&self) -> ActionSpace {
        ActionSpace::Box { dim: 2 }
    }

    fn n_costs(&self) -> usize {
        1
    }

    fn reset(&mut self, seed: u64) -> Vec<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let w = self.params.start_noise;
        self.pos = if w > 0.0 { [rng.random_range(-w..w), rng.random_range(-w..w)] } else { [0.0; 2] };
        self.vel = [0.0; 2];
        self.t = 0;
        self.observe()
    }

    fn step(&mut self, action: &Action) -> Result<Step> {
        let a = clip_unit(action, 2, self.t)?;
        self.params.dynamics.advance(&mut self.pos, &mut self.vel, &a);
        self.t += 1;
        Ok(Step {
            obs: self.observe(),
            reward: circle_reward(self.pos, self.vel, self.params.d),
            costs: vec![circle_cost(self.pos, self.params.x_lim)],
            done: self.t >= self.params.horizon,
        })
    }

    fn is_unsafe(&self, obs: &[f64]) -> bool {
        obs[0].abs() > self.params.x_lim
    }
}
