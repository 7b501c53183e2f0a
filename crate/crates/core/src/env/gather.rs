use super::{clip_unit, ActionSpace, Env, PointDynamics, Step};
use crate::error::Result;
use crate::policy::Action;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

/// Objects of each kind reported in the observation.
const SENSED: usize = 2;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GatherParams {
    pub n_apples: usize,
    pub n_bombs: usize,
    pub apple_reward: f64,
    pub bomb_cost: f64,
    pub arena_radius: f64,
    pub catch_radius: f64,
    /// Objects spawn at least this far from the start position.
    pub spawn_min_radius: f64,
    pub horizon: usize,
    pub dynamics: PointDynamics,
}

impl Default for GatherParams {
    fn default() -> Self {
        Self {
            n_apples: 2,
            n_bombs: 8,
            apple_reward: 10.0,
            bomb_cost: 1.0,
            arena_radius: 6.0,
            catch_radius: 0.5,
            spawn_min_radius: 1.0,
            horizon: 15,
            dynamics: PointDynamics::default(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct Object {
    pos: [f64; 2],
    alive: bool,
}

/// Collect apples, avoid bombs. The point starts at the arena centre and
/// objects are scattered uniformly over the annulus between
/// `spawn_min_radius` and `arena_radius`.
///
/// Observation: for the nearest two remaining apples, then the nearest two
/// remaining bombs, the distance in arena radii and the bearing in units of
/// pi (absent objects read `(2, 0)`), followed by the velocity divided by
/// the action scale.
#[derive(Debug, Clone)]
pub struct PointGather {
    params: GatherParams,
    pos: [f64; 2],
    vel: [f64; 2],
    apples: Vec<Object>,
    bombs: Vec<Object>,
    t: usize,
}

impl PointGather {
    pub fn new(params: GatherParams) -> Self {
        Self { params, pos: [0.0; 2], vel: [0.0; 2], apples: Vec::new(), bombs: Vec::new(), t: 0 }
    }

    pub fn params(&self) -> &GatherParams {
        &self.params
    }

    pub fn position(&self) -> [f64; 2] {
        self.pos
    }

    pub fn apples(&self) -> Vec<[f64; 2]> {
        self.apples.iter().filter(|o| o.alive).map(|o| o.pos).collect()
    }

    pub fn bombs(&self) -> Vec<[f64; 2]> {
        self.bombs.iter().filter(|o| o.alive).map(|o| o.pos).collect()
    }

    /// Replace the point state and object layout (for tests and demonstrations).
    pub fn set_layout(&mut self, pos: [f64; 2], vel: [f64; 2], apples: &[[f64; 2]], bombs: &[[f64; 2]]) {
        self.pos = pos;
        self.vel = vel;
        self.apples = apples.iter().map(|&pos| Object { pos, alive: true }).collect();
        self.bombs = bombs.iter().map(|&pos| Object { pos, alive: true }).collect();
    }

    pub fn objects_remaining(&self) -> usize {
        self.apples.iter().chain(&self.bombs).filter(|o| o.alive).count()
    }

    fn spawn<R: Rng>(&self, rng: &mut R) -> [f64; 2] {
        let (r0, r1) = (self.params.spawn_min_radius, self.params.arena_radius);
        // area-uniform radius on the annulus
        let r = rng.random_range(r0 * r0..r1 * r1).sqrt();
        let phi = rng.random_range(0.0..2.0 * PI);
        [r * phi.cos(), r * phi.sin()]
    }

    fn sense(&self, objects: &[Object], out: &mut Vec<f64>) {
        let mut rel: Vec<(f64, f64)> = objects
            .iter()
            .filter(|o| o.alive)
            .map(|o| {
                let (dx, dy) = (o.pos[0] - self.pos[0], o.pos[1] - self.pos[1]);
                ((dx * dx + dy * dy).sqrt(), dy.atan2(dx))
            })
            .collect();
        rel.sort_by(|a, b| a.0.total_cmp(&b.0));
        for k in 0..SENSED {
            match rel.get(k) {
                Some(&(dist, bearing)) => {
                    out.push(dist / self.params.arena_radius);
                    out.push(bearing / PI);
                }
                None => out.extend([2.0, 0.0]),
            }
        }
    }

    fn observe(&self) -> Vec<f64> {
        let mut obs = Vec::with_capacity(4 * SENSED + 2);
        self.sense(&self.apples, &mut obs);
        self.sense(&self.bombs, &mut obs);
        let scale = self.params.dynamics.action_scale;
        obs.extend(self.vel.iter().map(|v| v / scale));
        obs
    }

    fn collect(objects: &mut [Object], pos: [f64; 2], radius: f64) -> usize {
        let mut hits = 0;
        for o in objects.iter_mut().filter(|o| o.alive) {
            let (dx, dy) = (o.pos[0] - pos[0], o.pos[1] - pos[1]);
            if dx * dx + dy * dy <= radius * radius {
                o.alive = false;
                hits += 1;
            }
        }
        hits
    }
}

impl Env for PointGather {
    fn obs_dim(&self) -> usize {
        4 * SENSED + 2
    }

    fn action_space(&self) -> ActionSpace {
        ActionSpace::Box { dim: 2 }
    }

    fn n_costs(&self) -> usize {
        1
    }

    fn reset(&mut self, seed: u64) -> Vec<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        self.pos = [0.0; 2];
        self.vel = [0.0; 2];
        self.t = 0;
        let apples = (0..self.params.n_apples).map(|_| Object { pos: self.spawn(&mut rng), alive: true }).collect();
        let bombs = (0..self.params.n_bombs).map(|_| Object { pos: self.spawn(&mut rng), alive: true }).collect();
        self.apples = apples;
        self.bombs = bombs;
        self.observe()
    }

    fn step(&mut self, action: &Action) -> Result<Step> {
        let a = clip_unit(action, 2, self.t)?;
        self.params.dynamics.advance(&mut self.pos, &mut self.vel, &a);
        let r = (self.pos[0] * self.pos[0] + self.pos[1] * self.pos[1]).sqrt();
        if r > self.params.arena_radius {
            let shrink = self.params.arena_radius / r;
            self.pos = [self.pos[0] * shrink, self.pos[1] * shrink];
        }
        self.t += 1;
        let radius = self.params.catch_radius;
        let n_apples = Self::collect(&mut self.apples, self.pos, radius);
        let n_bombs = Self::collect(&mut self.bombs, self.pos, radius);
        Ok(Step {
            obs: self.observe(),
            reward: self.params.apple_reward * n_apples as f64,
            costs: vec![self.params.bomb_cost * n_bombs as f64],
            done: self.t >= self.params.horizon,
        })
    }
}
