use serde::{Deserialize, Serialize};

/// Velocity-controlled point mass with first-order smoothing:
/// `v <- smoothing * v + (1 - smoothing) * action_scale * a`, `p <- p + dt * v`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PointDynamics {
    pub dt: f64,
    pub smoothing: f64,
    pub action_scale: f64,
}

impl Default for PointDynamics {
    fn default() -> Self {
        Self { dt: 0.1, smoothing: 0.9, action_scale: 10.0 }
    }
}

impl PointDynamics {
    pub fn advance(&self, pos: &mut [f64; 2], vel: &mut [f64; 2], action: &[f64]) {
        for k in 0..2 {
            vel[k] = self.smoothing * vel[k] + (1.0 - self.smoothing) * self.action_scale * action[k];
            pos[k] += vel[k] * self.dt;
        }
    }
}
