//! Hessian of the mean KL divergence at the current parameters.
//!
//! At `theta_new = theta_old` the KL Hessian equals the Fisher information
//! `sum_i w_i J_i^T M_i J_i`, where `J_i` is the Jacobian of the
//! distribution parameters and `M_i` the Hessian of the KL in those
//! parameters. The product is computed as a forward pass (JVP) followed by
//! a reverse pass (VJP), so no matrix is ever formed.

use super::{softmax, DistParams, ParamPolicy, StateSet};
use super::mlp::Tape;
use crate::natural_gradient::HvpHandle;
use std::sync::Arc;

enum Curvature {
    Categorical { probs: Vec<f64> },
    Gaussian { inv_var: Vec<f64> },
}

/// Forward tapes and per-state curvature cached at `theta_old`.
pub struct KlHessian {
    policy: ParamPolicy,
    tapes: Vec<Tape>,
    curvature: Vec<Curvature>,
    weights: Vec<f64>,
}

impl KlHessian {
    pub fn new(policy: &ParamPolicy, states: StateSet<'_>) -> Self {
        let mut tapes = Vec::with_capacity(states.len());
        let mut curvature = Vec::with_capacity(states.len());
        let mut weights = Vec::with_capacity(states.len());
        for i in 0..states.len() {
            let tape = policy.forward(states.state(i));
            curvature.push(match policy.params_from_tape(&tape) {
                DistParams::Categorical { logits } => Curvature::Categorical { probs: softmax(&logits) },
                DistParams::Gaussian { log_std, .. } => Curvature::Gaussian {
                    inv_var: log_std.iter().map(|s| (-2.0 * s).exp()).collect(),
                },
            });
            tapes.push(tape);
            weights.push(states.weight(i));
        }
        Self { policy: policy.clone(), tapes, curvature, weights }
    }

    pub fn dim(&self) -> usize {
        self.policy.n_params()
    }

    /// Undamped `H v`.
    pub fn apply(&self, v: &[f64]) -> Vec<f64> {
        assert_eq!(v.len(), self.dim(), "vector length must match parameter count");
        let net = self.policy.network();
        let n_net = net.n_params();
        let params = self.policy.net_params();
        let (v_net, v_log_std) = v.split_at(n_net);
        let mut out = vec![0.0; v.len()];
        for ((tape, curv), &w) in self.tapes.iter().zip(&self.curvature).zip(&self.weights) {
            let jv = net.jvp(params, tape, v_net);
            let upstream: Vec<f64> = match curv {
                Curvature::Categorical { probs } => {
                    let pjv: f64 = probs.iter().zip(&jv).map(|(p, x)| p * x).sum();
                    probs.iter().zip(&jv).map(|(p, x)| w * p * (x - pjv)).collect()
                }
                Curvature::Gaussian { inv_var } => {
                    for (k, vk) in v_log_std.iter().enumerate() {
                        out[n_net + k] += w * 2.0 * vk;
                    }
                    inv_var.iter().zip(&jv).map(|(iv, x)| w * iv * x).collect()
                }
            };
            net.backward(params, tape, &upstream, &mut out[..n_net]);
        }
        out
    }

    pub fn into_handle(self, damping: f64) -> HvpHandle<'static> {
        let dim = self.dim();
        let me = Arc::new(self);
        HvpHandle::new(dim, damping, move |v: &[f64]| me.apply(v))
    }
}

/// Damped Hessian-vector product handle for the mean KL at `policy`.
pub fn kl_hvp(policy: &ParamPolicy, states: StateSet<'_>, damping: f64) -> HvpHandle<'static> {
    KlHessian::new(policy, states).into_handle(damping)
}
