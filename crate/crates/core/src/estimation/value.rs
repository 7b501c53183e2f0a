use crate::optim::monotone_adam;
use crate::policy::mlp::Mlp;
use crate::policy::StateSet;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Scalar state-value network with the policy's hidden layout.
#[derive(Debug, Clone)]
pub struct ValueFunction {
    net: Mlp,
    params: Vec<f64>,
}

impl ValueFunction {
    pub fn new(obs_dim: usize, hidden: &[usize], seed: u64) -> Self {
        let mut sizes = vec![obs_dim];
        sizes.extend(hidden);
        sizes.push(1);
        let net = Mlp::new(sizes);
        let params = net.init_params(1.0, &mut ChaCha8Rng::seed_from_u64(seed));
        Self { net, params }
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn predict(&self, state: &[f64]) -> f64 {
        self.net.forward(&self.params, state).output()[0]
    }

    pub fn predict_all(&self, states: StateSet<'_>) -> Vec<f64> {
        (0..states.len()).map(|i| self.predict(states.state(i))).collect()
    }

    pub fn mse(&self, states: StateSet<'_>, targets: &[f64]) -> f64 {
        Self::loss_grad(&self.net, &self.params, states, targets, false).0
    }

    fn loss_grad(net: &Mlp, params: &[f64], states: StateSet<'_>, targets: &[f64], with_grad: bool) -> (f64, Vec<f64>) {
        let n = states.len() as f64;
        let mut loss = 0.0;
        let mut grad = vec![0.0; if with_grad { params.len() } else { 0 }];
        for (i, target) in targets.iter().enumerate() {
            let tape = net.forward(params, states.state(i));
            let err = tape.output()[0] - target;
            loss += err * err / n;
            if with_grad {
                net.backward(params, &tape, &[2.0 * err / n], &mut grad);
            }
        }
        (loss, grad)
    }

    /// Regress onto `targets` with `iters` full-batch steps; the training
    /// loss never increases. Returns the loss after each step.
    pub fn fit(&mut self, states: StateSet<'_>, targets: &[f64], iters: usize, step: f64) -> Vec<f64> {
        assert_eq!(states.len(), targets.len(), "one target per state");
        if states.is_empty() {
            return Vec::new();
        }
        let net = &self.net;
        monotone_adam(&mut self.params, iters, step, |p| Self::loss_grad(net, p, states, targets, true))
    }
}
