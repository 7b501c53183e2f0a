//! Adaptive-moment gradient descent over flat parameter vectors.

#[derive(Debug, Clone)]
pub struct Adam {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    m: Vec<f64>,
    v: Vec<f64>,
    t: i32,
}

impl Adam {
    pub fn new(dim: usize, lr: f64) -> Self {
        Self { lr, beta1: 0.9, beta2: 0.999, eps: 1e-8, m: vec![0.0; dim], v: vec![0.0; dim], t: 0 }
    }

    /// One descent step on `params` along `grad`.
    pub fn step(&mut self, params: &mut [f64], grad: &[f64]) {
        assert_eq!(params.len(), self.m.len());
        assert_eq!(grad.len(), self.m.len());
        self.t += 1;
        let bc1 = 1.0 - self.beta1.powi(self.t);
        let bc2 = 1.0 - self.beta2.powi(self.t);
        for i in 0..params.len() {
            self.m[i] = self.beta1 * self.m[i] + (1.0 - self.beta1) * grad[i];
            self.v[i] = self.beta2 * self.v[i] + (1.0 - self.beta2) * grad[i] * grad[i];
            let m_hat = self.m[i] / bc1;
            let v_hat = self.v[i] / bc2;
            params[i] -= self.lr * m_hat / (v_hat.sqrt() + self.eps);
        }
    }
}

/// Full-batch minimisation that never accepts a step raising the loss:
/// a rejected step is undone and the learning rate halved, and accepted
/// steps let it grow back by 10% up to `lr`. Returns the
/// loss after each iteration.
pub fn monotone_adam<F>(params: &mut [f64], iters: usize, lr: f64, mut loss_grad: F) -> Vec<f64>
where
    F: FnMut(&[f64]) -> (f64, Vec<f64>),
{
    let mut adam = Adam::new(params.len(), lr);
    let mut history = Vec::with_capacity(iters);
    let (mut loss, mut grad) = loss_grad(params);
    for _ in 0..iters {
        let backup = params.to_vec();
        adam.step(params, &grad);
        let (new_loss, new_grad) = loss_grad(params);
        if new_loss.is_finite() && new_loss <= loss {
            loss = new_loss;
            grad = new_grad;
            adam.lr = (adam.lr * 1.1).min(lr);
        } else {
            params.copy_from_slice(&backup);
            adam.lr *= 0.5;
        }
        history.push(loss);
    }
    history
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimises_a_quadratic() {
        let mut x = vec![3.0, -2.0];
        let hist = monotone_adam(&mut x, 2000, 0.05, |p| {
            (p[0] * p[0] + 10.0 * p[1] * p[1], vec![2.0 * p[0], 20.0 * p[1]])
        });
        assert!(hist.windows(2).all(|w| w[1] <= w[0]));
        assert!(x[0].abs() < 1e-3 && x[1].abs() < 1e-3, "{x:?}");
    }

    #[test]
    fn first_step_moves_by_lr() {
        let mut adam = Adam::new(1, 0.1);
        let mut p = vec![1.0];
        adam.step(&mut p, &[5.0]);
        assert!((p[0] - 0.9).abs() < 1e-6);
    }
}
