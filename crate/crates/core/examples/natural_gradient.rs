//! Natural-gradient step for a Gaussian MLP policy: Hessian-free KL
//! products and conjugate gradients, and how well the quadratic model of
//! the KL predicts the divergence of the scaled step.

use cpo::natural_gradient::{conjugate_gradient, quadratic_form};
use cpo::policy::{kl_hvp, mean_kl, Architecture, Head, ParamPolicy, StateSet};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn main() -> cpo::Result<()> {
    let arch = Architecture::new(4, vec![16, 8], Head::Gaussian { act_dim: 2 });
    let policy = ParamPolicy::init(arch, 3, -0.5);
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let obs: Vec<f64> = (0..4 * 2000).map(|_| rng.random_range(-1.0..1.0)).collect();
    let states = StateSet::uniform(&obs, 4);
    let hvp = kl_hvp(&policy, states, 1e-5);
    // a policy gradient lies in the span of the score functions; a random
    // parameter vector would not, and its null-space part blows up H^-1 g
    let actions = (0..states.len()).map(|i| policy.sample(states.state(i), &mut rng)).collect::<cpo::Result<Vec<_>>>()?;
    let coeffs: Vec<f64> = (0..states.len()).map(|_| rng.random_range(-1.0..1.0) / states.len() as f64).collect();
    let g = policy.weighted_score_sum(states, &actions, &coeffs)?;

    // scale each CG solution to the trust region and measure the real KL;
    // fully converged solves chase low-curvature directions where the
    // quadratic model stops being accurate, truncated ones stay close
    let delta = 0.01;
    for iters in [1, 5, 10, 25, 100] {
        let x = conjugate_gradient(&hvp, &g, iters, 1e-12)?;
        let residual = hvp.evaluate(&x).iter().zip(&g).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
        let scale = (2.0 * delta / quadratic_form(&hvp, &x)).sqrt();
        let theta: Vec<f64> = policy.theta().iter().zip(&x).map(|(t, d)| t + scale * d).collect();
        let kl = mean_kl(&policy.with_theta(theta)?, &policy, states);
        println!("cg iters {iters:3}: residual {residual:.3e}  KL of scaled step {kl:.5} (target {delta})");
    }
    Ok(())
}
