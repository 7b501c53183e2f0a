//! The sampled estimation pipeline against the exact tabular one: a
//! finite CMDP is wrapped as an environment, Monte-Carlo advantages give
//! a policy gradient, and its agreement with the closed-form gradient
//! improves with the batch size.

use cpo::env::TabularEnv;
use cpo::estimation::{
    build_surrogates, discounted_returns_to_go, exact_tabular_surrogates, rollout, Advantages,
};
use cpo::linalg::{dot, norm};
use cpo::policy::{Architecture, Head, ParamPolicy};
use cpo::tabular::TabularCmdp;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn main() -> cpo::Result<()> {
    let (ns, na, gamma) = (4, 2, 0.8);
    let mdp = TabularCmdp::random(ns, na, 1, gamma, &mut ChaCha8Rng::seed_from_u64(2));
    let policy = ParamPolicy::init(Architecture::new(ns, vec![], Head::Categorical { n_actions: na }), 1, 0.0);
    let exact = exact_tabular_surrogates(&mdp, &policy, 0.01, 1e-5)?;
    let exact_grad: Vec<f64> = exact.g.iter().map(|x| x / (1.0 - gamma)).collect();

    let horizon = 40;
    for episodes in [50, 500, 5000] {
        let mut env = TabularEnv::new(mdp.clone());
        let batch = rollout(&mut env, &policy, episodes * horizon, horizon, 9)?;
        // undiscounted-state REINFORCE: gamma^t G_t as the advantage weight
        let rtg = discounted_returns_to_go(&batch, &batch.rewards, gamma);
        let mut weights = Vec::with_capacity(batch.len());
        for ep in batch.episodes() {
            weights.extend(rtg[ep].iter().enumerate().map(|(t, g)| gamma.powi(t as i32) * g));
        }
        let scale = batch.len() as f64 / episodes as f64;
        let adv = Advantages { reward: weights.iter().map(|w| w * scale).collect(), costs: vec![vec![0.0; batch.len()]] };
        let sampled = build_surrogates(&batch, &policy, &adv, &[0.0], &[0.0], gamma, 0.01, 1e-5)?;
        let cosine = dot(&sampled.g, &exact_grad) / (norm(&sampled.g) * norm(&exact_grad));
        println!("{episodes:5} episodes: cosine to exact gradient {cosine:.4}");
    }
    Ok(())
}
