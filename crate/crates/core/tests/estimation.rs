use cpo::env::TabularEnv;
use cpo::estimation::{
    build_surrogates, discounted_returns_to_go, exact_tabular_surrogates, gae_advantages, policy_table, rollout,
    Advantages,
};
use cpo::linalg::{dot, norm};
use cpo::policy::{Architecture, Head, ParamPolicy};
use cpo::tabular::{signal_values, Signal, TabularCmdp};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn setup() -> (TabularCmdp, ParamPolicy) {
    let mdp = TabularCmdp::random(4, 2, 1, 0.8, &mut ChaCha8Rng::seed_from_u64(2));
    let policy = ParamPolicy::init(Architecture::new(4, vec![], Head::Categorical { n_actions: 2 }), 1, 0.0);
    (mdp, policy)
}

#[test]
fn sampled_gradient_approaches_the_exact_one() {
    let (mdp, policy) = setup();
    let gamma = mdp.gamma();
    let exact = exact_tabular_surrogates(&mdp, &policy, 0.01, 1e-5).unwrap();
    let target: Vec<f64> = exact.g.iter().map(|x| x / (1.0 - gamma)).collect();
    let (episodes, horizon) = (4000, 40);
    let mut env = TabularEnv::new(mdp.clone());
    let batch = rollout(&mut env, &policy, episodes * horizon, horizon, 3).unwrap();
    let rtg = discounted_returns_to_go(&batch, &batch.rewards, gamma);
    let mut weights = Vec::new();
    for ep in batch.episodes() {
        weights.extend(rtg[ep].iter().enumerate().map(|(t, g)| gamma.powi(t as i32) * g * horizon as f64));
    }
    let adv = Advantages { reward: weights, costs: vec![vec![0.0; batch.len()]] };
    let sampled = build_surrogates(&batch, &policy, &adv, &[0.0], &[0.0], gamma, 0.01, 1e-5).unwrap();
    let cosine = dot(&sampled.g, &target) / (norm(&sampled.g) * norm(&target));
    assert!(cosine > 0.995, "cosine {cosine}");
    assert!((norm(&sampled.g) / norm(&target) - 1.0).abs() < 0.05);
}

#[test]
fn monte_carlo_advantages_are_unbiased_with_the_true_values() {
    let (mdp, policy) = setup();
    let (ns, na) = (4, 2);
    let table = policy_table(&policy, ns).unwrap();
    let truth = signal_values(&mdp, &table, Signal::Reward).unwrap();
    // long episodes so truncation is negligible at gamma = 0.8
    let horizon = 60;
    let mut env = TabularEnv::new(mdp.clone());
    let batch = rollout(&mut env, &policy, 3000 * horizon, horizon, 8).unwrap();
    let values: Vec<f64> = (0..batch.len()).map(|t| truth.v[TabularEnv::state_of(batch.state(t))]).collect();
    let adv = gae_advantages(&batch, &batch.rewards, &values, mdp.gamma(), 1.0).unwrap();
    let mut sums = vec![0.0; ns * na];
    let mut counts = vec![0usize; ns * na];
    for ep in batch.episodes() {
        // only the first half of each episode, where the tail is long enough
        for t in ep.start..ep.start + horizon / 2 {
            let s = TabularEnv::state_of(batch.state(t));
            let a = match batch.actions[t] {
                cpo::policy::Action::Discrete(a) => a,
                _ => unreachable!(),
            };
            sums[s * na + a] += adv[t];
            counts[s * na + a] += 1;
        }
    }
    for i in 0..ns * na {
        if counts[i] < 2000 {
            continue;
        }
        let est = sums[i] / counts[i] as f64;
        assert!((est - truth.adv[i]).abs() < 0.1, "pair {i}: {est} vs {}", truth.adv[i]);
    }
}
