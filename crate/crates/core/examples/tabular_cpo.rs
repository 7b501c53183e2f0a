//! Exact CPO on a small random CMDP: surrogates, advantages and the state
//! distribution come from the tabular oracle instead of samples, and every
//! step is checked against the worst-case trust-region guarantees. Near the
//! constraint boundary the curvature of the true cost return makes most
//! candidates overshoot, so updates there are frequently rejected.
//!
//! ```text
//! cargo run --release --example tabular_cpo -- [seed] [iterations]
//! ```

use cpo::algorithms::{cpo_update, TrustRegionConfig};
use cpo::estimation::{exact_tabular_surrogates, policy_table};
use cpo::policy::{Architecture, Head, ParamPolicy};
use cpo::tabular::{policy_return, proposition_bounds, Signal, TabularCmdp};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn main() -> cpo::Result<()> {
    let mut args = std::env::args().skip(1);
    let seed: u64 = args.next().and_then(|a| a.parse().ok()).unwrap_or(7);
    let iterations: usize = args.next().and_then(|a| a.parse().ok()).unwrap_or(50);
    let (ns, na, gamma) = (6, 3, 0.9);

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let raw = TabularCmdp::random(ns, na, 1, gamma, &mut rng);
    // tabular softmax: one-hot states straight into the logits
    let mut policy = ParamPolicy::init(Architecture::new(ns, vec![], Head::Categorical { n_actions: na }), seed, 0.0);
    let j_c0 = policy_return(&raw, &policy_table(&policy, ns)?, Signal::Cost(0))?;
    let mdp = raw.with_limits(vec![j_c0 + 0.05])?;
    let cfg = TrustRegionConfig { kl_slack: 0.0, cg_iters: Some(50), cg_tol: 1e-12, ..Default::default() };
    println!("limit d = {:.4}", mdp.limits()[0]);

    for k in 0..iterations {
        let old = policy_table(&policy, ns)?;
        let model = exact_tabular_surrogates(&mdp, &policy, cfg.delta_kl, cfg.damping)?;
        let update = cpo_update(&policy, &model, &cfg)?;
        policy = policy.with_theta(update.theta_new.clone())?;
        let new = policy_table(&policy, ns)?;
        let report = proposition_bounds(&mdp, &old, &new, cfg.delta_kl)?;
        println!(
            "iter {k:3}  J {:8.4}  J_C {:8.4}  {:<20} {} kl {:.5}  improvement bound {}  cost bound {}",
            policy_return(&mdp, &new, Signal::Reward)?,
            report.cost_returns_new[0],
            update.case_label(),
            if update.accepted { "accepted" } else { "rejected" },
            report.avg_kl,
            if report.holds1 { "ok" } else { "VIOLATED" },
            if report.holds2[0] { "ok" } else { "VIOLATED" },
        );
    }
    Ok(())
}
