//! Both sides of the performance-difference bound on a random CMDP, for a
//! few probe functions, plus the two tightness cases.

use cpo::tabular::{
    bound_report, discounted_state_dist, dist_shift_bound_check, kl_bound_check, value_set, PolicyTable,
    TabularCmdp,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn main() -> cpo::Result<()> {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let mdp = TabularCmdp::random(5, 3, 1, 0.9, &mut rng);
    let old = PolicyTable::random(5, 3, &mut rng);
    let new = PolicyTable::random(5, 3, &mut rng);

    println!("d^pi = {:.4?}", discounted_state_dist(&mdp, &old)?);
    let v_new = value_set(&mdp, &new)?.reward.v;
    let probes: Vec<(&str, Vec<f64>)> = vec![
        ("zero", vec![0.0; 5]),
        ("random", (0..5).map(|_| rng.random_range(-2.0..2.0)).collect()),
        ("V of new policy", v_new.clone()),
    ];
    for (name, f) in &probes {
        let r = bound_report(&mdp, &old, &new, f)?;
        println!(
            "f = {name:<16} {:9.4} <= {:9.4} <= {:9.4}   (KL form {:9.4} .. {:9.4}, eps {:.4})",
            r.lower, r.delta_j, r.upper, r.lower_kl, r.upper_kl, r.epsilon
        );
    }

    let shift = dist_shift_bound_check(&mdp, &old, &new)?;
    println!("state-distribution shift {:.4} <= {:.4}", shift.lhs, shift.rhs);
    let pinsker = kl_bound_check(&mdp, &old, &new)?;
    println!("average TV {:.4} <= sqrt(KL / 2) {:.4}", pinsker.tv_avg, pinsker.kl_bound_term);

    let same = bound_report(&mdp, &old, &old, &probes[1].1)?;
    println!("identical policies: lower {}, gap {}, upper {}", same.lower, same.delta_j, same.upper);
    let exact = bound_report(&mdp, &old, &new, &v_new)?;
    println!(
        "probe V^new: eps = {:.2e}, upper - gap = {:.2e}",
        exact.epsilon,
        exact.upper - exact.delta_j
    );
    Ok(())
}
