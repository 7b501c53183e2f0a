//! Exact evaluation of the policy performance bounds on finite CMDPs.

use super::oracle::{discounted_state_dist, expected_signal, policy_return, signal_values};
use super::{PolicyTable, Signal, TabularCmdp};
use crate::error::{Error, Result};

const HOLD_TOL: f64 = 1e-9;

/// Both sides of the performance-difference sandwich for one probe function.
#[derive(Debug, Clone, PartialEq)]
pub struct BoundReport {
    /// Exact `J(pi') - J(pi)`.
    pub delta_j: f64,
    pub lower: f64,
    pub upper: f64,
    /// `max_s |E_{a ~ pi', s' ~ P}[delta_f(s, a, s')]|`.
    pub epsilon: f64,
    /// `L_{pi, f}(pi')`.
    pub surrogate: f64,
    /// `E_{s ~ d^pi}[D_TV(pi' || pi)[s]]`.
    pub avg_tv: f64,
    /// `E_{s ~ d^pi}[D_KL(pi' || pi)[s]]`; infinite on a support mismatch.
    pub avg_kl: f64,
    /// Sandwich with the TV term replaced by `sqrt(avg_kl / 2)`.
    pub lower_kl: f64,
    pub upper_kl: f64,
    pub holds: bool,
    pub holds_kl: bool,
}

/// `||d^{pi'} - d^pi||_1` against `(2 gamma / (1 - gamma)) E_{d^pi}[D_TV]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DistShiftCheck {
    pub lhs: f64,
    pub rhs: f64,
    pub holds: bool,
}

/// Average TV against `sqrt(E[D_KL] / 2)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PinskerCheck {
    pub tv_avg: f64,
    pub kl_bound_term: f64,
    pub holds: bool,
}

/// Worst-case guarantees of a single trust-region step, evaluated exactly.
#[derive(Debug, Clone, PartialEq)]
pub struct PropositionReport {
    pub avg_kl: f64,
    pub delta_j: f64,
    /// `(1 / (1 - gamma)) E_{d^old, new}[A^old]`.
    pub surrogate: f64,
    pub prop1_rhs: f64,
    pub holds1: bool,
    /// Per cost: `J_C(old) + (1 / (1 - gamma)) E_{d^old, new}[A_C^old]`.
    pub surrogate_constraints: Vec<f64>,
    pub cost_returns_new: Vec<f64>,
    pub prop2_rhs: Vec<f64>,
    pub holds2: Vec<bool>,
}

/// `D_TV(p || q) = 0.5 * sum |p - q|`.
pub fn total_variation(p: &[f64], q: &[f64]) -> f64 {
    0.5 * p.iter().zip(q).map(|(a, b)| (a - b).abs()).sum::<f64>()
}

/// `D_KL(p || q)`; `+inf` when `p` puts mass where `q` has none.
pub fn kl_divergence(p: &[f64], q: &[f64]) -> f64 {
    p.iter()
        .zip(q)
        .map(|(&pi, &qi)| {
            if pi == 0.0 {
                0.0
            } else if qi == 0.0 {
                f64::INFINITY
            } else {
                pi * (pi / qi).ln()
            }
        })
        .sum()
}

/// `sum_s weights[s] * D_KL(new || old)[s]`.
pub fn mean_kl_under(weights: &[f64], pol_new: &PolicyTable, pol_old: &PolicyTable) -> f64 {
    weights
        .iter()
        .enumerate()
        .filter(|(_, w)| **w > 0.0)
        .map(|(s, w)| w * kl_divergence(pol_new.row(s), pol_old.row(s)))
        .sum()
}

fn mean_tv_under(weights: &[f64], pol_new: &PolicyTable, pol_old: &PolicyTable) -> f64 {
    weights
        .iter()
        .enumerate()
        .map(|(s, w)| w * total_variation(pol_new.row(s), pol_old.row(s)))
        .sum()
}

/// `sqrt(2 delta) gamma eps / (1 - gamma)^2`, the worst-case slack of a
/// trust-region step of size `delta`.
pub fn trust_region_penalty(delta: f64, gamma: f64, eps: f64) -> f64 {
    (2.0 * delta).sqrt() * gamma * eps / (1.0 - gamma).powi(2)
}

pub fn bound_report(
    mdp: &TabularCmdp,
    pol_old: &PolicyTable,
    pol_new: &PolicyTable,
    f: &[f64],
) -> Result<BoundReport> {
    bound_report_for(mdp, pol_old, pol_new, f, Signal::Reward)
}

/// Performance-difference sandwich for any signal (reward or a cost) and probe `f`.
pub fn bound_report_for(
    mdp: &TabularCmdp,
    pol_old: &PolicyTable,
    pol_new: &PolicyTable,
    f: &[f64],
    signal: Signal,
) -> Result<BoundReport> {
    mdp.check_policy(pol_old)?;
    mdp.check_policy(pol_new)?;
    mdp.check_signal(signal)?;
    let (ns, na) = (mdp.n_states(), mdp.n_actions());
    if f.len() != ns {
        return Err(Error::Dimension("probe length must equal number of states".into()));
    }
    if f.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("probe function".into()));
    }
    let gamma = mdp.gamma();
    let x_sa = expected_signal(mdp, signal)?;
    // mean TD residual of f for each (s, a)
    let mut td = vec![0.0; ns * na];
    for s in 0..ns {
        for a in 0..na {
            let next: f64 = mdp.next_state_probs(s, a).iter().zip(f).map(|(p, fv)| p * fv).sum();
            td[s * na + a] = x_sa[s * na + a] + gamma * next - f[s];
        }
    }
    let d_old = discounted_state_dist(mdp, pol_old)?;

    let mut surrogate = 0.0;
    let mut epsilon: f64 = 0.0;
    for s in 0..ns {
        let mut under_new = 0.0;
        let mut shift = 0.0;
        for a in 0..na {
            let t = td[s * na + a];
            under_new += pol_new.prob(s, a) * t;
            shift += (pol_new.prob(s, a) - pol_old.prob(s, a)) * t;
        }
        surrogate += d_old[s] * shift;
        epsilon = epsilon.max(under_new.abs());
    }
    let avg_tv = mean_tv_under(&d_old, pol_new, pol_old);
    let avg_kl = mean_kl_under(&d_old, pol_new, pol_old);

    let delta_j = policy_return(mdp, pol_new, signal)? - policy_return(mdp, pol_old, signal)?;
    let centre = surrogate / (1.0 - gamma);
    let coeff = 2.0 * gamma * epsilon / (1.0 - gamma).powi(2);
    let spread = coeff * avg_tv;
    let spread_kl = if epsilon == 0.0 { 0.0 } else { coeff * (0.5 * avg_kl).sqrt() };
    let (lower, upper) = (centre - spread, centre + spread);
    let (lower_kl, upper_kl) = (centre - spread_kl, centre + spread_kl);
    Ok(BoundReport {
        delta_j,
        lower,
        upper,
        epsilon,
        surrogate,
        avg_tv,
        avg_kl,
        lower_kl,
        upper_kl,
        holds: lower - HOLD_TOL <= delta_j && delta_j <= upper + HOLD_TOL,
        holds_kl: lower_kl - HOLD_TOL <= delta_j && delta_j <= upper_kl + HOLD_TOL,
    })
}

pub fn dist_shift_bound_check(
    mdp: &TabularCmdp,
    pol_old: &PolicyTable,
    pol_new: &PolicyTable,
) -> Result<DistShiftCheck> {
    let d_old = discounted_state_dist(mdp, pol_old)?;
    let d_new = discounted_state_dist(mdp, pol_new)?;
    let lhs: f64 = d_new.iter().zip(&d_old).map(|(a, b)| (a - b).abs()).sum();
    let gamma = mdp.gamma();
    let rhs = 2.0 * gamma / (1.0 - gamma) * mean_tv_under(&d_old, pol_new, pol_old);
    Ok(DistShiftCheck { lhs, rhs, holds: lhs <= rhs + HOLD_TOL })
}

pub fn kl_bound_check(
    mdp: &TabularCmdp,
    pol_old: &PolicyTable,
    pol_new: &PolicyTable,
) -> Result<PinskerCheck> {
    mdp.check_policy(pol_new)?;
    let d_old = discounted_state_dist(mdp, pol_old)?;
    let avg_kl = mean_kl_under(&d_old, pol_new, pol_old);
    if !avg_kl.is_finite() {
        return Err(Error::InfiniteKl(
            "new policy puts mass on actions the old policy never takes".into(),
        ));
    }
    let tv_avg = mean_tv_under(&d_old, pol_new, pol_old);
    let kl_bound_term = (0.5 * avg_kl).sqrt();
    Ok(PinskerCheck { tv_avg, kl_bound_term, holds: tv_avg <= kl_bound_term + HOLD_TOL })
}

/// Worst-case performance and constraint guarantees of a step with
/// `E_{d^old}[D_KL(new || old)] <= delta`.
pub fn proposition_bounds(
    mdp: &TabularCmdp,
    pol_old: &PolicyTable,
    pol_new: &PolicyTable,
    delta: f64,
) -> Result<PropositionReport> {
    mdp.check_policy(pol_old)?;
    mdp.check_policy(pol_new)?;
    let (ns, na) = (mdp.n_states(), mdp.n_actions());
    let gamma = mdp.gamma();
    let d_old = discounted_state_dist(mdp, pol_old)?;
    let avg_kl = mean_kl_under(&d_old, pol_new, pol_old);
    if !(avg_kl <= delta + 1e-12) {
        return Err(Error::Precondition(format!(
            "average KL {avg_kl:e} exceeds trust region {delta:e}"
        )));
    }

    // (surrogate, eps) for the advantage of `signal` under the old policy
    let step_terms = |signal: Signal| -> Result<(f64, f64)> {
        let vals = signal_values(mdp, pol_old, signal)?;
        let mut surrogate = 0.0;
        let mut eps: f64 = 0.0;
        for s in 0..ns {
            let under_new: f64 = (0..na).map(|a| pol_new.prob(s, a) * vals.adv[s * na + a]).sum();
            surrogate += d_old[s] * under_new;
            eps = eps.max(under_new.abs());
        }
        Ok((surrogate / (1.0 - gamma), eps))
    };

    let (surrogate, eps) = step_terms(Signal::Reward)?;
    let delta_j =
        policy_return(mdp, pol_new, Signal::Reward)? - policy_return(mdp, pol_old, Signal::Reward)?;
    let prop1_rhs = -trust_region_penalty(delta, gamma, eps);

    let mut surrogate_constraints = Vec::with_capacity(mdp.n_costs());
    let mut cost_returns_new = Vec::with_capacity(mdp.n_costs());
    let mut prop2_rhs = Vec::with_capacity(mdp.n_costs());
    let mut holds2 = Vec::with_capacity(mdp.n_costs());
    for i in 0..mdp.n_costs() {
        let (cost_surrogate, eps_c) = step_terms(Signal::Cost(i))?;
        let j_old = policy_return(mdp, pol_old, Signal::Cost(i))?;
        let j_new = policy_return(mdp, pol_new, Signal::Cost(i))?;
        let rhs = mdp.limits()[i] + trust_region_penalty(delta, gamma, eps_c);
        surrogate_constraints.push(j_old + cost_surrogate);
        cost_returns_new.push(j_new);
        prop2_rhs.push(rhs);
        holds2.push(j_new <= rhs + HOLD_TOL);
    }
    Ok(PropositionReport {
        avg_kl,
        delta_j,
        surrogate,
        prop1_rhs,
        holds1: delta_j >= prop1_rhs - HOLD_TOL,
        surrogate_constraints,
        cost_returns_new,
        prop2_rhs,
        holds2,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tabular::{signal_values, TabularCmdp};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn identical_policies_give_zero_everywhere() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mdp = TabularCmdp::random(4, 3, 1, 0.9, &mut rng);
        let pol = PolicyTable::random(4, 3, &mut rng);
        let f = vec![0.3, -2.0, 1.0, 0.0];
        let rep = bound_report(&mdp, &pol, &pol, &f).unwrap();
        assert_eq!(rep.lower, 0.0);
        assert_eq!(rep.upper, 0.0);
        assert_eq!(rep.delta_j, 0.0);
        assert!(rep.holds && rep.holds_kl);
        let shift = dist_shift_bound_check(&mdp, &pol, &pol).unwrap();
        assert_eq!((shift.lhs, shift.rhs), (0.0, 0.0));
        let pinsker = kl_bound_check(&mdp, &pol, &pol).unwrap();
        assert_eq!((pinsker.tv_avg, pinsker.kl_bound_term), (0.0, 0.0));
    }

    #[test]
    fn new_value_probe_is_exact() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let mdp = TabularCmdp::random(5, 2, 1, 0.8, &mut rng);
        let old = PolicyTable::random(5, 2, &mut rng);
        let new = PolicyTable::random(5, 2, &mut rng);
        let f = signal_values(&mdp, &new, Signal::Reward).unwrap().v;
        let rep = bound_report(&mdp, &old, &new, &f).unwrap();
        assert!(rep.epsilon < 1e-12);
        assert!((rep.lower - rep.delta_j).abs() < 1e-9);
        assert!((rep.upper - rep.delta_j).abs() < 1e-9);
    }

    #[test]
    fn pinsker_single_state_example() {
        let mdp =
            TabularCmdp::new(1, 2, vec![1.0, 1.0], vec![0.0; 2], vec![], vec![1.0], 0.5, vec![])
                .unwrap();
        let old = PolicyTable::new(1, 2, vec![0.5, 0.5]).unwrap();
        let new = PolicyTable::new(1, 2, vec![1.0, 0.0]).unwrap();
        let chk = kl_bound_check(&mdp, &old, &new).unwrap();
        assert!((chk.tv_avg - 0.5).abs() < 1e-15);
        assert!((chk.kl_bound_term - (0.5 * 2f64.ln()).sqrt()).abs() < 1e-15);
        assert!((chk.kl_bound_term - 0.5887).abs() < 1e-4);
        assert!(chk.holds);
        // reversed direction has infinite KL
        assert!(matches!(kl_bound_check(&mdp, &new, &old), Err(Error::InfiniteKl(_))));
    }

    #[test]
    fn maximally_different_deterministic_policies() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let mdp = TabularCmdp::random(2, 2, 0, 0.9, &mut rng);
        let a = PolicyTable::deterministic(2, &[0, 0]).unwrap();
        let b = PolicyTable::deterministic(2, &[1, 1]).unwrap();
        let chk = dist_shift_bound_check(&mdp, &a, &b).unwrap();
        // TV is 1 in every state, so rhs = 2 gamma / (1 - gamma) = 18 while lhs <= 2
        assert!((chk.rhs - 18.0).abs() < 1e-9);
        assert!(chk.lhs < chk.rhs && chk.holds);
    }

    #[test]
    fn penalty_formula() {
        let term = trust_region_penalty(0.01, 0.995, 1.0);
        // sqrt(0.02) * 0.995 / 0.005^2 = 0.14071425 * 40000
        assert!((term - 5628.570).abs() < 1e-3, "{term}");
    }

    #[test]
    fn proposition_rejects_large_steps() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let mdp = TabularCmdp::random(3, 2, 1, 0.9, &mut rng);
        let old = PolicyTable::random(3, 2, &mut rng);
        let new = PolicyTable::random(3, 2, &mut rng);
        assert!(matches!(
            proposition_bounds(&mdp, &old, &new, 1e-8),
            Err(Error::Precondition(_))
        ));
        let same = proposition_bounds(&mdp, &old, &old, 0.01).unwrap();
        assert_eq!(same.delta_j, 0.0);
        assert!(same.prop1_rhs <= 0.0 && same.holds1);
    }
}
