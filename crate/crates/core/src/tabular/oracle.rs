use super::{PolicyTable, Signal, TabularCmdp};
use crate::error::{Error, Result};
use nalgebra::{DMatrix, DVector};

/// Value function, action values, and advantages for one signal.
#[derive(Debug, Clone, PartialEq)]
pub struct SignalValues {
    pub v: Vec<f64>,
    /// Row-major `[s][a]`.
    pub q: Vec<f64>,
    /// Row-major `[s][a]`, `q(s, a) - v(s)`.
    pub adv: Vec<f64>,
}

/// Reward values plus one [`SignalValues`] per cost function.
#[derive(Debug, Clone, PartialEq)]
pub struct ValueSet {
    pub reward: SignalValues,
    pub costs: Vec<SignalValues>,
}

impl ValueSet {
    pub fn v(&self) -> &[f64] {
        &self.reward.v
    }

    pub fn q(&self) -> &[f64] {
        &self.reward.q
    }

    pub fn adv(&self) -> &[f64] {
        &self.reward.adv
    }
}

/// Row-stochastic `P_pi[s][s'] = sum_a pi(a|s) P(s'|s,a)`.
pub fn policy_transition_matrix(mdp: &TabularCmdp, pol: &PolicyTable) -> Result<DMatrix<f64>> {
    mdp.check_policy(pol)?;
    let n = mdp.n_states();
    let mut m = DMatrix::zeros(n, n);
    for s in 0..n {
        for a in 0..mdp.n_actions() {
            let pa = pol.prob(s, a);
            if pa == 0.0 {
                continue;
            }
            for (s_next, p) in mdp.next_state_probs(s, a).iter().enumerate() {
                m[(s, s_next)] += pa * p;
            }
        }
    }
    Ok(m)
}

/// Expected one-step signal `sum_s' P(s'|s,a) X(s,a,s')`, row-major `[s][a]`.
pub fn expected_signal(mdp: &TabularCmdp, signal: Signal) -> Result<Vec<f64>> {
    mdp.check_signal(signal)?;
    let (ns, na) = (mdp.n_states(), mdp.n_actions());
    let mut out = vec![0.0; ns * na];
    for s in 0..ns {
        for a in 0..na {
            out[s * na + a] = (0..ns)
                .map(|sn| mdp.prob(s, a, sn) * mdp.signal(signal, s, a, sn))
                .sum();
        }
    }
    Ok(out)
}

fn lu_solve(a: DMatrix<f64>, b: DVector<f64>) -> Result<DVector<f64>> {
    a.lu()
        .solve(&b)
        .ok_or_else(|| Error::InvalidModel("singular linear system".into()))
}

/// `d^pi = (1 - gamma) (I - gamma P_pi^T)^{-1} mu`.
pub fn discounted_state_dist(mdp: &TabularCmdp, pol: &PolicyTable) -> Result<Vec<f64>> {
    let n = mdp.n_states();
    let gamma = mdp.gamma();
    let p_pi = policy_transition_matrix(mdp, pol)?;
    let system = DMatrix::identity(n, n) - p_pi.transpose() * gamma;
    let rhs = DVector::from_column_slice(mdp.start_dist()) * (1.0 - gamma);
    Ok(lu_solve(system, rhs)?.iter().copied().collect())
}

/// Bellman solve for one signal under `pol`.
pub fn signal_values(mdp: &TabularCmdp, pol: &PolicyTable, signal: Signal) -> Result<SignalValues> {
    let (ns, na) = (mdp.n_states(), mdp.n_actions());
    let gamma = mdp.gamma();
    let r_sa = expected_signal(mdp, signal)?;
    let p_pi = policy_transition_matrix(mdp, pol)?;
    let r_pi = DVector::from_iterator(
        ns,
        (0..ns).map(|s| (0..na).map(|a| pol.prob(s, a) * r_sa[s * na + a]).sum::<f64>()),
    );
    let system = DMatrix::identity(ns, ns) - p_pi * gamma;
    let v: Vec<f64> = lu_solve(system, r_pi)?.iter().copied().collect();
    let mut q = vec![0.0; ns * na];
    for s in 0..ns {
        for a in 0..na {
            let next: f64 = mdp
                .next_state_probs(s, a)
                .iter()
                .zip(&v)
                .map(|(p, vn)| p * vn)
                .sum();
            q[s * na + a] = r_sa[s * na + a] + gamma * next;
        }
    }
    let adv = q.iter().enumerate().map(|(i, qi)| qi - v[i / na]).collect();
    Ok(SignalValues { v, q, adv })
}

pub fn value_set(mdp: &TabularCmdp, pol: &PolicyTable) -> Result<ValueSet> {
    let reward = signal_values(mdp, pol, Signal::Reward)?;
    let costs = (0..mdp.n_costs())
        .map(|i| signal_values(mdp, pol, Signal::Cost(i)))
        .collect::<Result<_>>()?;
    Ok(ValueSet { reward, costs })
}

/// `J = (1 / (1 - gamma)) E_{s ~ d^pi, a ~ pi, s' ~ P}[X(s, a, s')]`.
pub fn policy_return(mdp: &TabularCmdp, pol: &PolicyTable, signal: Signal) -> Result<f64> {
    let r_sa = expected_signal(mdp, signal)?;
    let d = discounted_state_dist(mdp, pol)?;
    let na = mdp.n_actions();
    let weighted: f64 = d
        .iter()
        .enumerate()
        .map(|(s, ds)| ds * (0..na).map(|a| pol.prob(s, a) * r_sa[s * na + a]).sum::<f64>())
        .sum();
    Ok(weighted / (1.0 - mdp.gamma()))
}

/// `(1 / (1 - gamma)) E_{s ~ d^new, a ~ new}[A^old(s, a)]`.
pub fn performance_difference(
    mdp: &TabularCmdp,
    pol_new: &PolicyTable,
    pol_old: &PolicyTable,
) -> Result<f64> {
    let old_vals = signal_values(mdp, pol_old, Signal::Reward)?;
    let d_new = discounted_state_dist(mdp, pol_new)?;
    let na = mdp.n_actions();
    let total: f64 = d_new
        .iter()
        .enumerate()
        .map(|(s, ds)| {
            ds * (0..na).map(|a| pol_new.prob(s, a) * old_vals.adv[s * na + a]).sum::<f64>()
        })
        .sum();
    Ok(total / (1.0 - mdp.gamma()))
}

/// `E_{s ~ d^old, a ~ new}[A^old_X(s, a)]`: the trust-region surrogate,
/// without the `1 / (1 - gamma)` factor.
pub fn surrogate_advantage(
    mdp: &TabularCmdp,
    pol_old: &PolicyTable,
    pol_new: &PolicyTable,
    signal: Signal,
) -> Result<f64> {
    mdp.check_policy(pol_new)?;
    let vals = signal_values(mdp, pol_old, signal)?;
    let d_old = discounted_state_dist(mdp, pol_old)?;
    let na = mdp.n_actions();
    Ok(d_old
        .iter()
        .enumerate()
        .map(|(s, ds)| ds * (0..na).map(|a| pol_new.prob(s, a) * vals.adv[s * na + a]).sum::<f64>())
        .sum())
}

/// `J(pi)` rewritten through an arbitrary probe function `f` over states:
/// `E_mu[f] + (1 / (1 - gamma)) E_{d^pi, pi, P}[R + gamma f(s') - f(s)]`.
/// Equals [`policy_return`] for every `f`.
pub fn return_via_probe(mdp: &TabularCmdp, pol: &PolicyTable, f: &[f64]) -> Result<f64> {
    if f.len() != mdp.n_states() {
        return Err(Error::Dimension("probe length must equal number of states".into()));
    }
    let d = discounted_state_dist(mdp, pol)?;
    let (ns, na) = (mdp.n_states(), mdp.n_actions());
    let gamma = mdp.gamma();
    let mut td = 0.0;
    for s in 0..ns {
        for a in 0..na {
            let w = d[s] * pol.prob(s, a);
            if w == 0.0 {
                continue;
            }
            let inner: f64 = (0..ns)
                .map(|sn| mdp.prob(s, a, sn) * (mdp.reward(s, a, sn) + gamma * f[sn] - f[s]))
                .sum();
            td += w * inner;
        }
    }
    let start: f64 = mdp.start_dist().iter().zip(f).map(|(m, fv)| m * fv).sum();
    Ok(start + td / (1.0 - gamma))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tabular::TabularCmdp;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn single_state(reward: f64, gamma: f64) -> TabularCmdp {
        TabularCmdp::new(1, 1, vec![1.0], vec![reward], vec![vec![0.5]], vec![1.0], gamma, vec![1.0])
            .unwrap()
    }

    #[test]
    fn single_state_distribution_is_one() {
        let mdp = single_state(1.0, 0.9);
        let d = discounted_state_dist(&mdp, &PolicyTable::uniform(1, 1)).unwrap();
        assert_eq!(d.len(), 1);
        assert!((d[0] - 1.0).abs() < 1e-15);
    }

    #[test]
    fn two_state_chain_distribution() {
        // both states move to state 1; start in 0
        let mdp = TabularCmdp::new(
            2,
            1,
            vec![0.0, 1.0, 0.0, 1.0],
            vec![0.0; 4],
            vec![],
            vec![1.0, 0.0],
            0.5,
            vec![],
        )
        .unwrap();
        let d = discounted_state_dist(&mdp, &PolicyTable::uniform(2, 1)).unwrap();
        assert!((d[0] - 0.5).abs() < 1e-15 && (d[1] - 0.5).abs() < 1e-15);
    }

    #[test]
    fn distribution_matches_truncated_power_series() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let mdp = TabularCmdp::random(5, 3, 1, 0.9, &mut rng);
        let pol = PolicyTable::random(5, 3, &mut rng);
        let d = discounted_state_dist(&mdp, &pol).unwrap();
        // oracle: (1 - g) sum_{t <= 400} g^t p_t with p_{t+1}(s') = sum_s p_t(s) P_pi(s'|s)
        let mut p = mdp.start_dist().to_vec();
        let mut acc = vec![0.0; 5];
        let mut disc = 1.0;
        for _ in 0..=400 {
            for s in 0..5 {
                acc[s] += 0.1 * disc * p[s];
            }
            let mut next = vec![0.0; 5];
            for s in 0..5 {
                for a in 0..3 {
                    for sn in 0..5 {
                        next[sn] += p[s] * pol.prob(s, a) * mdp.prob(s, a, sn);
                    }
                }
            }
            p = next;
            disc *= 0.9;
        }
        for s in 0..5 {
            assert!((d[s] - acc[s]).abs() < 1e-6, "{} vs {}", d[s], acc[s]);
        }
        assert!((d.iter().sum::<f64>() - 1.0).abs() < 1e-9);
    }

    #[test]
    fn geometric_return() {
        let mdp = single_state(1.0, 0.9);
        let pol = PolicyTable::uniform(1, 1);
        assert!((policy_return(&mdp, &pol, Signal::Reward).unwrap() - 10.0).abs() < 1e-12);
        let zero = single_state(0.0, 0.9);
        assert_eq!(policy_return(&zero, &pol, Signal::Reward).unwrap(), 0.0);
        assert!(matches!(
            policy_return(&mdp, &pol, Signal::Cost(3)),
            Err(Error::CostIndex { index: 3, count: 1 })
        ));
        let vs = value_set(&mdp, &pol).unwrap();
        assert!((vs.v()[0] - 10.0).abs() < 1e-12);
        assert!(vs.adv()[0].abs() < 1e-12);
    }

    #[test]
    fn values_match_value_iteration() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mdp = TabularCmdp::random(6, 3, 1, 0.9, &mut rng);
        let pol = PolicyTable::random(6, 3, &mut rng);
        let vals = signal_values(&mdp, &pol, Signal::Reward).unwrap();
        let mut v = vec![0.0; 6];
        for _ in 0..1000 {
            let mut next = vec![0.0; 6];
            for s in 0..6 {
                for a in 0..3 {
                    for sn in 0..6 {
                        next[s] += pol.prob(s, a)
                            * mdp.prob(s, a, sn)
                            * (mdp.reward(s, a, sn) + 0.9 * v[sn]);
                    }
                }
            }
            v = next;
        }
        for s in 0..6 {
            assert!((vals.v[s] - v[s]).abs() < 1e-8);
        }
    }

    #[test]
    fn advantages_center_under_policy() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let mdp = TabularCmdp::random(4, 3, 2, 0.8, &mut rng);
        for pol in [PolicyTable::uniform(4, 3), PolicyTable::random(4, 3, &mut rng)] {
            let vs = value_set(&mdp, &pol).unwrap();
            for sig in std::iter::once(&vs.reward).chain(&vs.costs) {
                for s in 0..4 {
                    let c: f64 = (0..3).map(|a| pol.prob(s, a) * sig.adv[s * 3 + a]).sum();
                    assert!(c.abs() < 1e-9);
                }
            }
        }
    }

    #[test]
    fn performance_difference_identity() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let mdp = TabularCmdp::random(5, 3, 1, 0.85, &mut rng);
        let a = PolicyTable::random(5, 3, &mut rng);
        let b = PolicyTable::random(5, 3, &mut rng);
        let pd = performance_difference(&mdp, &b, &a).unwrap();
        let direct = policy_return(&mdp, &b, Signal::Reward).unwrap()
            - policy_return(&mdp, &a, Signal::Reward).unwrap();
        assert!((pd - direct).abs() < 1e-9);
        assert!(performance_difference(&mdp, &a, &a).unwrap().abs() < 1e-12);
    }

    #[test]
    fn deterministic_improvement_has_positive_sign() {
        // action 1 in either state earns reward 1, action 0 earns nothing
        let mut reward = vec![0.0; 8];
        for s in 0..2 {
            for sn in 0..2 {
                reward[(s * 2 + 1) * 2 + sn] = 1.0;
            }
        }
        let transition = vec![0.5; 8];
        let mdp =
            TabularCmdp::new(2, 2, transition, reward, vec![], vec![1.0, 0.0], 0.9, vec![]).unwrap();
        let bad = PolicyTable::deterministic(2, &[0, 0]).unwrap();
        let good = PolicyTable::deterministic(2, &[1, 1]).unwrap();
        let pd = performance_difference(&mdp, &good, &bad).unwrap();
        let direct = policy_return(&mdp, &good, Signal::Reward).unwrap()
            - policy_return(&mdp, &bad, Signal::Reward).unwrap();
        assert!(pd > 0.0 && direct > 0.0);
        assert!((pd - 10.0).abs() < 1e-9);
    }

    #[test]
    fn probe_function_cancels() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let mdp = TabularCmdp::random(6, 2, 0, 0.75, &mut rng);
        let pol = PolicyTable::random(6, 2, &mut rng);
        let j = policy_return(&mdp, &pol, Signal::Reward).unwrap();
        let v = signal_values(&mdp, &pol, Signal::Reward).unwrap().v;
        let probes = [vec![0.0; 6], v, vec![3.0, -1.0, 0.5, 2.0, -4.0, 1.5]];
        for f in &probes {
            assert!((return_via_probe(&mdp, &pol, f).unwrap() - j).abs() < 1e-9);
        }
    }

    #[test]
    fn self_consistency_of_state_distribution() {
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        let mdp = TabularCmdp::random(6, 3, 0, 0.95, &mut rng);
        let pol = PolicyTable::random(6, 3, &mut rng);
        let d = discounted_state_dist(&mdp, &pol).unwrap();
        let p_pi = policy_transition_matrix(&mdp, &pol).unwrap();
        for sn in 0..6 {
            let flow: f64 = (0..6).map(|s| d[s] * p_pi[(s, sn)]).sum();
            let rhs = 0.05 * mdp.start_dist()[sn] + 0.95 * flow;
            assert!((d[sn] - rhs).abs() < 1e-9);
        }
    }
}
