mod common;

use common::{advantages, circle_batch, model, rel_diff, GAMMA};
use cpo::algorithms::{cpo_update, fpo_update, pdo_update, trpo_update, DualState, TrustRegionConfig};
use cpo::estimation::{build_surrogates, Advantages};
use cpo::linalg::dot;
use cpo::lqclp::CaseTag;
use cpo::natural_gradient::{conjugate_gradient, DEFAULT_CG_TOL};

#[test]
fn slack_constraint_gives_the_trpo_step() {
    let (policy, batch) = circle_batch(1, 800);
    let adv = advantages(&batch);
    let m = model(&policy, &batch, &adv, 0.0, 100.0);
    let cfg = TrustRegionConfig::default();
    let cpo = cpo_update(&policy, &m, &cfg).unwrap();
    let trpo = trpo_update(&policy, &m, &cfg).unwrap();
    assert_eq!(cpo.case_tag, Some(CaseTag::TrustRegionOnly));
    assert!(rel_diff(&cpo.step, &trpo.step) < 1e-6);
    assert_eq!(cpo.theta_new, trpo.theta_new);
}

#[test]
fn zero_multiplier_pdo_gives_the_trpo_step() {
    let (policy, batch) = circle_batch(2, 800);
    let adv = advantages(&batch);
    let m = model(&policy, &batch, &adv, 3.0, 1.0);
    let cfg = TrustRegionConfig::default();
    let (pdo, dual) = pdo_update(&policy, &m, &DualState::new(1, 0.5), &cfg).unwrap();
    let trpo = trpo_update(&policy, &m, &cfg).unwrap();
    assert!(rel_diff(&pdo.step, &trpo.step) < 1e-6);
    // the multiplier reacts to the violation c = 2 after the step
    assert!((dual.nu[0] - 1.0).abs() < 1e-12);
}

#[test]
fn zero_penalty_fpo_gives_the_trpo_step() {
    let (policy, batch) = circle_batch(3, 600);
    let adv = advantages(&batch);
    let m = model(&policy, &batch, &adv, 0.0, 1.0);
    let cfg = TrustRegionConfig::default();
    assert_eq!(fpo_update(&policy, &m, &cfg).unwrap(), trpo_update(&policy, &m, &cfg).unwrap());
}

#[test]
fn stationary_feasible_policy_is_a_fixed_point() {
    let (policy, batch) = circle_batch(4, 500);
    let zeros = Advantages { reward: vec![0.0; batch.len()], costs: vec![vec![0.0; batch.len()]] };
    let m = model(&policy, &batch, &zeros, 0.2, 1.0);
    let update = cpo_update(&policy, &m, &TrustRegionConfig::default()).unwrap();
    assert!(update.accepted);
    assert_eq!(update.theta_new, policy.theta());
    assert!(update.step.iter().all(|x| *x == 0.0));
}

#[test]
fn infeasible_subproblem_takes_the_recovery_step() {
    let (policy, batch) = circle_batch(5, 800);
    let adv = advantages(&batch);
    let m = model(&policy, &batch, &adv, 50.0, 0.0);
    let cfg = TrustRegionConfig { cg_iters: Some(10), ..Default::default() };
    let b = &m.b_list[0];
    let h_inv_b = conjugate_gradient(&m.hvp, b, 10, DEFAULT_CG_TOL).unwrap();
    let s = dot(b, &h_inv_b);
    assert!(m.c_list[0].powi(2) / s > 2.0 * cfg.delta_kl, "fixture must be infeasible");

    let update = cpo_update(&policy, &m, &cfg).unwrap();
    assert_eq!(update.case_tag, Some(CaseTag::Infeasible));
    let scale = -(2.0 * cfg.delta_kl / s).sqrt();
    let expected: Vec<f64> = h_inv_b.iter().map(|x| scale * x).collect();
    assert!(rel_diff(&update.step, &expected) < 1e-9);
    assert!(update.accepted);
    assert!(update.constraints_after[0] < update.constraints_before[0]);
}

#[test]
fn violated_but_feasible_constraint_must_decrease() {
    let (policy, batch) = circle_batch(6, 800);
    let adv = advantages(&batch);
    let probe = model(&policy, &batch, &adv, 0.0, 0.0);
    let cfg = TrustRegionConfig { cg_iters: Some(10), ..Default::default() };
    let h_inv_b = conjugate_gradient(&probe.hvp, &probe.b_list[0], 10, DEFAULT_CG_TOL).unwrap();
    let s = dot(&probe.b_list[0], &h_inv_b);
    // c > 0 with c^2 / s well inside the trust region
    let c = 0.2 * (2.0 * 0.01 * s).sqrt();
    let m = model(&policy, &batch, &adv, c, 0.0);
    let update = cpo_update(&policy, &m, &cfg).unwrap();
    assert!(update.case_tag.is_some_and(|t| t != CaseTag::Infeasible));
    if update.accepted {
        assert!(update.constraints_after[0] < c);
    }
}

#[test]
fn duplicated_constraint_matches_single_constraint() {
    let (policy, batch) = circle_batch(7, 800);
    let adv = advantages(&batch);
    let single = model(&policy, &batch, &adv, 0.05, 0.1);
    let twice = Advantages { reward: adv.reward.clone(), costs: vec![adv.costs[0].clone(), adv.costs[0].clone()] };
    let double = build_surrogates(&batch, &policy, &twice, &[0.05, 0.05], &[0.1, 0.1], GAMMA, 0.01, 1e-5).unwrap();
    let cfg = TrustRegionConfig::default();
    let a = cpo_update(&policy, &single, &cfg).unwrap();
    let b = cpo_update(&policy, &double, &cfg).unwrap();
    assert_eq!(a.case_tag, b.case_tag);
    assert!(rel_diff(&b.step, &a.step) < 1e-4, "{}", rel_diff(&b.step, &a.step));
    if let Some(CaseTag::ConstraintActive) = a.case_tag {
        assert!((b.nu_star.iter().sum::<f64>() - a.nu_star[0]).abs() < 1e-4 * a.nu_star[0].max(1.0));
    }
}
