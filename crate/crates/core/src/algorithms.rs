//! Policy updates: CPO, TRPO, primal-dual (PDO) and fixed-penalty (FPO),
//! all built on a backtracking line search over a trust-region step.

use crate::error::{Error, Result};
use crate::estimation::{SurrogateEval, SurrogateModel};
use crate::linalg::{add_scaled, all_finite, dot, norm};
use crate::lqclp::{recovery_direction, solve_dual_multi, solve_single, CaseTag, LqclpProblem};
use crate::natural_gradient::{conjugate_gradient, default_cg_iters, DEFAULT_CG_TOL, DEFAULT_DAMPING};
use crate::policy::ParamPolicy;
use serde::{Deserialize, Serialize};

/// Slack added to every surrogate-constraint test.
pub const CONSTRAINT_EPS: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrustRegionConfig {
    pub delta_kl: f64,
    pub backtrack_ratio: f64,
    pub backtrack_budget: usize,
    pub damping: f64,
    /// Conjugate-gradient iterations; `None` scales with the parameter count.
    pub cg_iters: Option<usize>,
    pub cg_tol: f64,
    /// Allowed surrogate-constraint violation (in cost units).
    pub accept_violation_tol: f64,
    /// Relative slack on the KL test: accept `kl <= delta_kl * (1 + kl_slack)`.
    pub kl_slack: f64,
}

impl Default for TrustRegionConfig {
    fn default() -> Self {
        Self {
            delta_kl: 0.01,
            backtrack_ratio: 0.8,
            backtrack_budget: 10,
            damping: DEFAULT_DAMPING,
            cg_iters: None,
            cg_tol: DEFAULT_CG_TOL,
            accept_violation_tol: 0.0,
            kl_slack: 0.01,
        }
    }
}

impl TrustRegionConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.delta_kl > 0.0) {
            return Err(Error::Config(format!("delta_kl must be positive, got {}", self.delta_kl)));
        }
        if !(self.backtrack_ratio > 0.0 && self.backtrack_ratio < 1.0) {
            return Err(Error::Config("backtrack_ratio must lie in (0, 1)".into()));
        }
        if self.backtrack_budget == 0 {
            return Err(Error::Config("backtrack_budget must be at least 1".into()));
        }
        if !(self.damping >= 0.0) || !(self.accept_violation_tol >= 0.0) || !(self.kl_slack >= 0.0) {
            return Err(Error::Config("damping, violation tolerance and KL slack must be nonnegative".into()));
        }
        Ok(())
    }

    fn cg_iters_for(&self, dim: usize) -> usize {
        self.cg_iters.unwrap_or_else(|| default_cg_iters(dim))
    }

    fn kl_ok(&self, kl: f64) -> bool {
        kl <= self.delta_kl * (1.0 + self.kl_slack)
    }

    fn constraint_tol(&self) -> f64 {
        self.accept_violation_tol + CONSTRAINT_EPS
    }
}

/// Outcome of one policy update.
#[derive(Debug, Clone, PartialEq)]
pub struct UpdateResult {
    pub theta_new: Vec<f64>,
    pub accepted: bool,
    pub backtracks: usize,
    /// Solver branch; `None` for updates that ignore constraints.
    pub case_tag: Option<CaseTag>,
    pub lambda_star: f64,
    pub nu_star: Vec<f64>,
    /// Full (pre-backtracking) step.
    pub step: Vec<f64>,
    pub measured_kl: f64,
    pub surrogate_improvement: f64,
    pub constraints_before: Vec<f64>,
    pub constraints_after: Vec<f64>,
    pub diagnostic: Option<String>,
}

impl UpdateResult {
    fn rejected(policy: &ParamPolicy, model: &SurrogateModel, message: String) -> Self {
        Self {
            theta_new: policy.theta().to_vec(),
            accepted: false,
            backtracks: 0,
            case_tag: None,
            lambda_star: 0.0,
            nu_star: vec![0.0; model.n_constraints()],
            step: vec![0.0; policy.n_params()],
            measured_kl: 0.0,
            surrogate_improvement: 0.0,
            constraints_before: model.c_list.clone(),
            constraints_after: model.c_list.clone(),
            diagnostic: Some(message),
        }
    }

    pub fn case_label(&self) -> &'static str {
        self.case_tag.map_or("unconstrained", CaseTag::as_str)
    }
}

/// Try `theta + ratio^j * direction` for `j = 0, 1, ..., budget` and return
/// the first candidate passing `accept`, with the `j` used. If none passes,
/// `theta` is returned unchanged with `(budget, false)`.
pub fn line_search<F>(theta: &[f64], direction: &[f64], mut accept: F, ratio: f64, budget: usize) -> (Vec<f64>, usize, bool)
where
    F: FnMut(&[f64]) -> bool,
{
    let mut scale = 1.0;
    for j in 0..=budget {
        let candidate = add_scaled(theta, scale, direction);
        if accept(&candidate) {
            return (candidate, j, true);
        }
        scale *= ratio;
    }
    (theta.to_vec(), budget, false)
}

struct SearchOutcome {
    theta: Vec<f64>,
    backtracks: usize,
    accepted: bool,
    eval: Option<SurrogateEval>,
}

/// Line search where the predicate sees the evaluated candidate.
fn search<F>(policy: &ParamPolicy, model: &SurrogateModel, step: &[f64], config: &TrustRegionConfig, mut accept: F) -> SearchOutcome
where
    F: FnMut(&SurrogateEval) -> bool,
{
    let mut last = None;
    let (theta, backtracks, accepted) = line_search(
        policy.theta(),
        step,
        |theta| {
            let Ok(candidate) = policy.with_theta(theta.to_vec()) else { return false };
            match model.evaluator.evaluate(&candidate) {
                Ok(eval) => {
                    let ok = eval.improvement.is_finite() && eval.kl.is_finite() && accept(&eval);
                    last = Some(eval);
                    ok
                }
                Err(_) => false,
            }
        },
        config.backtrack_ratio,
        config.backtrack_budget,
    );
    SearchOutcome { theta, backtracks, accepted, eval: if accepted { last } else { None } }
}

fn finish(
    model: &SurrogateModel,
    step: Vec<f64>,
    outcome: SearchOutcome,
    case_tag: Option<CaseTag>,
    lambda_star: f64,
    nu_star: Vec<f64>,
) -> UpdateResult {
    let (kl, improvement, after) = match &outcome.eval {
        Some(e) => (e.kl, e.improvement, e.constraints.clone()),
        None => (0.0, 0.0, model.c_list.clone()),
    };
    UpdateResult {
        theta_new: outcome.theta,
        accepted: outcome.accepted,
        backtracks: outcome.backtracks,
        case_tag,
        lambda_star,
        nu_star,
        step,
        measured_kl: kl,
        surrogate_improvement: improvement,
        constraints_before: model.c_list.clone(),
        constraints_after: after,
        diagnostic: if outcome.accepted { None } else { Some("line search exhausted its budget".into()) },
    }
}

impl UpdateResult {
    fn zero_step(policy: &ParamPolicy, model: &SurrogateModel, case_tag: Option<CaseTag>, nu_star: Vec<f64>) -> Self {
        Self {
            theta_new: policy.theta().to_vec(),
            accepted: true,
            backtracks: 0,
            case_tag,
            lambda_star: 0.0,
            nu_star,
            step: vec![0.0; policy.n_params()],
            measured_kl: 0.0,
            surrogate_improvement: 0.0,
            constraints_before: model.c_list.clone(),
            constraints_after: model.c_list.clone(),
            diagnostic: None,
        }
    }
}

fn solve_cg(model: &SurrogateModel, rhs: &[f64], config: &TrustRegionConfig) -> Result<Vec<f64>> {
    conjugate_gradient(&model.hvp, rhs, config.cg_iters_for(rhs.len()), config.cg_tol)
}

fn check_model(policy: &ParamPolicy, model: &SurrogateModel) -> Result<()> {
    if model.g.len() != policy.n_params() || model.hvp.dim() != policy.n_params() {
        return Err(Error::Dimension("surrogate model does not match the policy".into()));
    }
    model.validate()
}

/// Natural-gradient step `sqrt(2 delta / (g^T H^-1 g)) H^-1 g` searched on
/// KL and surrogate improvement; constraints are ignored.
pub fn trpo_update(policy: &ParamPolicy, model: &SurrogateModel, config: &TrustRegionConfig) -> Result<UpdateResult> {
    check_model(policy, model)?;
    let h_inv_g = solve_cg(model, &model.g, config)?;
    trust_region_step(policy, model, config, &model.g, h_inv_g, None, vec![0.0; model.n_constraints()], None)
}

#[allow(clippy::too_many_arguments)]
fn trust_region_step(
    policy: &ParamPolicy,
    model: &SurrogateModel,
    config: &TrustRegionConfig,
    g: &[f64],
    h_inv_g: Vec<f64>,
    case_tag: Option<CaseTag>,
    nu_star: Vec<f64>,
    penalty: Option<&[f64]>,
) -> Result<UpdateResult> {
    let q = dot(g, &h_inv_g);
    if !q.is_finite() || !all_finite(&h_inv_g) {
        return Ok(UpdateResult::rejected(policy, model, format!("non-finite natural gradient (g^T H^-1 g = {q})")));
    }
    if q <= 0.0 || norm(g) == 0.0 {
        return Ok(UpdateResult::zero_step(policy, model, case_tag, nu_star));
    }
    let two_delta = 2.0 * config.delta_kl;
    let step: Vec<f64> = h_inv_g.iter().map(|x| (two_delta / q).sqrt() * x).collect();
    let lambda_star = (q / two_delta).sqrt();
    let outcome = search(policy, model, &step, config, |e| {
        let lagrangian = match penalty {
            Some(nu) => {
                e.improvement
                    - nu.iter().zip(&e.constraints).zip(&model.c_list).map(|((n, a), c)| n * (a - c)).sum::<f64>()
            }
            None => e.improvement,
        };
        config.kl_ok(e.kl) && lagrangian > 0.0
    });
    Ok(finish(model, step, outcome, case_tag, lambda_star, nu_star))
}

/// Constrained policy optimisation step.
///
/// The linearised subproblem is solved analytically for one constraint and
/// through its dual for several. When it has no feasible point the update
/// is a recovery step along `-H^-1 b` of the most violated constraint,
/// accepted once that constraint's estimate decreases. Otherwise the search
/// requires KL within the trust region, every surrogate constraint within
/// tolerance, and either objective improvement or, when the current policy
/// violates a constraint, a decrease of every violated estimate.
pub fn cpo_update(policy: &ParamPolicy, model: &SurrogateModel, config: &TrustRegionConfig) -> Result<UpdateResult> {
    check_model(policy, model)?;
    let m = model.n_constraints();
    if m == 0 {
        let h_inv_g = solve_cg(model, &model.g, config)?;
        return trust_region_step(policy, model, config, &model.g, h_inv_g, Some(CaseTag::TrustRegionOnly), vec![], None);
    }
    let h_inv_g = solve_cg(model, &model.g, config)?;
    let h_inv_b = model.b_list.iter().map(|b| solve_cg(model, b, config)).collect::<Result<Vec<_>>>()?;
    let neg_g: Vec<f64> = model.g.iter().map(|x| -x).collect();
    let neg_h_inv_g: Vec<f64> = h_inv_g.iter().map(|x| -x).collect();
    let two_delta = 2.0 * config.delta_kl;
    let sol = if m == 1 {
        let problem = LqclpProblem::new(&neg_g, &model.b_list[0], model.c_list[0], two_delta, neg_h_inv_g, h_inv_b[0].clone());
        match problem {
            Ok(p) => solve_single(&p),
            Err(e) => return Ok(UpdateResult::rejected(policy, model, format!("subproblem rejected: {e}"))),
        }
    } else {
        solve_dual_multi(&neg_g, &model.b_list, &model.c_list, two_delta, &neg_h_inv_g, &h_inv_b)?
    };
    let tol = config.constraint_tol();

    if !sol.is_feasible() {
        let worst = (0..m).max_by(|&i, &j| model.c_list[i].total_cmp(&model.c_list[j])).unwrap_or(0);
        let step = match recovery_direction(&model.b_list[worst], &h_inv_b[worst], config.delta_kl) {
            Ok(step) => step,
            Err(e) => {
                let mut r = UpdateResult::rejected(policy, model, format!("recovery impossible: {e}"));
                r.case_tag = Some(CaseTag::Infeasible);
                return Ok(r);
            }
        };
        let c_worst = model.c_list[worst];
        let outcome = search(policy, model, &step, config, |e| config.kl_ok(e.kl) && e.constraints[worst] < c_worst);
        return Ok(finish(model, step, outcome, Some(CaseTag::Infeasible), 0.0, vec![0.0; m]));
    }

    let step = sol.direction.clone();
    if !all_finite(&step) {
        return Ok(UpdateResult::rejected(policy, model, "non-finite CPO direction".into()));
    }
    if norm(&step) == 0.0 {
        return Ok(UpdateResult::zero_step(policy, model, Some(sol.case_tag), sol.nu_star));
    }
    let violated: Vec<bool> = model.c_list.iter().map(|c| *c > tol).collect();
    let any_violated = violated.iter().any(|v| *v);
    let c_before = model.c_list.clone();
    let outcome = search(policy, model, &step, config, |e| {
        if !config.kl_ok(e.kl) {
            return false;
        }
        if any_violated {
            e.constraints.iter().zip(&c_before).zip(&violated).all(|((after, before), v)| {
                if *v {
                    after < before
                } else {
                    *after <= tol
                }
            })
        } else {
            e.improvement > 0.0 && e.constraints.iter().all(|c| *c <= tol)
        }
    });
    Ok(finish(model, step, outcome, Some(sol.case_tag), sol.lambda_star, sol.nu_star))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DualState {
    pub nu: Vec<f64>,
    pub learning_rate: f64,
}

impl Default for DualState {
    fn default() -> Self {
        Self { nu: vec![0.0], learning_rate: 0.01 }
    }
}

impl DualState {
    pub fn new(n_constraints: usize, learning_rate: f64) -> Self {
        Self { nu: vec![0.0; n_constraints], learning_rate }
    }

    /// `nu <- max(0, nu + lr * (J_C - d))` with `c = J_C - d`.
    pub fn ascend(&self, c_list: &[f64]) -> Self {
        let nu = self.nu.iter().zip(c_list).map(|(n, c)| (n + self.learning_rate * c).max(0.0)).collect();
        Self { nu, learning_rate: self.learning_rate }
    }
}

/// Primal-dual step: a trust-region step on the Lagrangian gradient
/// `g - sum_i nu_i b_i`, followed by projected ascent on the multipliers.
pub fn pdo_update(
    policy: &ParamPolicy,
    model: &SurrogateModel,
    dual: &DualState,
    config: &TrustRegionConfig,
) -> Result<(UpdateResult, DualState)> {
    check_model(policy, model)?;
    if dual.nu.len() != model.n_constraints() {
        return Err(Error::Dimension(format!(
            "{} multipliers for {} constraints",
            dual.nu.len(),
            model.n_constraints()
        )));
    }
    let mut g_eff = model.g.clone();
    let mut h_inv_eff = solve_cg(model, &model.g, config)?;
    for (nu, b) in dual.nu.iter().zip(&model.b_list) {
        if *nu != 0.0 {
            let h_inv_b = solve_cg(model, b, config)?;
            g_eff = add_scaled(&g_eff, -nu, b);
            h_inv_eff = add_scaled(&h_inv_eff, -nu, &h_inv_b);
        }
    }
    let result = trust_region_step(policy, model, config, &g_eff, h_inv_eff, None, dual.nu.clone(), Some(&dual.nu))?;
    Ok((result, dual.ascend(&model.c_list)))
}

/// Rewards `r - lambda * c` for fixed-penalty optimisation.
pub fn penalized_rewards(rewards: &[f64], costs: &[f64], lambda: f64) -> Vec<f64> {
    rewards.iter().zip(costs).map(|(r, c)| r - lambda * c).collect()
}

/// Fixed-penalty step: a TRPO step on surrogates built from
/// [`penalized_rewards`].
pub fn fpo_update(policy: &ParamPolicy, penalized: &SurrogateModel, config: &TrustRegionConfig) -> Result<UpdateResult> {
    trpo_update(policy, penalized, config)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn line_search_edge_predicates() {
        let theta = [1.0, 2.0];
        let dir = [1.0, -1.0];
        assert_eq!(line_search(&theta, &dir, |_| true, 0.5, 10), (vec![2.0, 1.0], 0, true));
        assert_eq!(line_search(&theta, &dir, |_| false, 0.5, 10), (vec![1.0, 2.0], 10, false));
    }

    #[test]
    fn line_search_on_quadratic_kl() {
        // kl(x) = 0.5 |x|^2 with delta = 0.5 accepts |x| <= 1
        let theta = [0.0, 0.0];
        let dir = [0.0, 4.0];
        let (x, j, ok) = line_search(&theta, &dir, |x| 0.5 * dot(x, x) <= 0.5, 0.5, 5);
        assert!(ok);
        assert_eq!(j, 2);
        assert_eq!(x, vec![0.0, 1.0]);
        // KL four times the limit is fixed by one halving
        let (_, j, _) = line_search(&theta, &[0.0, 2.0], |x| 0.5 * dot(x, x) <= 0.5, 0.5, 5);
        assert_eq!(j, 1);
    }

    #[test]
    fn dual_ascent_is_projected() {
        let dual = DualState::new(1, 0.01);
        let up = dual.ascend(&[3.0]);
        assert!((up.nu[0] - 0.03).abs() < 1e-15);
        let mut d = up;
        for _ in 0..100 {
            d = d.ascend(&[-0.5]);
            assert!(d.nu[0] >= 0.0);
        }
        assert_eq!(d.nu[0], 0.0);
    }

    #[test]
    fn penalized_rewards_subtract_cost() {
        assert_eq!(penalized_rewards(&[1.0, 2.0], &[0.0, 1.0], 5.0), vec![1.0, -3.0]);
        assert_eq!(penalized_rewards(&[1.0, 2.0], &[0.5, 1.0], 0.0), vec![1.0, 2.0]);
    }

    #[test]
    fn config_validation() {
        assert!(TrustRegionConfig::default().validate().is_ok());
        assert!(TrustRegionConfig { delta_kl: 0.0, ..Default::default() }.validate().is_err());
        assert!(TrustRegionConfig { backtrack_budget: 0, ..Default::default() }.validate().is_err());
        assert!(TrustRegionConfig { backtrack_ratio: 1.0, ..Default::default() }.validate().is_err());
    }
}
