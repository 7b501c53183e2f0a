//! Randomised property checks against independent oracles.
//!
//! * `theory`: performance-difference sandwich, state-distribution shift,
//!   and the KL substitution on random finite CMDPs, plus the tightness
//!   cases (identical policies, probe equal to the new value function).
//! * `solver`: the analytic single-constraint step against a geometric
//!   solution in whitened coordinates and a ternary search on the dual.
//! * `gradients`: log-probability, surrogate, KL-gradient and KL-Hessian
//!   products against central finite differences.

use crate::error::{Error, Result};
use crate::estimation::{build_surrogates, Advantages, TrajectoryBatch};
use crate::linalg::dot;
use crate::lqclp::{kkt_residuals, solve_single, LqclpProblem};
use crate::natural_gradient::HvpHandle;
use crate::policy::{mean_kl, mean_kl_grad, Action, Architecture, Head, KlHessian, ParamPolicy, StateSet};
use crate::tabular::{
    bound_report, dist_shift_bound_check, kl_bound_check, signal_values, PolicyTable, Signal, TabularCmdp,
};
use crate::train::derive_seed;
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::io::Write;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Suite {
    Theory,
    Solver,
    Gradients,
}

impl std::str::FromStr for Suite {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "theory" => Ok(Suite::Theory),
            "solver" => Ok(Suite::Solver),
            "gradients" => Ok(Suite::Gradients),
            other => Err(Error::Config(format!("unknown suite {other:?}; use theory, solver or gradients"))),
        }
    }
}

impl Suite {
    pub fn as_str(self) -> &'static str {
        match self {
            Suite::Theory => "theory",
            Suite::Solver => "solver",
            Suite::Gradients => "gradients",
        }
    }
}

/// One comparison of a computed quantity with its reference.
#[derive(Debug, Clone, PartialEq)]
pub struct CheckRow {
    pub trial: usize,
    pub seed: u64,
    pub check: &'static str,
    pub value: f64,
    pub reference: f64,
    pub pass: bool,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct VerifyReport {
    pub rows: Vec<CheckRow>,
}

impl VerifyReport {
    pub fn passed(&self) -> bool {
        self.rows.iter().all(|r| r.pass)
    }

    pub fn failures(&self) -> Vec<&CheckRow> {
        self.rows.iter().filter(|r| !r.pass).collect()
    }

    /// Distinct seeds of failing trials, in order.
    pub fn failing_seeds(&self) -> Vec<u64> {
        let mut seeds: Vec<u64> = Vec::new();
        for r in self.failures() {
            if !seeds.contains(&r.seed) {
                seeds.push(r.seed);
            }
        }
        seeds
    }

    pub fn count(&self, check: &str) -> usize {
        self.rows.iter().filter(|r| r.check == check).count()
    }

    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "trial,seed,check,value,reference,pass")?;
        for r in &self.rows {
            writeln!(out, "{},{},{},{},{},{}", r.trial, r.seed, r.check, r.value, r.reference, r.pass)?;
        }
        Ok(())
    }
}

struct Recorder<'a> {
    rows: &'a mut Vec<CheckRow>,
    trial: usize,
    seed: u64,
}

impl Recorder<'_> {
    fn push(&mut self, check: &'static str, value: f64, reference: f64, pass: bool) {
        self.rows.push(CheckRow { trial: self.trial, seed: self.seed, check, value, reference, pass });
    }
}

pub fn run(suite: Suite, trials: usize, seed: u64) -> Result<VerifyReport> {
    let stream = match suite {
        Suite::Theory => 11,
        Suite::Solver => 12,
        Suite::Gradients => 13,
    };
    let mut rows = Vec::new();
    for trial in 0..trials {
        let trial_seed = derive_seed(seed, stream, trial as u64);
        let mut rec = Recorder { rows: &mut rows, trial, seed: trial_seed };
        let mut rng = ChaCha8Rng::seed_from_u64(trial_seed);
        match suite {
            Suite::Theory => theory_trial(&mut rng, &mut rec)?,
            Suite::Solver => solver_trial(&mut rng, &mut rec)?,
            Suite::Gradients => gradient_trial(&mut rng, &mut rec)?,
        }
    }
    Ok(VerifyReport { rows })
}

// ---------------------------------------------------------------- theory

const EXACT_TOL: f64 = 1e-9;

fn theory_trial(rng: &mut ChaCha8Rng, rec: &mut Recorder<'_>) -> Result<()> {
    let ns = rng.random_range(1..=6);
    let na = rng.random_range(1..=3);
    let gamma = rng.random_range(0.5..=0.95);
    let mdp = TabularCmdp::random(ns, na, 1, gamma, rng);
    let old = PolicyTable::random(ns, na, rng);
    let new = PolicyTable::random(ns, na, rng);
    let probe: Vec<f64> = (0..ns).map(|_| rng.random_range(-5.0..5.0)).collect();

    let rep = bound_report(&mdp, &old, &new, &probe)?;
    rec.push("sandwich_lower", rep.lower, rep.delta_j, rep.lower <= rep.delta_j + EXACT_TOL);
    rec.push("sandwich_upper", rep.delta_j, rep.upper, rep.delta_j <= rep.upper + EXACT_TOL);
    rec.push("sandwich_kl_lower", rep.lower_kl, rep.delta_j, rep.lower_kl <= rep.delta_j + EXACT_TOL);
    rec.push("sandwich_kl_upper", rep.delta_j, rep.upper_kl, rep.delta_j <= rep.upper_kl + EXACT_TOL);
    let shift = dist_shift_bound_check(&mdp, &old, &new)?;
    rec.push("dist_shift", shift.lhs, shift.rhs, shift.lhs <= shift.rhs + EXACT_TOL);
    let pinsker = kl_bound_check(&mdp, &old, &new)?;
    rec.push("pinsker", pinsker.tv_avg, pinsker.kl_bound_term, pinsker.tv_avg <= pinsker.kl_bound_term + EXACT_TOL);

    // identical policies: every term vanishes
    let same = bound_report(&mdp, &old, &old, &probe)?;
    let worst = [same.delta_j, same.lower, same.upper, same.surrogate, same.avg_tv]
        .iter()
        .fold(0.0f64, |m, v| m.max(v.abs()));
    rec.push("identical_policies_zero", worst, 0.0, worst == 0.0);

    // probe equal to the new policy's value function: exact equality
    let v_new = signal_values(&mdp, &new, Signal::Reward)?.v;
    let tight = bound_report(&mdp, &old, &new, &v_new)?;
    let gap = (tight.lower - tight.delta_j).abs().max((tight.upper - tight.delta_j).abs());
    rec.push("value_probe_epsilon", tight.epsilon, 0.0, tight.epsilon <= EXACT_TOL);
    rec.push("value_probe_equality", gap, 0.0, gap <= EXACT_TOL);
    Ok(())
}

// ---------------------------------------------------------------- solver

/// Solution of the single-constraint problem by plane geometry after the
/// change of variables `y = L^T x` with `H = L L^T`. `None` if infeasible.
pub fn geometric_oracle(h: &DMatrix<f64>, g: &[f64], b: &[f64], c: f64, delta: f64) -> Option<Vec<f64>> {
    let l = h.clone().cholesky().expect("positive definite metric").l();
    let whiten = |v: &[f64]| l.solve_lower_triangular(&DVector::from_column_slice(v)).expect("triangular solve");
    let gw = whiten(g);
    let bw = whiten(b);
    let radius = delta.sqrt();
    let to_x = |y: DVector<f64>| -> Vec<f64> {
        l.transpose().solve_upper_triangular(&y).expect("triangular solve").iter().copied().collect()
    };
    let b_norm = bw.norm();
    if c - radius * b_norm > 0.0 {
        return None;
    }
    let g_norm = gw.norm();
    let ball_min = if g_norm > 0.0 { -&gw * (radius / g_norm) } else { DVector::zeros(g.len()) };
    if b_norm == 0.0 || bw.dot(&ball_min) + c <= 0.0 {
        return Some(to_x(ball_min));
    }
    let b_hat = &bw / b_norm;
    let foot = &b_hat * (-c / b_norm);
    let rho = (delta - foot.norm_squared()).max(0.0).sqrt();
    let g_perp = &gw - &b_hat * gw.dot(&b_hat);
    let y = if g_perp.norm() > 1e-14 { foot - g_perp.normalize() * rho } else { foot };
    Some(to_x(y))
}

/// Maximum of the dual `-sqrt(delta Q(nu)) + nu c` over `nu >= 0` by
/// bracketing and ternary search; equals the primal optimum when feasible.
pub fn dual_oracle(q: f64, r: f64, s: f64, c: f64, delta: f64) -> f64 {
    let h = |nu: f64| -(delta * (q + 2.0 * nu * r + nu * nu * s).max(0.0)).sqrt() + nu * c;
    let mut hi = 1.0;
    while h(2.0 * hi) > h(hi) && hi < 1e12 {
        hi *= 2.0;
    }
    let (mut lo, mut hi) = (0.0, 2.0 * hi);
    for _ in 0..300 {
        let m1 = lo + (hi - lo) / 3.0;
        let m2 = hi - (hi - lo) / 3.0;
        if h(m1) < h(m2) {
            lo = m1;
        } else {
            hi = m2;
        }
    }
    h(0.5 * (lo + hi)).max(h(0.0))
}

fn solver_trial(rng: &mut ChaCha8Rng, rec: &mut Recorder<'_>) -> Result<()> {
    let n = rng.random_range(1..=5);
    let a = DMatrix::from_fn(n, n, |_, _| rng.random_range(-1.0..1.0));
    let h = &a * a.transpose() + DMatrix::identity(n, n) * 0.1;
    let g: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
    let b: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
    let c = rng.random_range(-1.0..1.0);
    let delta = rng.random_range(0.01..1.0);
    let h_inv = h.clone().try_inverse().expect("positive definite metric");
    let mul = |v: &[f64]| -> Vec<f64> { (&h_inv * DVector::from_column_slice(v)).iter().copied().collect() };
    let problem = LqclpProblem::new(&g, &b, c, delta, mul(&g), mul(&b))?;
    let sol = solve_single(&problem);
    let geometric_infeasible = c > 0.0 && c * c / problem.s > delta;
    let oracle = geometric_oracle(&h, &g, &b, c, delta);
    rec.push(
        "infeasibility_agrees",
        f64::from(u8::from(!sol.is_feasible())),
        f64::from(u8::from(geometric_infeasible)),
        sol.is_feasible() != geometric_infeasible && oracle.is_some() != geometric_infeasible,
    );
    if let (true, Some(x_star)) = (sol.is_feasible(), oracle) {
        let objective = dot(&g, &sol.direction);
        let reference = dot(&g, &x_star);
        rec.push("objective_vs_geometric", objective, reference, (objective - reference).abs() <= 1e-4);
        let dual = dual_oracle(problem.q, problem.r, problem.s, c, delta);
        rec.push("objective_vs_dual", objective, dual, (objective - dual).abs() <= 1e-4);
        let dense: Vec<f64> = h.transpose().iter().copied().collect();
        let kkt = kkt_residuals(&g, &b, c, delta, &HvpHandle::from_dense(n, dense, 0.0), &sol);
        rec.push("kkt_residual", kkt.max(), 1e-6, kkt.max() <= 1e-6);
    }
    Ok(())
}

// ---------------------------------------------------------------- gradients

const FD_STEP: f64 = 1e-5;
const GRAD_RTOL: f64 = 1e-4;

fn close(analytic: f64, numeric: f64) -> bool {
    (analytic - numeric).abs() <= GRAD_RTOL * analytic.abs().max(numeric.abs()) + 1e-8
}

fn random_policy(rng: &mut ChaCha8Rng) -> ParamPolicy {
    let obs_dim = rng.random_range(1..=4);
    let hidden: Vec<usize> = (0..rng.random_range(0..=2)).map(|_| rng.random_range(2..=6)).collect();
    let head = if rng.random_bool(0.5) {
        Head::Categorical { n_actions: rng.random_range(2..=4) }
    } else {
        Head::Gaussian { act_dim: rng.random_range(1..=3) }
    };
    let log_std = rng.random_range(-1.0..0.5);
    let pol = ParamPolicy::init(Architecture::new(obs_dim, hidden, head), rng.random(), log_std);
    // move away from the near-linear initial regime
    let theta: Vec<f64> = pol.theta().iter().map(|t| t + rng.random_range(-0.5..0.5)).collect();
    pol.with_theta(theta).expect("same architecture")
}

fn random_vec(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| rng.random_range(-1.0..1.0)).collect()
}

fn shifted(pol: &ParamPolicy, v: &[f64], h: f64) -> ParamPolicy {
    pol.with_theta(pol.theta().iter().zip(v).map(|(t, d)| t + h * d).collect()).expect("same architecture")
}

fn central<F: Fn(&ParamPolicy) -> f64>(pol: &ParamPolicy, v: &[f64], f: F) -> f64 {
    (f(&shifted(pol, v, FD_STEP)) - f(&shifted(pol, v, -FD_STEP))) / (2.0 * FD_STEP)
}

fn gradient_trial(rng: &mut ChaCha8Rng, rec: &mut Recorder<'_>) -> Result<()> {
    let pol = random_policy(rng);
    let dim = pol.obs_dim();
    let n_states = 6;
    let obs = random_vec(rng, n_states * dim);
    let states = StateSet::uniform(&obs, dim);
    let actions: Vec<Action> = (0..n_states).map(|i| pol.sample(states.state(i), rng)).collect::<Result<_>>()?;
    let v = random_vec(rng, pol.n_params());

    // log-probability
    let (_, grad) = pol.log_prob_grad(states.state(0), &actions[0])?;
    let analytic = dot(&grad, &v);
    let numeric = central(&pol, &v, |p| p.log_prob(states.state(0), &actions[0]).expect("valid action"));
    rec.push("log_prob_grad", analytic, numeric, close(analytic, numeric));

    // surrogate objective and constraint
    let batch = TrajectoryBatch {
        obs_dim: dim,
        states: obs.clone(),
        actions: actions.clone(),
        rewards: vec![0.0; n_states],
        costs: vec![vec![0.0; n_states]],
        log_probs: (0..n_states).map(|i| pol.log_prob(states.state(i), &actions[i])).collect::<Result<_>>()?,
        episode_start: (0..n_states).map(|i| i == 0).collect(),
        lengths: vec![n_states],
        terminated: vec![true],
    };
    let adv = Advantages { reward: random_vec(rng, n_states), costs: vec![random_vec(rng, n_states)] };
    let model = build_surrogates(&batch, &pol, &adv, &[0.2], &[0.1], 0.9, 0.01, 0.0)?;
    let eval = |p: &ParamPolicy| model.evaluator.evaluate(p).expect("evaluable");
    let analytic = dot(&model.g, &v);
    let numeric = central(&pol, &v, |p| eval(p).improvement);
    rec.push("surrogate_objective_grad", analytic, numeric, close(analytic, numeric));
    let analytic = dot(&model.b_list[0], &v);
    let numeric = central(&pol, &v, |p| eval(p).constraints[0]);
    rec.push("surrogate_constraint_grad", analytic, numeric, close(analytic, numeric));

    // KL gradient away from the reference policy
    let other = shifted(&pol, &random_vec(rng, pol.n_params()), 0.3);
    let analytic = dot(&mean_kl_grad(&other, &pol, states), &v);
    let numeric = central(&other, &v, |p| mean_kl(p, &pol, states));
    rec.push("kl_grad", analytic, numeric, close(analytic, numeric));

    // KL Hessian-vector product at the reference policy
    let hv = KlHessian::new(&pol, states).apply(&v);
    let w = random_vec(rng, pol.n_params());
    let analytic = dot(&hv, &w);
    let numeric = central(&pol, &v, |p| dot(&mean_kl_grad(p, &pol, states), &w));
    rec.push("kl_hvp", analytic, numeric, close(analytic, numeric));
    Ok(())
}
