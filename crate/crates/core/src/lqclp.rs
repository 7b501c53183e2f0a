//! Linear objective with linear and quadratic constraints.
//!
//! The problem solved here is
//!
//! ```text
//!     minimize     g^T x
//!     subject to   b_i^T x + c_i <= 0      i = 1..m
//!                  x^T H x <= delta
//! ```
//!
//! with `H` positive definite and only available through `H^{-1} g` and
//! `H^{-1} b_i`. For one constraint the dual is solved in closed form by a
//! case analysis over the sign of `lambda c - r`; for several constraints the
//! dual is maximized numerically. A policy-ascent step `max g^T x` with
//! `0.5 x^T H x <= delta_kl` maps onto this form with `g -> -g` and
//! `delta = 2 delta_kl`.

use crate::error::{Error, Result};
use crate::linalg::{axpy, dot, norm, scaled};
use crate::natural_gradient::{conjugate_gradient, quadratic_form, HvpHandle};
use std::fmt;

/// Lower bound applied to `lambda*` before forming the primal direction.
pub const LAMBDA_FLOOR: f64 = 1e-8;
const INTERVAL_NUDGE: f64 = 1e-12;
const TIE_TOL: f64 = 1e-12;
const LAMBDA_MAX: f64 = 1e12;
const DEGENERATE_S: f64 = 1e-12;
const DUAL_GRAD_TOL: f64 = 1e-8;
const DUAL_MAX_ITERS: usize = 10_000;
const DUAL_DIVERGENCE: f64 = 1e12;

/// Which branch of the case analysis produced a solution.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum CaseTag {
    /// The linear constraint binds (`nu* > 0`).
    ConstraintActive,
    /// The linear constraint intersects the trust region but does not bind.
    ConstraintInactive,
    /// The whole trust region satisfies the linear constraint.
    TrustRegionOnly,
    /// No point of the trust region satisfies the linear constraint.
    Infeasible,
}

impl CaseTag {
    pub fn as_str(self) -> &'static str {
        match self {
            CaseTag::ConstraintActive => "constraint_active",
            CaseTag::ConstraintInactive => "constraint_inactive",
            CaseTag::TrustRegionOnly => "trust_region_only",
            CaseTag::Infeasible => "infeasible",
        }
    }
}

impl fmt::Display for CaseTag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Single-constraint subproblem, described through `H^{-1}`-products.
#[derive(Debug, Clone, PartialEq)]
pub struct LqclpProblem {
    /// `g^T H^{-1} g`
    pub q: f64,
    /// `g^T H^{-1} b`
    pub r: f64,
    /// `b^T H^{-1} b`
    pub s: f64,
    pub c: f64,
    pub delta: f64,
    pub h_inv_g: Vec<f64>,
    pub h_inv_b: Vec<f64>,
}

impl LqclpProblem {
    pub fn new(
        g: &[f64],
        b: &[f64],
        c: f64,
        delta: f64,
        h_inv_g: Vec<f64>,
        h_inv_b: Vec<f64>,
    ) -> Result<Self> {
        let n = g.len();
        if b.len() != n || h_inv_g.len() != n || h_inv_b.len() != n {
            return Err(Error::Dimension("g, b and their H^-1 products must agree".into()));
        }
        let problem = Self {
            q: dot(g, &h_inv_g),
            r: dot(g, &h_inv_b),
            s: dot(b, &h_inv_b),
            c,
            delta,
            h_inv_g,
            h_inv_b,
        };
        problem.validate()?;
        Ok(problem)
    }

    /// Build the products with conjugate gradients against `hvp`.
    pub fn from_metric(
        g: &[f64],
        b: &[f64],
        c: f64,
        delta: f64,
        hvp: &HvpHandle<'_>,
        cg_iters: usize,
        cg_tol: f64,
    ) -> Result<Self> {
        let h_inv_g = conjugate_gradient(hvp, g, cg_iters, cg_tol)?;
        let h_inv_b = conjugate_gradient(hvp, b, cg_iters, cg_tol)?;
        Self::new(g, b, c, delta, h_inv_g, h_inv_b)
    }

    fn validate(&self) -> Result<()> {
        if !(self.delta > 0.0) {
            return Err(Error::Precondition(format!("delta must be positive, got {}", self.delta)));
        }
        if ![self.q, self.r, self.s, self.c].iter().all(|v| v.is_finite()) {
            return Err(Error::NonFinite("subproblem coefficients".into()));
        }
        let scale = 1.0 + self.q.abs() * self.s.abs();
        if self.q < -1e-9 || self.s < -1e-9 || self.q * self.s - self.r * self.r < -1e-9 * scale {
            return Err(Error::Precondition(format!(
                "metric products violate Cauchy-Schwarz (q={}, r={}, s={})",
                self.q, self.r, self.s
            )));
        }
        Ok(())
    }

    pub fn dim(&self) -> usize {
        self.h_inv_g.len()
    }
}

/// Primal direction plus dual variables.
#[derive(Debug, Clone, PartialEq)]
pub struct LqclpSolution {
    pub direction: Vec<f64>,
    pub lambda_star: f64,
    pub nu_star: Vec<f64>,
    pub case_tag: CaseTag,
}

impl LqclpSolution {
    pub fn is_feasible(&self) -> bool {
        self.case_tag != CaseTag::Infeasible
    }

    fn infeasible(dim: usize, m: usize) -> Self {
        Self {
            direction: vec![0.0; dim],
            lambda_star: 0.0,
            nu_star: vec![0.0; m],
            case_tag: CaseTag::Infeasible,
        }
    }
}

/// Closed interval `[lo, hi]` of admissible multipliers (`hi` may be infinite).
#[derive(Debug, Clone, Copy)]
struct Interval {
    lo: f64,
    hi: f64,
}

impl Interval {
    fn project(self, x: f64) -> f64 {
        x.min(self.hi).max(self.lo)
    }
}

fn nudge(x: f64) -> f64 {
    INTERVAL_NUDGE * x.abs().max(1.0)
}

/// `(Lambda_a, Lambda_b)`: multipliers with `lambda c - r > 0` and `<= 0`.
fn multiplier_sets(c: f64, r: f64) -> (Option<Interval>, Option<Interval>) {
    if c > 0.0 {
        let t = r / c;
        if t < 0.0 {
            (Some(Interval { lo: 0.0, hi: f64::INFINITY }), None)
        } else {
            (Some(Interval { lo: t + nudge(t), hi: f64::INFINITY }), Some(Interval { lo: 0.0, hi: t }))
        }
    } else if c < 0.0 {
        let t = r / c;
        if t > 0.0 {
            (Some(Interval { lo: 0.0, hi: t - nudge(t) }), Some(Interval { lo: t, hi: f64::INFINITY }))
        } else {
            (None, Some(Interval { lo: 0.0, hi: f64::INFINITY }))
        }
    } else if r < 0.0 {
        (Some(Interval { lo: 0.0, hi: f64::INFINITY }), None)
    } else {
        (None, Some(Interval { lo: 0.0, hi: f64::INFINITY }))
    }
}

/// `a / (2 lambda)` with the `lambda = 0` limit.
fn inverse_term(a: f64, lambda: f64) -> f64 {
    if lambda > 0.0 {
        a / (2.0 * lambda)
    } else if a < 0.0 {
        f64::NEG_INFINITY
    } else {
        0.0
    }
}

fn trust_region_step(p: &LqclpProblem, m: usize, case_tag: CaseTag) -> LqclpSolution {
    let lambda = (p.q.max(0.0) / p.delta).sqrt();
    if lambda == 0.0 {
        return LqclpSolution {
            direction: vec![0.0; p.dim()],
            lambda_star: 0.0,
            nu_star: vec![0.0; m],
            case_tag: CaseTag::ConstraintInactive,
        };
    }
    let lambda = lambda.max(LAMBDA_FLOOR);
    LqclpSolution {
        direction: scaled(-1.0 / lambda, &p.h_inv_g),
        lambda_star: lambda,
        nu_star: vec![0.0; m],
        case_tag,
    }
}

/// Analytic solution of the single-constraint problem.
pub fn solve_single(p: &LqclpProblem) -> LqclpSolution {
    let (q, r, s, c, delta) = (p.q.max(0.0), p.r, p.s, p.c, p.delta);
    if s <= DEGENERATE_S {
        return if c > 0.0 {
            LqclpSolution::infeasible(p.dim(), 1)
        } else {
            trust_region_step(p, 1, CaseTag::TrustRegionOnly)
        };
    }
    let plane_gap = c * c / s - delta;
    if plane_gap > 0.0 {
        return if c > 0.0 {
            LqclpSolution::infeasible(p.dim(), 1)
        } else {
            trust_region_step(p, 1, CaseTag::TrustRegionOnly)
        };
    }

    let residual_q = (q - r * r / s).max(0.0);
    let slack = -plane_gap;
    let f_a = |lambda: f64| {
        inverse_term(-residual_q, lambda) + 0.5 * lambda * plane_gap - r * c / s
    };
    let f_b = |lambda: f64| inverse_term(-q, lambda) - 0.5 * lambda * delta;

    let (set_a, set_b) = multiplier_sets(c, r);
    let cand_a = set_a.map(|set| {
        let raw = if slack > 0.0 { (residual_q / slack).sqrt().min(LAMBDA_MAX) } else { LAMBDA_MAX };
        let l = set.project(raw);
        (l, f_a(l))
    });
    let cand_b = set_b.map(|set| {
        let l = set.project((q / delta).sqrt());
        (l, f_b(l))
    });
    let lambda = match (cand_a, cand_b) {
        (Some((la, fa)), Some((lb, fb))) => {
            if fa >= fb - TIE_TOL {
                la
            } else {
                lb
            }
        }
        (Some((la, _)), None) => la,
        (None, Some((lb, _))) => lb,
        (None, None) => unreachable!("the two multiplier sets partition [0, inf)"),
    };

    if lambda == 0.0 && q == 0.0 {
        return LqclpSolution {
            direction: vec![0.0; p.dim()],
            lambda_star: 0.0,
            nu_star: vec![0.0],
            case_tag: CaseTag::ConstraintInactive,
        };
    }
    let lambda = lambda.max(LAMBDA_FLOOR);
    let nu = ((lambda * c - r) / s).max(0.0);
    let mut combined = p.h_inv_g.clone();
    axpy(nu, &p.h_inv_b, &mut combined);
    LqclpSolution {
        direction: scaled(-1.0 / lambda, &combined),
        lambda_star: lambda,
        nu_star: vec![nu],
        case_tag: if nu > 0.0 { CaseTag::ConstraintActive } else { CaseTag::ConstraintInactive },
    }
}

/// Dual ascent for `m >= 1` linear constraints.
///
/// `b` holds the constraint gradients and `h_inv_b` their `H^{-1}` products.
/// The multiplier `lambda` is eliminated in closed form,
/// `lambda(nu) = sqrt(Q(nu) / delta)` with `Q(nu) = (g + B nu)^T H^{-1} (g + B nu)`,
/// leaving the concave function `-sqrt(delta Q(nu)) + c^T nu` over `nu >= 0`,
/// which is maximized by projected gradient ascent.
pub fn solve_dual_multi(
    g: &[f64],
    b: &[Vec<f64>],
    c: &[f64],
    delta: f64,
    h_inv_g: &[f64],
    h_inv_b: &[Vec<f64>],
) -> Result<LqclpSolution> {
    let n = g.len();
    let m = b.len();
    if m == 0 || c.len() != m || h_inv_b.len() != m {
        return Err(Error::Dimension("need m >= 1 constraints with matching c and H^-1 b".into()));
    }
    if h_inv_g.len() != n || b.iter().chain(h_inv_b).any(|v| v.len() != n) {
        return Err(Error::Dimension("parameter vectors must share one dimension".into()));
    }
    if !(delta > 0.0) {
        return Err(Error::Precondition(format!("delta must be positive, got {delta}")));
    }

    let q = dot(g, h_inv_g).max(0.0);
    let r: Vec<f64> = h_inv_b.iter().map(|hb| dot(g, hb)).collect();
    let s_mat: Vec<Vec<f64>> =
        b.iter().map(|bi| h_inv_b.iter().map(|hb| dot(bi, hb)).collect()).collect();

    let quad = |nu: &[f64]| -> f64 {
        let mut total = q;
        for i in 0..m {
            total += 2.0 * r[i] * nu[i];
            for j in 0..m {
                total += nu[i] * s_mat[i][j] * nu[j];
            }
        }
        total.max(0.0)
    };
    let dual = |nu: &[f64]| -> f64 { -(delta * quad(nu)).sqrt() + dot(c, nu) };
    let gradient = |nu: &[f64]| -> Vec<f64> {
        let qv = quad(nu).max(1e-300);
        let scale = (delta / qv).sqrt();
        (0..m)
            .map(|i| {
                let s_nu: f64 = (0..m).map(|j| s_mat[i][j] * nu[j]).sum();
                c[i] - scale * (r[i] + s_nu)
            })
            .collect()
    };
    let project = |nu: &mut [f64]| nu.iter_mut().for_each(|v| *v = v.max(0.0));

    let trace: f64 = (0..m).map(|i| s_mat[i][i]).sum();
    let mut step = 1.0 / ((delta / q.max(1e-12)).sqrt() * trace + 1.0);
    let mut nu = vec![0.0; m];
    let mut value = dual(&nu);
    for _ in 0..DUAL_MAX_ITERS {
        let grad = gradient(&nu);
        let mut probe: Vec<f64> = nu.iter().zip(&grad).map(|(v, gv)| v + gv).collect();
        project(&mut probe);
        let pg: f64 = norm(&probe.iter().zip(&nu).map(|(a, b)| a - b).collect::<Vec<_>>());
        if pg <= DUAL_GRAD_TOL {
            break;
        }
        let mut candidate: Vec<f64> = nu.iter().zip(&grad).map(|(v, gv)| v + step * gv).collect();
        project(&mut candidate);
        let cand_value = dual(&candidate);
        if cand_value.is_finite() && cand_value >= value {
            let moved = candidate.iter().zip(&nu).any(|(a, b)| a != b);
            nu = candidate;
            value = cand_value;
            step *= 2.0;
            if !moved {
                break;
            }
        } else {
            step *= 0.5;
            if step < 1e-300 {
                break;
            }
        }
        if value > DUAL_DIVERGENCE {
            return Ok(LqclpSolution::infeasible(n, m));
        }
    }

    let q_star = quad(&nu);
    let mut combined = h_inv_g.to_vec();
    for (nu_i, hb) in nu.iter().zip(h_inv_b) {
        axpy(*nu_i, hb, &mut combined);
    }
    let lambda_raw = (q_star / delta).sqrt();
    if lambda_raw == 0.0 && nu.iter().all(|v| *v == 0.0) {
        return Ok(LqclpSolution {
            direction: vec![0.0; n],
            lambda_star: 0.0,
            nu_star: nu,
            case_tag: CaseTag::ConstraintInactive,
        });
    }
    let lambda = lambda_raw.max(LAMBDA_FLOOR);
    let case_tag = if nu.iter().any(|v| *v > 0.0) {
        CaseTag::ConstraintActive
    } else if (0..m).all(|i| c[i] < 0.0 && c[i] * c[i] / s_mat[i][i].max(1e-300) > delta) {
        CaseTag::TrustRegionOnly
    } else {
        CaseTag::ConstraintInactive
    };
    Ok(LqclpSolution { direction: scaled(-1.0 / lambda, &combined), lambda_star: lambda, nu_star: nu, case_tag })
}

/// Pure constraint-decreasing step `-sqrt(2 delta / (b^T H^{-1} b)) H^{-1} b`.
///
/// Satisfies `x^T H x = 2 delta`, i.e. it lands on the boundary of the
/// `0.5 x^T H x <= delta` trust region.
pub fn recovery_direction(b: &[f64], h_inv_b: &[f64], delta: f64) -> Result<Vec<f64>> {
    if b.len() != h_inv_b.len() {
        return Err(Error::Dimension("b and H^-1 b must have equal length".into()));
    }
    let s = dot(b, h_inv_b);
    if !(s > DEGENERATE_S) {
        return Err(Error::DegenerateConstraint(s));
    }
    Ok(scaled(-(2.0 * delta / s).sqrt(), h_inv_b))
}

/// Violations of the KKT conditions for a single-constraint solution.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KktResiduals {
    /// `max(0, x^T H x - delta)`
    pub quadratic: f64,
    /// `max(0, b^T x + c)`
    pub linear: f64,
    /// `||g + lambda H x + nu b||_inf`
    pub stationarity: f64,
    /// `max(|lambda (x^T H x - delta)|, |nu (b^T x + c)|)`
    pub complementarity: f64,
}

impl KktResiduals {
    pub fn max(&self) -> f64 {
        self.quadratic.max(self.linear).max(self.stationarity).max(self.complementarity)
    }
}

pub fn kkt_residuals(
    g: &[f64],
    b: &[f64],
    c: f64,
    delta: f64,
    hvp: &HvpHandle<'_>,
    sol: &LqclpSolution,
) -> KktResiduals {
    let x = &sol.direction;
    let hx = hvp.raw(x);
    let xhx = quadratic_form(hvp, x);
    let lin = dot(b, x) + c;
    let nu = sol.nu_star.first().copied().unwrap_or(0.0);
    let stationarity = (0..g.len())
        .map(|i| (g[i] + sol.lambda_star * hx[i] + nu * b[i]).abs())
        .fold(0.0, f64::max);
    KktResiduals {
        quadratic: (xhx - delta).max(0.0),
        linear: lin.max(0.0),
        stationarity,
        complementarity: (sol.lambda_star * (xhx - delta)).abs().max((nu * lin).abs()),
    }
}
