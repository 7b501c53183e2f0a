//! Text problem files for the standalone subproblem solver.
//!
//! ```text
//! # minimize g^T x  s.t.  b^T x + c <= 0,  x^T H x <= delta
//! g = 1, 0
//! b = 0, 0
//! c = -1
//! delta = 0.5
//! H = identity            # or rows separated by ';', e.g. H = 2, 0; 0, 1
//! ```
//!
//! `b` and `c` may be repeated for several constraints (paired in order).
//! Numbers are separated by commas and/or whitespace; `#` starts a comment.

use crate::error::{Error, Result};
use crate::lqclp::{solve_dual_multi, solve_single, LqclpProblem, LqclpSolution};
use crate::natural_gradient::{conjugate_gradient, HvpHandle};
use std::fmt::Write as _;

#[derive(Debug, Clone, PartialEq)]
pub enum Metric {
    Identity,
    /// Row-major dense matrix.
    Dense(Vec<f64>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProblemSpec {
    pub g: Vec<f64>,
    pub b: Vec<Vec<f64>>,
    pub c: Vec<f64>,
    pub delta: f64,
    pub h: Metric,
}

fn parse_numbers(text: &str, line: usize) -> Result<Vec<f64>> {
    text.split(|ch: char| ch == ',' || ch.is_whitespace())
        .filter(|t| !t.is_empty())
        .map(|t| t.parse::<f64>().map_err(|_| Error::Parse(format!("line {line}: {t:?} is not a number"))))
        .collect()
}

impl ProblemSpec {
    pub fn parse(text: &str) -> Result<Self> {
        let (mut g, mut b, mut c, mut delta, mut h) = (None, Vec::new(), Vec::new(), None, None);
        for (i, raw) in text.lines().enumerate() {
            let line_no = i + 1;
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) =
                line.split_once('=').ok_or_else(|| Error::Parse(format!("line {line_no}: expected key = value")))?;
            let value = value.trim();
            match key.trim() {
                "g" => g = Some(parse_numbers(value, line_no)?),
                "b" => b.push(parse_numbers(value, line_no)?),
                "c" => {
                    let v = parse_numbers(value, line_no)?;
                    if v.len() != 1 {
                        return Err(Error::Parse(format!("line {line_no}: c takes one number")));
                    }
                    c.push(v[0]);
                }
                "delta" => {
                    let v = parse_numbers(value, line_no)?;
                    if v.len() != 1 {
                        return Err(Error::Parse(format!("line {line_no}: delta takes one number")));
                    }
                    delta = Some(v[0]);
                }
                "H" | "h" => {
                    h = Some(if value.eq_ignore_ascii_case("identity") {
                        Metric::Identity
                    } else {
                        let rows = value
                            .split(';')
                            .map(|r| parse_numbers(r, line_no))
                            .collect::<Result<Vec<_>>>()?;
                        if rows.iter().any(|r| r.len() != rows.len()) {
                            return Err(Error::Parse(format!("line {line_no}: H must be square")));
                        }
                        Metric::Dense(rows.concat())
                    })
                }
                other => return Err(Error::Parse(format!("line {line_no}: unknown key {other:?}"))),
            }
        }
        let g = g.ok_or_else(|| Error::Parse("missing g".into()))?;
        let delta = delta.ok_or_else(|| Error::Parse("missing delta".into()))?;
        let h = h.unwrap_or(Metric::Identity);
        let n = g.len();
        if n == 0 {
            return Err(Error::Parse("g is empty".into()));
        }
        if b.is_empty() {
            b.push(vec![0.0; n]);
            if c.is_empty() {
                c.push(-1.0);
            }
        }
        if b.len() != c.len() {
            return Err(Error::Parse(format!("{} b lines but {} c lines", b.len(), c.len())));
        }
        if b.iter().any(|v| v.len() != n) {
            return Err(Error::Parse("every b must have the length of g".into()));
        }
        if let Metric::Dense(m) = &h {
            if m.len() != n * n {
                return Err(Error::Parse(format!("H must be {n} x {n}")));
            }
            for i in 0..n {
                for j in 0..i {
                    if (m[i * n + j] - m[j * n + i]).abs() > 1e-12 * (1.0 + m[i * n + j].abs()) {
                        return Err(Error::Parse("H must be symmetric".into()));
                    }
                }
            }
        }
        Ok(Self { g, b, c, delta, h })
    }

    pub fn metric(&self) -> HvpHandle<'static> {
        let n = self.g.len();
        match &self.h {
            Metric::Identity => HvpHandle::identity(n),
            Metric::Dense(m) => HvpHandle::from_dense(n, m.clone(), 0.0),
        }
    }
}

/// Solve with conjugate-gradient products against `H`.
pub fn solve_problem(spec: &ProblemSpec) -> Result<LqclpSolution> {
    let hvp = spec.metric();
    let n = spec.g.len();
    let iters = (4 * n).max(10);
    let tol = 1e-14;
    if spec.b.len() == 1 {
        let p = LqclpProblem::from_metric(&spec.g, &spec.b[0], spec.c[0], spec.delta, &hvp, iters, tol)?;
        Ok(solve_single(&p))
    } else {
        let h_inv_g = conjugate_gradient(&hvp, &spec.g, iters, tol)?;
        let h_inv_b = spec.b.iter().map(|b| conjugate_gradient(&hvp, b, iters, tol)).collect::<Result<Vec<_>>>()?;
        solve_dual_multi(&spec.g, &spec.b, &spec.c, spec.delta, &h_inv_g, &h_inv_b)
    }
}

fn join(v: &[f64]) -> String {
    v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(", ")
}

/// Printed form of a solution, one `key = value` line each.
pub fn format_solution(sol: &LqclpSolution) -> String {
    let mut out = String::new();
    writeln!(out, "direction = {}", join(&sol.direction)).expect("string write");
    writeln!(out, "lambda_star = {}", sol.lambda_star).expect("string write");
    writeln!(out, "nu_star = {}", join(&sol.nu_star)).expect("string write");
    writeln!(out, "case_tag = {}", sol.case_tag).expect("string write");
    out
}
