//! Primal-dual and fixed-penalty baselines on Point-Circle. The penalty
//! baseline is run for each coefficient in the default grid.
//!
//! ```text
//! cargo run --release --example constrained_baselines -- [iterations]
//! ```

use cpo::config::{preset, Algorithm, FPO_LAMBDA_GRID};
use cpo::train::Trainer;

fn run(algorithm: Algorithm, lambda: f64, iterations: usize) -> cpo::Result<(f64, f64, f64)> {
    let mut cfg = preset("point_circle_desk")?;
    cfg.algorithm = algorithm;
    cfg.fpo.lambda = lambda;
    let mut trainer = Trainer::new(cfg)?;
    let mut last = None;
    for _ in 0..iterations {
        last = Some(trainer.step()?);
    }
    let m = last.expect("at least one iteration");
    Ok((m.mean_return, m.mean_cost_return, trainer.dual().nu.first().copied().unwrap_or(0.0)))
}

fn main() -> cpo::Result<()> {
    let iterations: usize = std::env::args().nth(1).and_then(|a| a.parse().ok()).unwrap_or(30);
    let (ret, cost, nu) = run(Algorithm::Pdo, 0.0, iterations)?;
    println!("pdo             return {ret:8.3}  cost {cost:7.3}  nu {nu:.4}");
    for lambda in FPO_LAMBDA_GRID {
        let (ret, cost, _) = run(Algorithm::Fpo, lambda, iterations)?;
        println!("fpo lambda {lambda:<4} return {ret:8.3}  cost {cost:7.3}");
    }
    Ok(())
}
