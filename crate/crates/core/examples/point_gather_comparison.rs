//! CPO against TRPO on desk-scale Point-Gather, one thread per run.
//!
//! ```text
//! cargo run --release --example point_gather_comparison -- [iterations] [seeds]
//! ```

use cpo::config::{preset, Algorithm};
use cpo::train::Trainer;

fn main() -> cpo::Result<()> {
    let mut args = std::env::args().skip(1);
    let iterations: usize = args.next().and_then(|a| a.parse().ok()).unwrap_or(60);
    let seeds: u64 = args.next().and_then(|a| a.parse().ok()).unwrap_or(2);
    let runs: Vec<(Algorithm, u64)> =
        [Algorithm::Cpo, Algorithm::Trpo].iter().flat_map(|&a| (0..seeds).map(move |s| (a, s))).collect();
    let results = std::thread::scope(|scope| {
        let handles: Vec<_> = runs
            .iter()
            .map(|&(algorithm, seed)| {
                scope.spawn(move || -> cpo::Result<Vec<(f64, f64)>> {
                    let mut cfg = preset("point_gather_desk")?;
                    cfg.algorithm = algorithm;
                    cfg.seed = seed;
                    let mut trainer = Trainer::new(cfg)?;
                    (0..iterations).map(|_| trainer.step().map(|m| (m.mean_return, m.mean_cost_return))).collect()
                })
            })
            .collect();
        handles.into_iter().map(|h| h.join().expect("training thread panicked")).collect::<Vec<_>>()
    });
    let limit = preset("point_gather_desk")?.constraint_limit;
    println!("limit d = {limit}");
    for ((algorithm, seed), result) in runs.iter().zip(results) {
        let curve = result?;
        let tail = &curve[curve.len().saturating_sub(10)..];
        let mean = |f: fn(&(f64, f64)) -> f64| tail.iter().map(f).sum::<f64>() / tail.len().max(1) as f64;
        println!(
            "{:<5} seed {seed}: last-10 mean return {:7.3}, discounted cost {:6.3}",
            algorithm.as_str(),
            mean(|x| x.0),
            mean(|x| x.1)
        );
        for (k, (r, c)) in curve.iter().enumerate().step_by(10) {
            println!("    iter {k:4}  return {r:7.3}  cost {c:6.3}");
        }
    }
    Ok(())
}
