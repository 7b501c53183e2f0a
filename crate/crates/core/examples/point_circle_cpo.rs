//! CPO on Point-Circle with cost shaping, printing the training curve.
//!
//! ```text
//! cargo run --release --example point_circle_cpo -- [iterations] [seed]
//! ```

use cpo::config::preset;
use cpo::train::Trainer;

fn main() -> cpo::Result<()> {
    let mut args = std::env::args().skip(1);
    let iterations: usize = args.next().and_then(|a| a.parse().ok()).unwrap_or(50);
    let seed: u64 = args.next().and_then(|a| a.parse().ok()).unwrap_or(0);
    let mut cfg = preset("point_circle_desk")?;
    cfg.seed = seed;
    println!("limit d = {}", cfg.constraint_limit);
    let mut trainer = Trainer::new(cfg)?;
    for _ in 0..iterations {
        let m = trainer.step()?;
        println!(
            "iter {:3}  return {:8.3}  cost {:7.3}  shaped {:7.3}  {:<22} kl {:.4}  backtracks {}",
            m.iteration,
            m.mean_return,
            m.mean_cost_return,
            m.mean_shaped_cost_return,
            m.case_tag,
            m.kl,
            m.backtracks
        );
    }
    Ok(())
}
