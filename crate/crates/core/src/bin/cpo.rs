use clap::{Parser, Subcommand};
use cpo::config::RunConfig;
use cpo::lqclp::CaseTag;
use cpo::solve::{format_solution, solve_problem, ProblemSpec};
use cpo::verify::{self, Suite};
use std::path::PathBuf;
use std::process::ExitCode;

#[derive(Parser)]
#[command(name = "cpo", version, about = "Constrained policy optimization toolkit")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train a policy; CONFIG is a TOML file or `preset:<name>`.
    Train {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        /// Use the published environment parameters.
        #[arg(long)]
        paper_params: bool,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run a randomised property suite: theory, solver or gradients.
    Verify {
        #[arg(long)]
        suite: Suite,
        #[arg(long, default_value_t = 1000)]
        trials: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Per-check CSV report.
        #[arg(long)]
        report: Option<PathBuf>,
    },
    /// Solve a subproblem file and print the step and multipliers.
    Solve {
        #[arg(long)]
        problem: PathBuf,
    },
}

fn train(config: PathBuf, seed: Option<u64>, paper_params: bool, out: Option<PathBuf>) -> cpo::Result<()> {
    let mut cfg = RunConfig::load(&config)?;
    if let Some(seed) = seed {
        cfg.seed = seed;
    }
    if paper_params {
        cfg.apply_paper_params();
    }
    if let Some(out) = out {
        cfg.out_dir = out;
    }
    cfg.validate()?;
    let summary = cpo::train::train(&cfg)?;
    println!("metrics: {}", summary.metrics_path.display());
    if let Some(last) = summary.rows.last() {
        println!(
            "final iteration {}: return {:.4}, discounted cost {:.4}",
            last.iteration, last.mean_return, last.mean_cost_return
        );
    }
    Ok(())
}

fn run_verify(suite: Suite, trials: usize, seed: u64, report: Option<PathBuf>) -> cpo::Result<bool> {
    let result = verify::run(suite, trials, seed)?;
    let path = report.unwrap_or_else(|| PathBuf::from(format!("verify-{}.csv", suite.as_str())));
    result.write_csv(std::io::BufWriter::new(std::fs::File::create(&path)?))?;
    let failures = result.failures();
    println!(
        "{} suite: {} checks over {trials} trials, {} failed (report: {})",
        suite.as_str(),
        result.rows.len(),
        failures.len(),
        path.display()
    );
    if !failures.is_empty() {
        let seeds: Vec<String> = result.failing_seeds().iter().map(u64::to_string).collect();
        eprintln!("failing seeds: {}", seeds.join(" "));
    }
    Ok(failures.is_empty())
}

fn run_solve(problem: PathBuf) -> ExitCode {
    let spec = match std::fs::read_to_string(&problem).map_err(cpo::Error::from).and_then(|t| ProblemSpec::parse(&t)) {
        Ok(spec) => spec,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(1);
        }
    };
    match solve_problem(&spec) {
        Ok(sol) => {
            print!("{}", format_solution(&sol));
            if sol.case_tag == CaseTag::Infeasible {
                ExitCode::from(2)
            } else {
                ExitCode::SUCCESS
            }
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match cli.command {
        Command::Train { config, seed, paper_params, out } => match train(config, seed, paper_params, out) {
            Ok(()) => ExitCode::SUCCESS,
            Err(e) => {
                eprintln!("error: {e}");
                ExitCode::FAILURE
            }
        },
        Command::Verify { suite, trials, seed, report } => match run_verify(suite, trials, seed, report) {
            Ok(true) => ExitCode::SUCCESS,
            Ok(false) => ExitCode::FAILURE,
            Err(e) => {
                eprintln!("error: {e}");
                ExitCode::FAILURE
            }
        },
        Command::Solve { problem } => run_solve(problem),
    }
}
