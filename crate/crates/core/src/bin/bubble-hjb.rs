use std::path::PathBuf;
use std::process::ExitCode;

use bubble_hjb::cli::{self, Command};
use clap::{Parser, ValueEnum};

#[derive(Clone, Copy, ValueEnum)]
enum Cmd {
    Solve,
    Eigen,
    Evolve,
    Branch,
    VerifyControl,
    Scenario,
    VerifyAll,
}

impl From<Cmd> for Command {
    fn from(c: Cmd) -> Self {
        match c {
            Cmd::Solve => Command::Solve,
            Cmd::Eigen => Command::Eigen,
            Cmd::Evolve => Command::Evolve,
            Cmd::Branch => Command::Branch,
            Cmd::VerifyControl => Command::VerifyControl,
            Cmd::Scenario => Command::Scenario,
            Cmd::VerifyAll => Command::VerifyAll,
        }
    }
}

/// Bubble-asset pricing equation: solve, verify and trace branches.
#[derive(Parser)]
#[command(name = "bubble-hjb", version)]
struct Args {
    command: Cmd,
    #[arg(long)]
    config: PathBuf,
    /// Output directory (overrides [output] dir).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Monte Carlo master seed (overrides [mc] seed).
    #[arg(long)]
    seed: Option<u64>,
    /// Grid nodes (overrides [problem] n).
    #[arg(long)]
    n: Option<usize>,
}

fn main() -> ExitCode {
    let args = Args::parse();
    let text = match std::fs::read_to_string(&args.config) {
        Ok(t) => t,
        Err(e) => {
            eprintln!("error: cannot read {}: {e}", args.config.display());
            return ExitCode::from(2);
        }
    };
    let mut cfg = match cli::parse_config(&text) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {}: {e}", args.config.display());
            return ExitCode::from(2);
        }
    };
    if let Some(out) = args.out {
        cfg.out_dir = out;
    }
    if let Some(seed) = args.seed {
        cfg.mc.seed = seed;
    }
    if let Some(n) = args.n {
        if n < 3 {
            eprintln!("error: --n must be at least 3");
            return ExitCode::from(2);
        }
        cfg.problem.n = n;
    }
    let command = Command::from(args.command);
    match cli::run(&cfg, command) {
        Ok(outcome) => {
            for c in &outcome.checks {
                println!(
                    "{} {}: {:.3e} (tolerance {:.3e}) {}",
                    if c.pass { "PASS" } else { "FAIL" },
                    c.check,
                    c.value,
                    c.tolerance,
                    c.detail
                );
            }
            for a in &outcome.artifacts {
                println!("wrote {}", a.display());
            }
            if outcome.passed() {
                ExitCode::SUCCESS
            } else {
                eprintln!(
                    "{command}: {} check(s) failed",
                    outcome.checks.iter().filter(|c| !c.pass).count()
                );
                ExitCode::FAILURE
            }
        }
        Err(e) => {
            eprintln!("error: {command}: {e}");
            ExitCode::FAILURE
        }
    }
}
