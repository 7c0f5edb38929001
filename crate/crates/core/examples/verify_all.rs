//! Runs the verification pipeline of a config file and prints its report.
//!
//! cargo run --release --example verify_all [config] [paths]

use bubble_hjb::cli::{parse_config, run, Command};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let path = std::env::args()
        .nth(1)
        .unwrap_or_else(|| concat!(env!("CARGO_MANIFEST_DIR"), "/configs/crypto_demo.cfg").into());
    let mut cfg = parse_config(&std::fs::read_to_string(&path)?)?;
    if let Some(paths) = std::env::args().nth(2).and_then(|s| s.parse().ok()) {
        cfg.mc.paths = paths;
    }
    let outcome = run(&cfg, Command::VerifyAll)?;
    for c in &outcome.checks {
        println!("{}", serde_json::to_string(c)?);
    }
    println!("all passed: {}", outcome.passed());
    Ok(())
}
