//! Trains one robot on one light object and compares the mean episode team
//! return of the untrained and trained policies on the same evaluation seeds.
//!
//! `cargo run --release --example train_smoke -- [seed] [updates] [envs] [episodes]`

use tihdp::harness::{run_smoke, smoke_config};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let args: Vec<u64> = std::env::args().skip(1).map(|a| a.parse()).collect::<Result<_, _>>()?;
    let seed = args.first().copied().unwrap_or(0);
    let updates = args.get(1).copied().unwrap_or(150);
    let envs = args.get(2).copied().unwrap_or(16) as usize;
    let episodes = args.get(3).copied().unwrap_or(512) as usize;

    let config = smoke_config(updates, envs);
    let dir = std::env::temp_dir().join(format!("tihdp-smoke-{seed}-{}", std::process::id()));
    let r = run_smoke(&config, seed, episodes, &dir)?;
    println!(
        "seed {seed}: team return {:.3} -> {:.3} ({:.1}x), COR {:.3} -> {:.3}, trained {} updates in {:.0} s",
        r.initial_return,
        r.trained_return,
        r.improvement(),
        r.initial_cor,
        r.trained_cor,
        updates,
        r.train_seconds
    );
    println!("metrics and checkpoint in {}", dir.display());
    Ok(())
}
