//! Builds every observation for a random scene and prints the named fields
//! of robot 0's local observation.
//!
//! `cargo run --example observations -- [seed]`

use tihdp::harness::describe_layout;
use tihdp::obs::{build_global_state, build_high_obs, build_low_obs, ObsConfig};
use tihdp::world::{ScenarioConfig, WorldState};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let seed = std::env::args().nth(1).map(|s| s.parse()).transpose()?.unwrap_or(0);
    let scenario = ScenarioConfig::with_counts(3, 2, 1, 1);
    let state = WorldState::reset(&scenario, seed)?;
    let cfg = ObsConfig::default();
    let layout = describe_layout(&cfg, scenario.robots, scenario.objects());

    let high = build_high_obs(&state, 0, &cfg);
    println!("{} ({} values), neighbours {:?}", layout.high.tag, high.values.len(), high.neighbors);
    for f in &layout.high.fields {
        println!("  {:<28} {:.3?}", f.name, &high.values[f.offset..f.offset + f.len]);
    }
    let low = build_low_obs(&state, 0, 0);
    println!("{} ({} values)", layout.low.tag, low.values.len());
    let global = build_global_state(&state);
    println!("{} ({} values)", global.tag(), global.values.len());
    Ok(())
}
