//! Runs one untrained policy per variant, built for N=3 robots and M=4
//! objects, on larger and smaller teams. Local-observation variants adapt;
//! the global-observation baseline reports "not applicable".
//!
//! `cargo run --release --example adaptability -- [episodes]`

use tihdp::harness::{evaluate, EpisodePolicy};
use tihdp::trainer::{Agent, TrainConfig, Variant};
use tihdp::world::ScenarioConfig;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let episodes = std::env::args().nth(1).map(|s| s.parse()).transpose()?.unwrap_or(4);
    let scales = [(3, 2, 1, 1), (4, 3, 2, 1), (2, 1, 1, 1)];
    for variant in Variant::ALL {
        let config = TrainConfig { variant, ..TrainConfig::default() };
        let agent = Agent::initial(&config, 0);
        for &(n, l, m, h) in &scales {
            let scenario = ScenarioConfig::with_counts(n, l, m, h);
            let outcome = evaluate(EpisodePolicy::Agent { agent: &agent, greedy: true }, &scenario, episodes, 0, None)?;
            println!("{outcome}");
        }
    }
    Ok(())
}
