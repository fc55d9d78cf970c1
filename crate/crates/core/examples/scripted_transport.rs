//! Evaluates the scripted controller and writes one trajectory log and its
//! SVG replay.
//!
//! `cargo run --release --example scripted_transport -- [episodes] [out_dir]`

use std::fs::File;
use std::io::BufReader;
use std::path::PathBuf;

use tihdp::harness::{evaluate, read_trajectory, replay_render, EpisodePolicy};
use tihdp::world::ScenarioConfig;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut args = std::env::args().skip(1);
    let episodes = args.next().map(|s| s.parse()).transpose()?.unwrap_or(32);
    let out = args.next().map(PathBuf::from).unwrap_or_else(|| std::env::temp_dir().join("tihdp-scripted"));

    let scenario = ScenarioConfig::with_counts(3, 2, 1, 1);
    let outcome = evaluate(EpisodePolicy::Scripted, &scenario, episodes, 0, Some(&out))?;
    println!("{outcome}");

    let log = read_trajectory(BufReader::new(File::open(out.join("episode-0.jsonl"))?))?;
    let svg = out.join("episode-0.svg");
    replay_render(&log, &svg)?;
    println!("replay of episode 0 at {}", svg.display());
    Ok(())
}
