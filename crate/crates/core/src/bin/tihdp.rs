//! Command-line entry point.

use std::fs::File;
use std::io::BufReader;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use tihdp::harness::{self, EpisodePolicy, HarnessError};
use tihdp::obs::ObsConfig;
use tihdp::world::ScenarioConfig;

#[derive(Parser)]
#[command(name = "tihdp", version, about = "Hierarchical multi-robot cooperative transport")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train a policy from a TOML config.
    Train {
        #[arg(long)]
        config: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
        /// Continue from this checkpoint.
        #[arg(long)]
        resume: Option<PathBuf>,
    },
    /// Evaluate a checkpoint (or the scripted controller) with greedy actions.
    Eval {
        /// Checkpoint to evaluate; omit together with --scripted.
        #[arg(long, required_unless_present = "scripted")]
        checkpoint: Option<PathBuf>,
        #[arg(long, conflicts_with = "checkpoint")]
        scripted: bool,
        #[command(flatten)]
        scenario: ScenarioArgs,
        #[arg(long, default_value_t = 128)]
        episodes: usize,
        #[arg(long, default_value_t = 0)]
        seed_base: u64,
        /// Directory for one trajectory log per episode.
        #[arg(long)]
        logs: Option<PathBuf>,
        /// Write the JSON report here instead of stdout.
        #[arg(long)]
        report: Option<PathBuf>,
    },
    /// Render a trajectory log to SVG.
    Replay {
        #[arg(long)]
        log: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Print the named observation layouts as JSON.
    DescribeLayout {
        #[arg(long, default_value_t = 2)]
        j: usize,
        #[arg(long, default_value_t = 2)]
        k: usize,
        #[arg(long, default_value_t = 3)]
        robots: usize,
        #[arg(long, default_value_t = 4)]
        objects: usize,
    },
    /// Run the priority, GAE, gradient and physics oracle suites.
    OracleCheck {
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Print the default training config with every key explicit.
    DefaultConfig,
}

#[derive(Args)]
struct ScenarioArgs {
    #[arg(long, default_value_t = 3)]
    robots: usize,
    #[arg(long, default_value_t = 2)]
    light: usize,
    #[arg(long, default_value_t = 1)]
    medium: usize,
    #[arg(long, default_value_t = 1)]
    heavy: usize,
}

fn run(cli: Cli) -> Result<bool, HarnessError> {
    match cli.command {
        Command::Train { config, seed, out, resume } => {
            let summary = harness::cli_train(&config, seed, &out, resume.as_deref())?;
            println!(
                "trained {} updates; {} checkpoints; metrics at {}",
                summary.updates,
                summary.checkpoints.len(),
                summary.metrics_path.display()
            );
        }
        Command::Eval { checkpoint, scripted, scenario, episodes, seed_base, logs, report } => {
            let s = ScenarioConfig::with_counts(scenario.robots, scenario.light, scenario.medium, scenario.heavy);
            let outcome = match (checkpoint, scripted) {
                (Some(path), _) => harness::cli_eval(&path, &s, episodes, seed_base, logs.as_deref())?,
                (None, _) => {
                    s.validate()?;
                    harness::evaluate(EpisodePolicy::Scripted, &s, episodes, seed_base, logs.as_deref())?
                }
            };
            let json = serde_json::to_string_pretty(&outcome)?;
            match report {
                Some(path) => {
                    std::fs::write(path, json + "\n")?;
                    println!("{outcome}");
                }
                None => println!("{json}"),
            }
        }
        Command::Replay { log, out } => {
            let parsed = harness::read_trajectory(BufReader::new(File::open(&log)?))?;
            let warnings = harness::replay_render(&parsed, &out)?;
            for w in warnings {
                eprintln!("warning: {w}");
            }
        }
        Command::DescribeLayout { j, k, robots, objects } => {
            let cfg = ObsConfig { j, k };
            cfg.validate().map_err(|e| HarnessError::Config(e.to_string()))?;
            println!("{}", serde_json::to_string_pretty(&harness::describe_layout(&cfg, robots, objects))?);
        }
        Command::OracleCheck { seed } => {
            let results = harness::oracle::run_all(seed);
            for r in &results {
                println!("{r}");
            }
            return Ok(results.iter().all(|r| r.passed));
        }
        Command::DefaultConfig => print!("{}", harness::default_config_toml()),
    }
    Ok(true)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match run(Cli::parse()) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::FAILURE,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
