//! Command-line plumbing: configuration, evaluation metrics, the scripted
//! baseline, trajectory logs, replay rendering and the oracle suites.

mod config;
mod eval;
pub mod oracle;
mod replay;
mod scripted;
mod smoke;
mod trajectory;

use serde::Serialize;
use thiserror::Error;

pub use config::{cli_train, default_config_toml, load_config, parse_config, render_config, RESOLVED_CONFIG};
pub use eval::{
    applicability, cli_eval, cor_tocr, evaluate, run_episode, EpisodePolicy, EpisodeRow, EvalOutcome, EvalReport,
    ScenarioDescriptor,
};
pub use replay::{priority_bands, render_svg, replay_render};
pub use scripted::{scripted_assignment, scripted_policy};
pub use smoke::{mean_team_return, run_smoke, smoke_config, SmokeResult, SMOKE_EVAL_SEED_BASE};
pub use trajectory::{
    read_trajectory, Decisions, ObjectRecord, RewardRecord, RobotRecord, StepRecord, TrajectoryHeader, TrajectoryLog,
    TrajectoryWriter, TRAJECTORY_SCHEMA, TRAJECTORY_VERSION,
};

use crate::nets::NetError;
use crate::obs::{self, Layout, ObsConfig};
use crate::trainer::TrainerError;
use crate::world::WorldError;

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("invalid config: {0}")]
    Config(String),
    #[error("not applicable: {0}")]
    NotApplicable(String),
    #[error("trajectory log: {0}")]
    Log(String),
    #[error(transparent)]
    Trainer(#[from] TrainerError),
    #[error(transparent)]
    World(#[from] WorldError),
    #[error(transparent)]
    Net(#[from] NetError),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

/// Every observation layout for a given slot configuration and team size.
#[derive(Debug, Clone, Serialize)]
pub struct LayoutDescription {
    pub version: u32,
    pub robots: usize,
    pub objects: usize,
    pub high: Layout,
    pub low: Layout,
    pub global: Layout,
    pub baseline_global: Layout,
}

pub fn describe_layout(cfg: &ObsConfig, robots: usize, objects: usize) -> LayoutDescription {
    LayoutDescription {
        version: obs::LAYOUT_VERSION,
        robots,
        objects,
        high: obs::high_layout(cfg),
        low: obs::low_layout(),
        global: obs::global_layout(robots, objects),
        baseline_global: obs::baseline_global_layout(robots, objects),
    }
}
