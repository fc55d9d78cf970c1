//! Line-delimited trajectory logs.
//!
//! The first line is a self-describing header; every following line is one
//! control step. Readers tolerate a torn last line or a missing tail and
//! report it as a warning, so interrupted runs can still be replayed.

use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};

use super::HarnessError;
use crate::world::{Command, ScenarioConfig, WeightClass, WorldState};

pub const TRAJECTORY_SCHEMA: &str = "tihdp-trajectory";
pub const TRAJECTORY_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryHeader {
    pub schema: String,
    pub version: u32,
    /// Observation layout tags of the policy that produced the log
    /// (empty for scripted runs).
    pub layout: Vec<String>,
    pub policy: String,
    pub scenario: ScenarioConfig,
    pub seed: u64,
    pub classes: Vec<WeightClass>,
    pub goals: Vec<[f64; 2]>,
    pub initial_robots: Vec<[f64; 3]>,
    pub initial_objects: Vec<[f64; 2]>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RobotRecord {
    pub position: [f64; 2],
    pub heading: f64,
    pub velocity: [f64; 2],
    pub angular_velocity: f64,
    pub command: Command,
    pub target: Option<usize>,
    /// Empty when the policy keeps no priorities.
    pub priority: Vec<f64>,
    pub alpha: bool,
    pub beta: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObjectRecord {
    pub position: [f64; 2],
    pub velocity: [f64; 2],
    pub completed: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RewardRecord {
    pub team: f64,
    pub lo: Vec<f64>,
}

/// State after control step `step` (1-based: the first record follows the
/// first step).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub step: usize,
    pub robots: Vec<RobotRecord>,
    pub objects: Vec<ObjectRecord>,
    pub rewards: RewardRecord,
}

impl TrajectoryHeader {
    pub fn new(state: &WorldState, policy: &str, layout: Vec<String>, seed: u64) -> Self {
        Self {
            schema: TRAJECTORY_SCHEMA.to_string(),
            version: TRAJECTORY_VERSION,
            layout,
            policy: policy.to_string(),
            scenario: state.config.clone(),
            seed,
            classes: state.objects.iter().map(|o| o.weight_class).collect(),
            goals: state.objects.iter().map(|o| [o.goal.x, o.goal.y]).collect(),
            initial_robots: state.robots.iter().map(|r| [r.position.x, r.position.y, r.heading]).collect(),
            initial_objects: state.objects.iter().map(|o| [o.position.x, o.position.y]).collect(),
        }
    }
}

/// Per-robot decision details the world state does not carry.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Decisions {
    pub targets: Vec<Option<usize>>,
    pub priorities: Vec<Vec<f64>>,
    pub alpha: Vec<bool>,
    pub beta: Vec<bool>,
}

impl StepRecord {
    pub fn capture(state: &WorldState, decisions: &Decisions, team: f64, lo: Vec<f64>) -> Self {
        let robots = state
            .robots
            .iter()
            .enumerate()
            .map(|(i, r)| RobotRecord {
                position: [r.position.x, r.position.y],
                heading: r.heading,
                velocity: [r.linear_velocity.x, r.linear_velocity.y],
                angular_velocity: r.angular_velocity,
                command: r.last_command,
                target: decisions.targets.get(i).copied().flatten(),
                priority: decisions.priorities.get(i).cloned().unwrap_or_default(),
                alpha: decisions.alpha.get(i).copied().unwrap_or(false),
                beta: decisions.beta.get(i).copied().unwrap_or(false),
            })
            .collect();
        let objects = state
            .objects
            .iter()
            .map(|o| ObjectRecord {
                position: [o.position.x, o.position.y],
                velocity: [o.velocity.x, o.velocity.y],
                completed: o.completed,
            })
            .collect();
        Self { step: state.step_index, robots, objects, rewards: RewardRecord { team, lo } }
    }
}

pub struct TrajectoryWriter<W: Write> {
    out: W,
}

impl<W: Write> TrajectoryWriter<W> {
    pub fn new(mut out: W, header: &TrajectoryHeader) -> Result<Self, HarnessError> {
        writeln!(out, "{}", serde_json::to_string(header)?)?;
        Ok(Self { out })
    }

    pub fn record(&mut self, rec: &StepRecord) -> Result<(), HarnessError> {
        writeln!(self.out, "{}", serde_json::to_string(rec)?)?;
        Ok(())
    }

    pub fn finish(mut self) -> Result<W, HarnessError> {
        self.out.flush()?;
        Ok(self.out)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryLog {
    pub header: Option<TrajectoryHeader>,
    pub steps: Vec<StepRecord>,
    pub warnings: Vec<String>,
}

/// Reads a log; unreadable trailing content becomes a warning. A wrong
/// schema or version in a readable header is an error.
pub fn read_trajectory<R: BufRead>(input: R) -> Result<TrajectoryLog, HarnessError> {
    let mut lines = input.lines();
    let mut log = TrajectoryLog { header: None, steps: Vec::new(), warnings: Vec::new() };
    let Some(first) = lines.next().transpose()? else {
        return Ok(log);
    };
    match serde_json::from_str::<TrajectoryHeader>(&first) {
        Ok(h) if h.schema != TRAJECTORY_SCHEMA || h.version != TRAJECTORY_VERSION => {
            return Err(HarnessError::Log(format!("unsupported log schema {} v{}", h.schema, h.version)));
        }
        Ok(h) => log.header = Some(h),
        Err(e) => {
            log.warnings.push(format!("unreadable header: {e}"));
            return Ok(log);
        }
    }
    for (k, line) in lines.enumerate() {
        let line = line?;
        match serde_json::from_str::<StepRecord>(&line) {
            Ok(r) => log.steps.push(r),
            Err(e) => {
                log.warnings.push(format!("log truncated at record {}: {e}", k + 1));
                return Ok(log);
            }
        }
    }
    if let Some(h) = &log.header {
        if log.steps.len() < h.scenario.episode_length {
            log.warnings.push(format!(
                "log ends after {} of {} steps",
                log.steps.len(),
                h.scenario.episode_length
            ));
        }
    }
    Ok(log)
}
