//! The policy-improvement smoke run: one robot, one light object, small
//! networks; compares the mean episode team return of the untrained policy
//! with that of the trained one on the same evaluation seeds.

use std::path::Path;
use std::time::Instant;

use serde::Serialize;

use super::eval::{evaluate, EpisodePolicy, EvalOutcome};
use super::HarnessError;
use crate::nets::load_checkpoint;
use crate::trainer::{agent_from_checkpoint, train, Agent, NetsConfig, TrainConfig};
use crate::world::ScenarioConfig;

/// Evaluation seeds start here so they never coincide with training resets.
pub const SMOKE_EVAL_SEED_BASE: u64 = 1_000_000;

/// 1 robot / 1 Light, `[64, 64]` trunks, `updates` full-episode updates over
/// `envs` environments. Discount 0.95: with 0.99 the approach bonus swamps
/// the transport signal and the learned push direction is seed-dependent.
pub fn smoke_config(updates: u64, envs: usize) -> TrainConfig {
    let mut cfg = TrainConfig::default();
    cfg.scenario = ScenarioConfig::with_counts(1, 1, 0, 0);
    cfg.nets = NetsConfig { hidden: vec![64, 64], lstm_width: 64 };
    cfg.ppo.num_envs = envs;
    cfg.ppo.gamma = 0.95;
    cfg.ppo.total_steps = updates * cfg.steps_per_update();
    cfg.output.checkpoint_every = updates.max(1);
    cfg
}

/// Mean episode team return and COR of `agent` with sampled actions.
pub fn mean_team_return(agent: &Agent, scenario: &ScenarioConfig, episodes: usize) -> Result<(f64, f64), HarnessError> {
    match evaluate(EpisodePolicy::Agent { agent, greedy: false }, scenario, episodes, SMOKE_EVAL_SEED_BASE, None)? {
        EvalOutcome::Report(r) => {
            let mean = r.rows.iter().map(|row| row.team_return).sum::<f64>() / r.rows.len().max(1) as f64;
            Ok((mean, r.cor.unwrap_or(0.0)))
        }
        EvalOutcome::NotApplicable { reason, .. } => Err(HarnessError::NotApplicable(reason)),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SmokeResult {
    pub seed: u64,
    pub initial_return: f64,
    pub trained_return: f64,
    pub initial_cor: f64,
    pub trained_cor: f64,
    pub train_seconds: f64,
}

impl SmokeResult {
    /// `trained / |initial|`; infinite when the initial return is exactly 0.
    pub fn improvement(&self) -> f64 {
        self.trained_return / self.initial_return.abs()
    }

    /// At least `factor`× the initial magnitude and strictly better.
    pub fn improved_by(&self, factor: f64) -> bool {
        self.trained_return > self.initial_return && self.trained_return >= factor * self.initial_return.abs()
    }
}

/// Trains `config` with `seed` into `out_dir` and measures both policies
/// over `episodes` sampled evaluation episodes.
pub fn run_smoke(config: &TrainConfig, seed: u64, episodes: usize, out_dir: &Path) -> Result<SmokeResult, HarnessError> {
    let (initial_return, initial_cor) = mean_team_return(&Agent::initial(config, seed), &config.scenario, episodes)?;
    let start = Instant::now();
    let summary = train(config, seed, out_dir, None)?;
    let train_seconds = start.elapsed().as_secs_f64();
    let last = summary.checkpoints.last().ok_or_else(|| HarnessError::Log("training wrote no checkpoint".into()))?;
    let agent = agent_from_checkpoint(&load_checkpoint(last)?)?;
    let (trained_return, trained_cor) = mean_team_return(&agent, &config.scenario, episodes)?;
    Ok(SmokeResult { seed, initial_return, trained_return, initial_cor, trained_cor, train_seconds })
}
