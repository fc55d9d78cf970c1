//! Episode execution and the COR / TOCR metrics.

use std::fmt;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use ndarray::Array2;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::scripted::scripted_policy;
use super::trajectory::{Decisions, StepRecord, TrajectoryHeader, TrajectoryWriter};
use super::HarnessError;
use crate::nets::{load_checkpoint, HeadKind, PolicyAction, RecurrentState};
use crate::obs;
use crate::trainer::{act, agent_from_checkpoint, derive_seed, Agent, HierEnv};
use crate::world::{robot_low_reward, team_reward, Command, ScenarioConfig, WorldState};

/// Object counts per weight class and robot count.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScenarioDescriptor {
    pub robots: usize,
    pub light: usize,
    pub medium: usize,
    pub heavy: usize,
}

impl From<&ScenarioConfig> for ScenarioDescriptor {
    fn from(s: &ScenarioConfig) -> Self {
        Self { robots: s.robots, light: s.light, medium: s.medium, heavy: s.heavy }
    }
}

impl fmt::Display for ScenarioDescriptor {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}L/{}M/{}H N={}", self.light, self.medium, self.heavy, self.robots)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeRow {
    pub seed: u64,
    /// Transportable objects delivered at the final step.
    pub delivered: usize,
    pub transportable: usize,
    pub team_return: f64,
}

impl EpisodeRow {
    /// Delivered fraction; undefined without transportable objects.
    pub fn fraction(&self) -> Option<f64> {
        (self.transportable > 0).then(|| self.delivered as f64 / self.transportable as f64)
    }
}

/// `(COR, TOCR)`: the mean per-episode delivered fraction of transportable
/// objects and the fraction of episodes that delivered all of them. Heavy
/// objects never count; episodes without transportable objects are skipped,
/// and `None` means no episode had any.
pub fn cor_tocr(rows: &[EpisodeRow]) -> (Option<f64>, Option<f64>) {
    let fractions: Vec<f64> = rows.iter().filter_map(EpisodeRow::fraction).collect();
    if fractions.is_empty() {
        return (None, None);
    }
    let n = fractions.len() as f64;
    let cor = fractions.iter().sum::<f64>() / n;
    let tocr = fractions.iter().filter(|&&f| f == 1.0).count() as f64 / n;
    (Some(cor), Some(tocr))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub policy: String,
    pub scenario: ScenarioDescriptor,
    pub episodes: usize,
    pub cor: Option<f64>,
    pub tocr: Option<f64>,
    pub rows: Vec<EpisodeRow>,
}

impl EvalReport {
    pub fn from_rows(policy: &str, scenario: &ScenarioConfig, rows: Vec<EpisodeRow>) -> Self {
        let (cor, tocr) = cor_tocr(&rows);
        Self { policy: policy.to_string(), scenario: scenario.into(), episodes: rows.len(), cor, tocr, rows }
    }
}

/// Result of evaluating a checkpoint on a scenario.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "outcome", rename_all = "snake_case")]
pub enum EvalOutcome {
    Report(EvalReport),
    /// The policy cannot run at this scale (rendered as "-").
    NotApplicable { policy: String, scenario: ScenarioDescriptor, reason: String },
}

impl EvalOutcome {
    pub fn is_applicable(&self) -> bool {
        matches!(self, EvalOutcome::Report(_))
    }
}

fn metric(x: Option<f64>) -> String {
    x.map_or_else(|| "-".to_string(), |v| format!("{v:.3}"))
}

impl fmt::Display for EvalOutcome {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            EvalOutcome::Report(r) => write!(
                f,
                "{:<20} {:<16} COR {:>6}  TOCR {:>6}  ({} episodes)",
                r.policy,
                r.scenario.to_string(),
                metric(r.cor),
                metric(r.tocr),
                r.episodes
            ),
            EvalOutcome::NotApplicable { policy, scenario, .. } => {
                write!(f, "{:<20} {:<16} COR {:>6}  TOCR {:>6}", policy, scenario.to_string(), "-", "-")
            }
        }
    }
}

/// Who acts in an episode.
#[derive(Debug, Clone, Copy)]
pub enum EpisodePolicy<'a> {
    /// Learned policy; `greedy` takes distribution modes, otherwise actions
    /// are sampled from a stream derived from the episode seed.
    Agent { agent: &'a Agent, greedy: bool },
    Scripted,
}

impl EpisodePolicy<'_> {
    pub fn name(&self) -> String {
        match self {
            EpisodePolicy::Agent { agent, .. } => agent.variant.name().to_string(),
            EpisodePolicy::Scripted => "scripted".to_string(),
        }
    }
}

/// Why `agent` cannot act in `scenario`, if it cannot.
pub fn applicability(agent: &Agent, scenario: &ScenarioConfig) -> Option<String> {
    let (n, m) = (scenario.robots, scenario.objects());
    if agent.variant.is_scale_bound() && (n, m) != (agent.trained_robots, agent.trained_objects) {
        return Some(format!(
            "{} reads a fixed-size global observation ({}) and cannot act with N={n}, M={m} ({})",
            agent.variant,
            obs::baseline_global_tag(agent.trained_robots, agent.trained_objects),
            obs::baseline_global_tag(n, m)
        ));
    }
    None
}

/// Plays one episode from `WorldState::reset(scenario, seed)`.
pub fn run_episode<W: Write>(
    policy: EpisodePolicy<'_>,
    scenario: &ScenarioConfig,
    seed: u64,
    log: Option<W>,
) -> Result<EpisodeRow, HarnessError> {
    match policy {
        EpisodePolicy::Scripted => run_scripted(scenario, seed, log),
        EpisodePolicy::Agent { agent, greedy } => run_agent(agent, greedy, scenario, seed, log),
    }
}

fn finish_row(world: &WorldState, seed: u64, team_return: f64) -> EpisodeRow {
    let transportable = world.objects.iter().filter(|o| o.weight_class.is_transportable()).count();
    let delivered = world.objects.iter().filter(|o| o.weight_class.is_transportable() && o.completed).count();
    EpisodeRow { seed, delivered, transportable, team_return }
}

fn run_scripted<W: Write>(scenario: &ScenarioConfig, seed: u64, log: Option<W>) -> Result<EpisodeRow, HarnessError> {
    let mut world = WorldState::reset(scenario, seed)?;
    let mut writer = log
        .map(|w| TrajectoryWriter::new(w, &TrajectoryHeader::new(&world, "scripted", vec![], seed)))
        .transpose()?;
    let mut total = 0.0;
    while !world.is_done() {
        let decisions: Vec<(Option<usize>, Command)> =
            (0..world.num_robots()).map(|i| scripted_policy(&world, i)).collect();
        let commands: Vec<Command> = decisions.iter().map(|d| d.1).collect();
        world.step(&commands)?;
        let team = team_reward(&world);
        total += team;
        if let Some(w) = writer.as_mut() {
            let lo = decisions.iter().enumerate().map(|(i, d)| d.0.map_or(0.0, |t| robot_low_reward(&world, i, t))).collect();
            let dec = Decisions { targets: decisions.iter().map(|d| d.0).collect(), ..Default::default() };
            w.record(&StepRecord::capture(&world, &dec, team, lo))?;
        }
    }
    if let Some(w) = writer {
        w.finish()?;
    }
    Ok(finish_row(&world, seed, total))
}

fn to_matrix(rows: &[Vec<f64>], cols: usize) -> Array2<f32> {
    Array2::from_shape_fn((rows.len(), cols), |(r, c)| rows[r].get(c).copied().unwrap_or(0.0) as f32)
}

fn run_agent<W: Write>(
    agent: &Agent,
    greedy: bool,
    scenario: &ScenarioConfig,
    seed: u64,
    log: Option<W>,
) -> Result<EpisodeRow, HarnessError> {
    if let Some(reason) = applicability(agent, scenario) {
        return Err(HarnessError::NotApplicable(reason));
    }
    let mut env = HierEnv::reset(scenario, agent.variant, agent.obs, agent.k_phi, seed)?;
    let spec = &agent.params.spec;
    let layout = vec![spec.hi_input_tag.clone(), spec.lo_input_tag.clone()];
    let mut writer = log
        .map(|w| TrajectoryWriter::new(w, &TrajectoryHeader::new(&env.world, agent.variant.name(), layout, seed)))
        .transpose()?;
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, &[4]));
    let n = env.num_robots();
    let mut state = RecurrentState::<f32>::zeros(n, spec.lstm_width);
    let mut total = 0.0;
    while !env.world.is_done() {
        let inputs = env.hi_inputs();
        let values: Vec<Vec<f64>> = inputs.iter().map(|h| h.values.clone()).collect();
        let (logits, next) = agent.params.hi_actor.step(&to_matrix(&values, spec.hi_input_dim), &state)?;
        state = next;
        let mut actions: Vec<Option<PolicyAction>> = Vec::with_capacity(n);
        for (i, input) in inputs.iter().enumerate() {
            let row = logits.row(i);
            let picked = act(spec.hi_head, row.as_slice().unwrap(), &input.mask, (!greedy).then_some(&mut rng));
            actions.push(picked.map(|p| p.0));
        }
        let outcome = env.apply_hi(&actions)?;

        let lo_inputs = env.lo_inputs();
        let lo_rows: Vec<Vec<f64>> = lo_inputs.iter().map(|x| x.clone().unwrap_or_default()).collect();
        let lo_logits = agent.params.lo_actor.logits(&to_matrix(&lo_rows, spec.lo_input_dim))?;
        let mut commands = Vec::with_capacity(n);
        for (i, x) in lo_inputs.iter().enumerate() {
            commands.push(match x {
                None => None,
                Some(_) => {
                    let row = lo_logits.row(i);
                    let (a, _) = act(HeadKind::MoveTurn, row.as_slice().unwrap(), &[], (!greedy).then_some(&mut rng))
                        .expect("move/turn heads always decide");
                    let PolicyAction::Pair(mv, turn) = a else { unreachable!() };
                    Some(Command::from_indices(mv, turn))
                }
            });
        }
        let rewards = env.step(&commands)?;
        total += rewards.team;
        if let Some(w) = writer.as_mut() {
            let (alpha, beta) = match &outcome.comm {
                Some(c) => (c.alpha.clone(), c.beta.clone()),
                None => (vec![false; n], vec![false; n]),
            };
            let priorities =
                if agent.variant.uses_priority() { env.priorities.iter().map(|p| p.phi.clone()).collect() } else { vec![] };
            let dec = Decisions { targets: outcome.targets.clone(), priorities, alpha, beta };
            w.record(&StepRecord::capture(&env.world, &dec, rewards.team, rewards.lo))?;
        }
    }
    if let Some(w) = writer {
        w.finish()?;
    }
    Ok(finish_row(&env.world, seed, total))
}

/// Runs `episodes` episodes seeded `seed_base..` and optionally writes one
/// trajectory log per episode into `log_dir`.
pub fn evaluate(
    policy: EpisodePolicy<'_>,
    scenario: &ScenarioConfig,
    episodes: usize,
    seed_base: u64,
    log_dir: Option<&Path>,
) -> Result<EvalOutcome, HarnessError> {
    if let EpisodePolicy::Agent { agent, .. } = policy {
        if let Some(reason) = applicability(agent, scenario) {
            return Ok(EvalOutcome::NotApplicable { policy: policy.name(), scenario: scenario.into(), reason });
        }
    }
    if let Some(dir) = log_dir {
        std::fs::create_dir_all(dir)?;
    }
    let run = |seed: u64| -> Result<EpisodeRow, HarnessError> {
        match log_dir {
            Some(dir) => {
                let file = BufWriter::new(File::create(dir.join(format!("episode-{seed}.jsonl")))?);
                run_episode(policy, scenario, seed, Some(file))
            }
            None => run_episode::<std::io::Sink>(policy, scenario, seed, None),
        }
    };
    // Episodes are independent; workers take interleaved seeds and the rows
    // are reassembled in seed order.
    let workers = std::thread::available_parallelism().map_or(1, |n| n.get()).min(episodes.max(1));
    let mut slots: Vec<Option<Result<EpisodeRow, HarnessError>>> = (0..episodes).map(|_| None).collect();
    std::thread::scope(|scope| {
        let handles: Vec<_> = (0..workers)
            .map(|w| {
                let run = &run;
                scope.spawn(move || {
                    (w..episodes).step_by(workers).map(|k| (k, run(seed_base + k as u64))).collect::<Vec<_>>()
                })
            })
            .collect();
        for h in handles {
            for (k, r) in h.join().expect("evaluation worker panicked") {
                slots[k] = Some(r);
            }
        }
    });
    let rows = slots.into_iter().map(|r| r.expect("every episode ran")).collect::<Result<Vec<_>, _>>()?;
    Ok(EvalOutcome::Report(EvalReport::from_rows(&policy.name(), scenario, rows)))
}

/// Greedy evaluation of a checkpoint file.
pub fn cli_eval(
    checkpoint: &Path,
    scenario: &ScenarioConfig,
    episodes: usize,
    seed_base: u64,
    log_dir: Option<&Path>,
) -> Result<EvalOutcome, HarnessError> {
    scenario.validate()?;
    let agent = agent_from_checkpoint(&load_checkpoint(checkpoint)?)?;
    evaluate(EpisodePolicy::Agent { agent: &agent, greedy: true }, scenario, episodes, seed_base, log_dir)
}
