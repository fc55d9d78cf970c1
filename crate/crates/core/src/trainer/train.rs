//! Training loop, checkpoints and the metrics log.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::buffer::collect_rollouts;
use super::env::HierEnv;
use super::ppo::{ppo_update, PolicyStats, TrainState, ValueNorm};
use super::{derive_seed, PpoConfig, TrainerError, Variant};
use crate::nets::{
    init_params, load_checkpoint, save_checkpoint, Adam, Checkpoint, CheckpointManifest, NetSpec, ParamSet,
    TensorEntry, Tensors,
};
use crate::obs::ObsConfig;
use crate::world::ScenarioConfig;

pub const CHECKPOINT_FORMAT: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NetsConfig {
    pub hidden: Vec<usize>,
    pub lstm_width: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PriorityConfig {
    pub k_phi: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputConfig {
    /// Checkpoint after every this many updates (and after the last).
    pub checkpoint_every: u64,
}

/// Everything a training run depends on besides the seed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainConfig {
    pub variant: Variant,
    pub scenario: ScenarioConfig,
    pub obs: ObsConfig,
    pub nets: NetsConfig,
    pub priority: PriorityConfig,
    pub ppo: PpoConfig,
    pub output: OutputConfig,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            variant: Variant::TihdpWithCom,
            scenario: ScenarioConfig::with_counts(3, 2, 1, 1),
            obs: ObsConfig::default(),
            nets: NetsConfig { hidden: vec![256, 128, 64], lstm_width: 64 },
            priority: PriorityConfig { k_phi: crate::priority::DEFAULT_K_PHI },
            ppo: PpoConfig::default(),
            output: OutputConfig { checkpoint_every: 10 },
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), TrainerError> {
        self.scenario.validate()?;
        self.obs.validate()?;
        self.ppo.validate()?;
        if self.nets.hidden.is_empty() || self.nets.hidden.contains(&0) || self.nets.lstm_width == 0 {
            return Err(TrainerError::Config("nets.hidden must be non-empty positive widths, nets.lstm_width positive".into()));
        }
        if !(self.priority.k_phi > 0.0 && self.priority.k_phi <= 1.0) {
            return Err(TrainerError::Config("priority.k_phi must lie in (0, 1]".into()));
        }
        if self.output.checkpoint_every == 0 {
            return Err(TrainerError::Config("output.checkpoint_every must be at least 1".into()));
        }
        Ok(())
    }

    pub fn net_spec(&self) -> NetSpec {
        let s = &self.scenario;
        self.variant.net_spec(&self.obs, &self.nets.hidden, self.nets.lstm_width, s.robots, s.objects())
    }

    /// Environment steps gathered per update (one episode per environment).
    pub fn steps_per_update(&self) -> u64 {
        (self.ppo.num_envs * self.scenario.episode_length) as u64
    }

    pub fn num_updates(&self) -> u64 {
        self.ppo.total_steps.div_ceil(self.steps_per_update()).max(1)
    }
}

/// One metrics-log line.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsRecord {
    pub update: u64,
    pub env_steps: u64,
    pub episodes: usize,
    /// Mean undiscounted team-reward sum per episode.
    pub hi_return: f64,
    /// Mean undiscounted control reward per robot and episode.
    pub lo_return: f64,
    pub cor: f64,
    pub alpha_rate: f64,
    pub beta_rate: f64,
    pub hi: PolicyStats,
    pub lo: PolicyStats,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainSummary {
    pub updates: u64,
    pub checkpoints: Vec<PathBuf>,
    pub metrics_path: PathBuf,
    pub records: Vec<MetricsRecord>,
}

/// Frozen policy for execution.
#[derive(Debug, Clone, PartialEq)]
pub struct Agent {
    pub variant: Variant,
    pub obs: ObsConfig,
    pub k_phi: f64,
    pub params: ParamSet<f32>,
    /// Robot and object counts the checkpoint was trained with.
    pub trained_robots: usize,
    pub trained_objects: usize,
}

fn bits(x: f64) -> String {
    format!("{:016x}", x.to_bits())
}

fn unbits(v: &serde_json::Value, key: &str) -> Result<f64, TrainerError> {
    v.get(key)
        .and_then(|s| s.as_str())
        .and_then(|s| u64::from_str_radix(s, 16).ok())
        .map(f64::from_bits)
        .ok_or_else(|| TrainerError::Incompatible(format!("missing {key}")))
}

fn norm_json(n: &ValueNorm) -> serde_json::Value {
    serde_json::json!({"mean": bits(n.mean), "var": bits(n.var), "count": bits(n.count)})
}

fn norm_from(v: &serde_json::Value) -> Result<ValueNorm, TrainerError> {
    Ok(ValueNorm { mean: unbits(v, "mean")?, var: unbits(v, "var")?, count: unbits(v, "count")? })
}

const ADAM_NETS: [&str; 4] = ["hi_actor", "lo_actor", "hi_critic", "lo_critic"];

fn adams(state: &TrainState) -> [&Adam<f32>; 4] {
    [&state.adam_hi_actor, &state.adam_lo_actor, &state.adam_hi_critic, &state.adam_lo_critic]
}

fn net_tensor_names(params: &ParamSet<f32>, net: &str) -> Vec<String> {
    params.tensors().into_iter().map(|(n, _, _)| n).filter(|n| n.starts_with(&format!("{net}."))).collect()
}

/// Snapshot of a training state; `meta` records the run's config and seed.
pub fn checkpoint_from_state(state: &TrainState, config: &TrainConfig, seed: u64) -> Checkpoint {
    let mut tensors = Vec::new();
    let mut data = Vec::new();
    for (name, shape, t) in state.params.tensors() {
        tensors.push(TensorEntry { name, shape });
        data.push(t.to_vec());
    }
    let mut steps = serde_json::Map::new();
    for (net, adam) in ADAM_NETS.iter().zip(adams(state)) {
        let names = net_tensor_names(&state.params, net);
        for (moment, values) in [("m", &adam.m), ("v", &adam.v)] {
            for (name, v) in names.iter().zip(values) {
                tensors.push(TensorEntry { name: format!("adam.{moment}.{name}"), shape: vec![v.len()] });
                data.push(v.clone());
            }
        }
        steps.insert(net.to_string(), adam.step.into());
    }
    let meta = serde_json::json!({
        "variant": config.variant,
        "seed": seed,
        "update": state.update,
        "adam_steps": steps,
        "hi_value_norm": norm_json(&state.hi_norm),
        "lo_value_norm": norm_json(&state.lo_norm),
        "net_spec": state.params.spec,
        "trained_robots": config.scenario.robots,
        "trained_objects": config.scenario.objects(),
        "config": config,
    });
    Checkpoint { manifest: CheckpointManifest { format_version: CHECKPOINT_FORMAT, tensors, meta }, data }
}

fn meta_field<T: serde::de::DeserializeOwned>(ckpt: &Checkpoint, key: &str) -> Result<T, TrainerError> {
    let v = ckpt.manifest.meta.get(key).ok_or_else(|| TrainerError::Incompatible(format!("manifest lacks {key}")))?;
    serde_json::from_value(v.clone()).map_err(|e| TrainerError::Incompatible(format!("{key}: {e}")))
}

fn params_from(ckpt: &Checkpoint) -> Result<ParamSet<f32>, TrainerError> {
    if ckpt.manifest.format_version != CHECKPOINT_FORMAT {
        return Err(TrainerError::Incompatible(format!("format version {}", ckpt.manifest.format_version)));
    }
    let spec: NetSpec = meta_field(ckpt, "net_spec")?;
    let mut params = ParamSet::<f32>::zeros(&spec);
    let names: Vec<(String, Vec<usize>)> = params.tensors().into_iter().map(|(n, s, _)| (n, s)).collect();
    for ((name, shape), dst) in names.iter().zip(params.tensors_mut()) {
        let k = ckpt
            .manifest
            .tensors
            .iter()
            .position(|t| &t.name == name)
            .ok_or_else(|| TrainerError::Incompatible(format!("missing tensor {name}")))?;
        if &ckpt.manifest.tensors[k].shape != shape {
            return Err(TrainerError::Incompatible(format!("tensor {name} has shape {:?}", ckpt.manifest.tensors[k].shape)));
        }
        dst.copy_from_slice(&ckpt.data[k]);
    }
    Ok(params)
}

/// Restores the full training state (parameters, optimizer moments, value
/// normalizers, update counter) and the run's config and seed.
pub fn state_from_checkpoint(ckpt: &Checkpoint) -> Result<(TrainState, TrainConfig, u64), TrainerError> {
    let params = params_from(ckpt)?;
    let config: TrainConfig = meta_field(ckpt, "config")?;
    let seed: u64 = meta_field(ckpt, "seed")?;
    let mut state = TrainState::new(params, config.ppo.learning_rate);
    state.update = meta_field(ckpt, "update")?;
    state.hi_norm = norm_from(&ckpt.manifest.meta["hi_value_norm"])?;
    state.lo_norm = norm_from(&ckpt.manifest.meta["lo_value_norm"])?;
    let steps: serde_json::Map<String, serde_json::Value> = meta_field(ckpt, "adam_steps")?;
    let names: Vec<Vec<String>> = ADAM_NETS.iter().map(|net| net_tensor_names(&state.params, net)).collect();
    let targets = [&mut state.adam_hi_actor, &mut state.adam_lo_actor, &mut state.adam_hi_critic, &mut state.adam_lo_critic];
    for ((net, adam), names) in ADAM_NETS.iter().zip(targets).zip(&names) {
        adam.step = steps.get(*net).and_then(|v| v.as_u64()).ok_or_else(|| TrainerError::Incompatible(format!("adam step of {net}")))?;
        for (moment, store) in [("m", &mut adam.m), ("v", &mut adam.v)] {
            for (name, dst) in names.iter().zip(store.iter_mut()) {
                let key = format!("adam.{moment}.{name}");
                let src = ckpt.tensor(&key).ok_or_else(|| TrainerError::Incompatible(format!("missing {key}")))?;
                if src.len() != dst.len() {
                    return Err(TrainerError::Incompatible(format!("{key} has {} entries", src.len())));
                }
                dst.copy_from_slice(src);
            }
        }
    }
    Ok((state, config, seed))
}

/// Execution-only view of a checkpoint.
pub fn agent_from_checkpoint(ckpt: &Checkpoint) -> Result<Agent, TrainerError> {
    let params = params_from(ckpt)?;
    let config: TrainConfig = meta_field(ckpt, "config")?;
    Ok(Agent {
        variant: config.variant,
        obs: config.obs,
        k_phi: config.priority.k_phi,
        params,
        trained_robots: meta_field(ckpt, "trained_robots")?,
        trained_objects: meta_field(ckpt, "trained_objects")?,
    })
}

impl Agent {
    /// The untrained policy `train(config, seed, ..)` starts from.
    pub fn initial(config: &TrainConfig, seed: u64) -> Self {
        Self {
            variant: config.variant,
            obs: config.obs,
            k_phi: config.priority.k_phi,
            params: init_params(&config.net_spec(), derive_seed(seed, &[1])),
            trained_robots: config.scenario.robots,
            trained_objects: config.scenario.objects(),
        }
    }
}

fn checkpoint_path(dir: &Path, update: u64) -> PathBuf {
    dir.join("checkpoints").join(format!("update-{update:06}.ckpt"))
}

/// Trains `config` from scratch, or continues from `resume`. The metrics log
/// at `out_dir/metrics.jsonl` is truncated to the resumed update so that a
/// resumed run reproduces the uninterrupted log byte for byte.
pub fn train(config: &TrainConfig, seed: u64, out_dir: &Path, resume: Option<&Path>) -> Result<TrainSummary, TrainerError> {
    config.validate()?;
    fs::create_dir_all(out_dir.join("checkpoints"))?;
    let mut state = match resume {
        Some(path) => {
            let (state, saved, saved_seed) = state_from_checkpoint(&load_checkpoint(path)?)?;
            if &saved != config || saved_seed != seed {
                return Err(TrainerError::Incompatible("resume requires the original config and seed".into()));
            }
            state
        }
        None => TrainState::new(init_params(&config.net_spec(), derive_seed(seed, &[1])), config.ppo.learning_rate),
    };
    let metrics_path = out_dir.join("metrics.jsonl");
    let mut records: Vec<MetricsRecord> = Vec::new();
    if resume.is_some() && metrics_path.exists() {
        for line in fs::read_to_string(&metrics_path)?.lines().take(state.update as usize) {
            records.push(serde_json::from_str(line).map_err(|e| TrainerError::Incompatible(format!("metrics log: {e}")))?);
        }
    }
    let mut log = fs::File::create(&metrics_path)?;
    for r in &records {
        writeln!(log, "{}", serde_json::to_string(r).expect("metrics serialize"))?;
    }

    let total = config.num_updates();
    let horizon = config.scenario.episode_length;
    let mut checkpoints = Vec::new();
    while state.update < total {
        let u = state.update;
        let mut envs = (0..config.ppo.num_envs)
            .map(|e| {
                HierEnv::reset(&config.scenario, config.variant, config.obs, config.priority.k_phi, derive_seed(seed, &[2, u, e as u64]))
            })
            .collect::<Result<Vec<_>, _>>()?;
        let mut rngs: Vec<ChaCha8Rng> =
            (0..config.ppo.num_envs).map(|e| ChaCha8Rng::seed_from_u64(derive_seed(seed, &[3, u, e as u64]))).collect();
        let buffer = collect_rollouts(&mut envs, &state.params, horizon, config.ppo.chunk_length, &mut rngs)?;
        let report = ppo_update(&mut state, &buffer, &config.ppo, seed)?;
        let episodes = buffer.episodes.len().max(1) as f64;
        let record = MetricsRecord {
            update: u,
            env_steps: (u + 1) * config.steps_per_update(),
            episodes: buffer.episodes.len(),
            hi_return: buffer.episodes.iter().map(|e| e.hi_return).sum::<f64>() / episodes,
            lo_return: buffer.episodes.iter().map(|e| e.lo_return).sum::<f64>() / episodes,
            cor: buffer
                .episodes
                .iter()
                .map(|e| if e.transportable == 0 { 0.0 } else { e.delivered as f64 / e.transportable as f64 })
                .sum::<f64>()
                / episodes,
            alpha_rate: buffer.alpha_count as f64 / buffer.robot_steps.max(1) as f64,
            beta_rate: buffer.beta_count as f64 / buffer.robot_steps.max(1) as f64,
            hi: report.hi,
            lo: report.lo,
        };
        log::info!(
            "update {}/{total}: hi return {:.3}, lo return {:.3}, COR {:.3}",
            u + 1,
            record.hi_return,
            record.lo_return,
            record.cor
        );
        writeln!(log, "{}", serde_json::to_string(&record).expect("metrics serialize"))?;
        records.push(record);
        if state.update % config.output.checkpoint_every == 0 || state.update == total {
            let path = checkpoint_path(out_dir, state.update);
            save_checkpoint(&path, &checkpoint_from_state(&state, config, seed))?;
            checkpoints.push(path);
        }
    }
    log.sync_all()?;
    Ok(TrainSummary { updates: state.update, checkpoints, metrics_path, records })
}
