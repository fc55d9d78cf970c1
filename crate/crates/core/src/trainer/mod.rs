//! Centralized-critic PPO over lockstep environments.
//!
//! One shared allocation actor and one shared control actor act for every
//! robot; the critics read the global state. Each update collects exactly one
//! full episode per environment, so environments reset at every update and
//! a run is a pure function of `(config, seed)` — which is what makes
//! resuming from a checkpoint exact.

mod buffer;
mod env;
mod gae;
mod ppo;
mod train;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub(crate) use buffer::act;
pub use buffer::{collect_rollouts, EpisodeStats, RolloutBuffer};
pub use env::{HiInput, HiOutcome, HierEnv, StepRewards};
pub use gae::{compute_gae, compute_gae_brute_force};
pub use ppo::{clipped_surrogate, ppo_update, PolicyStats, TrainReport, TrainState, ValueNorm};
pub use train::{
    NetsConfig, OutputConfig, PriorityConfig,
    agent_from_checkpoint, checkpoint_from_state, state_from_checkpoint, train, Agent, MetricsRecord, TrainConfig,
    TrainSummary, CHECKPOINT_FORMAT,
};

use crate::nets::{HeadKind, NetError, NetSpec};
use crate::obs::{self, ObsConfig, ObsError};
use crate::priority::PriorityError;
use crate::world::WorldError;

#[derive(Debug, Error)]
pub enum TrainerError {
    #[error(transparent)]
    World(#[from] WorldError),
    #[error(transparent)]
    Priority(#[from] PriorityError),
    #[error(transparent)]
    Net(#[from] NetError),
    #[error(transparent)]
    Obs(#[from] ObsError),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("invalid training config: {0}")]
    Config(String),
    #[error("hierarchy protocol violated: {0}")]
    Protocol(String),
    #[error("non-finite {what} in update {update} ({detail})")]
    NonFinite { what: String, update: u64, detail: String },
    #[error("checkpoint incompatible: {0}")]
    Incompatible(String),
}

/// Policy architecture being trained or evaluated.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Variant {
    TihdpWithCom,
    TihdpWithoutCom,
    TwoLayeredGlobal,
    TwoLayeredLocal,
}

impl Variant {
    pub const ALL: [Variant; 4] =
        [Variant::TihdpWithCom, Variant::TihdpWithoutCom, Variant::TwoLayeredGlobal, Variant::TwoLayeredLocal];

    pub fn name(self) -> &'static str {
        match self {
            Variant::TihdpWithCom => "tihdp-with-com",
            Variant::TihdpWithoutCom => "tihdp-without-com",
            Variant::TwoLayeredGlobal => "two-layered-global",
            Variant::TwoLayeredLocal => "two-layered-local",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|v| v.name() == s)
    }

    /// Whether the dynamic priority layer sits between the two actors.
    pub fn uses_priority(self) -> bool {
        matches!(self, Variant::TihdpWithCom | Variant::TihdpWithoutCom)
    }

    /// Whether the allocation actor's input size depends on the robot and
    /// object counts.
    pub fn is_scale_bound(self) -> bool {
        self == Variant::TwoLayeredGlobal
    }

    pub fn hi_head(self, obs: &ObsConfig, m: usize) -> HeadKind {
        env::head_for(self, obs, m)
    }

    /// Network shapes for `n` robots and `m` objects.
    pub fn net_spec(self, obs: &ObsConfig, hidden: &[usize], lstm_width: usize, n: usize, m: usize) -> NetSpec {
        let (hi_input_dim, hi_input_tag) = match self {
            Variant::TwoLayeredGlobal => (obs::baseline_global_dim(n, m), obs::baseline_global_tag(n, m)),
            _ => (obs.high_dim(), obs.high_tag()),
        };
        NetSpec {
            hidden: hidden.to_vec(),
            lstm_width,
            hi_input_dim,
            hi_input_tag,
            hi_head: self.hi_head(obs, m),
            lo_input_dim: obs::LOW_OBS_DIM,
            lo_input_tag: obs::low_tag(),
            hi_critic_input_dim: obs::global_dim(n, m),
            hi_critic_tag: obs::global_tag(n, m),
            lo_critic_input_dim: obs::global_dim(n, m) + n + m,
            lo_critic_tag: format!("{}+robot{n}+target{m}", obs::global_tag(n, m)),
        }
    }
}

impl std::fmt::Display for Variant {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

/// PPO hyperparameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PpoConfig {
    pub gamma: f64,
    pub gae_lambda: f64,
    pub clip_epsilon: f64,
    pub learning_rate: f64,
    pub entropy_coef: f64,
    pub value_coef: f64,
    pub epochs: usize,
    pub minibatches: usize,
    pub max_grad_norm: f64,
    pub chunk_length: usize,
    pub num_envs: usize,
    pub total_steps: u64,
}

impl Default for PpoConfig {
    fn default() -> Self {
        Self {
            gamma: 0.99,
            gae_lambda: 0.95,
            clip_epsilon: 0.2,
            learning_rate: 3e-4,
            entropy_coef: 0.01,
            value_coef: 0.5,
            epochs: 4,
            minibatches: 8,
            max_grad_norm: 0.5,
            chunk_length: 32,
            num_envs: 64,
            total_steps: 10_000_000,
        }
    }
}

impl PpoConfig {
    pub fn validate(&self) -> Result<(), TrainerError> {
        let bad = |m: &str| Err(TrainerError::Config(format!("ppo.{m}")));
        if !(self.gamma > 0.0 && self.gamma <= 1.0) {
            return bad("gamma must lie in (0, 1]");
        }
        if !(self.gae_lambda >= 0.0 && self.gae_lambda <= 1.0) {
            return bad("gae_lambda must lie in [0, 1]");
        }
        if !(self.clip_epsilon > 0.0) {
            return bad("clip_epsilon must be positive");
        }
        if !(self.learning_rate >= 0.0 && self.learning_rate.is_finite()) {
            return bad("learning_rate must be finite and non-negative");
        }
        if !(self.entropy_coef >= 0.0 && self.value_coef >= 0.0) {
            return bad("entropy_coef and value_coef must be non-negative");
        }
        if !(self.max_grad_norm > 0.0) {
            return bad("max_grad_norm must be positive");
        }
        for (name, v) in [
            ("epochs", self.epochs),
            ("minibatches", self.minibatches),
            ("chunk_length", self.chunk_length),
            ("num_envs", self.num_envs),
        ] {
            if v == 0 {
                return bad(&format!("{name} must be at least 1"));
            }
        }
        if self.total_steps == 0 {
            return bad("total_steps must be at least 1");
        }
        Ok(())
    }
}

/// Deterministic sub-seed for an independent stream (splitmix64 mixing).
pub fn derive_seed(base: u64, parts: &[u64]) -> u64 {
    let mut x = base;
    for &p in parts {
        x = splitmix(x ^ splitmix(p.wrapping_add(0x9E37_79B9_7F4A_7C15)));
    }
    x
}

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn variant_names_round_trip() {
        for v in Variant::ALL {
            assert_eq!(Variant::parse(v.name()), Some(v));
            assert_eq!(serde_json::to_string(&v).unwrap(), format!("\"{}\"", v.name()));
        }
    }

    #[test]
    fn spec_dimensions() {
        let o = ObsConfig::default();
        let s = Variant::TihdpWithCom.net_spec(&o, &[256, 128, 64], 64, 3, 4);
        assert_eq!((s.hi_input_dim, s.hi_critic_input_dim, s.lo_critic_input_dim), (35, 61, 68));
        assert_eq!(s.hi_head, HeadKind::Bernoulli { dims: 4 });
        let g = Variant::TwoLayeredGlobal.net_spec(&o, &[8], 4, 3, 4);
        assert_eq!((g.hi_input_dim, g.hi_head), (49, HeadKind::Categorical { dims: 4 }));
    }

    #[test]
    fn derived_seeds_differ() {
        let a = derive_seed(1, &[0, 0]);
        assert_ne!(a, derive_seed(1, &[0, 1]));
        assert_ne!(a, derive_seed(1, &[1, 0]));
        assert_ne!(a, derive_seed(2, &[0, 0]));
        assert_eq!(a, derive_seed(1, &[0, 0]));
    }

    #[test]
    fn config_validation() {
        assert!(PpoConfig::default().validate().is_ok());
        assert!(PpoConfig { gamma: 0.0, ..Default::default() }.validate().is_err());
        assert!(PpoConfig { clip_epsilon: 0.0, ..Default::default() }.validate().is_err());
    }
}
