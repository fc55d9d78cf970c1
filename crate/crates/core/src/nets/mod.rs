//! Policy and value networks with hand-written gradients.
//!
//! Everything is generic over [`Real`] so training can run in `f32` while
//! finite-difference checks run in `f64`.

mod checkpoint;
mod dist;
mod gradcheck;
mod layers;
mod optim;
mod policy;

use ndarray::NdFloat;
use num_traits::FromPrimitive;
use thiserror::Error;

pub use checkpoint::{load_checkpoint, save_checkpoint, Checkpoint, CheckpointManifest, TensorEntry};
pub use dist::{distribution, logprob_entropy, row_terms, ActionDistribution, HeadKind, PolicyAction, RowTerms};
pub use gradcheck::{gradient_check, rel_error, GradCheckConfig, GradCheckReport, TensorCheck};
pub use layers::{Dense, Lstm, LstmTape, Mlp, MlpTape, RecurrentState};
pub use optim::{clip_grad_norm, global_norm, Adam, AdamConfig};
pub use policy::{
    critic_forward, hi_actor_forward, init_params, init_params_with, lo_actor_forward, Critic, CriticTape, HiActor,
    HiTape, InitGains, LoActor, LoTape, NetSpec, ParamSet, Tensors,
};

pub trait Real: NdFloat + FromPrimitive + Default {
    fn lit(x: f64) -> Self {
        Self::from_f64(x).expect("representable literal")
    }
}

impl Real for f32 {}
impl Real for f64 {}

#[derive(Debug, Error)]
pub enum NetError {
    #[error("input dimension mismatch for {what}: expected {expected}, got {got}")]
    Dimension { what: &'static str, expected: usize, got: usize },
    #[error("action outside the distribution's support: {0}")]
    OutOfSupport(String),
    #[error("checkpoint: {0}")]
    Checkpoint(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub(crate) fn check_dim(what: &'static str, expected: usize, got: usize) -> Result<(), NetError> {
    if expected == got {
        Ok(())
    } else {
        Err(NetError::Dimension { what, expected, got })
    }
}

