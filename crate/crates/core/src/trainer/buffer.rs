//! Lockstep experience collection.

use ndarray::Array2;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::env::HierEnv;
use super::TrainerError;
use crate::nets::{distribution, HeadKind, ParamSet, PolicyAction, RecurrentState};
use crate::obs::build_global_state;
use crate::world::Command;

/// Outcome of one finished episode.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeStats {
    /// Undiscounted sum of team rewards.
    pub hi_return: f64,
    /// Undiscounted control-layer return averaged over robots.
    pub lo_return: f64,
    pub delivered: usize,
    pub transportable: usize,
}

/// Experience of `horizon` steps across `num_envs × num_robots` streams.
///
/// Per-robot rows are time-major: row `t·B + e·N + i` with `B = E·N`, which
/// is also the row layout the recurrent cell expects. Per-environment rows
/// (global state, team reward, done) are `t·E + e`.
#[derive(Debug, Clone, PartialEq)]
pub struct RolloutBuffer {
    pub horizon: usize,
    pub num_envs: usize,
    pub num_robots: usize,
    pub chunk_length: usize,
    pub hi_head: HeadKind,
    pub hi_obs: Array2<f32>,
    pub hi_masks: Vec<Vec<bool>>,
    /// `None` where the allocation output had no effect (nothing to choose).
    pub hi_actions: Vec<Option<PolicyAction>>,
    pub hi_logp: Vec<f64>,
    /// Recurrent state at the start of every chunk, `B` rows each.
    pub chunk_states: Vec<RecurrentState<f32>>,
    pub lo_obs: Array2<f32>,
    /// `None` for robots without a target (they idle).
    pub lo_actions: Vec<Option<(usize, usize)>>,
    pub lo_logp: Vec<f64>,
    pub global: Array2<f32>,
    pub final_global: Array2<f32>,
    pub lo_extra: Array2<f32>,
    pub final_lo_extra: Array2<f32>,
    pub team_rewards: Vec<f64>,
    pub lo_rewards: Vec<f64>,
    pub dones: Vec<bool>,
    /// Raised request / response outputs and the number of robot-steps.
    pub alpha_count: u64,
    pub beta_count: u64,
    pub robot_steps: u64,
    pub episodes: Vec<EpisodeStats>,
}

impl RolloutBuffer {
    pub fn streams(&self) -> usize {
        self.num_envs * self.num_robots
    }

    pub fn num_chunks(&self) -> usize {
        self.horizon.div_ceil(self.chunk_length)
    }
}

fn to_row(dst: &mut Array2<f32>, row: usize, src: &[f64]) {
    for (d, s) in dst.row_mut(row).iter_mut().zip(src) {
        *d = *s as f32;
    }
}

/// Samples (or takes the mode of) one head row; `None` if the mask leaves
/// nothing to decide.
pub(crate) fn act<G: Rng>(
    kind: HeadKind,
    logits: &[f32],
    mask: &[bool],
    rng: Option<&mut G>,
) -> Option<(PolicyAction, f64)> {
    if kind != HeadKind::MoveTurn && !mask.iter().any(|&m| m) {
        return None;
    }
    let dist = distribution(kind, logits, mask)?;
    let action = match rng {
        Some(r) => dist.sample(r),
        None => dist.mode(),
    };
    let lp = dist.log_prob(&action).expect("own sample is in support");
    Some((action, lp))
}

/// Runs every environment for `horizon` control steps with the shared
/// actors. Environments must be at the start of an episode with at least
/// `horizon` steps left. `rngs[e]` drives action sampling in environment `e`.
pub fn collect_rollouts<G: Rng>(
    envs: &mut [HierEnv],
    params: &ParamSet<f32>,
    horizon: usize,
    chunk_length: usize,
    rngs: &mut [G],
) -> Result<RolloutBuffer, TrainerError> {
    let e_count = envs.len();
    if e_count == 0 || rngs.len() != e_count || chunk_length == 0 {
        return Err(TrainerError::Protocol("need one rng per environment and a positive chunk length".into()));
    }
    let n = envs[0].num_robots();
    let m = envs[0].world.num_objects();
    for env in envs.iter() {
        if env.num_robots() != n || env.world.num_objects() != m {
            return Err(TrainerError::Protocol("environments differ in size".into()));
        }
        if env.world.step_index != 0 || horizon > env.world.config.episode_length {
            return Err(TrainerError::Protocol("collection must start at an episode boundary".into()));
        }
    }
    let spec = &params.spec;
    let b = e_count * n;
    let rows = horizon * b;
    let width = spec.lstm_width;
    let kind = spec.hi_head;
    let mut buf = RolloutBuffer {
        horizon,
        num_envs: e_count,
        num_robots: n,
        chunk_length,
        hi_head: kind,
        hi_obs: Array2::zeros((rows, spec.hi_input_dim)),
        hi_masks: Vec::with_capacity(rows),
        hi_actions: Vec::with_capacity(rows),
        hi_logp: Vec::with_capacity(rows),
        chunk_states: Vec::new(),
        lo_obs: Array2::zeros((rows, spec.lo_input_dim)),
        lo_actions: Vec::with_capacity(rows),
        lo_logp: Vec::with_capacity(rows),
        global: Array2::zeros((horizon * e_count, spec.hi_critic_input_dim)),
        final_global: Array2::zeros((e_count, spec.hi_critic_input_dim)),
        lo_extra: Array2::zeros((rows, n + m)),
        final_lo_extra: Array2::zeros((b, n + m)),
        team_rewards: Vec::with_capacity(horizon * e_count),
        lo_rewards: Vec::with_capacity(rows),
        dones: Vec::with_capacity(horizon * e_count),
        alpha_count: 0,
        beta_count: 0,
        robot_steps: 0,
        episodes: Vec::new(),
    };
    let mut state = RecurrentState::<f32>::zeros(b, width);
    let mut hi_x = Array2::<f32>::zeros((b, spec.hi_input_dim));
    let mut lo_x = Array2::<f32>::zeros((b, spec.lo_input_dim));
    let mut hi_ret = vec![0.0; e_count];
    let mut lo_ret = vec![0.0; e_count];

    for t in 0..horizon {
        if t % chunk_length == 0 {
            buf.chunk_states.push(state.clone());
        }
        // Allocation layer.
        let mut masks = Vec::with_capacity(b);
        for (e, env) in envs.iter_mut().enumerate() {
            to_row(&mut buf.global, t * e_count + e, &build_global_state(&env.world).values);
            for (i, input) in env.hi_inputs().into_iter().enumerate() {
                to_row(&mut hi_x, e * n + i, &input.values);
                masks.push(input.mask);
            }
        }
        let (logits, next) = params.hi_actor.step(&hi_x, &state)?;
        state = next;
        for (e, env) in envs.iter_mut().enumerate() {
            let mut actions = Vec::with_capacity(n);
            for i in 0..n {
                let r = e * n + i;
                let row = logits.row(r);
                let picked = act(kind, row.as_slice().unwrap(), &masks[r], Some(&mut rngs[e]));
                buf.hi_logp.push(picked.as_ref().map_or(0.0, |p| p.1));
                actions.push(picked.map(|p| p.0));
            }
            let outcome = env.apply_hi(&actions)?;
            if let Some(comm) = &outcome.comm {
                buf.alpha_count += comm.alpha.iter().filter(|&&a| a).count() as u64;
                buf.beta_count += comm.beta.iter().filter(|&&a| a).count() as u64;
            }
            buf.robot_steps += n as u64;
            buf.hi_actions.extend(actions);
        }
        buf.hi_obs.slice_mut(ndarray::s![t * b..(t + 1) * b, ..]).assign(&hi_x);
        buf.hi_masks.extend(masks);

        // Control layer.
        let mut has_target = vec![false; b];
        lo_x.fill(0.0);
        for (e, env) in envs.iter().enumerate() {
            for (i, x) in env.lo_inputs().into_iter().enumerate() {
                if let Some(x) = x {
                    to_row(&mut lo_x, e * n + i, &x);
                    has_target[e * n + i] = true;
                }
                to_row(&mut buf.lo_extra, t * b + e * n + i, &env.lo_critic_extra(i));
            }
        }
        let lo_logits = params.lo_actor.logits(&lo_x)?;
        buf.lo_obs.slice_mut(ndarray::s![t * b..(t + 1) * b, ..]).assign(&lo_x);
        for (e, env) in envs.iter_mut().enumerate() {
            let mut commands = Vec::with_capacity(n);
            for i in 0..n {
                let r = e * n + i;
                if has_target[r] {
                    let row = lo_logits.row(r);
                    let (a, lp) = act(HeadKind::MoveTurn, row.as_slice().unwrap(), &[], Some(&mut rngs[e]))
                        .expect("move/turn heads always decide");
                    let PolicyAction::Pair(mv, turn) = a else { unreachable!() };
                    buf.lo_actions.push(Some((mv, turn)));
                    buf.lo_logp.push(lp);
                    commands.push(Some(Command::from_indices(mv, turn)));
                } else {
                    buf.lo_actions.push(None);
                    buf.lo_logp.push(0.0);
                    commands.push(None);
                }
            }
            let rewards = env.step(&commands)?;
            hi_ret[e] += rewards.team;
            lo_ret[e] += rewards.lo.iter().sum::<f64>() / n as f64;
            buf.team_rewards.push(rewards.team);
            buf.lo_rewards.extend(&rewards.lo);
            let done = env.world.is_done();
            buf.dones.push(done);
            if done {
                let transportable = env.world.objects.iter().filter(|o| o.weight_class.is_transportable()).count();
                let delivered =
                    env.world.objects.iter().filter(|o| o.weight_class.is_transportable() && o.completed).count();
                buf.episodes.push(EpisodeStats { hi_return: hi_ret[e], lo_return: lo_ret[e], delivered, transportable });
            }
        }
    }
    for (e, env) in envs.iter().enumerate() {
        to_row(&mut buf.final_global, e, &build_global_state(&env.world).values);
        for i in 0..n {
            to_row(&mut buf.final_lo_extra, e * n + i, &env.lo_critic_extra(i));
        }
    }
    Ok(buf)
}
