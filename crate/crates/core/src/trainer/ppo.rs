//! Clipped-surrogate updates of both actor/critic pairs.

use ndarray::{concatenate, Array1, Array2, Axis};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::buffer::RolloutBuffer;
use super::gae::compute_gae;
use super::{derive_seed, PpoConfig, TrainerError};
use crate::nets::{clip_grad_norm, row_terms, Adam, AdamConfig, Critic, HeadKind, ParamSet, RecurrentState, Tensors};

/// Running mean/variance of value targets; critics regress normalized
/// returns.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ValueNorm {
    pub mean: f64,
    pub var: f64,
    pub count: f64,
}

impl Default for ValueNorm {
    fn default() -> Self {
        Self { mean: 0.0, var: 1.0, count: 0.0 }
    }
}

impl ValueNorm {
    /// Merges a batch into the running moments.
    pub fn update(&mut self, xs: &[f64]) {
        if xs.is_empty() {
            return;
        }
        let n = xs.len() as f64;
        let mean = xs.iter().sum::<f64>() / n;
        let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
        if self.count == 0.0 {
            *self = Self { mean, var, count: n };
            return;
        }
        let total = self.count + n;
        let delta = mean - self.mean;
        let m2 = self.var * self.count + var * n + delta * delta * self.count * n / total;
        *self = Self { mean: self.mean + delta * n / total, var: m2 / total, count: total };
    }

    fn std(&self) -> f64 {
        self.var.max(1e-8).sqrt()
    }

    pub fn normalize(&self, x: f64) -> f64 {
        (x - self.mean) / self.std()
    }

    pub fn denormalize(&self, y: f64) -> f64 {
        y * self.std() + self.mean
    }
}

/// Parameters plus everything else an update mutates.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainState {
    pub params: ParamSet<f32>,
    pub adam_hi_actor: Adam<f32>,
    pub adam_lo_actor: Adam<f32>,
    pub adam_hi_critic: Adam<f32>,
    pub adam_lo_critic: Adam<f32>,
    pub hi_norm: ValueNorm,
    pub lo_norm: ValueNorm,
    /// Completed updates.
    pub update: u64,
}

fn adam_for<T: Tensors<f32>>(net: &T, lr: f64) -> Adam<f32> {
    let lens: Vec<usize> = net.tensors().iter().map(|(_, _, t)| t.len()).collect();
    Adam::new(AdamConfig { lr, ..AdamConfig::default() }, &lens)
}

impl TrainState {
    pub fn new(params: ParamSet<f32>, learning_rate: f64) -> Self {
        Self {
            adam_hi_actor: adam_for(&params.hi_actor, learning_rate),
            adam_lo_actor: adam_for(&params.lo_actor, learning_rate),
            adam_hi_critic: adam_for(&params.hi_critic, learning_rate),
            adam_lo_critic: adam_for(&params.lo_critic, learning_rate),
            params,
            hi_norm: ValueNorm::default(),
            lo_norm: ValueNorm::default(),
            update: 0,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct PolicyStats {
    pub policy_loss: f64,
    pub value_loss: f64,
    pub entropy: f64,
    pub clip_fraction: f64,
    pub approx_kl: f64,
    pub actor_grad_norm: f64,
    pub critic_grad_norm: f64,
    pub samples: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub hi: PolicyStats,
    pub lo: PolicyStats,
}

/// `min(ρA, clip(ρ, 1−ε, 1+ε)·A)` and whether the unclipped branch is the
/// active one (the only case with a non-zero gradient).
pub fn clipped_surrogate(ratio: f64, advantage: f64, epsilon: f64) -> (f64, bool) {
    let unclipped = ratio * advantage;
    let clipped = ratio.clamp(1.0 - epsilon, 1.0 + epsilon) * advantage;
    if unclipped <= clipped {
        (unclipped, true)
    } else {
        (clipped, false)
    }
}

fn normalize(adv: &mut [f64], active: &[bool]) {
    let n = active.iter().filter(|&&a| a).count();
    if n == 0 {
        return;
    }
    let mean = adv.iter().zip(active).filter(|(_, &a)| a).map(|(x, _)| x).sum::<f64>() / n as f64;
    let var = adv.iter().zip(active).filter(|(_, &a)| a).map(|(x, _)| (x - mean).powi(2)).sum::<f64>() / n as f64;
    let std = var.sqrt() + 1e-8;
    for (x, &a) in adv.iter_mut().zip(active) {
        *x = if a { (*x - mean) / std } else { 0.0 };
    }
}

fn check_finite(x: f64, what: &str, update: u64, detail: impl FnOnce() -> String) -> Result<(), TrainerError> {
    if x.is_finite() {
        Ok(())
    } else {
        Err(TrainerError::NonFinite { what: what.to_string(), update, detail: detail() })
    }
}

fn critic_values(critic: &Critic<f32>, x: &Array2<f32>, norm: &ValueNorm) -> Result<Vec<f64>, TrainerError> {
    Ok(critic.values(x)?.iter().map(|&v| norm.denormalize(f64::from(v))).collect())
}

/// One optimizer step on a critic over `rows` of `x`; returns
/// `(value loss, pre-clip gradient norm)`.
fn critic_step(
    critic: &mut Critic<f32>,
    adam: &mut Adam<f32>,
    x: &Array2<f32>,
    targets: &[f64],
    rows: &[usize],
    cfg: &PpoConfig,
) -> (f64, f64) {
    let xb = x.select(Axis(0), rows);
    let (v, tape) = critic.forward_train(&xb);
    let n = rows.len() as f64;
    let mut loss = 0.0;
    let mut dv = Array1::<f32>::zeros(rows.len());
    for (j, &r) in rows.iter().enumerate() {
        let err = f64::from(v[j]) - targets[r];
        loss += err * err / n;
        dv[j] = (2.0 * cfg.value_coef * err / n) as f32;
    }
    let (mut grad, _) = critic.backward(&tape, &dv);
    let norm = clip_grad_norm(&mut grad.tensors_mut(), cfg.max_grad_norm);
    let g: Vec<&[f32]> = grad.tensors().into_iter().map(|(_, _, t)| t).collect();
    adam.update(&mut critic.tensors_mut(), &g);
    (loss, norm)
}

#[derive(Default)]
struct Accum {
    policy_loss: f64,
    value_loss: f64,
    entropy: f64,
    clipped: f64,
    kl: f64,
    actor_norm: f64,
    critic_norm: f64,
    samples: f64,
    actor_steps: f64,
    critic_steps: f64,
}

impl Accum {
    fn finish(self, samples: usize) -> PolicyStats {
        let per = |x: f64, n: f64| if n > 0.0 { x / n } else { 0.0 };
        PolicyStats {
            policy_loss: per(self.policy_loss, self.samples),
            value_loss: per(self.value_loss, self.critic_steps),
            entropy: per(self.entropy, self.samples),
            clip_fraction: per(self.clipped, self.samples),
            approx_kl: per(self.kl, self.samples),
            actor_grad_norm: per(self.actor_norm, self.actor_steps),
            critic_grad_norm: per(self.critic_norm, self.critic_steps),
            samples,
        }
    }
}

/// Per-row policy-gradient bookkeeping shared by both actors. Returns the
/// logits gradient for the row.
#[allow(clippy::too_many_arguments)]
fn policy_row(
    kind: HeadKind,
    logits: &[f32],
    mask: &[bool],
    action: &crate::nets::PolicyAction,
    old_logp: f64,
    adv: f64,
    n: f64,
    cfg: &PpoConfig,
    acc: &mut Accum,
) -> Result<Vec<f32>, TrainerError> {
    let terms = row_terms(kind, logits, mask, action)?;
    let ratio = (terms.log_prob - old_logp).exp();
    let (surr, live) = clipped_surrogate(ratio, adv, cfg.clip_epsilon);
    let bound = (ratio * adv).max(ratio.clamp(1.0 - cfg.clip_epsilon, 1.0 + cfg.clip_epsilon) * adv);
    assert!(surr <= bound, "surrogate {surr} above its clip bound {bound}");
    acc.policy_loss -= surr;
    acc.entropy += terms.entropy;
    acc.kl += old_logp - terms.log_prob;
    if (ratio - 1.0).abs() > cfg.clip_epsilon {
        acc.clipped += 1.0;
    }
    acc.samples += 1.0;
    let g_surr = if live { ratio * adv } else { 0.0 };
    Ok(terms
        .d_log_prob
        .iter()
        .zip(&terms.d_entropy)
        .map(|(dl, dh)| (-(g_surr * dl + cfg.entropy_coef * dh) / n) as f32)
        .collect())
}

fn split(mut items: Vec<usize>, parts: usize, rng: &mut ChaCha8Rng) -> Vec<Vec<usize>> {
    items.shuffle(rng);
    let parts = parts.min(items.len()).max(1);
    let size = items.len().div_ceil(parts);
    items.chunks(size.max(1)).map(<[usize]>::to_vec).collect()
}

/// One PPO update of both levels from `buffer`. The minibatch order is a
/// function of `(seed, state.update)`. On a non-finite loss the state is left
/// untouched and the error carries diagnostics.
pub fn ppo_update(state: &mut TrainState, buffer: &RolloutBuffer, cfg: &PpoConfig, seed: u64) -> Result<TrainReport, TrainerError> {
    let mut s = state.clone();
    let (t_len, e_count, n) = (buffer.horizon, buffer.num_envs, buffer.num_robots);
    let b = e_count * n;
    let update = s.update;

    // Critic inputs and value estimates.
    let hi_x = &buffer.global;
    let lo_global = buffer.global.select(Axis(0), &(0..t_len * b).map(|r| (r / b) * e_count + (r % b) / n).collect::<Vec<_>>());
    let lo_x = concatenate(Axis(1), &[lo_global.view(), buffer.lo_extra.view()]).expect("row counts agree");
    let final_lo_global =
        buffer.final_global.select(Axis(0), &(0..b).map(|r| r / n).collect::<Vec<_>>());
    let final_lo_x = concatenate(Axis(1), &[final_lo_global.view(), buffer.final_lo_extra.view()]).expect("row counts agree");
    let hi_values = critic_values(&s.params.hi_critic, hi_x, &s.hi_norm)?;
    let hi_final = critic_values(&s.params.hi_critic, &buffer.final_global, &s.hi_norm)?;
    let lo_values = critic_values(&s.params.lo_critic, &lo_x, &s.lo_norm)?;
    let lo_final = critic_values(&s.params.lo_critic, &final_lo_x, &s.lo_norm)?;

    // Advantages per environment (team reward) and per robot stream.
    let mut hi_adv_env = vec![0.0; t_len * e_count];
    let mut hi_ret = vec![0.0; t_len * e_count];
    for e in 0..e_count {
        let idx: Vec<usize> = (0..t_len).map(|t| t * e_count + e).collect();
        let r: Vec<f64> = idx.iter().map(|&k| buffer.team_rewards[k]).collect();
        let v: Vec<f64> = idx.iter().map(|&k| hi_values[k]).collect();
        let d: Vec<bool> = idx.iter().map(|&k| buffer.dones[k]).collect();
        let (a, ret) = compute_gae(&r, &v, &d, cfg.gamma, cfg.gae_lambda, hi_final[e]);
        for (j, &k) in idx.iter().enumerate() {
            hi_adv_env[k] = a[j];
            hi_ret[k] = ret[j];
        }
    }
    let mut lo_adv = vec![0.0; t_len * b];
    let mut lo_ret = vec![0.0; t_len * b];
    for stream in 0..b {
        let idx: Vec<usize> = (0..t_len).map(|t| t * b + stream).collect();
        let r: Vec<f64> = idx.iter().map(|&k| buffer.lo_rewards[k]).collect();
        let v: Vec<f64> = idx.iter().map(|&k| lo_values[k]).collect();
        let d: Vec<bool> = (0..t_len).map(|t| buffer.dones[t * e_count + stream / n]).collect();
        let (a, ret) = compute_gae(&r, &v, &d, cfg.gamma, cfg.gae_lambda, lo_final[stream]);
        for (j, &k) in idx.iter().enumerate() {
            lo_adv[k] = a[j];
            lo_ret[k] = ret[j];
        }
    }
    let hi_active: Vec<bool> = buffer.hi_actions.iter().map(Option::is_some).collect();
    let lo_active: Vec<bool> = buffer.lo_actions.iter().map(Option::is_some).collect();
    let mut hi_adv: Vec<f64> = (0..t_len * b).map(|r| hi_adv_env[(r / b) * e_count + (r % b) / n]).collect();
    normalize(&mut hi_adv, &hi_active);
    normalize(&mut lo_adv, &lo_active);

    s.hi_norm.update(&hi_ret);
    s.lo_norm.update(&lo_ret);
    let hi_targets: Vec<f64> = hi_ret.iter().map(|&x| s.hi_norm.normalize(x)).collect();
    let lo_targets: Vec<f64> = lo_ret.iter().map(|&x| s.lo_norm.normalize(x)).collect();

    let chunk = buffer.chunk_length;
    let n_chunks = buffer.num_chunks();
    let kind = buffer.hi_head;
    let hi_units: Vec<usize> = (0..n_chunks * b).collect();
    let lo_rows: Vec<usize> = (0..t_len * b).filter(|&r| lo_active[r]).collect();
    let mut hi_acc = Accum::default();
    let mut lo_acc = Accum::default();
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, &[0x5050, update]));

    for epoch in 0..cfg.epochs {
        let hi_mbs = split(hi_units.clone(), cfg.minibatches, &mut rng);
        let hi_critic_mbs = split((0..t_len * e_count).collect(), cfg.minibatches, &mut rng);
        let lo_mbs = split(lo_rows.clone(), cfg.minibatches, &mut rng);
        let lo_critic_mbs = split((0..t_len * b).collect(), cfg.minibatches, &mut rng);

        for (k, units) in hi_mbs.iter().enumerate() {
            // Chunks of allocation-actor sequences, padded to full length.
            let bc = units.len();
            let dh = buffer.hi_obs.ncols();
            let mut xs = Array2::<f32>::zeros((chunk * bc, dh));
            let mut init = RecurrentState::<f32>::zeros(bc, s.params.spec.lstm_width);
            let mut source = vec![None; chunk * bc];
            for (j, &u) in units.iter().enumerate() {
                let (c, stream) = (u / b, u % b);
                init.h.row_mut(j).assign(&buffer.chunk_states[c].h.row(stream));
                init.c.row_mut(j).assign(&buffer.chunk_states[c].c.row(stream));
                for step in 0..chunk {
                    let t = c * chunk + step;
                    if t < t_len {
                        let r = t * b + stream;
                        xs.row_mut(step * bc + j).assign(&buffer.hi_obs.row(r));
                        source[step * bc + j] = Some(r);
                    }
                }
            }
            let count = source.iter().flatten().filter(|&&r| hi_active[r]).count();
            if count > 0 {
                let resets = vec![vec![false; bc]; chunk];
                let (logits, tape) = s.params.hi_actor.forward_train(&xs, &init, &resets);
                let mut d = Array2::<f32>::zeros(logits.raw_dim());
                let before = hi_acc.policy_loss;
                for (row, src) in source.iter().enumerate() {
                    let Some(r) = *src else { continue };
                    let Some(action) = &buffer.hi_actions[r] else { continue };
                    let g = policy_row(
                        kind,
                        logits.row(row).as_slice().unwrap(),
                        &buffer.hi_masks[r],
                        action,
                        buffer.hi_logp[r],
                        hi_adv[r],
                        count as f64,
                        cfg,
                        &mut hi_acc,
                    )?;
                    d.row_mut(row).assign(&Array1::from(g));
                }
                check_finite(hi_acc.policy_loss - before, "allocation policy loss", update, || {
                    format!("epoch {epoch}, minibatch {k}")
                })?;
                let mut grad = s.params.hi_actor.backward(&tape, &d);
                let norm = clip_grad_norm(&mut grad.tensors_mut(), cfg.max_grad_norm);
                check_finite(norm, "allocation actor gradient", update, || format!("epoch {epoch}, minibatch {k}"))?;
                hi_acc.actor_norm += norm;
                hi_acc.actor_steps += 1.0;
                let g: Vec<&[f32]> = grad.tensors().into_iter().map(|(_, _, t)| t).collect();
                s.adam_hi_actor.update(&mut s.params.hi_actor.tensors_mut(), &g);
            }

            if let Some(rows) = hi_critic_mbs.get(k) {
                let (loss, norm) = critic_step(&mut s.params.hi_critic, &mut s.adam_hi_critic, hi_x, &hi_targets, rows, cfg);
                check_finite(loss + norm, "allocation value loss", update, || format!("epoch {epoch}, minibatch {k}"))?;
                hi_acc.value_loss += loss;
                hi_acc.critic_norm += norm;
                hi_acc.critic_steps += 1.0;
            }

            if let Some(rows) = lo_mbs.get(k) {
                let xb = buffer.lo_obs.select(Axis(0), rows);
                let (logits, tape) = s.params.lo_actor.forward_train(&xb);
                let mut d = Array2::<f32>::zeros(logits.raw_dim());
                let before = lo_acc.policy_loss;
                for (j, &r) in rows.iter().enumerate() {
                    let (mv, turn) = buffer.lo_actions[r].expect("only active rows are sampled");
                    let g = policy_row(
                        HeadKind::MoveTurn,
                        logits.row(j).as_slice().unwrap(),
                        &[],
                        &crate::nets::PolicyAction::Pair(mv, turn),
                        buffer.lo_logp[r],
                        lo_adv[r],
                        rows.len() as f64,
                        cfg,
                        &mut lo_acc,
                    )?;
                    d.row_mut(j).assign(&Array1::from(g));
                }
                check_finite(lo_acc.policy_loss - before, "control policy loss", update, || {
                    format!("epoch {epoch}, minibatch {k}")
                })?;
                let mut grad = s.params.lo_actor.backward(&tape, &d);
                let norm = clip_grad_norm(&mut grad.tensors_mut(), cfg.max_grad_norm);
                check_finite(norm, "control actor gradient", update, || format!("epoch {epoch}, minibatch {k}"))?;
                lo_acc.actor_norm += norm;
                lo_acc.actor_steps += 1.0;
                let g: Vec<&[f32]> = grad.tensors().into_iter().map(|(_, _, t)| t).collect();
                s.adam_lo_actor.update(&mut s.params.lo_actor.tensors_mut(), &g);
            }

            if let Some(rows) = lo_critic_mbs.get(k) {
                let (loss, norm) = critic_step(&mut s.params.lo_critic, &mut s.adam_lo_critic, &lo_x, &lo_targets, rows, cfg);
                check_finite(loss + norm, "control value loss", update, || format!("epoch {epoch}, minibatch {k}"))?;
                lo_acc.value_loss += loss;
                lo_acc.critic_norm += norm;
                lo_acc.critic_steps += 1.0;
            }
        }
    }
    s.update += 1;
    let report = TrainReport {
        hi: hi_acc.finish(hi_active.iter().filter(|&&a| a).count()),
        lo: lo_acc.finish(lo_rows.len()),
    };
    *state = s;
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn surrogate_examples() {
        let (s, live) = clipped_surrogate(1.5, 1.0, 0.2);
        assert!((s - 1.2).abs() < 1e-12 && !live);
        let (s, live) = clipped_surrogate(0.5, -1.0, 0.2);
        assert!((s + 0.8).abs() < 1e-12 && !live);
        let (s, live) = clipped_surrogate(1.1, 2.0, 0.2);
        assert!((s - 2.2).abs() < 1e-12 && live);
    }

    #[test]
    fn value_norm_matches_pooled_moments() {
        let xs: Vec<f64> = (0..50).map(|k| (k as f64 * 0.37).sin() * 3.0 + 1.0).collect();
        let mut norm = ValueNorm::default();
        norm.update(&xs[..17]);
        norm.update(&xs[17..]);
        let mean = xs.iter().sum::<f64>() / 50.0;
        let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / 50.0;
        assert!((norm.mean - mean).abs() < 1e-12 && (norm.var - var).abs() < 1e-12);
        assert!((norm.denormalize(norm.normalize(2.5)) - 2.5).abs() < 1e-12);
    }

    #[test]
    fn advantage_normalization_ignores_inactive() {
        let mut a = vec![1.0, 100.0, 3.0];
        normalize(&mut a, &[true, false, true]);
        assert_eq!(a[1], 0.0);
        assert!((a[0] + 1.0).abs() < 1e-6 && (a[2] - 1.0).abs() < 1e-6);
    }
}
