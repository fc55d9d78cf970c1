//! Finite-difference verification of the hand-written reverse passes.
//!
//! Every check runs in `f64` on a randomly drawn configuration: parameters,
//! inputs, recurrent state, episode resets and actions all come from the
//! seed. The scalar objectives are the summed log-probability plus half the
//! entropy of fixed actions (actors) and a random linear functional of the
//! values (critics).

use ndarray::{Array1, Array2};
use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use super::dist::{row_terms, HeadKind, PolicyAction};
use super::layers::RecurrentState;
use super::policy::{init_params_with, Critic, HiActor, InitGains, LoActor, NetSpec, Tensors};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GradCheckConfig {
    /// Entries per tensor; `None` checks every entry.
    pub samples_per_tensor: Option<usize>,
    pub step: f64,
    /// Denominator floor of the relative error.
    pub floor: f64,
    pub seq_len: usize,
    pub batch: usize,
}

impl Default for GradCheckConfig {
    fn default() -> Self {
        Self { samples_per_tensor: Some(32), step: 1e-5, floor: 1e-6, seq_len: 3, batch: 2 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TensorCheck {
    pub name: String,
    pub checked: usize,
    pub max_rel_error: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GradCheckReport {
    pub seed: u64,
    pub tensors: Vec<TensorCheck>,
}

impl GradCheckReport {
    pub fn max_rel_error(&self) -> f64 {
        self.tensors.iter().map(|t| t.max_rel_error).fold(0.0, f64::max)
    }
}

pub fn rel_error(analytic: f64, numeric: f64, floor: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(floor)
}

fn gaussian(rows: usize, cols: usize, scale: f64, rng: &mut ChaCha8Rng) -> Array2<f64> {
    Array2::from_shape_fn((rows, cols), |_| scale * rng.gen_range(-1.0..1.0))
}

fn random_action(kind: HeadKind, mask: &[bool], rng: &mut ChaCha8Rng) -> PolicyAction {
    match kind {
        HeadKind::Bernoulli { dims } => PolicyAction::Binary((0..dims).map(|_| rng.gen_bool(0.5)).collect()),
        HeadKind::MoveTurn => PolicyAction::Pair(rng.gen_range(0..3), rng.gen_range(0..3)),
        HeadKind::Categorical { .. } => {
            let valid: Vec<usize> = (0..mask.len()).filter(|&k| mask[k]).collect();
            PolicyAction::Choice(valid[rng.gen_range(0..valid.len())])
        }
    }
}

fn random_mask(kind: HeadKind, rng: &mut ChaCha8Rng) -> Vec<bool> {
    let n = kind.logits();
    match kind {
        HeadKind::MoveTurn => vec![true; n],
        _ => {
            let mut m: Vec<bool> = (0..n).map(|_| rng.gen_bool(0.75)).collect();
            m[rng.gen_range(0..n)] = true;
            m
        }
    }
}

/// Objective value and logits gradient for a batch of logits rows.
fn head_objective(kind: HeadKind, logits: &Array2<f64>, masks: &[Vec<bool>], actions: &[PolicyAction]) -> (f64, Array2<f64>) {
    let mut total = 0.0;
    let mut d = Array2::zeros(logits.raw_dim());
    for (r, row) in logits.rows().into_iter().enumerate() {
        let t = row_terms(kind, row.as_slice().unwrap(), &masks[r], &actions[r]).expect("actions are in support");
        total += t.log_prob + 0.5 * t.entropy;
        for k in 0..row.len() {
            d[[r, k]] = t.d_log_prob[k] + 0.5 * t.d_entropy[k];
        }
    }
    (total, d)
}

fn compare<N: Tensors<f64> + Clone>(
    prefix: &str,
    net: &N,
    grad: &N,
    objective: impl Fn(&N) -> f64,
    cfg: &GradCheckConfig,
    rng: &mut ChaCha8Rng,
) -> Vec<TensorCheck> {
    let names: Vec<String> = net.tensors().into_iter().map(|(n, _, _)| n).collect();
    let analytic: Vec<Vec<f64>> = grad.tensors().into_iter().map(|(_, _, t)| t.to_vec()).collect();
    let mut out = Vec::new();
    for (k, name) in names.iter().enumerate() {
        let len = analytic[k].len();
        let idx: Vec<usize> = match cfg.samples_per_tensor {
            Some(s) if s < len => sample(rng, len, s).into_vec(),
            _ => (0..len).collect(),
        };
        let mut worst: f64 = 0.0;
        let mut probe = net.clone();
        for &i in &idx {
            let orig = probe.tensors_mut()[k][i];
            probe.tensors_mut()[k][i] = orig + cfg.step;
            let up = objective(&probe);
            probe.tensors_mut()[k][i] = orig - cfg.step;
            let down = objective(&probe);
            probe.tensors_mut()[k][i] = orig;
            let numeric = (up - down) / (2.0 * cfg.step);
            worst = worst.max(rel_error(analytic[k][i], numeric, cfg.floor));
        }
        out.push(TensorCheck { name: format!("{prefix}.{name}"), checked: idx.len(), max_rel_error: worst });
    }
    out
}

fn check_hi(actor: &HiActor<f64>, cfg: &GradCheckConfig, rng: &mut ChaCha8Rng) -> Vec<TensorCheck> {
    let (t, b, w) = (cfg.seq_len, cfg.batch, actor.width());
    let xs = gaussian(t * b, actor.input_dim(), 1.0, rng);
    let init = RecurrentState { h: gaussian(b, w, 0.5, rng), c: gaussian(b, w, 0.5, rng) };
    // One mid-sequence reset exercises the gradient cut.
    let mut resets = vec![vec![false; b]; t];
    if t > 1 {
        resets[1][rng.gen_range(0..b)] = true;
    }
    let masks: Vec<Vec<bool>> = (0..t * b).map(|_| random_mask(actor.kind, rng)).collect();
    let actions: Vec<PolicyAction> = masks.iter().map(|m| random_action(actor.kind, m, rng)).collect();
    let objective = |a: &HiActor<f64>| head_objective(a.kind, &a.forward_train(&xs, &init, &resets).0, &masks, &actions).0;
    let (logits, tape) = actor.forward_train(&xs, &init, &resets);
    let (_, d) = head_objective(actor.kind, &logits, &masks, &actions);
    let grad = actor.backward(&tape, &d);
    compare("hi_actor", actor, &grad, objective, cfg, rng)
}

fn check_lo(actor: &LoActor<f64>, cfg: &GradCheckConfig, rng: &mut ChaCha8Rng) -> Vec<TensorCheck> {
    let rows = cfg.seq_len * cfg.batch;
    let x = gaussian(rows, actor.input_dim(), 1.0, rng);
    let masks = vec![vec![true; 6]; rows];
    let actions: Vec<PolicyAction> = (0..rows).map(|_| random_action(HeadKind::MoveTurn, &[], rng)).collect();
    let objective = |a: &LoActor<f64>| head_objective(HeadKind::MoveTurn, &a.forward_train(&x).0, &masks, &actions).0;
    let (logits, tape) = actor.forward_train(&x);
    let (_, d) = head_objective(HeadKind::MoveTurn, &logits, &masks, &actions);
    let grad = actor.backward(&tape, &d);
    compare("lo_actor", actor, &grad, objective, cfg, rng)
}

fn check_critic(prefix: &str, critic: &Critic<f64>, cfg: &GradCheckConfig, rng: &mut ChaCha8Rng) -> Vec<TensorCheck> {
    let rows = cfg.seq_len * cfg.batch;
    let x = gaussian(rows, critic.input_dim(), 1.0, rng);
    let weights = Array1::from_shape_fn(rows, |_| rng.gen_range(-1.0..1.0));
    let objective = |c: &Critic<f64>| c.forward_train(&x).0.dot(&weights);
    let (_, tape) = critic.forward_train(&x);
    let (grad, dx) = critic.backward(&tape, &weights);
    let mut out = compare(prefix, critic, &grad, objective, cfg, rng);

    // Input gradient of the value itself.
    let mut worst: f64 = 0.0;
    let cols = x.ncols();
    let idx: Vec<usize> = match cfg.samples_per_tensor {
        Some(s) if s < cols => sample(rng, cols, s).into_vec(),
        _ => (0..cols).collect(),
    };
    for &j in &idx {
        let mut up = x.clone();
        up[[0, j]] += cfg.step;
        let mut down = x.clone();
        down[[0, j]] -= cfg.step;
        let numeric = (critic.values(&up).unwrap()[0] - critic.values(&down).unwrap()[0]) / (2.0 * cfg.step);
        // Row 0's contribution to dx is scaled by its weight.
        let analytic = dx[[0, j]] / weights[0];
        worst = worst.max(rel_error(analytic, numeric, cfg.floor));
    }
    out.push(TensorCheck { name: format!("{prefix}.input"), checked: idx.len(), max_rel_error: worst });
    out
}

/// Checks all four networks of `spec` on one random configuration.
pub fn gradient_check(spec: &NetSpec, seed: u64, cfg: &GradCheckConfig) -> GradCheckReport {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    // Unit head gains keep logits away from zero so the softmax and sigmoid
    // curvature actually enters the check.
    let gains = InitGains { actor_head: 1.0, ..InitGains::default() };
    let mut params = init_params_with::<f64>(spec, seed, gains);
    for t in params.tensors_mut() {
        for v in t.iter_mut() {
            // Non-zero biases so bias paths are not trivially symmetric.
            if *v == 0.0 {
                *v = 0.1 * rng.gen_range(-1.0..1.0);
            }
        }
    }
    let mut tensors = check_hi(&params.hi_actor, cfg, &mut rng);
    tensors.extend(check_lo(&params.lo_actor, cfg, &mut rng));
    tensors.extend(check_critic("hi_critic", &params.hi_critic, cfg, &mut rng));
    tensors.extend(check_critic("lo_critic", &params.lo_critic, cfg, &mut rng));
    GradCheckReport { seed, tensors }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny(head: HeadKind) -> NetSpec {
        NetSpec {
            hidden: vec![6, 5],
            lstm_width: 4,
            hi_input_dim: 7,
            hi_input_tag: "x".into(),
            hi_head: head,
            lo_input_dim: 24,
            lo_input_tag: "x".into(),
            hi_critic_input_dim: 9,
            hi_critic_tag: "x".into(),
            lo_critic_input_dim: 12,
            lo_critic_tag: "x".into(),
        }
    }

    #[test]
    fn every_entry_of_tiny_nets() {
        let cfg = GradCheckConfig { samples_per_tensor: None, seq_len: 4, batch: 3, ..Default::default() };
        for head in [HeadKind::Bernoulli { dims: 4 }, HeadKind::Categorical { dims: 5 }] {
            for seed in 0..3 {
                let r = gradient_check(&tiny(head), seed, &cfg);
                assert!(r.max_rel_error() < 1e-5, "{head:?} seed {seed}: {:?}", r.tensors);
            }
        }
    }

    #[test]
    fn detects_a_broken_gradient() {
        let spec = tiny(HeadKind::Bernoulli { dims: 4 });
        let params = init_params_with::<f64>(&spec, 1, InitGains { actor_head: 1.0, ..Default::default() });
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let x = gaussian(3, 9, 1.0, &mut rng);
        let w = Array1::from_elem(3, 1.0);
        let (_, tape) = params.hi_critic.forward_train(&x);
        let (mut grad, _) = params.hi_critic.backward(&tape, &w);
        grad.head.bias[0] += 0.01;
        let checks = compare(
            "c",
            &params.hi_critic,
            &grad,
            |c: &Critic<f64>| c.forward_train(&x).0.sum(),
            &GradCheckConfig { samples_per_tensor: None, ..Default::default() },
            &mut rng,
        );
        let bias = checks.iter().find(|c| c.name == "c.head.bias").unwrap();
        assert!(bias.max_rel_error > 1e-3);
    }
}
