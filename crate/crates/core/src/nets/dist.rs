//! Factorized discrete action distributions over logits.

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{NetError, Real};

fn softplus(x: f64) -> f64 {
    if x > 0.0 {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Log-softmax restricted to `valid` entries (invalid entries get `-inf`).
fn log_softmax(logits: &[f64], valid: &[bool]) -> Vec<f64> {
    let max = logits
        .iter()
        .zip(valid)
        .filter(|(_, &v)| v)
        .map(|(&x, _)| x)
        .fold(f64::NEG_INFINITY, f64::max);
    let lse = max
        + logits.iter().zip(valid).filter(|(_, &v)| v).map(|(&x, _)| (x - max).exp()).sum::<f64>().ln();
    logits.iter().zip(valid).map(|(&x, &v)| if v { x - lse } else { f64::NEG_INFINITY }).collect()
}

/// Sampled or chosen action of one policy head.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum PolicyAction {
    /// Independent binary outputs.
    Binary(Vec<bool>),
    /// `(move index, turn index)`.
    Pair(usize, usize),
    /// One choice out of a categorical.
    Choice(usize),
}

/// Probabilities of one factorized policy output.
#[derive(Debug, Clone, PartialEq)]
pub enum ActionDistribution {
    /// Independent Bernoullis; `active[k] == false` dims are forced to 0 and
    /// excluded from log-probabilities and entropy.
    Bernoulli { probs: Vec<f64>, active: Vec<bool> },
    /// Two independent 3-way categoricals over (move, turn).
    MoveTurn { moves: [f64; 3], turns: [f64; 3] },
    /// One categorical; invalid entries carry probability 0.
    Categorical { probs: Vec<f64> },
}

impl ActionDistribution {
    pub fn bernoulli(logits: &[f64], active: &[bool]) -> Self {
        ActionDistribution::Bernoulli { probs: logits.iter().map(|&x| sigmoid(x)).collect(), active: active.to_vec() }
    }

    pub fn move_turn(logits: &[f64]) -> Self {
        let all = [true; 3];
        let m = log_softmax(&logits[0..3], &all);
        let t = log_softmax(&logits[3..6], &all);
        ActionDistribution::MoveTurn {
            moves: [m[0].exp(), m[1].exp(), m[2].exp()],
            turns: [t[0].exp(), t[1].exp(), t[2].exp()],
        }
    }

    /// `None` if no entry is valid.
    pub fn categorical(logits: &[f64], valid: &[bool]) -> Option<Self> {
        if !valid.iter().any(|&v| v) {
            return None;
        }
        let lp = log_softmax(logits, valid);
        Some(ActionDistribution::Categorical { probs: lp.iter().map(|&v| v.exp()).collect() })
    }

    pub fn sample<G: Rng>(&self, rng: &mut G) -> PolicyAction {
        match self {
            ActionDistribution::Bernoulli { probs, active } => PolicyAction::Binary(
                probs.iter().zip(active).map(|(&p, &a)| a && rng.gen::<f64>() < p).collect(),
            ),
            ActionDistribution::MoveTurn { moves, turns } => {
                PolicyAction::Pair(sample_index(moves, rng), sample_index(turns, rng))
            }
            ActionDistribution::Categorical { probs } => PolicyAction::Choice(sample_index(probs, rng)),
        }
    }

    /// Most likely action (ties to the lowest index, Bernoulli `p > 0.5`).
    pub fn mode(&self) -> PolicyAction {
        match self {
            ActionDistribution::Bernoulli { probs, active } => {
                PolicyAction::Binary(probs.iter().zip(active).map(|(&p, &a)| a && p > 0.5).collect())
            }
            ActionDistribution::MoveTurn { moves, turns } => PolicyAction::Pair(argmax(moves), argmax(turns)),
            ActionDistribution::Categorical { probs } => PolicyAction::Choice(argmax(probs)),
        }
    }

    pub fn entropy(&self) -> f64 {
        let h = |p: f64| if p > 0.0 { -p * p.ln() } else { 0.0 };
        match self {
            ActionDistribution::Bernoulli { probs, active } => probs
                .iter()
                .zip(active)
                .filter(|(_, &a)| a)
                .map(|(&p, _)| h(p) + h(1.0 - p))
                .sum(),
            ActionDistribution::MoveTurn { moves, turns } => {
                moves.iter().map(|&p| h(p)).sum::<f64>() + turns.iter().map(|&p| h(p)).sum::<f64>()
            }
            ActionDistribution::Categorical { probs } => probs.iter().map(|&p| h(p)).sum(),
        }
    }

    pub fn log_prob(&self, action: &PolicyAction) -> Result<f64, NetError> {
        let out_of_support = || NetError::OutOfSupport(format!("{action:?}"));
        match (self, action) {
            (ActionDistribution::Bernoulli { probs, active }, PolicyAction::Binary(bits)) => {
                if bits.len() != probs.len() {
                    return Err(out_of_support());
                }
                let mut lp = 0.0;
                for ((&p, &a), &bit) in probs.iter().zip(active).zip(bits) {
                    if !a {
                        if bit {
                            return Err(out_of_support());
                        }
                        continue;
                    }
                    lp += if bit { p.ln() } else { (1.0 - p).ln() };
                }
                Ok(lp)
            }
            (ActionDistribution::MoveTurn { moves, turns }, &PolicyAction::Pair(m, t)) => {
                if m >= 3 || t >= 3 {
                    return Err(out_of_support());
                }
                Ok(moves[m].ln() + turns[t].ln())
            }
            (ActionDistribution::Categorical { probs }, &PolicyAction::Choice(c)) => match probs.get(c) {
                Some(&p) if p > 0.0 => Ok(p.ln()),
                _ => Err(out_of_support()),
            },
            _ => Err(out_of_support()),
        }
    }
}

/// `(log-probability, entropy)` of `action`.
pub fn logprob_entropy(dist: &ActionDistribution, action: &PolicyAction) -> Result<(f64, f64), NetError> {
    Ok((dist.log_prob(action)?, dist.entropy()))
}

fn sample_index<G: Rng>(probs: &[f64], rng: &mut G) -> usize {
    let u: f64 = rng.gen();
    let mut acc = 0.0;
    let mut last_valid = 0;
    for (k, &p) in probs.iter().enumerate() {
        if p > 0.0 {
            last_valid = k;
            acc += p;
            if u < acc {
                return k;
            }
        }
    }
    last_valid
}

fn argmax(probs: &[f64]) -> usize {
    let mut best = 0;
    for (k, &p) in probs.iter().enumerate() {
        if p > probs[best] {
            best = k;
        }
    }
    best
}

/// Which structure a head's logits row has.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum HeadKind {
    Bernoulli { dims: usize },
    MoveTurn,
    Categorical { dims: usize },
}

impl HeadKind {
    pub fn logits(&self) -> usize {
        match *self {
            HeadKind::Bernoulli { dims } | HeadKind::Categorical { dims } => dims,
            HeadKind::MoveTurn => 6,
        }
    }
}

/// Log-probability and entropy of one logits row, with their gradients
/// with respect to the logits.
#[derive(Debug, Clone, PartialEq)]
pub struct RowTerms {
    pub log_prob: f64,
    pub entropy: f64,
    pub d_log_prob: Vec<f64>,
    pub d_entropy: Vec<f64>,
}

/// Evaluates a head on one logits row. `mask` marks active Bernoulli dims or
/// valid categorical entries; it is ignored for move/turn heads.
pub fn row_terms<R: Real>(kind: HeadKind, logits: &[R], mask: &[bool], action: &PolicyAction) -> Result<RowTerms, NetError> {
    let x: Vec<f64> = logits.iter().map(|v| v.to_f64().unwrap()).collect();
    let out_of_support = || NetError::OutOfSupport(format!("{action:?}"));
    let mut d_lp = vec![0.0; x.len()];
    let mut d_h = vec![0.0; x.len()];
    match (kind, action) {
        (HeadKind::Bernoulli { .. }, PolicyAction::Binary(bits)) => {
            if bits.len() != x.len() || mask.len() != x.len() {
                return Err(out_of_support());
            }
            let (mut lp, mut h) = (0.0, 0.0);
            for k in 0..x.len() {
                if !mask[k] {
                    continue;
                }
                let p = sigmoid(x[k]);
                let a = if bits[k] { 1.0 } else { 0.0 };
                lp += if bits[k] { -softplus(-x[k]) } else { -softplus(x[k]) };
                h += softplus(x[k]) - p * x[k];
                d_lp[k] = a - p;
                d_h[k] = -x[k] * p * (1.0 - p);
            }
            Ok(RowTerms { log_prob: lp, entropy: h, d_log_prob: d_lp, d_entropy: d_h })
        }
        (HeadKind::MoveTurn, &PolicyAction::Pair(m, t)) => {
            if m >= 3 || t >= 3 || x.len() != 6 {
                return Err(out_of_support());
            }
            let mut lp = 0.0;
            let mut h = 0.0;
            for (offset, choice) in [(0, m), (3, t)] {
                let terms = categorical_terms(&x[offset..offset + 3], &[true; 3], choice)?;
                lp += terms.log_prob;
                h += terms.entropy;
                d_lp[offset..offset + 3].copy_from_slice(&terms.d_log_prob);
                d_h[offset..offset + 3].copy_from_slice(&terms.d_entropy);
            }
            Ok(RowTerms { log_prob: lp, entropy: h, d_log_prob: d_lp, d_entropy: d_h })
        }
        (HeadKind::Categorical { .. }, &PolicyAction::Choice(c)) => categorical_terms(&x, mask, c),
        _ => Err(out_of_support()),
    }
}

fn categorical_terms(x: &[f64], valid: &[bool], choice: usize) -> Result<RowTerms, NetError> {
    if valid.len() != x.len() || choice >= x.len() || !valid[choice] {
        return Err(NetError::OutOfSupport(format!("choice {choice}")));
    }
    let lp = log_softmax(x, valid);
    let p: Vec<f64> = lp.iter().map(|&v| if v.is_finite() { v.exp() } else { 0.0 }).collect();
    let h: f64 = p.iter().zip(&lp).filter(|(&p, _)| p > 0.0).map(|(&p, &l)| -p * l).sum();
    let d_lp = (0..x.len())
        .map(|k| if valid[k] { f64::from(u8::from(k == choice)) - p[k] } else { 0.0 })
        .collect();
    let d_h = (0..x.len()).map(|k| if valid[k] && p[k] > 0.0 { -p[k] * (lp[k] + h) } else { 0.0 }).collect();
    Ok(RowTerms { log_prob: lp[choice], entropy: h, d_log_prob: d_lp, d_entropy: d_h })
}

/// Distribution for one logits row.
pub fn distribution<R: Real>(kind: HeadKind, logits: &[R], mask: &[bool]) -> Option<ActionDistribution> {
    let x: Vec<f64> = logits.iter().map(|v| v.to_f64().unwrap()).collect();
    match kind {
        HeadKind::Bernoulli { .. } => Some(ActionDistribution::bernoulli(&x, mask)),
        HeadKind::MoveTurn => Some(ActionDistribution::move_turn(&x)),
        HeadKind::Categorical { .. } => ActionDistribution::categorical(&x, mask),
    }
}
