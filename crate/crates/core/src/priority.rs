//! Dynamic task priority layer.
//!
//! Each robot keeps a normalized priority over all objects. Its allocation
//! policy nudges the priorities of nearby objects up or down, and a global
//! request/response exchange lets a robot raise objects it cannot see: when
//! robot `j` requests help on its current target and robot `i` is responding,
//! robot `i`'s priority for that object grows. The robot's target is the
//! highest-priority object.

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Default update constant.
pub const DEFAULT_K_PHI: f64 = 0.1;

#[derive(Debug, Error, PartialEq)]
pub enum PriorityError {
    #[error("neighbour object {0} appears more than once")]
    DuplicateNeighbor(usize),
    #[error("object index {index} out of range for {count} objects")]
    ObjectOutOfRange { index: usize, count: usize },
    #[error("expected {expected} entries, got {got}")]
    Length { expected: usize, got: usize },
    #[error("{0} local operations for {1} neighbour slots")]
    SlotMismatch(usize, usize),
}

/// Per-robot priority over the `M` objects.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PriorityVector {
    pub phi: Vec<f64>,
    pub k_phi: f64,
    pub owner: usize,
}

impl PriorityVector {
    /// Uniform `1/M` start.
    pub fn uniform(m: usize, k_phi: f64, owner: usize) -> Self {
        Self { phi: vec![1.0 / m as f64; m], k_phi, owner }
    }

    pub fn len(&self) -> usize {
        self.phi.len()
    }

    pub fn is_empty(&self) -> bool {
        self.phi.is_empty()
    }
}

/// Robot `d` row: one-hot at the current target when requesting.
pub fn request_signal(alpha: bool, target: Option<usize>, m: usize) -> Vec<u8> {
    let mut d = vec![0u8; m];
    if alpha {
        if let Some(t) = target {
            d[t] = 1;
        }
    }
    d
}

pub fn response_signal(beta: bool) -> bool {
    beta
}

/// Scatters the per-slot operations onto global object indices. `None`
/// neighbour slots are padding and contribute nothing.
pub fn map_local_ops(c_local: &[i8], neighbor_ids: &[Option<usize>], m: usize) -> Result<Vec<f64>, PriorityError> {
    if c_local.len() != neighbor_ids.len() {
        return Err(PriorityError::SlotMismatch(c_local.len(), neighbor_ids.len()));
    }
    let mut c_bar = vec![0.0; m];
    let mut seen = vec![false; m];
    for (&c, id) in c_local.iter().zip(neighbor_ids) {
        let Some(l) = *id else { continue };
        if l >= m {
            return Err(PriorityError::ObjectOutOfRange { index: l, count: m });
        }
        if std::mem::replace(&mut seen[l], true) {
            return Err(PriorityError::DuplicateNeighbor(l));
        }
        c_bar[l] = f64::from(c.signum());
    }
    Ok(c_bar)
}

/// One priority update followed by normalization.
///
/// Completed objects are zeroed, the rest relax toward `c̄ + σ·Σd` at rate
/// `k_phi`. Negative results are clamped to zero before normalizing; when
/// nothing positive remains the vector is all-zero.
pub fn update_priorities(
    pv: &PriorityVector,
    c_bar: &[f64],
    sigma: bool,
    request_sums: &[u32],
    completed: &[bool],
) -> Result<PriorityVector, PriorityError> {
    let m = pv.len();
    for len in [c_bar.len(), request_sums.len(), completed.len()] {
        if len != m {
            return Err(PriorityError::Length { expected: m, got: len });
        }
    }
    let k = pv.k_phi;
    let response = if sigma { 1.0 } else { 0.0 };
    let mut next: Vec<f64> = (0..m)
        .map(|l| {
            if completed[l] {
                0.0
            } else {
                let drive = c_bar[l] + response * f64::from(request_sums[l]);
                ((1.0 - k) * pv.phi[l] + k * drive).max(0.0)
            }
        })
        .collect();
    let total: f64 = next.iter().sum();
    if total > 0.0 {
        next.iter_mut().for_each(|p| *p /= total);
    } else {
        next.iter_mut().for_each(|p| *p = 0.0);
    }
    Ok(PriorityVector { phi: next, k_phi: k, owner: pv.owner })
}

/// Highest-priority object, lowest index on ties; `None` when no entry is
/// positive (no remaining task).
pub fn select_target(pv: &PriorityVector) -> Option<usize> {
    let mut best: Option<(usize, f64)> = None;
    for (l, &p) in pv.phi.iter().enumerate() {
        if p > 0.0 && best.map_or(true, |(_, b)| p > b) {
            best = Some((l, p));
        }
    }
    best.map(|(l, _)| l)
}

/// What one robot broadcasts in a communication round.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Broadcast {
    pub alpha: bool,
    pub beta: bool,
    pub target: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CommRound {
    /// `Σ_j d_j^l` over every robot, the responder included.
    pub request_sums: Vec<u32>,
    pub sigma: Vec<bool>,
}

/// Gathers all robots' signals for one step.
pub fn comm_round(frames: &[Broadcast], m: usize) -> CommRound {
    let mut request_sums = vec![0u32; m];
    for f in frames {
        for (sum, d) in request_sums.iter_mut().zip(request_signal(f.alpha, f.target, m)) {
            *sum += u32::from(d);
        }
    }
    CommRound { request_sums, sigma: frames.iter().map(|f| response_signal(f.beta)).collect() }
}

/// Everything exchanged in one step, kept for logging.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CommFrame {
    pub alpha: Vec<bool>,
    pub beta: Vec<bool>,
    pub d: Vec<Vec<u8>>,
    pub sigma: Vec<bool>,
    pub c_local: Vec<Vec<i8>>,
    pub c_bar: Vec<Vec<f64>>,
}

/// Per-robot input to [`priority_step`].
#[derive(Debug, Clone, PartialEq)]
pub struct LocalOps {
    pub c_local: Vec<i8>,
    pub neighbor_ids: Vec<Option<usize>>,
    pub alpha: bool,
    pub beta: bool,
}

/// Runs the synchronous round for all robots: signals are computed from the
/// current targets, then every priority vector is updated and new targets are
/// selected.
pub fn priority_step(
    priorities: &mut [PriorityVector],
    targets: &mut [Option<usize>],
    ops: &[LocalOps],
    completed: &[bool],
) -> Result<CommFrame, PriorityError> {
    let m = completed.len();
    let broadcasts: Vec<Broadcast> = ops
        .iter()
        .zip(targets.iter())
        .map(|(o, &target)| Broadcast { alpha: o.alpha, beta: o.beta, target })
        .collect();
    let round = comm_round(&broadcasts, m);
    let mut c_bar_rows = Vec::with_capacity(ops.len());
    for (i, op) in ops.iter().enumerate() {
        let c_bar = map_local_ops(&op.c_local, &op.neighbor_ids, m)?;
        priorities[i] = update_priorities(&priorities[i], &c_bar, round.sigma[i], &round.request_sums, completed)?;
        targets[i] = select_target(&priorities[i]);
        c_bar_rows.push(c_bar);
    }
    Ok(CommFrame {
        alpha: ops.iter().map(|o| o.alpha).collect(),
        beta: ops.iter().map(|o| o.beta).collect(),
        d: broadcasts.iter().map(|b| request_signal(b.alpha, b.target, m)).collect(),
        sigma: round.sigma,
        c_local: ops.iter().map(|o| o.c_local.clone()).collect(),
        c_bar: c_bar_rows,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pv(phi: &[f64]) -> PriorityVector {
        PriorityVector { phi: phi.to_vec(), k_phi: 0.1, owner: 0 }
    }

    fn close(a: &[f64], b: &[f64], tol: f64) {
        assert_eq!(a.len(), b.len());
        for (x, y) in a.iter().zip(b) {
            assert!((x - y).abs() < tol, "{a:?} vs {b:?}");
        }
    }

    #[test]
    fn request_signal_examples() {
        assert_eq!(request_signal(true, Some(1), 4), vec![0, 1, 0, 0]);
        assert_eq!(request_signal(false, Some(1), 4), vec![0, 0, 0, 0]);
        assert_eq!(request_signal(true, Some(3), 4), vec![0, 0, 0, 1]);
        assert_eq!(request_signal(true, None, 2), vec![0, 0]);
    }

    #[test]
    fn response_signal_is_identity() {
        assert!(response_signal(true));
        assert!(!response_signal(false));
        for b in [true, false] {
            assert_eq!(response_signal(response_signal(b)), response_signal(b));
        }
    }

    #[test]
    fn map_local_ops_examples() {
        assert_eq!(map_local_ops(&[1, -1], &[Some(2), Some(0)], 4).unwrap(), vec![-1.0, 0.0, 1.0, 0.0]);
        assert_eq!(map_local_ops(&[1, 1], &[Some(0), Some(1)], 2).unwrap(), vec![1.0, 1.0]);
        assert_eq!(map_local_ops(&[-1, 1], &[Some(1), None], 3).unwrap(), vec![0.0, -1.0, 0.0]);
        assert_eq!(map_local_ops(&[1, 1], &[Some(1), Some(1)], 3), Err(PriorityError::DuplicateNeighbor(1)));
        assert!(matches!(map_local_ops(&[1], &[Some(5)], 3), Err(PriorityError::ObjectOutOfRange { .. })));
    }

    #[test]
    fn update_examples() {
        let out = update_priorities(&pv(&[0.25; 4]), &[1.0, -1.0, 0.0, 0.0], false, &[0; 4], &[false; 4]).unwrap();
        close(&out.phi, &[0.325 / 0.9, 0.125 / 0.9, 0.225 / 0.9, 0.225 / 0.9], 1e-15);
        close(&out.phi, &[0.3611, 0.1389, 0.25, 0.25], 1e-4);

        let out = update_priorities(&pv(&[0.25; 4]), &[0.0; 4], true, &[0, 2, 0, 0], &[false; 4]).unwrap();
        close(&out.phi, &[0.2045, 0.3864, 0.2045, 0.2045], 1e-4);

        let out =
            update_priorities(&pv(&[0.4, 0.2, 0.2, 0.2]), &[0.0; 4], false, &[0; 4], &[true, false, false, false])
                .unwrap();
        close(&out.phi, &[0.0, 1.0 / 3.0, 1.0 / 3.0, 1.0 / 3.0], 1e-12);
    }

    #[test]
    fn negative_entries_are_clamped() {
        let out = update_priorities(&pv(&[0.05, 0.95]), &[-1.0, 0.0], false, &[0, 0], &[false, false]).unwrap();
        assert_eq!(out.phi[0], 0.0);
        assert_eq!(out.phi[1], 1.0);
    }

    #[test]
    fn all_completed_gives_zero_and_no_target() {
        let out = update_priorities(&pv(&[0.5, 0.5]), &[1.0, 1.0], true, &[1, 1], &[true, true]).unwrap();
        assert_eq!(out.phi, vec![0.0, 0.0]);
        assert_eq!(select_target(&out), None);
    }

    #[test]
    fn update_rejects_length_mismatch() {
        let err = update_priorities(&pv(&[0.5, 0.5]), &[0.0], false, &[0, 0], &[false, false]);
        assert_eq!(err, Err(PriorityError::Length { expected: 2, got: 1 }));
    }

    #[test]
    fn select_target_examples() {
        assert_eq!(select_target(&pv(&[0.2, 0.5, 0.3])), Some(1));
        assert_eq!(select_target(&pv(&[0.5, 0.5, 0.0])), Some(0));
        assert_eq!(select_target(&pv(&[0.0, 0.0, 0.0])), None);
    }

    #[test]
    fn comm_round_examples() {
        let frames = [
            Broadcast { alpha: true, beta: false, target: Some(2) },
            Broadcast { alpha: true, beta: true, target: Some(2) },
            Broadcast { alpha: false, beta: false, target: Some(0) },
        ];
        let r = comm_round(&frames, 4);
        assert_eq!(r.request_sums, vec![0, 0, 2, 0]);
        assert_eq!(r.sigma, vec![false, true, false]);

        let quiet = frames.map(|f| Broadcast { alpha: false, ..f });
        assert_eq!(comm_round(&quiet, 4).request_sums, vec![0; 4]);

        let single = [Broadcast { alpha: true, beta: true, target: Some(1) }];
        assert_eq!(comm_round(&single, 3).request_sums, vec![0, 1, 0]);
    }

    #[test]
    fn priority_step_uses_targets_from_before_the_update() {
        let mut pvs = vec![PriorityVector::uniform(3, 0.1, 0), PriorityVector::uniform(3, 0.1, 1)];
        let mut targets = vec![Some(2), Some(0)];
        let ops = vec![
            LocalOps { c_local: vec![1], neighbor_ids: vec![Some(1)], alpha: true, beta: false },
            LocalOps { c_local: vec![-1], neighbor_ids: vec![None], alpha: false, beta: true },
        ];
        let frame = priority_step(&mut pvs, &mut targets, &ops, &[false; 3]).unwrap();
        assert_eq!(frame.d[0], vec![0, 0, 1]);
        assert_eq!(frame.c_bar[0], vec![0.0, 1.0, 0.0]);
        assert_eq!(frame.c_bar[1], vec![0.0; 3]);
        assert_eq!(targets, vec![Some(1), Some(2)]);
    }
}
