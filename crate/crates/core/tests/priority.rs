use proptest::prelude::*;
use tihdp::harness::oracle::{communication_reach, priority_reference};
use tihdp::priority::{
    comm_round, map_local_ops, select_target, update_priorities, Broadcast, PriorityError, PriorityVector,
};

fn simplex(raw: Vec<f64>) -> Vec<f64> {
    let total: f64 = raw.iter().sum();
    raw.into_iter().map(|x| x / total).collect()
}

fn rank_of(phi: &[f64], l: usize) -> usize {
    phi.iter().filter(|&&p| p > phi[l]).count()
}

#[test]
fn worked_examples() {
    let uniform = PriorityVector::uniform(4, 0.1, 0);
    let a = update_priorities(&uniform, &[1.0, -1.0, 0.0, 0.0], false, &[0; 4], &[false; 4]).unwrap();
    // (0.9·0.25 + 0.1·c) / Σ with Σ = 0.9
    let want = [0.325 / 0.9, 0.125 / 0.9, 0.225 / 0.9, 0.225 / 0.9];
    for (g, w) in a.phi.iter().zip(want) {
        assert!((g - w).abs() < 1e-12);
    }
    let b = update_priorities(&uniform, &[0.0; 4], true, &[0, 2, 0, 0], &[false; 4]).unwrap();
    let want = [0.225 / 1.1, 0.425 / 1.1, 0.225 / 1.1, 0.225 / 1.1];
    for (g, w) in b.phi.iter().zip(want) {
        assert!((g - w).abs() < 1e-12);
    }
    let start = PriorityVector { phi: vec![0.4, 0.2, 0.2, 0.2], k_phi: 0.1, owner: 0 };
    let c = update_priorities(&start, &[0.0; 4], false, &[0; 4], &[true, false, false, false]).unwrap();
    assert_eq!(c.phi[0], 0.0);
    for p in &c.phi[1..] {
        assert!((p - 1.0 / 3.0).abs() < 1e-12);
    }
}

#[test]
fn comm_round_example() {
    let round = comm_round(
        &[
            Broadcast { alpha: true, beta: false, target: Some(2) },
            Broadcast { alpha: true, beta: true, target: Some(2) },
            Broadcast { alpha: false, beta: false, target: Some(0) },
        ],
        4,
    );
    assert_eq!(round.request_sums, vec![0, 0, 2, 0]);
    assert_eq!(round.sigma, vec![false, true, false]);
}

#[test]
fn map_local_ops_rejects_duplicates() {
    assert_eq!(map_local_ops(&[1, -1], &[Some(2), Some(0)], 4).unwrap(), vec![-1.0, 0.0, 1.0, 0.0]);
    assert_eq!(map_local_ops(&[1, -1], &[Some(1), None], 3).unwrap(), vec![0.0, 1.0, 0.0]);
    assert!(matches!(map_local_ops(&[1, 1], &[Some(1), Some(1)], 3), Err(PriorityError::DuplicateNeighbor(1))));
}

#[test]
fn all_completed_gives_no_target() {
    let pv = PriorityVector::uniform(3, 0.1, 0);
    let next = update_priorities(&pv, &[1.0; 3], true, &[1; 3], &[true; 3]).unwrap();
    assert_eq!(next.phi, vec![0.0; 3]);
    assert_eq!(select_target(&next), None);
}

#[test]
fn out_of_view_request_becomes_target_within_40_steps() {
    let trace = communication_reach(0.1, 40);
    assert!(!trace.observed.contains(&trace.requested));
    let step = trace.reached_at.expect("requested object never adopted");
    assert!(step <= 40);
    // Once adopted it stays the target under the same signals.
    assert!(trace.targets[step - 1..].iter().all(|&t| t == Some(trace.requested)));
}

fn update_case() -> impl Strategy<Value = (Vec<f64>, f64, Vec<f64>, bool, Vec<u32>, Vec<bool>)> {
    (1usize..8).prop_flat_map(|m| {
        (
            prop::collection::vec(0.01f64..1.0, m).prop_map(simplex),
            0.01f64..=1.0,
            prop::collection::vec(-1i8..=1, m).prop_map(|v| v.into_iter().map(f64::from).collect()),
            any::<bool>(),
            prop::collection::vec(0u32..=5, m),
            prop::collection::vec(prop::bool::weighted(0.3), m),
        )
    })
}

proptest! {
    #[test]
    fn update_matches_reference_and_invariants((phi, k, c_bar, sigma, sums, done) in update_case()) {
        let pv = PriorityVector { phi: phi.clone(), k_phi: k, owner: 0 };
        let got = update_priorities(&pv, &c_bar, sigma, &sums, &done).unwrap().phi;
        let want = priority_reference(&phi, k, &c_bar, sigma, &sums, &done);
        for (g, w) in got.iter().zip(&want) {
            prop_assert!((g - w).abs() <= 1e-12);
        }
        let total: f64 = got.iter().sum();
        prop_assert!(got.iter().all(|&p| p >= 0.0));
        prop_assert!(total.abs() < 1e-9 || (total - 1.0).abs() < 1e-9);
        for (p, d) in got.iter().zip(&done) {
            if *d { prop_assert_eq!(*p, 0.0); }
        }
    }

    #[test]
    fn more_requests_never_lower_rank((phi, k, c_bar, _s, sums, done) in update_case(), l in 0usize..8, extra in 1u32..4) {
        let l = l % phi.len();
        let pv = PriorityVector { phi, k_phi: k, owner: 0 };
        let base = update_priorities(&pv, &c_bar, true, &sums, &done).unwrap().phi;
        let mut more = sums.clone();
        more[l] += extra;
        let boosted = update_priorities(&pv, &c_bar, true, &more, &done).unwrap().phi;
        prop_assert!(rank_of(&boosted, l) <= rank_of(&base, l));
    }

    #[test]
    fn selection_is_scale_invariant(phi in prop::collection::vec(0.0f64..1.0, 1..8), scale in 0.01f64..100.0) {
        let a = PriorityVector { phi: phi.clone(), k_phi: 0.1, owner: 0 };
        let b = PriorityVector { phi: phi.iter().map(|p| p * scale).collect(), k_phi: 0.1, owner: 0 };
        prop_assert_eq!(select_target(&a), select_target(&b));
    }
}
