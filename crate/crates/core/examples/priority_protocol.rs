//! Walks through the priority layer: the worked update examples, one
//! communication round, and a requested object that lies outside the
//! responder's observation becoming its target.
//!
//! `cargo run --example priority_protocol`

use tihdp::harness::oracle::communication_reach;
use tihdp::priority::{comm_round, map_local_ops, select_target, update_priorities, Broadcast, PriorityVector};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let pv = PriorityVector::uniform(4, 0.1, 0);
    let c_bar = map_local_ops(&[1, -1], &[Some(0), Some(1)], 4)?;
    let next = update_priorities(&pv, &c_bar, false, &[0; 4], &[false; 4])?;
    println!("local ops {c_bar:?}: {:.4?} -> target {:?}", next.phi, select_target(&next));

    let round = comm_round(
        &[
            Broadcast { alpha: true, beta: false, target: Some(1) },
            Broadcast { alpha: true, beta: false, target: Some(1) },
            Broadcast { alpha: false, beta: true, target: Some(0) },
        ],
        4,
    );
    println!("request sums {:?}, responses {:?}", round.request_sums, round.sigma);
    let answered = update_priorities(&pv, &[0.0; 4], round.sigma[2], &round.request_sums, &[false; 4])?;
    println!("responder: {:.4?} -> target {:?}", answered.phi, select_target(&answered));

    let trace = communication_reach(0.1, 40);
    println!(
        "robot 0 observes {:?}; object {} becomes its target after {} steps",
        trace.observed,
        trace.requested,
        trace.reached_at.map_or("no".to_string(), |s| s.to_string())
    );
    Ok(())
}
