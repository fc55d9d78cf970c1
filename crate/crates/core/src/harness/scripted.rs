//! Hand-written transport controller used as a solvability reference.
//!
//! It uses privileged knowledge of weight classes: Light objects get one
//! robot and Medium objects two, assigned greedily by distance; Heavy objects
//! are ignored. Each robot drives to a staging point behind its object
//! (relative to the goal) and then pushes through the object's centre.

use crate::world::{Command, Move, Turn, Vec2, WeightClass, WorldState};

/// Angular offset of the two pushers on a Medium object.
const PAIR_OFFSET: f64 = 35.0 * std::f64::consts::PI / 180.0;
/// Extra stand-off of the staging point beyond contact distance.
const STAGING_GAP: f64 = 0.12;
/// Pushing is allowed while the robot sits within this angle of its slot.
const SLOT_TOLERANCE: f64 = 0.45;
/// Heading error above which the robot turns in place.
const TURN_IN_PLACE: f64 = 0.3;
const STEER_DEADBAND: f64 = 0.09;

fn capacity(class: WeightClass) -> usize {
    match class {
        WeightClass::Light => 1,
        WeightClass::Medium => 2,
        WeightClass::Heavy => 0,
    }
}

/// Target of every robot under greedy capacity-limited assignment.
pub fn scripted_assignment(state: &WorldState) -> Vec<Option<usize>> {
    let n = state.num_robots();
    let open: Vec<usize> =
        state.objects.iter().filter(|o| !o.completed && o.weight_class.is_transportable()).map(|o| o.id).collect();
    let mut pairs: Vec<(f64, usize, usize)> = Vec::with_capacity(n * open.len());
    for r in &state.robots {
        for &l in &open {
            pairs.push(((state.objects[l].position - r.position).norm(), r.id, l));
        }
    }
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));
    let mut assigned = vec![None; n];
    let mut load = vec![0usize; state.num_objects()];
    for &(_, i, l) in &pairs {
        if assigned[i].is_none() && load[l] < capacity(state.objects[l].weight_class) {
            assigned[i] = Some(l);
            load[l] += 1;
        }
    }
    // Spare robots help the nearest open Medium object.
    for i in 0..n {
        if assigned[i].is_none() {
            assigned[i] = pairs
                .iter()
                .find(|&&(_, r, l)| r == i && state.objects[l].weight_class == WeightClass::Medium)
                .map(|&(_, _, l)| l);
        }
    }
    assigned
}

fn steer(heading: f64, desired: Vec2) -> Command {
    let err = crate::world::wrap_angle(desired.y.atan2(desired.x) - heading);
    let turn = if err > STEER_DEADBAND {
        Turn::Left
    } else if err < -STEER_DEADBAND {
        Turn::Right
    } else {
        Turn::None
    };
    let mv = if err.abs() > TURN_IN_PLACE { Move::None } else { Move::Forward };
    Command::new(mv, turn)
}

/// `(target, command)` of robot `i`; a pure function of the state.
pub fn scripted_policy(state: &WorldState, i: usize) -> (Option<usize>, Command) {
    let assignment = scripted_assignment(state);
    let Some(l) = assignment[i] else {
        return (None, Command::IDLE);
    };
    let robot = &state.robots[i];
    let obj = &state.objects[l];
    let Some(to_goal) = (obj.goal - obj.position).normalized() else {
        return (Some(l), Command::IDLE);
    };
    let behind = -to_goal;
    // Slot direction from the object centre.
    let partners: Vec<usize> = (0..state.num_robots()).filter(|&j| assignment[j] == Some(l)).collect();
    let slot = if obj.weight_class == WeightClass::Medium && partners.len() >= 2 {
        // The robot further to the left of the push line takes the left slot.
        let side = |j: usize| to_goal.perp().dot(state.robots[j].position - obj.position);
        let others_left = partners.iter().filter(|&&j| j != i && (side(j), j) > (side(i), i)).count();
        let sign = if others_left == 0 { 1.0 } else { -1.0 };
        behind.rotate(-sign * PAIR_OFFSET)
    } else {
        behind
    };
    let contact = robot.body_radius + obj.disc_radius;
    let offset = robot.position - obj.position;
    let dist = offset.norm();
    let bearing = offset.normalized().unwrap_or(slot);
    let slot_error = crate::world::wrap_angle(bearing.y.atan2(bearing.x) - slot.y.atan2(slot.x));

    if slot_error.abs() < SLOT_TOLERANCE && dist < contact + STAGING_GAP + 0.1 {
        // In position: push through the centre.
        return (Some(l), steer(robot.heading, obj.position - robot.position));
    }
    let staging = obj.position + slot * (contact + STAGING_GAP);
    let clearance = contact + 0.2;
    let waypoint = if slot_error.abs() > std::f64::consts::FRAC_PI_2 && dist < clearance + 0.4 {
        // On the wrong side: circle round at a safe distance on the robot's side.
        let sign = if slot_error > 0.0 { -1.0 } else { 1.0 };
        obj.position + bearing.rotate(sign * 0.9) * clearance
    } else {
        staging
    };
    (Some(l), steer(robot.heading, waypoint - robot.position))
}
