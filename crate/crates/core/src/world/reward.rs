//! Transport rewards.

use super::WorldState;

/// Velocity of object `l` projected onto the unit direction toward its goal.
///
/// Objects inside their goal ball (including the exact-goal singularity)
/// contribute nothing.
pub fn object_reward(state: &WorldState, l: usize) -> f64 {
    let obj = &state.objects[l];
    let to_goal = obj.goal - obj.position;
    let dist = to_goal.norm();
    if dist <= state.config.goal_radius || dist == 0.0 {
        return 0.0;
    }
    obj.velocity.dot(to_goal) / dist
}

/// Shared team reward: the sum of all object rewards.
pub fn team_reward(state: &WorldState) -> f64 {
    (0..state.num_objects()).map(|l| object_reward(state, l)).sum()
}

/// `r_target + min(0, r_nearest) + e`, with `e` the approach bonus.
pub fn low_reward_from_terms(r_target: f64, r_nearest: Option<f64>, approaching: bool) -> f64 {
    r_target + r_nearest.map_or(0.0, |r| r.min(0.0)) + if approaching { 1.0 } else { 0.0 }
}

/// Control-layer reward of robot `i` transporting `target`.
///
/// The collision term uses the uncompleted object nearest to the robot other
/// than the target. The approach bonus is earned while moving toward the
/// target or when within the approach radius of it.
pub fn robot_low_reward(state: &WorldState, i: usize, target: usize) -> f64 {
    let robot = &state.robots[i];
    let r_target = object_reward(state, target);
    let nearest = state
        .objects
        .iter()
        .filter(|o| o.id != target && !o.completed)
        .map(|o| ((o.position - robot.position).norm(), o.id))
        .min_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)))
        .map(|(_, id)| object_reward(state, id));
    let offset = state.objects[target].position - robot.position;
    let approaching =
        robot.linear_velocity.dot(offset) > 0.0 || offset.norm() < state.config.approach_radius;
    low_reward_from_terms(r_target, nearest, approaching)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::world::{ScenarioConfig, Vec2, WorldState};

    fn state_with(velocities: &[(f64, f64)], offsets: &[(f64, f64)]) -> WorldState {
        let cfg = ScenarioConfig::with_counts(1, velocities.len(), 0, 0);
        let mut s = WorldState::reset(&cfg, 3).unwrap();
        for (o, (&(vx, vy), &(dx, dy))) in s.objects.iter_mut().zip(velocities.iter().zip(offsets)) {
            o.velocity = Vec2::new(vx, vy);
            o.goal = o.position + Vec2::new(dx, dy);
            o.completed = Vec2::new(dx, dy).norm() <= cfg.goal_radius;
        }
        s
    }

    #[test]
    fn object_reward_examples() {
        let s = state_with(&[(0.1, 0.0), (0.0, 0.2), (-0.1, 0.0)], &[(1.0, 0.0), (1.0, 0.0), (2.0, 0.0)]);
        assert!((object_reward(&s, 0) - 0.1).abs() < 1e-15);
        assert_eq!(object_reward(&s, 1), 0.0);
        assert!((object_reward(&s, 2) + 0.1).abs() < 1e-15);
    }

    #[test]
    fn completed_and_singular_objects_give_zero() {
        let s = state_with(&[(0.3, 0.0), (0.3, 0.0)], &[(0.05, 0.0), (0.0, 0.0)]);
        assert_eq!(object_reward(&s, 0), 0.0);
        assert_eq!(object_reward(&s, 1), 0.0);
    }

    #[test]
    fn team_reward_examples() {
        let s = state_with(&[(0.0, 0.0); 4], &[(1.0, 0.0); 4]);
        assert_eq!(team_reward(&s), 0.0);
        let s = state_with(&[(0.2, 0.0), (0.0, 0.0), (0.0, 0.0)], &[(1.0, 0.0); 3]);
        assert!((team_reward(&s) - 0.2).abs() < 1e-15);
        let s = state_with(&[(0.1, 0.0), (-0.05, 0.0), (0.0, 0.0), (0.0, 0.0)], &[(1.0, 0.0); 4]);
        assert!((team_reward(&s) - 0.05).abs() < 1e-15);
    }

    #[test]
    fn low_reward_terms() {
        assert!((low_reward_from_terms(0.1, Some(0.05), true) - 1.1).abs() < 1e-15);
        assert_eq!(low_reward_from_terms(0.0, Some(0.0), true), 1.0);
        assert!((low_reward_from_terms(0.0, Some(-0.2), false) + 0.2).abs() < 1e-15);
        assert_eq!(low_reward_from_terms(0.3, None, false), 0.3);
    }

    #[test]
    fn low_reward_proximity_branch() {
        let cfg = ScenarioConfig::with_counts(1, 2, 0, 0);
        let mut s = WorldState::reset(&cfg, 0).unwrap();
        let robot_pos = s.robots[0].position;
        s.objects[0].position = robot_pos + Vec2::new(0.2, 0.0);
        s.objects[1].position = robot_pos + Vec2::new(5.0, 0.0);
        assert_eq!(robot_low_reward(&s, 0, 0), 1.0);
        // Far away and stationary: no bonus.
        s.objects[0].position = robot_pos + Vec2::new(2.0, 0.0);
        assert_eq!(robot_low_reward(&s, 0, 0), 0.0);
        // Moving toward it earns the bonus again.
        s.robots[0].linear_velocity = Vec2::new(0.26, 0.0);
        assert_eq!(robot_low_reward(&s, 0, 0), 1.0);
    }

    #[test]
    fn low_reward_receding_with_negative_neighbour() {
        let cfg = ScenarioConfig::with_counts(1, 2, 0, 0);
        let mut s = WorldState::reset(&cfg, 0).unwrap();
        let robot_pos = s.robots[0].position;
        s.robots[0].linear_velocity = Vec2::new(-0.1, 0.0);
        s.objects[0].position = robot_pos + Vec2::new(2.0, 0.0);
        s.objects[0].goal = s.objects[0].position + Vec2::new(1.0, 0.0);
        s.objects[1].position = robot_pos + Vec2::new(0.0, 1.0);
        s.objects[1].goal = s.objects[1].position + Vec2::new(1.0, 0.0);
        s.objects[1].velocity = Vec2::new(-0.2, 0.0);
        assert!((robot_low_reward(&s, 0, 0) + 0.2).abs() < 1e-15);
    }
}
