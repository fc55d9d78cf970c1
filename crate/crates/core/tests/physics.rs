use std::f64::consts::PI;

use proptest::prelude::*;
use tihdp::world::{
    object_reward, Command, Move, ScenarioConfig, Turn, Vec2, WeightClass, WorldState,
};

const FORWARD: Command = Command { mv: Move::Forward, turn: Turn::None };

/// Object `class` at the origin with `pushers` robots placed just behind it at
/// the given angles (measured from -x), each facing the object centre.
fn push_scene(class: WeightClass, angles_deg: &[f64]) -> WorldState {
    let (light, medium, heavy) = match class {
        WeightClass::Light => (1, 0, 0),
        WeightClass::Medium => (0, 1, 0),
        WeightClass::Heavy => (0, 0, 1),
    };
    let mut cfg = ScenarioConfig::with_counts(angles_deg.len(), light, medium, heavy);
    cfg.episode_length = 1000;
    let mut s = WorldState::reset(&cfg, 0).unwrap();
    s.objects[0].position = Vec2::ZERO;
    s.objects[0].goal = Vec2::new(10.0, 0.0);
    for (r, &deg) in s.robots.iter_mut().zip(angles_deg) {
        let dir = Vec2::from_angle(PI + deg.to_radians());
        r.position = dir * 0.31;
        r.heading = (-dir).y.atan2((-dir).x);
    }
    s
}

fn displacement_after(mut s: WorldState, steps: usize) -> f64 {
    let start = s.objects[0].position;
    let cmds = vec![FORWARD; s.num_robots()];
    for _ in 0..steps {
        s.step(&cmds).unwrap();
    }
    (s.objects[0].position - start).norm()
}

#[test]
fn one_control_step_of_forward_motion() {
    let cfg = ScenarioConfig::with_counts(1, 1, 0, 0);
    let mut s = WorldState::reset(&cfg, 0).unwrap();
    s.robots[0].position = Vec2::ZERO;
    s.robots[0].heading = 0.0;
    s.objects[0].position = Vec2::new(5.0, 5.0);
    s.step(&[FORWARD]).unwrap();
    let p = s.robots[0].position;
    assert!((p.x - 0.026).abs() < 1e-12 && p.y.abs() < 1e-12, "{p:?}");
    assert!((s.robots[0].linear_velocity.norm() - 0.26).abs() < 1e-12);
}

#[test]
fn idle_commands_change_only_the_step_index() {
    let cfg = ScenarioConfig::with_counts(3, 2, 1, 1);
    let s0 = WorldState::reset(&cfg, 4).unwrap();
    let mut s1 = s0.clone();
    s1.step(&[Command::IDLE; 3]).unwrap();
    assert_eq!(s1.step_index, 1);
    assert_eq!(s1.robots, s0.robots);
    assert_eq!(s1.objects, s0.objects);
}

#[test]
fn turning_only_rotates() {
    let cfg = ScenarioConfig::with_counts(1, 1, 0, 0);
    let mut s = WorldState::reset(&cfg, 0).unwrap();
    s.robots[0].heading = 0.0;
    let p = s.robots[0].position;
    s.step(&[Command::new(Move::None, Turn::Left)]).unwrap();
    assert!((s.robots[0].heading - 0.182).abs() < 1e-12);
    assert_eq!(s.robots[0].position, p);
}

#[test]
fn single_robot_moves_light() {
    assert!(displacement_after(push_scene(WeightClass::Light, &[0.0]), 100) > 0.1);
}

#[test]
fn single_robot_never_moves_medium() {
    assert_eq!(displacement_after(push_scene(WeightClass::Medium, &[0.0]), 50), 0.0);
    assert_eq!(displacement_after(push_scene(WeightClass::Medium, &[0.0]), 100), 0.0);
}

#[test]
fn two_robots_move_medium() {
    assert!(displacement_after(push_scene(WeightClass::Medium, &[-35.0, 35.0]), 100) > 0.05);
}

#[test]
fn four_robots_never_move_heavy() {
    for pushers in 1..=4 {
        let angles = [-35.0, 35.0, -100.0, 100.0];
        let d = displacement_after(push_scene(WeightClass::Heavy, &angles[..pushers]), 100);
        assert!(d <= 1e-9, "{pushers} robots moved heavy by {d}");
    }
}

#[test]
fn saturated_robot_stalls_against_static_object() {
    let mut s = push_scene(WeightClass::Medium, &[0.0]);
    for _ in 0..30 {
        s.step(&[FORWARD]).unwrap();
    }
    let gap = (s.objects[0].position - s.robots[0].position).norm();
    let stall = s.config.physics.stall_depth();
    let depth = 0.3 - gap;
    assert!(depth >= stall - 1e-12 && depth < stall + 0.003, "depth {depth}");
    assert!(s.robots[0].linear_velocity.norm() < 1e-12);
}

#[test]
fn completion_is_memoryless() {
    let cfg = ScenarioConfig::with_counts(1, 1, 0, 0);
    let mut s = WorldState::reset(&cfg, 0).unwrap();
    s.robots[0].position = Vec2::new(-1.0, -1.0);
    s.objects[0].position = Vec2::ZERO;
    s.objects[0].goal = Vec2::new(0.05, 0.0);
    s.step(&[Command::IDLE]).unwrap();
    assert!(s.objects[0].completed);
    s.objects[0].position = Vec2::new(-0.2, 0.0);
    s.step(&[Command::IDLE]).unwrap();
    assert!(!s.objects[0].completed);
}

#[test]
fn sliding_object_decelerates_monotonically_to_rest() {
    let cfg = ScenarioConfig::with_counts(1, 1, 0, 0);
    let mut s = WorldState::reset(&cfg, 0).unwrap();
    s.robots[0].position = Vec2::new(-5.0, -5.0);
    s.objects[0].position = Vec2::ZERO;
    s.objects[0].velocity = Vec2::new(0.3, -0.1);
    let mut last = s.objects[0].velocity.norm();
    for _ in 0..20 {
        s.step(&[Command::IDLE]).unwrap();
        let speed = s.objects[0].velocity.norm();
        assert!(speed <= last);
        last = speed;
    }
    assert_eq!(last, 0.0);
}

#[test]
fn pushed_light_object_earns_positive_reward() {
    let mut s = push_scene(WeightClass::Light, &[0.0]);
    for _ in 0..20 {
        s.step(&[FORWARD]).unwrap();
    }
    assert!(object_reward(&s, 0) > 0.0);
}

fn command_strategy() -> impl Strategy<Value = Command> {
    (0usize..3, 0usize..3).prop_map(|(m, t)| Command::from_indices(m, t))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn runs_are_bit_identical(seed in 0u64..1000, cmds in prop::collection::vec(prop::collection::vec(command_strategy(), 3), 1..60)) {
        let cfg = ScenarioConfig::with_counts(3, 2, 1, 1);
        let mut a = WorldState::reset(&cfg, seed).unwrap();
        let mut b = WorldState::reset(&cfg, seed).unwrap();
        for c in &cmds {
            a.step(c).unwrap();
            b.step(c).unwrap();
            prop_assert_eq!(&a, &b);
        }
    }

    #[test]
    fn invariants_hold_under_random_commands(seed in 0u64..1000, cmds in prop::collection::vec(prop::collection::vec(command_strategy(), 3), 1..80)) {
        let cfg = ScenarioConfig::with_counts(3, 2, 1, 1);
        let mut s = WorldState::reset(&cfg, seed).unwrap();
        for c in &cmds {
            s.step(c).unwrap();
            for r in &s.robots {
                prop_assert!((-PI..PI).contains(&r.heading));
                prop_assert!(r.linear_velocity.norm() <= cfg.physics.max_linear_speed + 1e-12);
                prop_assert!(r.angular_velocity.abs() <= cfg.physics.max_angular_speed);
            }
            for (l, o) in s.objects.iter().enumerate() {
                prop_assert_eq!(o.completed, o.distance_to_goal() <= cfg.goal_radius);
                prop_assert!(object_reward(&s, l).abs() <= o.velocity.norm() + 1e-15);
                if o.weight_class == WeightClass::Heavy {
                    prop_assert_eq!(o.velocity, Vec2::ZERO);
                }
            }
        }
    }
}
