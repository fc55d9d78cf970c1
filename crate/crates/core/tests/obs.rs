use proptest::prelude::*;
use tihdp::obs::{build_high_obs, build_low_obs, ObsConfig, OBJECT_SLOT, OWN_BLOCK, ROBOT_SLOT};
use tihdp::world::{ScenarioConfig, TransportObject, Vec2, WorldState};

fn moving_state(seed: u64, n: usize, light: usize, spin: f64) -> WorldState {
    let mut s = WorldState::reset(&ScenarioConfig::with_counts(n, light, 1, 1), seed).unwrap();
    for (k, r) in s.robots.iter_mut().enumerate() {
        r.linear_velocity = Vec2::from_angle(spin + k as f64) * 0.2;
        r.angular_velocity = 0.3 * (k as f64 - 1.0);
    }
    for (k, o) in s.objects.iter_mut().enumerate() {
        o.velocity = Vec2::from_angle(-spin + 2.0 * k as f64) * 0.05;
    }
    s
}

fn transformed(s: &WorldState, theta: f64, shift: Vec2) -> WorldState {
    let mut t = s.clone();
    for r in &mut t.robots {
        r.position = r.position.rotate(theta) + shift;
        r.heading += theta;
        r.linear_velocity = r.linear_velocity.rotate(theta);
    }
    for o in &mut t.objects {
        o.position = o.position.rotate(theta) + shift;
        o.goal = o.goal.rotate(theta) + shift;
        o.velocity = o.velocity.rotate(theta);
    }
    t
}

fn assert_close(a: &[f64], b: &[f64]) {
    assert_eq!(a.len(), b.len());
    for (k, (x, y)) in a.iter().zip(b).enumerate() {
        assert!((x - y).abs() < 1e-9, "entry {k}: {x} vs {y}");
    }
}

/// `(offset, len, valid index)` of every neighbour slot in a high observation.
fn slots(cfg: &ObsConfig) -> Vec<(usize, usize, usize)> {
    let robots = (0..cfg.j).map(|s| (OWN_BLOCK + s * ROBOT_SLOT, ROBOT_SLOT, ROBOT_SLOT - 1));
    let base = OWN_BLOCK + cfg.j * ROBOT_SLOT;
    let objects = (0..cfg.k).map(move |s| (base + s * OBJECT_SLOT, OBJECT_SLOT, OBJECT_SLOT - 1));
    robots.chain(objects).collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn rigid_motion_leaves_local_observations_unchanged(
        seed in 0u64..1000, theta in -3.1f64..3.1, dx in -5.0f64..5.0, dy in -5.0f64..5.0, spin in 0.0f64..6.0,
    ) {
        let s = moving_state(seed, 4, 3, spin);
        let t = transformed(&s, theta, Vec2::new(dx, dy));
        let cfg = ObsConfig::default();
        for i in 0..s.num_robots() {
            assert_close(&build_high_obs(&s, i, &cfg).values, &build_high_obs(&t, i, &cfg).values);
            for target in 0..s.num_objects() {
                assert_close(&build_low_obs(&s, i, target).values, &build_low_obs(&t, i, target).values);
            }
        }
    }

    #[test]
    fn slots_are_sorted_and_padding_is_zero(seed in 0u64..1000, n in 1usize..6, light in 0usize..4, j in 1usize..4, k in 1usize..5) {
        let s = moving_state(seed, n, light, 0.7);
        let cfg = ObsConfig { j, k };
        for i in 0..n {
            let values = build_high_obs(&s, i, &cfg).values;
            prop_assert_eq!(values.len(), cfg.high_dim());
            let all = slots(&cfg);
            let (robot_slots, object_slots) = all.split_at(j);
            for group in [robot_slots, object_slots] {
                let mut last = 0.0;
                let mut seen_padding = false;
                for &(off, len, valid) in group {
                    let slot = &values[off..off + len];
                    if slot[valid] == 0.0 {
                        prop_assert!(slot.iter().all(|&x| x == 0.0), "padded slot not zero: {:?}", slot);
                        seen_padding = true;
                    } else {
                        prop_assert_eq!(slot[valid], 1.0);
                        prop_assert!(!seen_padding, "filled slot after padding");
                        let d = slot[0].hypot(slot[1]);
                        prop_assert!(d >= last - 1e-12);
                        last = d;
                    }
                }
            }
        }
    }
}

#[test]
fn relabeling_unobserved_objects_changes_nothing() {
    let mut s = moving_state(7, 1, 4, 0.3);
    // Put two objects far away, beyond the two object slots.
    s.objects[0].position = Vec2::new(30.0, 0.0);
    s.objects[1].position = Vec2::new(0.0, 30.0);
    let cfg = ObsConfig::default();
    let before = build_high_obs(&s, 0, &cfg);
    assert!(!before.neighbors.objects.contains(&Some(0)) && !before.neighbors.objects.contains(&Some(1)));
    let (a, b) = (s.objects[0].clone(), s.objects[1].clone());
    s.objects[0] = with_id(b, 0);
    s.objects[1] = with_id(a, 1);
    assert_eq!(build_high_obs(&s, 0, &cfg).values, before.values);
}

fn with_id(mut o: TransportObject, id: usize) -> TransportObject {
    o.id = id;
    o
}
