//! One physics substep: capped penalty contacts, Coulomb friction on objects,
//! kinematic robots.

use super::{wrap_angle, PhysicsParams, RobotBody, TransportObject, Vec2};

/// Unit vector from `from` to `to`; coincident centres fall back to `fallback`.
fn contact_normal(from: Vec2, to: Vec2, fallback: Vec2) -> (Vec2, f64) {
    let d = to - from;
    let dist = d.norm();
    match d.normalized() {
        Some(n) => (n, dist),
        None => (fallback, 0.0),
    }
}

pub(super) fn substep(robots: &mut [RobotBody], objects: &mut [TransportObject], p: &PhysicsParams) {
    let dt = p.physics_dt;
    let mut forces = vec![Vec2::ZERO; objects.len()];

    for robot in robots.iter() {
        for (obj, force) in objects.iter().zip(forces.iter_mut()) {
            let (n, dist) = contact_normal(robot.position, obj.position, robot.facing());
            let depth = robot.body_radius + obj.disc_radius - dist;
            if depth > 0.0 {
                let f = (p.contact_stiffness * depth).min(p.max_push_force);
                assert!(f <= p.max_push_force, "robot push force {f} exceeds cap");
                *force += n * f;
            }
        }
    }

    for a in 0..objects.len() {
        for b in a + 1..objects.len() {
            let (n, dist) = contact_normal(objects[a].position, objects[b].position, Vec2::new(1.0, 0.0));
            let depth = objects[a].disc_radius + objects[b].disc_radius - dist;
            if depth > 0.0 {
                let f = n * (p.contact_stiffness * depth);
                forces[a] -= f;
                forces[b] += f;
            }
        }
    }

    for (obj, force) in objects.iter_mut().zip(&forces) {
        integrate_object(obj, *force, p);
    }

    let stall = p.stall_depth();
    for robot in robots.iter_mut() {
        let cmd = robot.last_command;
        let mut v = robot.facing() * (cmd.mv.sign() * p.max_linear_speed);
        // A robot whose push has saturated cannot close the gap any faster
        // than the object recedes; the blocked component is removed and the
        // robot slides.
        for obj in objects.iter() {
            let (n, dist) = contact_normal(robot.position, obj.position, robot.facing());
            let depth = robot.body_radius + obj.disc_radius - dist;
            if depth >= stall {
                let closing = (v - obj.velocity).dot(n);
                if closing > 0.0 {
                    v -= n * closing;
                }
            }
        }
        let speed = v.norm();
        if speed > p.max_linear_speed {
            v = v * (p.max_linear_speed / speed);
        }
        let omega = cmd.turn.sign() * p.max_angular_speed;
        robot.linear_velocity = v;
        robot.angular_velocity = omega;
        robot.position += v * dt;
        robot.heading = wrap_angle(robot.heading + omega * dt);
    }

    // Symmetric positional separation in ascending index order.
    for a in 0..robots.len() {
        for b in a + 1..robots.len() {
            let (n, dist) = contact_normal(robots[a].position, robots[b].position, Vec2::new(1.0, 0.0));
            let depth = robots[a].body_radius + robots[b].body_radius - dist;
            if depth > 0.0 {
                let half = n * (0.5 * depth);
                robots[a].position -= half;
                robots[b].position += half;
            }
        }
    }
}

fn integrate_object(obj: &mut TransportObject, force: Vec2, p: &PhysicsParams) {
    let dt = p.physics_dt;
    let m = obj.mass;
    if obj.velocity.is_zero() && force.norm() <= p.static_friction * m * p.gravity {
        return;
    }
    // Friction opposes the tentative velocity and may stop the object but
    // never reverses it.
    let tentative = obj.velocity + force * (dt / m);
    let friction_dv = p.kinetic_friction * p.gravity * dt;
    let speed = tentative.norm();
    obj.velocity = if speed <= friction_dv {
        Vec2::ZERO
    } else {
        tentative * ((speed - friction_dv) / speed)
    };
    obj.position += obj.velocity * dt;
}
