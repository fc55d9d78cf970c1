//! Pushes each weight class head-on with one to four robots and prints how
//! far the object moves in 100 control steps.
//!
//! `cargo run --release --example push_thresholds`

use tihdp::harness::oracle::{formation, push_displacement, push_scene};
use tihdp::world::WeightClass;

fn main() {
    println!("{:<8} {:>8} {:>14}", "class", "pushers", "displacement");
    for class in [WeightClass::Light, WeightClass::Medium, WeightClass::Heavy] {
        for robots in 1..=4 {
            let d = push_displacement(push_scene(class, &formation(robots)), 100);
            println!("{:<8} {:>8} {:>12.4} m", format!("{class:?}"), robots, d);
        }
    }
}
