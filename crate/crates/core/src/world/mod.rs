//! Planar simulation of differential-drive robots pushing disc objects toward
//! per-object goals.
//!
//! Robots are kinematic discs driven by discrete `(move, turn)` commands.
//! Objects are dynamic discs that respond to capped penalty contact forces and
//! Coulomb friction, so the number of robots needed to move an object depends
//! on its (hidden) mass.

mod geom;
mod physics;
mod reward;

use std::f64::consts::PI;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use geom::{wrap_angle, Vec2};
pub use reward::{low_reward_from_terms, object_reward, robot_low_reward, team_reward};

/// Attempts made by [`WorldState::reset`] before giving up on a placement.
pub const MAX_PLACEMENT_ATTEMPTS: usize = 100;

#[derive(Debug, Error, PartialEq)]
pub enum WorldError {
    #[error("invalid scenario: {0}")]
    InvalidConfig(String),
    #[error("no overlap-free placement found after {0} attempts")]
    InfeasiblePlacement(usize),
    #[error("expected {expected} commands, got {got}")]
    CommandCount { expected: usize, got: usize },
    #[error("episode already reached its length of {0} steps")]
    EpisodeFinished(usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum WeightClass {
    Light,
    Medium,
    Heavy,
}

impl WeightClass {
    pub const ALL: [WeightClass; 3] = [WeightClass::Light, WeightClass::Medium, WeightClass::Heavy];

    pub fn mass(self, physics: &PhysicsParams) -> f64 {
        match self {
            WeightClass::Light => physics.light_mass,
            WeightClass::Medium => physics.medium_mass,
            WeightClass::Heavy => physics.heavy_mass,
        }
    }

    /// Light and Medium objects can be delivered; Heavy ones cannot be moved
    /// by any coalition.
    pub fn is_transportable(self) -> bool {
        !matches!(self, WeightClass::Heavy)
    }

    pub fn index(self) -> usize {
        match self {
            WeightClass::Light => 0,
            WeightClass::Medium => 1,
            WeightClass::Heavy => 2,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Move {
    #[default]
    None,
    Forward,
    Backward,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Turn {
    #[default]
    None,
    Left,
    Right,
}

impl Move {
    /// Categorical index order used by the control policy.
    pub const ALL: [Move; 3] = [Move::None, Move::Forward, Move::Backward];

    pub fn sign(self) -> f64 {
        match self {
            Move::None => 0.0,
            Move::Forward => 1.0,
            Move::Backward => -1.0,
        }
    }

    pub fn index(self) -> usize {
        match self {
            Move::None => 0,
            Move::Forward => 1,
            Move::Backward => 2,
        }
    }
}

impl Turn {
    pub const ALL: [Turn; 3] = [Turn::None, Turn::Left, Turn::Right];

    /// Left is counter-clockwise (+1).
    pub fn sign(self) -> f64 {
        match self {
            Turn::None => 0.0,
            Turn::Left => 1.0,
            Turn::Right => -1.0,
        }
    }

    pub fn index(self) -> usize {
        match self {
            Turn::None => 0,
            Turn::Left => 1,
            Turn::Right => 2,
        }
    }
}

/// One discrete control command.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
pub struct Command {
    #[serde(rename = "move")]
    pub mv: Move,
    pub turn: Turn,
}

impl Command {
    pub const IDLE: Command = Command { mv: Move::None, turn: Turn::None };

    pub fn new(mv: Move, turn: Turn) -> Self {
        Self { mv, turn }
    }

    pub fn from_indices(mv: usize, turn: usize) -> Self {
        Self { mv: Move::ALL[mv], turn: Turn::ALL[turn] }
    }

    /// `(move, turn)` as signed scalars in {-1, 0, +1}.
    pub fn signs(self) -> [f64; 2] {
        [self.mv.sign(), self.turn.sign()]
    }
}

/// Physical constants of the pushing model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PhysicsParams {
    /// Robot forward speed, m/s.
    pub max_linear_speed: f64,
    /// Robot turn rate, rad/s.
    pub max_angular_speed: f64,
    /// Largest normal force one robot can apply to one object, N.
    pub max_push_force: f64,
    pub static_friction: f64,
    pub kinetic_friction: f64,
    pub gravity: f64,
    /// Penalty contact stiffness, N/m.
    pub contact_stiffness: f64,
    pub control_dt: f64,
    pub physics_dt: f64,
    pub robot_radius: f64,
    pub object_radius: f64,
    pub light_mass: f64,
    pub medium_mass: f64,
    pub heavy_mass: f64,
}

impl Default for PhysicsParams {
    fn default() -> Self {
        Self {
            max_linear_speed: 0.26,
            max_angular_speed: 1.82,
            max_push_force: 5.0,
            static_friction: 0.3,
            kinetic_friction: 0.3,
            gravity: 9.81,
            contact_stiffness: 500.0,
            control_dt: 0.1,
            physics_dt: 0.01,
            robot_radius: 0.15,
            object_radius: 0.15,
            light_mass: 1.0,
            medium_mass: 2.5,
            heavy_mass: 100.0,
        }
    }
}

impl PhysicsParams {
    pub fn substeps(&self) -> usize {
        (self.control_dt / self.physics_dt).round() as usize
    }

    /// Contact depth at which a robot's push force saturates.
    pub fn stall_depth(&self) -> f64 {
        self.max_push_force / self.contact_stiffness
    }
}

/// Scenario: entity counts, placement geometry and physics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub robots: usize,
    pub light: usize,
    pub medium: usize,
    pub heavy: usize,
    /// Delivery radius around each goal, m.
    pub goal_radius: f64,
    /// Distance at which a robot counts as close to its target, m.
    pub approach_radius: f64,
    pub episode_length: usize,
    pub robot_ring_radius: f64,
    pub object_ring_radius: f64,
    pub goal_ring_radius: f64,
    pub robot_perturbation: f64,
    pub object_perturbation: f64,
    pub physics: PhysicsParams,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        Self::with_counts(3, 2, 1, 1)
    }
}

impl ScenarioConfig {
    /// Training geometry with the given robot count and object class counts.
    pub fn with_counts(robots: usize, light: usize, medium: usize, heavy: usize) -> Self {
        Self {
            robots,
            light,
            medium,
            heavy,
            goal_radius: 0.1,
            approach_radius: 0.3,
            episode_length: 400,
            robot_ring_radius: 1.0,
            object_ring_radius: 2.0,
            goal_ring_radius: 3.0,
            robot_perturbation: 0.5,
            object_perturbation: 0.3,
            physics: PhysicsParams::default(),
        }
    }

    pub fn objects(&self) -> usize {
        self.light + self.medium + self.heavy
    }

    pub fn transportable(&self) -> usize {
        self.light + self.medium
    }

    pub fn validate(&self) -> Result<(), WorldError> {
        let bad = |msg: &str| Err(WorldError::InvalidConfig(msg.to_string()));
        if self.robots == 0 {
            return bad("robots must be at least 1");
        }
        if self.objects() == 0 {
            return bad("at least one object is required");
        }
        if !(self.goal_radius > 0.0) {
            return bad("goal_radius must be positive");
        }
        if self.episode_length == 0 {
            return bad("episode_length must be positive");
        }
        let p = &self.physics;
        let positive = [
            ("max_linear_speed", p.max_linear_speed),
            ("max_angular_speed", p.max_angular_speed),
            ("max_push_force", p.max_push_force),
            ("gravity", p.gravity),
            ("contact_stiffness", p.contact_stiffness),
            ("control_dt", p.control_dt),
            ("physics_dt", p.physics_dt),
            ("robot_radius", p.robot_radius),
            ("object_radius", p.object_radius),
            ("light_mass", p.light_mass),
            ("medium_mass", p.medium_mass),
            ("heavy_mass", p.heavy_mass),
        ];
        for (name, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(WorldError::InvalidConfig(format!("physics.{name} must be positive")));
            }
        }
        if p.static_friction < 0.0 || p.kinetic_friction < 0.0 {
            return bad("friction coefficients must be non-negative");
        }
        if p.substeps() == 0 {
            return bad("physics_dt must not exceed control_dt");
        }
        if self.robot_perturbation < 0.0 || self.object_perturbation < 0.0 {
            return bad("perturbation radii must be non-negative");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RobotBody {
    pub id: usize,
    pub position: Vec2,
    /// Radians in `[-π, π)`.
    pub heading: f64,
    pub linear_velocity: Vec2,
    pub angular_velocity: f64,
    pub last_command: Command,
    pub body_radius: f64,
}

impl RobotBody {
    pub fn facing(&self) -> Vec2 {
        Vec2::from_angle(self.heading)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransportObject {
    pub id: usize,
    pub position: Vec2,
    pub goal: Vec2,
    pub velocity: Vec2,
    pub mass: f64,
    pub weight_class: WeightClass,
    pub completed: bool,
    pub disc_radius: f64,
}

impl TransportObject {
    pub fn distance_to_goal(&self) -> f64 {
        (self.goal - self.position).norm()
    }
}

/// Full simulation state.
#[derive(Debug, Clone, PartialEq)]
pub struct WorldState {
    pub config: ScenarioConfig,
    pub robots: Vec<RobotBody>,
    pub objects: Vec<TransportObject>,
    pub step_index: usize,
    rng: ChaCha8Rng,
}

impl WorldState {
    /// Places robots, objects and goals on concentric rings with seeded
    /// perturbations.
    pub fn reset(config: &ScenarioConfig, seed: u64) -> Result<Self, WorldError> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n = config.robots;
        let m = config.objects();
        let p = &config.physics;

        let mut classes: Vec<WeightClass> = std::iter::repeat(WeightClass::Light)
            .take(config.light)
            .chain(std::iter::repeat(WeightClass::Medium).take(config.medium))
            .chain(std::iter::repeat(WeightClass::Heavy).take(config.heavy))
            .collect();
        classes.shuffle(&mut rng);

        for _ in 0..MAX_PLACEMENT_ATTEMPTS {
            let robots: Vec<RobotBody> = (0..n)
                .map(|i| {
                    let angle = 2.0 * PI * i as f64 / n as f64;
                    let reference = Vec2::from_angle(angle) * config.robot_ring_radius;
                    let position = reference + sample_disc(&mut rng, config.robot_perturbation);
                    let heading = wrap_angle(rng.gen_range(-PI..PI));
                    RobotBody {
                        id: i,
                        position,
                        heading,
                        linear_velocity: Vec2::ZERO,
                        angular_velocity: 0.0,
                        last_command: Command::IDLE,
                        body_radius: p.robot_radius,
                    }
                })
                .collect();
            let objects: Vec<TransportObject> = (0..m)
                .map(|l| {
                    let dir = Vec2::from_angle(2.0 * PI * l as f64 / m as f64);
                    let position = dir * config.object_ring_radius
                        + sample_disc(&mut rng, config.object_perturbation);
                    let class = classes[l];
                    TransportObject {
                        id: l,
                        position,
                        goal: dir * config.goal_ring_radius,
                        velocity: Vec2::ZERO,
                        mass: class.mass(p),
                        weight_class: class,
                        completed: false,
                        disc_radius: p.object_radius,
                    }
                })
                .collect();
            if bodies_overlap(&robots, &objects) {
                continue;
            }
            let mut state =
                WorldState { config: config.clone(), robots, objects, step_index: 0, rng: rng.clone() };
            state.refresh_completion();
            return Ok(state);
        }
        Err(WorldError::InfeasiblePlacement(MAX_PLACEMENT_ATTEMPTS))
    }

    /// Builds a state from explicit bodies. Completion flags are recomputed.
    pub fn from_parts(
        config: ScenarioConfig,
        robots: Vec<RobotBody>,
        objects: Vec<TransportObject>,
    ) -> Result<Self, WorldError> {
        config.validate()?;
        if robots.len() != config.robots || objects.len() != config.objects() {
            return Err(WorldError::InvalidConfig(format!(
                "expected {} robots and {} objects, got {} and {}",
                config.robots,
                config.objects(),
                robots.len(),
                objects.len()
            )));
        }
        let mut state = WorldState { config, robots, objects, step_index: 0, rng: ChaCha8Rng::seed_from_u64(0) };
        state.refresh_completion();
        Ok(state)
    }

    pub fn num_robots(&self) -> usize {
        self.robots.len()
    }

    pub fn num_objects(&self) -> usize {
        self.objects.len()
    }

    pub fn is_done(&self) -> bool {
        self.step_index >= self.config.episode_length
    }

    pub fn completed_flags(&self) -> Vec<bool> {
        self.objects.iter().map(|o| o.completed).collect()
    }

    /// Seeded stream owned by this instance.
    pub fn rng_mut(&mut self) -> &mut ChaCha8Rng {
        &mut self.rng
    }

    /// Advances one control period.
    pub fn step(&mut self, commands: &[Command]) -> Result<(), WorldError> {
        if commands.len() != self.robots.len() {
            return Err(WorldError::CommandCount { expected: self.robots.len(), got: commands.len() });
        }
        if self.is_done() {
            return Err(WorldError::EpisodeFinished(self.config.episode_length));
        }
        let p = self.config.physics.clone();
        for (robot, cmd) in self.robots.iter_mut().zip(commands) {
            robot.last_command = *cmd;
        }
        for _ in 0..p.substeps() {
            physics::substep(&mut self.robots, &mut self.objects, &p);
        }
        self.refresh_completion();
        self.step_index += 1;
        Ok(())
    }

    /// Completion is memoryless: an object outside its goal ball is a
    /// transport target again.
    fn refresh_completion(&mut self) {
        let d = self.config.goal_radius;
        for obj in &mut self.objects {
            obj.completed = obj.distance_to_goal() <= d;
        }
    }
}

fn sample_disc<R: Rng>(rng: &mut R, radius: f64) -> Vec2 {
    // Draw both numbers even for a zero radius so the stream layout does not
    // depend on the geometry.
    let r = radius * rng.gen::<f64>().sqrt();
    let theta = rng.gen_range(0.0..2.0 * PI);
    Vec2::from_angle(theta) * r
}

fn bodies_overlap(robots: &[RobotBody], objects: &[TransportObject]) -> bool {
    let disc_pairs = robots
        .iter()
        .map(|r| (r.position, r.body_radius))
        .chain(objects.iter().map(|o| (o.position, o.disc_radius)))
        .collect::<Vec<_>>();
    for (a, &(pa, ra)) in disc_pairs.iter().enumerate() {
        for &(pb, rb) in &disc_pairs[a + 1..] {
            if (pa - pb).norm() < ra + rb {
                return true;
            }
        }
    }
    false
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reset_reference_angles_with_zero_perturbation() {
        let mut cfg = ScenarioConfig::with_counts(3, 2, 1, 1);
        cfg.robot_perturbation = 0.0;
        cfg.object_perturbation = 0.0;
        let s = WorldState::reset(&cfg, 0).unwrap();
        for (i, r) in s.robots.iter().enumerate() {
            let expect = Vec2::from_angle(2.0 * PI * i as f64 / 3.0);
            assert!((r.position - expect).norm() < 1e-12);
            assert!((-PI..PI).contains(&r.heading));
            assert_eq!(r.linear_velocity, Vec2::ZERO);
        }
        for (l, o) in s.objects.iter().enumerate() {
            let dir = Vec2::from_angle(2.0 * PI * l as f64 / 4.0);
            assert!((o.position - dir * 2.0).norm() < 1e-12);
            assert!((o.goal - dir * 3.0).norm() < 1e-12);
            assert!(!o.completed);
        }
    }

    #[test]
    fn reset_perturbations_stay_in_discs() {
        let cfg = ScenarioConfig::with_counts(3, 2, 1, 1);
        for seed in 0..50 {
            let s = WorldState::reset(&cfg, seed).unwrap();
            for (i, r) in s.robots.iter().enumerate() {
                let reference = Vec2::from_angle(2.0 * PI * i as f64 / 3.0);
                assert!((r.position - reference).norm() <= 0.5 + 1e-12);
            }
            for (l, o) in s.objects.iter().enumerate() {
                let dir = Vec2::from_angle(2.0 * PI * l as f64 / 4.0);
                assert!((o.position - dir * 2.0).norm() <= 0.3 + 1e-12);
                assert!(((o.goal).norm() - 3.0).abs() < 1e-12);
            }
            let mut counts = [0; 3];
            for o in &s.objects {
                counts[o.weight_class.index()] += 1;
                assert_eq!(o.mass, o.weight_class.mass(&cfg.physics));
            }
            assert_eq!(counts, [2, 1, 1]);
        }
    }

    #[test]
    fn reset_is_deterministic() {
        let cfg = ScenarioConfig::with_counts(4, 3, 2, 1);
        assert_eq!(WorldState::reset(&cfg, 9).unwrap(), WorldState::reset(&cfg, 9).unwrap());
        assert_ne!(WorldState::reset(&cfg, 9).unwrap(), WorldState::reset(&cfg, 10).unwrap());
    }

    #[test]
    fn class_permutation_varies_with_seed() {
        let cfg = ScenarioConfig::with_counts(3, 2, 1, 1);
        let heavy_slots: std::collections::BTreeSet<usize> = (0..40)
            .map(|seed| {
                let s = WorldState::reset(&cfg, seed).unwrap();
                s.objects.iter().position(|o| o.weight_class == WeightClass::Heavy).unwrap()
            })
            .collect();
        assert_eq!(heavy_slots.len(), 4);
    }

    #[test]
    fn infeasible_geometry_is_rejected() {
        let mut cfg = ScenarioConfig::with_counts(24, 1, 0, 0);
        cfg.robot_perturbation = 0.0;
        assert_eq!(WorldState::reset(&cfg, 0), Err(WorldError::InfeasiblePlacement(MAX_PLACEMENT_ATTEMPTS)));
    }

    #[test]
    fn invalid_configs() {
        let mut cfg = ScenarioConfig::with_counts(0, 1, 0, 0);
        assert!(matches!(cfg.validate(), Err(WorldError::InvalidConfig(_))));
        cfg = ScenarioConfig::with_counts(1, 0, 0, 0);
        assert!(cfg.validate().is_err());
        cfg = ScenarioConfig::with_counts(1, 1, 0, 0);
        cfg.goal_radius = 0.0;
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn step_checks_command_count_and_episode_end() {
        let mut cfg = ScenarioConfig::with_counts(2, 1, 0, 0);
        cfg.episode_length = 1;
        let mut s = WorldState::reset(&cfg, 1).unwrap();
        assert_eq!(s.step(&[Command::IDLE]), Err(WorldError::CommandCount { expected: 2, got: 1 }));
        s.step(&[Command::IDLE; 2]).unwrap();
        assert!(s.is_done());
        assert_eq!(s.step(&[Command::IDLE; 2]), Err(WorldError::EpisodeFinished(1)));
    }
}
