//! Observation builders.
//!
//! Actor observations are local and ego-centric: positions are expressed in
//! the observing robot's frame (translated to its position and rotated by its
//! heading) and neighbours fill a fixed number of slots in ascending distance,
//! padded with all-zero slots whose valid flag is 0. Critic inputs are
//! world-frame and sized by the scenario.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::world::{Vec2, WorldState};

pub const OWN_BLOCK: usize = 5;
pub const ROBOT_SLOT: usize = 8;
pub const OBJECT_SLOT: usize = 7;
pub const LOW_OBS_DIM: usize = 24;
pub const GLOBAL_ROBOT_BLOCK: usize = 7;
pub const GLOBAL_OBJECT_BLOCK: usize = 10;
pub const BASELINE_OBJECT_BLOCK: usize = 7;
pub const LAYOUT_VERSION: u32 = 1;

#[derive(Debug, Error, PartialEq)]
pub enum ObsError {
    #[error("observation layout mismatch: checkpoint expects `{expected}`, scenario gives `{actual}`")]
    LayoutMismatch { expected: String, actual: String },
    #[error("slot counts must be at least 1 (J={j}, K={k})")]
    InvalidSlots { j: usize, k: usize },
}

/// Slot counts of the local observations.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ObsConfig {
    /// Nearby-robot slots.
    pub j: usize,
    /// Nearby-object slots.
    pub k: usize,
}

impl Default for ObsConfig {
    fn default() -> Self {
        Self { j: 2, k: 2 }
    }
}

impl ObsConfig {
    pub fn validate(&self) -> Result<(), ObsError> {
        if self.j == 0 || self.k == 0 {
            return Err(ObsError::InvalidSlots { j: self.j, k: self.k });
        }
        Ok(())
    }

    pub fn high_dim(&self) -> usize {
        OWN_BLOCK + ROBOT_SLOT * self.j + OBJECT_SLOT * self.k
    }

    pub fn high_tag(&self) -> String {
        format!("high-v{LAYOUT_VERSION}:J{}:K{}", self.j, self.k)
    }

    /// Offset of the valid flag of object slot `s` inside a high observation.
    pub fn object_valid_offset(&self, s: usize) -> usize {
        OWN_BLOCK + ROBOT_SLOT * self.j + OBJECT_SLOT * s + OBJECT_SLOT - 1
    }
}

pub fn low_tag() -> String {
    format!("low-v{LAYOUT_VERSION}")
}

pub fn global_dim(n: usize, m: usize) -> usize {
    GLOBAL_ROBOT_BLOCK * n + GLOBAL_OBJECT_BLOCK * m
}

pub fn global_tag(n: usize, m: usize) -> String {
    format!("global-v{LAYOUT_VERSION}:N{n}:M{m}")
}

pub fn baseline_global_dim(n: usize, m: usize) -> usize {
    GLOBAL_ROBOT_BLOCK * n + BASELINE_OBJECT_BLOCK * m
}

pub fn baseline_global_tag(n: usize, m: usize) -> String {
    format!("baseline-global-v{LAYOUT_VERSION}:N{n}:M{m}")
}

/// Offset of object `l`'s completed flag inside a baseline-global observation.
pub fn baseline_completed_offset(n: usize, l: usize) -> usize {
    GLOBAL_ROBOT_BLOCK * n + BASELINE_OBJECT_BLOCK * l + BASELINE_OBJECT_BLOCK - 1
}

/// Robot and object ids occupying the local slots, nearest first.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Neighbors {
    pub robots: Vec<Option<usize>>,
    pub objects: Vec<Option<usize>>,
}

fn sorted_by_distance(origin: Vec2, items: impl Iterator<Item = (usize, Vec2)>) -> Vec<usize> {
    let mut keyed: Vec<(f64, usize)> = items.map(|(id, p)| ((p - origin).norm(), id)).collect();
    keyed.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    keyed.into_iter().map(|(_, id)| id).collect()
}

fn fill_slots(ids: Vec<usize>, slots: usize) -> Vec<Option<usize>> {
    let mut out: Vec<Option<usize>> = ids.into_iter().take(slots).map(Some).collect();
    out.resize(slots, None);
    out
}

/// The `j` nearest other robots and the `k` nearest uncompleted objects;
/// distance ties go to the lower id.
pub fn nearest_entities(state: &WorldState, i: usize, j: usize, k: usize) -> Neighbors {
    let origin = state.robots[i].position;
    let robots = sorted_by_distance(
        origin,
        state.robots.iter().filter(|r| r.id != i).map(|r| (r.id, r.position)),
    );
    let objects = sorted_by_distance(
        origin,
        state.objects.iter().filter(|o| !o.completed).map(|o| (o.id, o.position)),
    );
    Neighbors { robots: fill_slots(robots, j), objects: fill_slots(objects, k) }
}

/// Ego-frame transform of robot `i`.
#[derive(Debug, Clone, Copy)]
struct Ego {
    origin: Vec2,
    heading: f64,
}

impl Ego {
    fn of(state: &WorldState, i: usize) -> Self {
        let r = &state.robots[i];
        Ego { origin: r.position, heading: r.heading }
    }

    fn point(&self, p: Vec2) -> Vec2 {
        (p - self.origin).rotate(-self.heading)
    }

    fn vector(&self, v: Vec2) -> Vec2 {
        v.rotate(-self.heading)
    }
}

fn push2(out: &mut Vec<f64>, v: Vec2) {
    out.push(v.x);
    out.push(v.y);
}

fn own_block(state: &WorldState, i: usize, ego: Ego, out: &mut Vec<f64>) {
    let r = &state.robots[i];
    out.extend(r.last_command.signs());
    push2(out, ego.vector(r.linear_velocity));
    out.push(r.angular_velocity);
}

fn robot_slot(state: &WorldState, i: usize, other: Option<usize>, ego: Ego, out: &mut Vec<f64>) {
    let Some(j) = other else {
        out.extend([0.0; ROBOT_SLOT]);
        return;
    };
    let me = &state.robots[i];
    let r = &state.robots[j];
    push2(out, ego.point(r.position));
    let rel_heading = r.heading - me.heading;
    out.push(rel_heading.cos());
    out.push(rel_heading.sin());
    push2(out, ego.vector(r.linear_velocity - me.linear_velocity));
    out.push(r.angular_velocity);
    out.push(1.0);
}

fn object_slot(state: &WorldState, l: Option<usize>, ego: Ego, out: &mut Vec<f64>) {
    let Some(l) = l else {
        out.extend([0.0; OBJECT_SLOT]);
        return;
    };
    let o = &state.objects[l];
    push2(out, ego.point(o.position));
    push2(out, ego.point(o.goal));
    push2(out, ego.vector(o.velocity));
    out.push(1.0);
}

/// Task-allocation observation together with the ids behind its slots.
#[derive(Debug, Clone, PartialEq)]
pub struct HighObs {
    pub values: Vec<f64>,
    pub neighbors: Neighbors,
}

pub fn build_high_obs(state: &WorldState, i: usize, cfg: &ObsConfig) -> HighObs {
    let neighbors = nearest_entities(state, i, cfg.j, cfg.k);
    let ego = Ego::of(state, i);
    let mut values = Vec::with_capacity(cfg.high_dim());
    own_block(state, i, ego, &mut values);
    for &r in &neighbors.robots {
        robot_slot(state, i, r, ego, &mut values);
    }
    for &l in &neighbors.objects {
        object_slot(state, l, ego, &mut values);
    }
    debug_assert_eq!(values.len(), cfg.high_dim());
    HighObs { values, neighbors }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LowObs {
    pub values: Vec<f64>,
}

/// Control observation for robot `i` steering `target`.
pub fn build_low_obs(state: &WorldState, i: usize, target: usize) -> LowObs {
    let ego = Ego::of(state, i);
    let origin = state.robots[i].position;
    let mut values = Vec::with_capacity(LOW_OBS_DIM);
    own_block(state, i, ego, &mut values);
    let nearest_robot = nearest_entities(state, i, 1, 0).robots[0];
    robot_slot(state, i, nearest_robot, ego, &mut values);

    let t = &state.objects[target];
    push2(&mut values, ego.point(t.position));
    push2(&mut values, ego.point(t.goal));
    push2(&mut values, ego.vector(t.velocity));

    let other = sorted_by_distance(
        origin,
        state.objects.iter().filter(|o| o.id != target && !o.completed).map(|o| (o.id, o.position)),
    )
    .first()
    .copied();
    match other {
        Some(l) => {
            let o = &state.objects[l];
            push2(&mut values, ego.point(o.position));
            push2(&mut values, ego.vector(o.velocity));
            values.push(1.0);
        }
        None => values.extend([0.0; 5]),
    }
    debug_assert_eq!(values.len(), LOW_OBS_DIM);
    LowObs { values }
}

/// World-frame state for the critics, including privileged weight classes.
#[derive(Debug, Clone, PartialEq)]
pub struct GlobalState {
    pub values: Vec<f64>,
    pub robots: usize,
    pub objects: usize,
}

impl GlobalState {
    pub fn tag(&self) -> String {
        global_tag(self.robots, self.objects)
    }
}

pub fn build_global_state(state: &WorldState) -> GlobalState {
    let (n, m) = (state.num_robots(), state.num_objects());
    let mut values = Vec::with_capacity(global_dim(n, m));
    for r in &state.robots {
        push2(&mut values, r.position);
        values.push(r.heading.cos());
        values.push(r.heading.sin());
        push2(&mut values, r.linear_velocity);
        values.push(r.angular_velocity);
    }
    for o in &state.objects {
        push2(&mut values, o.position);
        push2(&mut values, o.goal);
        push2(&mut values, o.velocity);
        let mut one_hot = [0.0; 3];
        one_hot[o.weight_class.index()] = 1.0;
        values.extend(one_hot);
        values.push(if o.completed { 1.0 } else { 0.0 });
    }
    GlobalState { values, robots: n, objects: m }
}

/// Global state checked against the layout a checkpoint was trained on.
pub fn build_global_state_checked(state: &WorldState, expected_tag: &str) -> Result<GlobalState, ObsError> {
    let actual = global_tag(state.num_robots(), state.num_objects());
    if actual != expected_tag {
        return Err(ObsError::LayoutMismatch { expected: expected_tag.to_string(), actual });
    }
    Ok(build_global_state(state))
}

/// Observation variants of the two-layer comparison architectures.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BaselineView {
    Global,
    Local,
}

/// Global view: world-frame robots (observer first, then by id) and objects by
/// id without weight classes. Local view: the high observation layout.
pub fn build_baseline_obs(state: &WorldState, i: usize, view: BaselineView, cfg: &ObsConfig) -> Vec<f64> {
    match view {
        BaselineView::Local => build_high_obs(state, i, cfg).values,
        BaselineView::Global => {
            let (n, m) = (state.num_robots(), state.num_objects());
            let mut values = Vec::with_capacity(baseline_global_dim(n, m));
            let order = std::iter::once(i).chain((0..n).filter(|&j| j != i));
            for j in order {
                let r = &state.robots[j];
                push2(&mut values, r.position);
                values.push(r.heading.cos());
                values.push(r.heading.sin());
                push2(&mut values, r.linear_velocity);
                values.push(r.angular_velocity);
            }
            for o in &state.objects {
                push2(&mut values, o.position);
                push2(&mut values, o.goal);
                push2(&mut values, o.velocity);
                values.push(if o.completed { 1.0 } else { 0.0 });
            }
            values
        }
    }
}

/// Named span of a flat observation vector.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Field {
    pub name: String,
    pub offset: usize,
    pub len: usize,
}

struct LayoutBuilder {
    fields: Vec<Field>,
    offset: usize,
}

impl LayoutBuilder {
    fn new() -> Self {
        Self { fields: Vec::new(), offset: 0 }
    }

    fn add(&mut self, name: impl Into<String>, len: usize) -> &mut Self {
        self.fields.push(Field { name: name.into(), offset: self.offset, len });
        self.offset += len;
        self
    }

    fn own_block(&mut self) -> &mut Self {
        self.add("own.last_command", 2).add("own.ego_linear_velocity", 2).add("own.angular_velocity", 1)
    }

    fn robot_slot(&mut self, prefix: &str) -> &mut Self {
        self.add(format!("{prefix}.rel_position"), 2)
            .add(format!("{prefix}.rel_heading_cos_sin"), 2)
            .add(format!("{prefix}.rel_velocity"), 2)
            .add(format!("{prefix}.angular_velocity"), 1)
            .add(format!("{prefix}.valid"), 1)
    }
}

/// A complete, named description of one observation layout.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Layout {
    pub tag: String,
    pub dim: usize,
    pub fields: Vec<Field>,
}

pub fn high_layout(cfg: &ObsConfig) -> Layout {
    let mut b = LayoutBuilder::new();
    b.own_block();
    for s in 0..cfg.j {
        b.robot_slot(&format!("robot[{s}]"));
    }
    for s in 0..cfg.k {
        b.add(format!("object[{s}].rel_position"), 2)
            .add(format!("object[{s}].rel_goal"), 2)
            .add(format!("object[{s}].velocity"), 2)
            .add(format!("object[{s}].valid"), 1);
    }
    Layout { tag: cfg.high_tag(), dim: b.offset, fields: b.fields }
}

pub fn low_layout() -> Layout {
    let mut b = LayoutBuilder::new();
    b.own_block()
        .robot_slot("nearest_robot")
        .add("target.rel_position", 2)
        .add("target.rel_goal", 2)
        .add("target.velocity", 2)
        .add("nearest_object.rel_position", 2)
        .add("nearest_object.velocity", 2)
        .add("nearest_object.valid", 1);
    Layout { tag: low_tag(), dim: b.offset, fields: b.fields }
}

pub fn global_layout(n: usize, m: usize) -> Layout {
    let mut b = LayoutBuilder::new();
    for i in 0..n {
        b.add(format!("robot{i}.position"), 2)
            .add(format!("robot{i}.heading_cos_sin"), 2)
            .add(format!("robot{i}.velocity"), 2)
            .add(format!("robot{i}.angular_velocity"), 1);
    }
    for l in 0..m {
        b.add(format!("object{l}.position"), 2)
            .add(format!("object{l}.goal"), 2)
            .add(format!("object{l}.velocity"), 2)
            .add(format!("object{l}.weight_one_hot"), 3)
            .add(format!("object{l}.completed"), 1);
    }
    Layout { tag: global_tag(n, m), dim: b.offset, fields: b.fields }
}

pub fn baseline_global_layout(n: usize, m: usize) -> Layout {
    let mut b = LayoutBuilder::new();
    for s in 0..n {
        let who = if s == 0 { "self".to_string() } else { format!("other{s}") };
        b.add(format!("{who}.position"), 2)
            .add(format!("{who}.heading_cos_sin"), 2)
            .add(format!("{who}.velocity"), 2)
            .add(format!("{who}.angular_velocity"), 1);
    }
    for l in 0..m {
        b.add(format!("object{l}.position"), 2)
            .add(format!("object{l}.goal"), 2)
            .add(format!("object{l}.velocity"), 2)
            .add(format!("object{l}.completed"), 1);
    }
    Layout { tag: baseline_global_tag(n, m), dim: b.offset, fields: b.fields }
}

#[cfg(test)]
mod tests {
    use std::f64::consts::PI;

    use super::*;
    use crate::world::{Command, Move, ScenarioConfig, Turn};

    fn quiet_state(n: usize, m: usize) -> WorldState {
        WorldState::reset(&ScenarioConfig::with_counts(n, m, 0, 0), 5).unwrap()
    }

    #[test]
    fn layouts_match_builder_dimensions() {
        let cfg = ObsConfig::default();
        assert_eq!(high_layout(&cfg).dim, cfg.high_dim());
        assert_eq!(cfg.high_dim(), 35);
        assert_eq!(low_layout().dim, LOW_OBS_DIM);
        assert_eq!(global_layout(3, 4).dim, 61);
        assert_eq!(baseline_global_layout(3, 4).dim, 49);
        let s = quiet_state(3, 4);
        assert_eq!(build_high_obs(&s, 0, &cfg).values.len(), 35);
        assert_eq!(build_low_obs(&s, 0, 1).values.len(), 24);
        assert_eq!(build_global_state(&s).values.len(), 61);
        assert_eq!(build_baseline_obs(&s, 1, BaselineView::Global, &cfg).len(), 49);
        let layout = high_layout(&cfg);
        for slot in 0..cfg.k {
            let f = layout.fields.iter().find(|f| f.name == format!("object[{slot}].valid")).unwrap();
            assert_eq!(f.offset, cfg.object_valid_offset(slot));
        }
        let bl = baseline_global_layout(3, 4);
        let f = bl.fields.iter().find(|f| f.name == "object2.completed").unwrap();
        assert_eq!(f.offset, baseline_completed_offset(3, 2));
    }

    #[test]
    fn nearest_entities_padding_and_ties() {
        let mut s = quiet_state(2, 4);
        let p = s.robots[0].position;
        s.objects[3].position = p + Vec2::new(1.0, 0.0);
        s.objects[1].position = p + Vec2::new(0.0, 1.0);
        s.objects[0].position = p + Vec2::new(3.0, 0.0);
        s.objects[2].position = p + Vec2::new(4.0, 0.0);
        let nb = nearest_entities(&s, 0, 2, 2);
        assert_eq!(nb.robots, vec![Some(1), None]);
        assert_eq!(nb.objects, vec![Some(1), Some(3)]);
    }

    #[test]
    fn neighbour_directly_ahead_in_ego_frame() {
        let mut s = quiet_state(2, 1);
        s.robots[0].position = Vec2::new(0.0, 0.0);
        s.robots[0].heading = PI / 2.0;
        s.robots[1].position = Vec2::new(0.0, 1.0);
        let obs = build_high_obs(&s, 0, &ObsConfig::default());
        let slot = &obs.values[OWN_BLOCK..OWN_BLOCK + 2];
        assert!((slot[0] - 1.0).abs() < 1e-12 && slot[1].abs() < 1e-12, "{slot:?}");
    }

    #[test]
    fn own_block_zero_at_rest() {
        let s = quiet_state(3, 4);
        let obs = build_high_obs(&s, 0, &ObsConfig::default());
        assert_eq!(&obs.values[..OWN_BLOCK], &[0.0; OWN_BLOCK]);
    }

    #[test]
    fn own_block_encodes_command() {
        let mut s = quiet_state(1, 1);
        s.robots[0].last_command = Command::new(Move::Backward, Turn::Left);
        let obs = build_high_obs(&s, 0, &ObsConfig::default());
        assert_eq!(&obs.values[..2], &[-1.0, 1.0]);
    }

    #[test]
    fn all_completed_pads_object_slots() {
        let mut s = quiet_state(3, 4);
        for o in &mut s.objects {
            o.completed = true;
        }
        let cfg = ObsConfig::default();
        let obs = build_high_obs(&s, 0, &cfg);
        let start = OWN_BLOCK + ROBOT_SLOT * cfg.j;
        assert!(obs.values[start..].iter().all(|&v| v == 0.0));
        assert_eq!(obs.neighbors.objects, vec![None, None]);
    }

    #[test]
    fn low_obs_target_block_and_padding() {
        let mut s = quiet_state(1, 1);
        s.robots[0].position = Vec2::new(1.0, 1.0);
        s.robots[0].heading = 0.0;
        s.objects[0].position = Vec2::new(3.0, 1.0);
        s.objects[0].goal = Vec2::new(4.0, 1.0);
        s.objects[0].velocity = Vec2::new(0.1, -0.2);
        let obs = build_low_obs(&s, 0, 0);
        assert_eq!(&obs.values[13..19], &[2.0, 0.0, 3.0, 0.0, 0.1, -0.2]);
        // No other robot, no other object.
        assert!(obs.values[5..13].iter().all(|&v| v == 0.0));
        assert!(obs.values[19..].iter().all(|&v| v == 0.0));
    }

    #[test]
    fn global_state_is_id_ordered() {
        let mut s = quiet_state(3, 4);
        let a = build_global_state(&s).values;
        s.objects.swap(0, 1);
        let b = build_global_state(&s).values;
        assert_ne!(a, b);
    }

    #[test]
    fn global_state_at_origin_is_zero_except_flags() {
        let mut s = quiet_state(1, 2);
        for r in &mut s.robots {
            r.position = Vec2::ZERO;
            r.heading = 0.0;
        }
        for o in &mut s.objects {
            o.position = Vec2::ZERO;
            o.goal = Vec2::ZERO;
            o.completed = true;
        }
        let g = build_global_state(&s).values;
        // Robot: position 0, cos 1, sin 0, velocity 0, omega 0.
        assert_eq!(&g[..7], &[0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 0.0]);
        assert_eq!(&g[7..17], &[0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 1.0]);
    }

    #[test]
    fn checked_global_state_rejects_other_scales() {
        let s = quiet_state(4, 6);
        assert!(matches!(
            build_global_state_checked(&s, &global_tag(3, 4)),
            Err(ObsError::LayoutMismatch { .. })
        ));
        assert!(build_global_state_checked(&s, &global_tag(4, 6)).is_ok());
    }

    #[test]
    fn local_baseline_equals_high_obs() {
        let s = quiet_state(3, 4);
        let cfg = ObsConfig::default();
        assert_eq!(build_baseline_obs(&s, 2, BaselineView::Local, &cfg), build_high_obs(&s, 2, &cfg).values);
    }

    #[test]
    fn baseline_global_puts_observer_first() {
        let s = quiet_state(3, 4);
        let v = build_baseline_obs(&s, 2, BaselineView::Global, &ObsConfig::default());
        assert_eq!(v[0], s.robots[2].position.x);
        assert_eq!(v[7], s.robots[0].position.x);
        assert_eq!(v[14], s.robots[1].position.x);
    }
}
