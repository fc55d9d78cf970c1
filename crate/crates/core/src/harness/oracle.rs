//! Self-contained verification suites behind the `oracle-check` command.
//!
//! Each suite recomputes a quantity by an independent route (straight-line
//! formulas, brute-force sums, finite differences, scripted pushes) and
//! compares it with the production code path.

use std::f64::consts::PI;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::nets::{gradient_check, GradCheckConfig};
use crate::obs::{nearest_entities, ObsConfig};
use crate::priority::{priority_step, update_priorities, LocalOps, PriorityVector};
use crate::trainer::{compute_gae, compute_gae_brute_force, Variant};
use crate::world::{Command, Move, ScenarioConfig, Turn, Vec2, WeightClass, WorldState};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SuiteResult {
    pub name: String,
    pub passed: bool,
    /// Largest observed discrepancy (suite-specific units).
    pub max_error: f64,
    pub tolerance: f64,
    pub cases: usize,
    pub seconds: f64,
    pub detail: String,
}

impl std::fmt::Display for SuiteResult {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(
            f,
            "[{}] {:<22} cases {:>6}  max err {:.3e} (tol {:.0e})  {:.2}s  {}",
            if self.passed { "PASS" } else { "FAIL" },
            self.name,
            self.cases,
            self.max_error,
            self.tolerance,
            self.seconds,
            self.detail
        )
    }
}

/// Straight-line priority update: decay, drive, clamp, zero completed,
/// normalize.
pub fn priority_reference(phi: &[f64], k: f64, c_bar: &[f64], sigma: bool, sums: &[u32], completed: &[bool]) -> Vec<f64> {
    let s = if sigma { 1.0 } else { 0.0 };
    let mut raw = Vec::with_capacity(phi.len());
    for l in 0..phi.len() {
        let mut x = (1.0 - k) * phi[l] + k * (c_bar[l] + s * sums[l] as f64);
        if x < 0.0 {
            x = 0.0;
        }
        if completed[l] {
            x = 0.0;
        }
        raw.push(x);
    }
    let total: f64 = raw.iter().sum();
    if total > 0.0 {
        raw.iter().map(|x| x / total).collect()
    } else {
        vec![0.0; raw.len()]
    }
}

/// Randomized equivalence and invariants of the priority update.
pub fn priority_suite(calls: usize, seed: u64) -> SuiteResult {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst: f64 = 0.0;
    let mut violations = Vec::new();
    for call in 0..calls {
        let m = rng.gen_range(1..=8);
        let n = rng.gen_range(1..=6u32);
        let k = if rng.gen_bool(0.5) { 0.1 } else { rng.gen_range(0.01..=1.0) };
        let mut phi: Vec<f64> = (0..m).map(|_| rng.gen::<f64>()).collect();
        let total: f64 = phi.iter().sum();
        phi.iter_mut().for_each(|p| *p /= total);
        let c_bar: Vec<f64> = (0..m).map(|_| f64::from(rng.gen_range(-1i8..=1))).collect();
        let sums: Vec<u32> = (0..m).map(|_| rng.gen_range(0..=n)).collect();
        let completed: Vec<bool> = (0..m).map(|_| rng.gen_bool(0.25)).collect();
        let sigma = rng.gen_bool(0.5);
        let got = match update_priorities(&PriorityVector { phi: phi.clone(), k_phi: k, owner: 0 }, &c_bar, sigma, &sums, &completed) {
            Ok(v) => v.phi,
            Err(e) => {
                violations.push(format!("call {call}: {e}"));
                continue;
            }
        };
        let want = priority_reference(&phi, k, &c_bar, sigma, &sums, &completed);
        for (g, w) in got.iter().zip(&want) {
            worst = worst.max((g - w).abs());
        }
        let sum: f64 = got.iter().sum();
        if got.iter().any(|&p| p < 0.0) {
            violations.push(format!("call {call}: negative entry"));
        }
        if !(sum.abs() < 1e-9 || (sum - 1.0).abs() < 1e-9) {
            violations.push(format!("call {call}: sum {sum}"));
        }
        if got.iter().zip(&completed).any(|(&p, &c)| c && p != 0.0) {
            violations.push(format!("call {call}: completed entry not zero"));
        }
    }
    let tolerance = 1e-12;
    SuiteResult {
        name: "priority-update".into(),
        passed: worst <= tolerance && violations.is_empty(),
        max_error: worst,
        tolerance,
        cases: calls,
        seconds: start.elapsed().as_secs_f64(),
        detail: violations.first().cloned().unwrap_or_else(|| "invariants hold".into()),
    }
}

/// The three hand-derived update examples.
pub fn priority_examples_suite() -> SuiteResult {
    let start = Instant::now();
    let uniform = vec![0.25; 4];
    let cases: [(Vec<f64>, Vec<f64>, bool, Vec<u32>, Vec<bool>, Vec<f64>); 3] = [
        (uniform.clone(), vec![1.0, -1.0, 0.0, 0.0], false, vec![0; 4], vec![false; 4], vec![0.3611, 0.1389, 0.25, 0.25]),
        (uniform, vec![0.0; 4], true, vec![0, 2, 0, 0], vec![false; 4], vec![0.2045, 0.3864, 0.2045, 0.2045]),
        (
            vec![0.4, 0.2, 0.2, 0.2],
            vec![0.0; 4],
            false,
            vec![0; 4],
            vec![true, false, false, false],
            vec![0.0, 1.0 / 3.0, 1.0 / 3.0, 1.0 / 3.0],
        ),
    ];
    let mut worst: f64 = 0.0;
    for (phi, c, sigma, sums, done, want) in &cases {
        let got = update_priorities(&PriorityVector { phi: phi.clone(), k_phi: 0.1, owner: 0 }, c, *sigma, sums, done)
            .map(|p| p.phi)
            .unwrap_or_default();
        for (g, w) in got.iter().zip(want) {
            worst = worst.max((g - w).abs());
        }
        if got.len() != want.len() {
            worst = f64::INFINITY;
        }
    }
    SuiteResult {
        name: "priority-examples".into(),
        passed: worst <= 1e-4,
        max_error: worst,
        tolerance: 1e-4,
        cases: cases.len(),
        seconds: start.elapsed().as_secs_f64(),
        detail: "worked vectors".into(),
    }
}

/// Recursive GAE against the explicit double sum on random sequences.
pub fn gae_suite(sequences: usize, seed: u64) -> SuiteResult {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst: f64 = 0.0;
    for _ in 0..sequences {
        let t = rng.gen_range(1..=32);
        let r: Vec<f64> = (0..t).map(|_| rng.gen_range(-2.0..2.0)).collect();
        let v: Vec<f64> = (0..t).map(|_| rng.gen_range(-5.0..5.0)).collect();
        let d: Vec<bool> = (0..t).map(|_| rng.gen_bool(0.1)).collect();
        let gamma = rng.gen_range(0.8..=1.0);
        let lambda = rng.gen_range(0.0..=1.0);
        let boot = rng.gen_range(-5.0..5.0);
        let (fast, _) = compute_gae(&r, &v, &d, gamma, lambda, boot);
        let slow = compute_gae_brute_force(&r, &v, &d, gamma, lambda, boot);
        for (a, b) in fast.iter().zip(&slow) {
            worst = worst.max((a - b).abs());
        }
    }
    SuiteResult {
        name: "gae".into(),
        passed: worst <= 1e-10,
        max_error: worst,
        tolerance: 1e-10,
        cases: sequences,
        seconds: start.elapsed().as_secs_f64(),
        detail: "recursion vs double sum".into(),
    }
}

/// Finite-difference gradient checks of all four full-size networks.
pub fn gradient_suite(configs: u64, seed: u64) -> SuiteResult {
    let start = Instant::now();
    let obs = ObsConfig::default();
    let mut worst: f64 = 0.0;
    let mut entries = 0;
    let mut worst_name = String::new();
    for k in 0..configs {
        // Alternate the allocation head so both the Bernoulli and the
        // categorical heads are covered.
        let variant = if k % 2 == 0 { Variant::TihdpWithCom } else { Variant::TwoLayeredGlobal };
        let spec = variant.net_spec(&obs, &[256, 128, 64], 64, 3, 4);
        let report = gradient_check(&spec, seed + k, &GradCheckConfig::default());
        for t in &report.tensors {
            entries += t.checked;
            if t.max_rel_error > worst {
                worst = t.max_rel_error;
                worst_name = format!("{} (config {k})", t.name);
            }
        }
    }
    SuiteResult {
        name: "gradients".into(),
        passed: worst <= 1e-4,
        max_error: worst,
        tolerance: 1e-4,
        cases: entries,
        seconds: start.elapsed().as_secs_f64(),
        detail: format!("worst at {worst_name}"),
    }
}

/// Object `class` at the origin with robots just behind it at the given
/// angles from the push axis, each facing the object centre.
pub fn push_scene(class: WeightClass, angles_deg: &[f64]) -> WorldState {
    let (light, medium, heavy) = match class {
        WeightClass::Light => (1, 0, 0),
        WeightClass::Medium => (0, 1, 0),
        WeightClass::Heavy => (0, 0, 1),
    };
    let mut cfg = ScenarioConfig::with_counts(angles_deg.len(), light, medium, heavy);
    cfg.episode_length = 1000;
    let mut s = WorldState::reset(&cfg, 0).expect("small scenes always place");
    s.objects[0].position = Vec2::ZERO;
    s.objects[0].goal = Vec2::new(10.0, 0.0);
    for (r, &deg) in s.robots.iter_mut().zip(angles_deg) {
        let dir = Vec2::from_angle(PI + deg.to_radians());
        r.position = dir * 0.31;
        r.heading = (-dir).y.atan2((-dir).x);
    }
    s
}

/// Object displacement after `steps` steps of every robot driving forward.
pub fn push_displacement(mut s: WorldState, steps: usize) -> f64 {
    let start = s.objects[0].position;
    let cmds = vec![Command::new(Move::Forward, Turn::None); s.num_robots()];
    for _ in 0..steps {
        s.step(&cmds).expect("episode long enough");
    }
    (s.objects[0].position - start).norm()
}

/// Pusher formations used by the threshold checks.
pub fn formation(robots: usize) -> Vec<f64> {
    match robots {
        1 => vec![0.0],
        2 => vec![-35.0, 35.0],
        3 => vec![-35.0, 0.0, 35.0],
        _ => (0..robots).map(|k| -52.5 + 105.0 * k as f64 / (robots - 1) as f64).collect(),
    }
}

/// Weight-class thresholds: Light moves with one pusher, Medium needs two,
/// Heavy never moves.
pub fn physics_suite() -> SuiteResult {
    let start = Instant::now();
    let mut failures = Vec::new();
    let light = push_displacement(push_scene(WeightClass::Light, &formation(1)), 100);
    if light < 0.5 {
        failures.push(format!("light moved only {light:.3} m"));
    }
    let medium_one = push_displacement(push_scene(WeightClass::Medium, &formation(1)), 100);
    if medium_one > 1e-9 {
        failures.push(format!("medium moved {medium_one:.3e} m with one robot"));
    }
    let medium_two = push_displacement(push_scene(WeightClass::Medium, &formation(2)), 100);
    if medium_two < 0.3 {
        failures.push(format!("medium moved only {medium_two:.3} m with two robots"));
    }
    let mut heavy: f64 = 0.0;
    for k in 1..=4 {
        heavy = heavy.max(push_displacement(push_scene(WeightClass::Heavy, &formation(k)), 100));
    }
    if heavy > 1e-9 {
        failures.push(format!("heavy moved {heavy:.3e} m"));
    }
    SuiteResult {
        name: "physics-thresholds".into(),
        passed: failures.is_empty(),
        max_error: medium_one.max(heavy),
        tolerance: 1e-9,
        cases: 7,
        seconds: start.elapsed().as_secs_f64(),
        detail: if failures.is_empty() {
            format!("light {light:.2} m, medium x2 {medium_two:.2} m")
        } else {
            failures.join("; ")
        },
    }
}

/// Result of driving a robot's target to an object it cannot observe.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ReachTrace {
    /// Object indices in robot 0's K-nearest set.
    pub observed: Vec<usize>,
    /// The unobserved object robot 1 asks for.
    pub requested: usize,
    /// Robot 0's target after each step.
    pub targets: Vec<Option<usize>>,
    /// First step (1-based) at which robot 0 adopted the requested object.
    pub reached_at: Option<usize>,
}

/// Two robots, four objects in a row. Robot 0 sits at one end and only sees
/// its two nearest objects; robot 1 sits at the far end, marks its own
/// nearest object `+1` and requests it every step. Robot 0 answers every
/// request and marks both observed objects `-1`, so the only way the far
/// object can gain priority is through the request sums.
pub fn communication_reach(k_phi: f64, max_steps: usize) -> ReachTrace {
    let mut cfg = ScenarioConfig::with_counts(2, 4, 0, 0);
    cfg.episode_length = max_steps.max(1);
    let mut s = WorldState::reset(&cfg, 0).expect("small scenes always place");
    for (l, o) in s.objects.iter_mut().enumerate() {
        o.position = Vec2::new(l as f64, 2.0);
        o.goal = Vec2::new(l as f64, 5.0);
    }
    s.robots[0].position = Vec2::new(-1.0, 2.0);
    s.robots[1].position = Vec2::new(4.0, 2.0);
    let obs = ObsConfig::default();
    let seen0 = nearest_entities(&s, 0, obs.j, obs.k).objects;
    let seen1 = nearest_entities(&s, 1, obs.j, obs.k).objects;
    let observed: Vec<usize> = seen0.iter().flatten().copied().collect();
    let requested = seen1[0].expect("robot 1 sees an object");
    let m = s.num_objects();
    let mut priorities: Vec<PriorityVector> = (0..2).map(|i| PriorityVector::uniform(m, k_phi, i)).collect();
    let mut targets = vec![Some(0), Some(0)];
    let ops = [
        LocalOps { c_local: vec![-1; obs.k], neighbor_ids: seen0.clone(), alpha: false, beta: true },
        LocalOps { c_local: vec![1, -1], neighbor_ids: seen1.clone(), alpha: true, beta: false },
    ];
    let completed = vec![false; m];
    let mut trace = ReachTrace { observed, requested, targets: Vec::new(), reached_at: None };
    for step in 1..=max_steps {
        priority_step(&mut priorities, &mut targets, &ops, &completed).expect("well-formed ops");
        trace.targets.push(targets[0]);
        if trace.reached_at.is_none() && targets[0] == Some(requested) {
            trace.reached_at = Some(step);
        }
    }
    trace
}

pub fn communication_suite() -> SuiteResult {
    let start = Instant::now();
    let trace = communication_reach(0.1, 40);
    let unobserved = !trace.observed.contains(&trace.requested);
    SuiteResult {
        name: "communication-reach".into(),
        passed: unobserved && trace.reached_at.is_some(),
        max_error: trace.reached_at.map_or(f64::INFINITY, |s| s as f64),
        tolerance: 40.0,
        cases: 1,
        seconds: start.elapsed().as_secs_f64(),
        detail: format!(
            "robot 0 sees {:?}; object {} becomes its target at step {}",
            trace.observed,
            trace.requested,
            trace.reached_at.map_or("never".to_string(), |s| s.to_string())
        ),
    }
}

/// Every suite with its default size.
pub fn run_all(seed: u64) -> Vec<SuiteResult> {
    vec![
        priority_suite(10_000, seed),
        priority_examples_suite(),
        gae_suite(100, seed),
        gradient_suite(5, seed),
        physics_suite(),
        communication_suite(),
    ]
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn small_suites_pass() {
        assert!(priority_suite(500, 1).passed);
        assert!(priority_examples_suite().passed);
        assert!(gae_suite(20, 1).passed);
        assert!(communication_suite().passed);
    }

    #[test]
    fn reference_matches_first_example() {
        let got = priority_reference(&[0.25; 4], 0.1, &[1.0, -1.0, 0.0, 0.0], false, &[0; 4], &[false; 4]);
        assert!((got[0] - 0.325 / 0.9).abs() < 1e-15);
    }
}
