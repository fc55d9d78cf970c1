//! One environment driven through the three-layer hierarchy.
//!
//! A control step is split so that network evaluation can be batched across
//! environments by the caller:
//! [`HierEnv::hi_inputs`] → allocation actions → [`HierEnv::apply_hi`] →
//! [`HierEnv::lo_inputs`] → control actions → [`HierEnv::step`].

use serde::{Deserialize, Serialize};

use super::{TrainerError, Variant};
use crate::nets::{HeadKind, PolicyAction};
use crate::obs::{self, BaselineView, Neighbors, ObsConfig};
use crate::priority::{priority_step, CommFrame, LocalOps, PriorityVector};
use crate::world::{robot_low_reward, team_reward, Command, ScenarioConfig, WorldState};

/// Allocation-actor input for one robot.
#[derive(Debug, Clone, PartialEq)]
pub struct HiInput {
    pub values: Vec<f64>,
    /// Active Bernoulli dims or valid categorical entries.
    pub mask: Vec<bool>,
}

impl HiInput {
    /// Whether the action has any effect (and so a log-probability).
    pub fn is_active(&self) -> bool {
        self.mask.iter().any(|&m| m)
    }
}

/// What the allocation layer did this step (for logs).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HiOutcome {
    pub targets: Vec<Option<usize>>,
    /// Present for the priority-layer variants.
    pub comm: Option<CommFrame>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepRewards {
    pub team: f64,
    /// Zero for robots without a target.
    pub lo: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct HierEnv {
    pub world: WorldState,
    pub variant: Variant,
    pub obs: ObsConfig,
    pub priorities: Vec<PriorityVector>,
    pub targets: Vec<Option<usize>>,
    neighbors: Vec<Neighbors>,
}

impl HierEnv {
    pub fn reset(scenario: &ScenarioConfig, variant: Variant, obs: ObsConfig, k_phi: f64, seed: u64) -> Result<Self, TrainerError> {
        let world = WorldState::reset(scenario, seed)?;
        Ok(Self::from_world(world, variant, obs, k_phi))
    }

    pub fn from_world(world: WorldState, variant: Variant, obs: ObsConfig, k_phi: f64) -> Self {
        let (n, m) = (world.num_robots(), world.num_objects());
        let priorities: Vec<PriorityVector> = (0..n).map(|i| PriorityVector::uniform(m, k_phi, i)).collect();
        let targets = if variant.uses_priority() {
            priorities.iter().map(crate::priority::select_target).collect()
        } else {
            vec![None; n]
        };
        Self { world, variant, obs, priorities, targets, neighbors: Vec::new() }
    }

    pub fn num_robots(&self) -> usize {
        self.world.num_robots()
    }

    /// Observations and masks for every robot; remembers which objects sit in
    /// the local slots so actions can be mapped back.
    pub fn hi_inputs(&mut self) -> Vec<HiInput> {
        let n = self.num_robots();
        let k = self.obs.k;
        self.neighbors.clear();
        let mut out = Vec::with_capacity(n);
        for i in 0..n {
            let high = obs::build_high_obs(&self.world, i, &self.obs);
            let valid_slots: Vec<bool> = high.neighbors.objects.iter().map(Option::is_some).collect();
            let input = match self.variant {
                Variant::TihdpWithCom | Variant::TihdpWithoutCom => {
                    let com = self.variant == Variant::TihdpWithCom;
                    let mut mask = valid_slots;
                    mask.extend([com, com]);
                    HiInput { values: high.values, mask }
                }
                Variant::TwoLayeredLocal => HiInput { values: high.values, mask: valid_slots },
                Variant::TwoLayeredGlobal => {
                    let values = obs::build_baseline_obs(&self.world, i, BaselineView::Global, &self.obs);
                    let m = self.world.num_objects();
                    let mask = (0..m).map(|l| values[obs::baseline_completed_offset(n, l)] == 0.0).collect();
                    HiInput { values, mask }
                }
            };
            debug_assert_eq!(input.mask.len(), self.variant.hi_head(&self.obs, self.world.num_objects()).logits());
            debug_assert_eq!(k, high.neighbors.objects.len());
            self.neighbors.push(high.neighbors);
            out.push(input);
        }
        out
    }

    /// Applies allocation actions (one per robot, `None` for inactive rows)
    /// and selects every robot's target.
    pub fn apply_hi(&mut self, actions: &[Option<PolicyAction>]) -> Result<HiOutcome, TrainerError> {
        let n = self.num_robots();
        if actions.len() != n || self.neighbors.len() != n {
            return Err(TrainerError::Protocol(format!("{} allocation actions for {n} robots", actions.len())));
        }
        let k = self.obs.k;
        match self.variant {
            Variant::TihdpWithCom | Variant::TihdpWithoutCom => {
                let com = self.variant == Variant::TihdpWithCom;
                let mut ops = Vec::with_capacity(n);
                for (i, a) in actions.iter().enumerate() {
                    let bits = match a {
                        Some(PolicyAction::Binary(bits)) if bits.len() == k + 2 => bits.clone(),
                        None => vec![false; k + 2],
                        other => return Err(TrainerError::Protocol(format!("allocation action {other:?}"))),
                    };
                    ops.push(LocalOps {
                        c_local: bits[..k].iter().map(|&b| if b { 1 } else { -1 }).collect(),
                        neighbor_ids: self.neighbors[i].objects.clone(),
                        alpha: com && bits[k],
                        beta: com && bits[k + 1],
                    });
                }
                let completed = self.world.completed_flags();
                let frame = priority_step(&mut self.priorities, &mut self.targets, &ops, &completed)?;
                Ok(HiOutcome { targets: self.targets.clone(), comm: Some(frame) })
            }
            Variant::TwoLayeredLocal | Variant::TwoLayeredGlobal => {
                for (i, a) in actions.iter().enumerate() {
                    self.targets[i] = match a {
                        None => None,
                        Some(PolicyAction::Choice(c)) => match self.variant {
                            Variant::TwoLayeredLocal => self.neighbors[i].objects.get(*c).copied().flatten(),
                            _ => Some(*c).filter(|&c| c < self.world.num_objects()),
                        },
                        Some(other) => return Err(TrainerError::Protocol(format!("allocation action {other:?}"))),
                    };
                }
                Ok(HiOutcome { targets: self.targets.clone(), comm: None })
            }
        }
    }

    /// Control observations; `None` for robots without a target.
    pub fn lo_inputs(&self) -> Vec<Option<Vec<f64>>> {
        self.targets
            .iter()
            .enumerate()
            .map(|(i, t)| t.map(|t| obs::build_low_obs(&self.world, i, t).values))
            .collect()
    }

    /// Advances the world; robots without a command idle.
    pub fn step(&mut self, commands: &[Option<Command>]) -> Result<StepRewards, TrainerError> {
        let cmds: Vec<Command> = commands.iter().map(|c| c.unwrap_or(Command::IDLE)).collect();
        self.world.step(&cmds)?;
        let lo = self
            .targets
            .iter()
            .enumerate()
            .map(|(i, t)| t.map_or(0.0, |t| robot_low_reward(&self.world, i, t)))
            .collect();
        Ok(StepRewards { team: team_reward(&self.world), lo })
    }

    /// Critic input for the control layer: global state, robot one-hot,
    /// target one-hot (all-zero without a target).
    pub fn lo_critic_extra(&self, i: usize) -> Vec<f64> {
        let (n, m) = (self.num_robots(), self.world.num_objects());
        let mut v = vec![0.0; n + m];
        v[i] = 1.0;
        if let Some(t) = self.targets[i] {
            v[n + t] = 1.0;
        }
        v
    }
}

/// Allocation head of a variant.
pub(crate) fn head_for(variant: Variant, obs: &ObsConfig, m: usize) -> HeadKind {
    match variant {
        Variant::TihdpWithCom | Variant::TihdpWithoutCom => HeadKind::Bernoulli { dims: obs.k + 2 },
        Variant::TwoLayeredLocal => HeadKind::Categorical { dims: obs.k },
        Variant::TwoLayeredGlobal => HeadKind::Categorical { dims: m },
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn env(variant: Variant) -> HierEnv {
        HierEnv::reset(&ScenarioConfig::with_counts(3, 2, 1, 1), variant, ObsConfig::default(), 0.1, 11).unwrap()
    }

    #[test]
    fn initial_target_is_lowest_index() {
        let e = env(Variant::TihdpWithCom);
        assert_eq!(e.targets, vec![Some(0); 3]);
        assert_eq!(env(Variant::TwoLayeredLocal).targets, vec![None; 3]);
    }

    #[test]
    fn without_com_masks_and_gates_signals() {
        let mut e = env(Variant::TihdpWithoutCom);
        let inputs = e.hi_inputs();
        assert!(inputs.iter().all(|h| h.mask[2..] == [false, false]));
        let out = e.apply_hi(&vec![Some(PolicyAction::Binary(vec![true; 4])); 3]).unwrap();
        let comm = out.comm.unwrap();
        assert!(comm.alpha.iter().chain(&comm.beta).all(|&b| !b));
    }

    #[test]
    fn local_baseline_maps_slots_to_objects() {
        let mut e = env(Variant::TwoLayeredLocal);
        e.hi_inputs();
        let nearest = e.neighbors[1].objects[1];
        let out = e.apply_hi(&[None, Some(PolicyAction::Choice(1)), Some(PolicyAction::Choice(0))]).unwrap();
        assert_eq!(out.targets[0], None);
        assert_eq!(out.targets[1], nearest);
        assert!(out.comm.is_none());
    }

    #[test]
    fn global_baseline_masks_completed() {
        let mut e = env(Variant::TwoLayeredGlobal);
        e.world.objects[2].completed = true;
        let inputs = e.hi_inputs();
        assert_eq!(inputs[0].values.len(), 49);
        assert_eq!(inputs[0].mask, vec![true, true, false, true]);
    }

    #[test]
    fn step_rewards_shape() {
        let mut e = env(Variant::TihdpWithCom);
        e.hi_inputs();
        e.apply_hi(&[None, None, None]).unwrap();
        assert!(e.lo_inputs().iter().all(|x| x.as_ref().map(Vec::len) == Some(24)));
        let r = e.step(&[Some(Command::from_indices(1, 0)), None, None]).unwrap();
        assert_eq!(r.lo.len(), 3);
        assert_eq!(e.lo_critic_extra(1)[1], 1.0);
    }
}
