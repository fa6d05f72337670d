//! Ground-truth simulators for the two benchmarks, the episode runner and
//! trajectory metrics.

mod episode;
pub mod isrs;
pub mod rover;

use rand::Rng;
use serde::{Deserialize, Serialize};

pub use episode::{run_episode, EpisodeLog, EpisodeStatus, StepRecord, CSV_HEADER};
pub use isrs::{generate_isrs, isrs_observe, isrs_true_reward, IsrsInstance, IsrsParams, Rock};
pub use rover::{
    generate_rover, generate_rover_map, rover_observe, rover_true_reward, smooth_map, RoverInstance, RoverParams,
    RoverSensor,
};

use crate::error::Result;
use crate::gp::{GaussianProcessBelief, KernelSpec};
use crate::mdp::{Action, AippmsProblem, Memory, NodeId, Observation, RewardConfig};

/// Belief model and reward weighting shared by every policy in an experiment.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ModelConfig {
    pub kernel: KernelSpec,
    pub prior_mean: f64,
    /// Overrides the environment's default information weight.
    pub lambda: Option<f64>,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            kernel: KernelSpec::default(),
            prior_mean: 0.5,
            lambda: None,
        }
    }
}

impl ModelConfig {
    pub fn isrs_reward(&self) -> RewardConfig {
        let base = RewardConfig::isrs();
        self.lambda.map_or(base, |l| base.with_lambda(l))
    }

    pub fn rover_reward(&self) -> RewardConfig {
        let base = RewardConfig::rover();
        self.lambda.map_or(base, |l| base.with_lambda(l))
    }
}

/// A generated benchmark instance, tagged by environment.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "env", rename_all = "kebab-case")]
pub enum Instance {
    Isrs(IsrsInstance),
    Rover(RoverInstance),
}

impl Instance {
    pub fn seed(&self) -> u64 {
        match self {
            Instance::Isrs(i) => i.seed,
            Instance::Rover(r) => r.seed,
        }
    }

    pub fn grid_size(&self) -> usize {
        match self {
            Instance::Isrs(i) => i.grid_size,
            Instance::Rover(r) => r.grid_size,
        }
    }

    pub fn problem(&self, model: &ModelConfig) -> Result<AippmsProblem> {
        match self {
            Instance::Isrs(i) => i.problem(model),
            Instance::Rover(r) => r.problem(model),
        }
    }

    /// Reward the environment pays for `action` taken at `location`.
    pub fn true_reward(&self, memory: &Memory, location: NodeId, action: &Action) -> f64 {
        match self {
            Instance::Isrs(i) => isrs_true_reward(i, memory, action),
            Instance::Rover(r) => rover_true_reward(r, memory, location, action),
        }
    }

    /// Ground-truth measurements produced by `action` taken at `location`.
    pub fn observe<R: Rng + ?Sized>(&self, location: NodeId, action: &Action, rng: &mut R) -> Result<Vec<Observation>> {
        match (self, *action) {
            (Instance::Isrs(_), Action::Move(_)) => Ok(Vec::new()),
            (Instance::Isrs(i), Action::Sense(m)) => isrs_observe(i, location, m, rng),
            (Instance::Rover(r), Action::Move(target)) => {
                Ok(vec![rover_observe(r, target, RoverSensor::Spectrometer, rng)])
            }
            (Instance::Rover(r), Action::Sense(_)) => Ok(vec![rover_observe(r, location, RoverSensor::Drill, rng)]),
        }
    }

    /// Updates the environment's own record of visited rocks / collected types.
    pub fn record(&self, memory: &mut Memory, location: NodeId, action: &Action) {
        match (self, *action) {
            (Instance::Isrs(i), Action::Move(target)) if i.rock_at(target).is_some() => {
                memory.visit(target);
            }
            (Instance::Rover(r), Action::Sense(_)) => {
                memory.collect(r.true_type(location));
            }
            _ => {}
        }
    }

    /// Belief RMSE against the ground truth: every cell for the rover, rock
    /// cells for ISRS.
    pub fn rmse(&self, gp: &GaussianProcessBelief) -> f64 {
        match self {
            Instance::Isrs(i) => rmse_at(gp, &i.truth_cells()),
            Instance::Rover(r) => rmse(gp, &r.true_map),
        }
    }

    /// Upper bound on the positive reward an episode can collect.
    pub fn max_positive_reward(&self) -> f64 {
        match self {
            Instance::Isrs(i) => 10.0 * i.good_rocks() as f64,
            Instance::Rover(r) => r.beta as f64,
        }
    }
}

/// Root-mean-square error of the posterior mean against a map aligned with
/// the query set.
pub fn rmse(gp: &GaussianProcessBelief, true_map: &[f64]) -> f64 {
    assert_eq!(
        true_map.len(),
        gp.query_set().len(),
        "map must align with the query set"
    );
    let cells: Vec<(NodeId, f64)> = true_map.iter().copied().enumerate().collect();
    rmse_at(gp, &cells)
}

/// RMSE restricted to `(query index, true value)` pairs; zero when empty.
pub fn rmse_at(gp: &GaussianProcessBelief, cells: &[(NodeId, f64)]) -> f64 {
    if cells.is_empty() {
        return 0.0;
    }
    let sq: f64 = cells.iter().map(|&(i, v)| (gp.mean_at(i) - v).powi(2)).sum();
    (sq / cells.len() as f64).sqrt()
}
