//! Rover Exploration: drill for unique sample types on a spatially
//! correlated map, with a free spectrometer reading on every move.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gp::{GaussianProcessBelief, JITTER_FLOOR};
use crate::mdp::{
    Action, AippmsProblem, EnvRules, LocationGraph, Memory, NodeId, Observation, RoverRules, SensingModality,
};

use super::ModelConfig;

/// Index of the drill in the rover's modality list.
pub const DRILL: usize = 0;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RoverParams {
    pub grid_size: usize,
    pub beta: usize,
    pub spectrometer_sigma: f64,
    pub drill_cost: f64,
    pub step_cost: f64,
    pub budget: f64,
}

impl Default for RoverParams {
    fn default() -> Self {
        RoverParams {
            grid_size: 10,
            beta: 10,
            spectrometer_sigma: 0.1,
            drill_cost: 3.0,
            step_cost: 1.0,
            budget: 100.0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RoverInstance {
    pub grid_size: usize,
    /// Row-major cell values; cell `y * n + x`.
    pub true_map: Vec<f64>,
    pub beta: usize,
    pub spectrometer_sigma: f64,
    pub drill_cost: f64,
    pub step_cost: f64,
    pub budget: f64,
    pub start: NodeId,
    pub goal: NodeId,
    pub seed: u64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum RoverSensor {
    Spectrometer,
    Drill,
}

/// Draws i.i.d. cell types, then replaces each cell by the mean of itself
/// and its on-grid 4-neighbors.
pub fn generate_rover_map<R: Rng + ?Sized>(n: usize, beta: usize, rng: &mut R) -> Result<Vec<f64>> {
    if n < 2 || beta < 2 {
        return Err(Error::InvalidEnvironment(format!(
            "rover map needs n >= 2 and beta >= 2, got n={n}, beta={beta}"
        )));
    }
    let raw: Vec<f64> = (0..n * n)
        .map(|_| rng.random_range(0..beta) as f64 / (beta - 1) as f64)
        .collect();
    Ok(smooth_map(&raw, n))
}

/// Neighbor averaging step of map generation, reading only from `raw`.
pub fn smooth_map(raw: &[f64], n: usize) -> Vec<f64> {
    let mut out = vec![0.0; n * n];
    for y in 0..n {
        for x in 0..n {
            let mut sum = raw[y * n + x];
            let mut count = 1.0;
            let mut add = |xx: usize, yy: usize| {
                sum += raw[yy * n + xx];
                count += 1.0;
            };
            if x > 0 {
                add(x - 1, y);
            }
            if x + 1 < n {
                add(x + 1, y);
            }
            if y > 0 {
                add(x, y - 1);
            }
            if y + 1 < n {
                add(x, y + 1);
            }
            out[y * n + x] = sum / count;
        }
    }
    out
}

pub fn generate_rover(params: &RoverParams, seed: u64) -> Result<RoverInstance> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let true_map = generate_rover_map(params.grid_size, params.beta, &mut rng)?;
    let n = params.grid_size;
    let inst = RoverInstance {
        grid_size: n,
        true_map,
        beta: params.beta,
        spectrometer_sigma: params.spectrometer_sigma,
        drill_cost: params.drill_cost,
        step_cost: params.step_cost,
        budget: params.budget,
        start: 0,
        goal: n * n - 1,
        seed,
    };
    inst.validate()?;
    Ok(inst)
}

impl RoverInstance {
    pub fn validate(&self) -> Result<()> {
        let cells = self.grid_size * self.grid_size;
        if self.true_map.len() != cells {
            return Err(Error::InvalidEnvironment(format!(
                "map has {} cells, expected {cells}",
                self.true_map.len()
            )));
        }
        if self.true_map.iter().any(|v| !(0.0..=1.0).contains(v)) {
            return Err(Error::InvalidEnvironment("map values must lie in [0, 1]".into()));
        }
        if self.start >= cells {
            return Err(Error::InvalidNode(self.start));
        }
        if self.goal >= cells {
            return Err(Error::InvalidNode(self.goal));
        }
        if !(self.drill_cost > 0.0 && self.step_cost > 0.0 && self.budget >= 0.0) {
            return Err(Error::InvalidEnvironment(
                "costs must be positive and budget non-negative".into(),
            ));
        }
        RoverRules::new(self.beta, self.spectrometer_sigma)?;
        Ok(())
    }

    pub fn graph(&self) -> Result<LocationGraph> {
        LocationGraph::grid(self.grid_size, self.step_cost, self.start, self.goal)
    }

    pub fn rules(&self) -> Result<RoverRules> {
        RoverRules::new(self.beta, self.spectrometer_sigma)
    }

    pub fn modalities(&self) -> Vec<SensingModality> {
        vec![SensingModality::drill("drill", self.drill_cost)]
    }

    pub fn problem(&self, model: &ModelConfig) -> Result<AippmsProblem> {
        self.validate()?;
        let graph = self.graph()?;
        let prior = GaussianProcessBelief::new(model.prior_mean, model.kernel, graph.nodes().to_vec())?;
        AippmsProblem::new(
            graph,
            self.modalities(),
            EnvRules::Rover(self.rules()?),
            model.rover_reward(),
            self.budget,
            prior,
        )
    }

    /// Sample type (index into the `beta` evenly spaced values) of `cell`.
    pub fn true_type(&self, cell: NodeId) -> usize {
        let steps = (self.beta - 1) as f64;
        (self.true_map[cell].clamp(0.0, 1.0) * steps).round() as usize
    }
}

/// True reward of `action` taken at `location`.
pub fn rover_true_reward(inst: &RoverInstance, memory: &Memory, location: NodeId, action: &Action) -> f64 {
    match *action {
        Action::Sense(DRILL) => {
            if memory.has_collected(inst.true_type(location)) {
                -1.0
            } else {
                1.0
            }
        }
        _ => 0.0,
    }
}

pub fn rover_observe<R: Rng + ?Sized>(
    inst: &RoverInstance,
    at: NodeId,
    sensor: RoverSensor,
    rng: &mut R,
) -> Observation {
    let truth = inst.true_map[at];
    match sensor {
        RoverSensor::Spectrometer => {
            let z: f64 = rng.sample(StandardNormal);
            Observation {
                node: at,
                value: truth + inst.spectrometer_sigma * z,
                noise_variance: (inst.spectrometer_sigma * inst.spectrometer_sigma).max(JITTER_FLOOR),
            }
        }
        RoverSensor::Drill => Observation {
            node: at,
            value: truth,
            noise_variance: JITTER_FLOOR,
        },
    }
}
