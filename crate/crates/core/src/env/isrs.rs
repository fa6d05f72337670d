//! Information Search RockSample.

use rand::seq::index;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gp::{GaussianProcessBelief, JITTER_FLOOR};
use crate::mdp::{
    fidelity_stddev, Action, AippmsProblem, EnvRules, IsrsRules, LocationGraph, Memory, NodeId, Observation,
    SensingModality,
};

use super::ModelConfig;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct IsrsParams {
    pub grid_size: usize,
    pub rocks: usize,
    pub beacons: usize,
    pub good_probability: f64,
    pub budget: f64,
    pub movement_cost: f64,
    pub modalities: Vec<SensingModality>,
    pub sensing_radius: f64,
    pub decay_distance: f64,
}

impl Default for IsrsParams {
    fn default() -> Self {
        IsrsParams {
            grid_size: 10,
            rocks: 10,
            beacons: 10,
            good_probability: 0.5,
            budget: 40.0,
            movement_cost: 1.0,
            modalities: vec![
                SensingModality::new("cheap", 0.5, 0.4),
                SensingModality::new("accurate", 2.0, 0.1),
            ],
            sensing_radius: 4.0,
            decay_distance: 2.0,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Rock {
    pub node: NodeId,
    pub good: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IsrsInstance {
    pub grid_size: usize,
    /// Sorted by node.
    pub rocks: Vec<Rock>,
    /// Sorted by node.
    pub beacons: Vec<NodeId>,
    pub modalities: Vec<SensingModality>,
    pub movement_cost: f64,
    pub budget: f64,
    pub start: NodeId,
    pub goal: NodeId,
    pub sensing_radius: f64,
    pub decay_distance: f64,
    pub seed: u64,
}

/// Places `k` rocks and `b` beacons on an `n`×`n` grid; start and goal are the origin.
pub fn generate_isrs(params: &IsrsParams, seed: u64) -> Result<IsrsInstance> {
    let n = params.grid_size;
    let cells = n * n;
    if n == 0 {
        return Err(Error::InvalidEnvironment("grid size must be positive".into()));
    }
    if params.rocks + 2 > cells {
        return Err(Error::InvalidEnvironment(format!(
            "{} rocks do not fit on a {n}x{n} grid",
            params.rocks
        )));
    }
    if params.beacons > cells {
        return Err(Error::InvalidEnvironment(format!(
            "{} beacons do not fit on a {n}x{n} grid",
            params.beacons
        )));
    }
    if !(0.0..=1.0).contains(&params.good_probability) {
        return Err(Error::InvalidEnvironment(format!(
            "good-rock probability {} outside [0, 1]",
            params.good_probability
        )));
    }
    let start = 0;
    let goal = 0;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let candidates: Vec<NodeId> = (0..cells).filter(|&c| c != start && c != goal).collect();
    let mut rocks: Vec<Rock> = index::sample(&mut rng, candidates.len(), params.rocks)
        .into_iter()
        .map(|i| Rock {
            node: candidates[i],
            good: false,
        })
        .collect();
    for rock in &mut rocks {
        rock.good = rng.random_bool(params.good_probability);
    }
    rocks.sort_by_key(|r| r.node);
    let mut beacons = index::sample(&mut rng, cells, params.beacons).into_vec();
    beacons.sort_unstable();

    let inst = IsrsInstance {
        grid_size: n,
        rocks,
        beacons,
        modalities: params.modalities.clone(),
        movement_cost: params.movement_cost,
        budget: params.budget,
        start,
        goal,
        sensing_radius: params.sensing_radius,
        decay_distance: params.decay_distance,
        seed,
    };
    inst.validate()?;
    Ok(inst)
}

impl IsrsInstance {
    pub fn validate(&self) -> Result<()> {
        let cells = self.grid_size * self.grid_size;
        let on_grid = |v: NodeId| if v < cells { Ok(()) } else { Err(Error::InvalidNode(v)) };
        on_grid(self.start)?;
        on_grid(self.goal)?;
        for w in self.rocks.windows(2) {
            if w[0].node >= w[1].node {
                return Err(Error::InvalidEnvironment(
                    "rocks must be sorted and at most one per cell".into(),
                ));
            }
        }
        for r in &self.rocks {
            on_grid(r.node)?;
        }
        for &b in &self.beacons {
            on_grid(b)?;
        }
        if !(self.budget >= 0.0 && self.movement_cost > 0.0) {
            return Err(Error::InvalidEnvironment(
                "budget and movement cost must be positive".into(),
            ));
        }
        crate::mdp::validate_modalities(&self.modalities)
    }

    pub fn graph(&self) -> Result<LocationGraph> {
        LocationGraph::grid(self.grid_size, self.movement_cost, self.start, self.goal)
    }

    pub fn rock_at(&self, node: NodeId) -> Option<&Rock> {
        self.rocks
            .binary_search_by_key(&node, |r| r.node)
            .ok()
            .map(|i| &self.rocks[i])
    }

    pub fn is_beacon(&self, node: NodeId) -> bool {
        self.beacons.binary_search(&node).is_ok()
    }

    pub fn good_rocks(&self) -> usize {
        self.rocks.iter().filter(|r| r.good).count()
    }

    pub fn problem(&self, model: &ModelConfig) -> Result<AippmsProblem> {
        self.validate()?;
        let graph = self.graph()?;
        let rock_nodes: Vec<NodeId> = self.rocks.iter().map(|r| r.node).collect();
        let rules = IsrsRules::new(
            graph.len(),
            &rock_nodes,
            &self.beacons,
            self.sensing_radius,
            self.decay_distance,
        )?;
        let prior = GaussianProcessBelief::new(model.prior_mean, model.kernel, graph.nodes().to_vec())?;
        AippmsProblem::new(
            graph,
            self.modalities.clone(),
            EnvRules::Isrs(rules),
            model.isrs_reward(),
            self.budget,
            prior,
        )
    }

    /// Rock goodness encoded as 1 (good) or 0 (bad), per rock cell.
    pub fn truth_cells(&self) -> Vec<(NodeId, f64)> {
        self.rocks
            .iter()
            .map(|r| (r.node, if r.good { 1.0 } else { 0.0 }))
            .collect()
    }

    pub fn coord(&self, node: NodeId) -> [f64; 2] {
        [(node % self.grid_size) as f64, (node / self.grid_size) as f64]
    }
}

/// True reward of `action` given which rocks have already been visited.
pub fn isrs_true_reward(inst: &IsrsInstance, memory: &Memory, action: &Action) -> f64 {
    const ROCK_REWARD: f64 = 10.0;
    match *action {
        Action::Move(target) => match inst.rock_at(target) {
            Some(rock) if rock.good && !memory.has_visited(target) => ROCK_REWARD,
            Some(_) => -ROCK_REWARD,
            None => 0.0,
        },
        Action::Sense(_) => 0.0,
    }
}

/// Noisy readings of every rock within the sensing radius of beacon `at`.
pub fn isrs_observe<R: Rng + ?Sized>(
    inst: &IsrsInstance,
    at: NodeId,
    modality: usize,
    rng: &mut R,
) -> Result<Vec<Observation>> {
    if !inst.is_beacon(at) {
        return Err(Error::NotAtBeacon(at));
    }
    let sensor = inst
        .modalities
        .get(modality)
        .ok_or_else(|| Error::InvalidModality(format!("no modality {modality}")))?;
    let here = inst.coord(at);
    let mut out = Vec::new();
    for rock in &inst.rocks {
        let there = inst.coord(rock.node);
        let d = ((there[0] - here[0]).powi(2) + (there[1] - here[1]).powi(2)).sqrt();
        if d > inst.sensing_radius {
            continue;
        }
        let sd = fidelity_stddev(sensor.noise_stddev, d, inst.decay_distance);
        let truth = if rock.good { 1.0 } else { 0.0 };
        let z: f64 = rng.sample(StandardNormal);
        out.push(Observation {
            node: rock.node,
            value: truth + sd * z,
            noise_variance: (sd * sd).max(JITTER_FLOOR),
        });
    }
    Ok(out)
}
