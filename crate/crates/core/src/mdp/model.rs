use std::fmt;

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use statrs::function::erf::erfc;

use super::graph::{LocationGraph, NodeId};
use crate::error::{Error, Result};
use crate::gp::{GaussianProcessBelief, JITTER_FLOOR};
use crate::mcts::BeliefMdp;

/// Reward reported for ending off-goal with the budget exhausted.
pub const FAILURE_REWARD: f64 = -1e9;

/// Slack on budget comparisons.
const BUDGET_EPS: f64 = 1e-9;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SensingModality {
    pub name: String,
    pub cost: f64,
    pub noise_stddev: f64,
    pub reveals_truth: bool,
}

impl SensingModality {
    pub fn new(name: &str, cost: f64, noise_stddev: f64) -> Self {
        SensingModality {
            name: name.to_string(),
            cost,
            noise_stddev,
            reveals_truth: false,
        }
    }

    pub fn drill(name: &str, cost: f64) -> Self {
        SensingModality {
            name: name.to_string(),
            cost,
            noise_stddev: 0.0,
            reveals_truth: true,
        }
    }

    /// Noise variance attached to a measurement taken with this modality.
    pub fn noise_variance(&self) -> f64 {
        if self.reveals_truth {
            JITTER_FLOOR
        } else {
            (self.noise_stddev * self.noise_stddev).max(JITTER_FLOOR)
        }
    }
}

/// Checks costs and noise levels, and that more accurate sensors never cost less.
pub fn validate_modalities(modalities: &[SensingModality]) -> Result<()> {
    for m in modalities {
        if !(m.cost > 0.0 && m.cost.is_finite()) {
            return Err(Error::InvalidModality(format!("{} has cost {}", m.name, m.cost)));
        }
        if !(m.noise_stddev >= 0.0 && m.noise_stddev.is_finite()) {
            return Err(Error::InvalidModality(format!(
                "{} has noise stddev {}",
                m.name, m.noise_stddev
            )));
        }
    }
    let effective = |m: &SensingModality| if m.reveals_truth { 0.0 } else { m.noise_stddev };
    for a in modalities {
        for b in modalities {
            if effective(a) < effective(b) && a.cost < b.cost {
                return Err(Error::InvalidModality(format!(
                    "{} is more accurate than {} but cheaper",
                    a.name, b.name
                )));
            }
        }
    }
    Ok(())
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Action {
    Move(NodeId),
    Sense(usize),
}

impl fmt::Display for Action {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Action::Move(n) => write!(f, "move:{n}"),
            Action::Sense(m) => write!(f, "sense:{m}"),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Observation {
    pub node: NodeId,
    pub value: f64,
    pub noise_variance: f64,
}

/// Environment-specific facts the agent has accumulated.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Memory {
    visited_rocks: Vec<NodeId>,
    collected_types: Vec<usize>,
}

impl Memory {
    pub fn has_visited(&self, rock: NodeId) -> bool {
        self.visited_rocks.binary_search(&rock).is_ok()
    }

    /// Returns `true` when `rock` had not been visited before.
    pub fn visit(&mut self, rock: NodeId) -> bool {
        insert_sorted(&mut self.visited_rocks, rock)
    }

    pub fn has_collected(&self, kind: usize) -> bool {
        self.collected_types.binary_search(&kind).is_ok()
    }

    /// Returns `true` when `kind` is new to the collection.
    pub fn collect(&mut self, kind: usize) -> bool {
        insert_sorted(&mut self.collected_types, kind)
    }

    pub fn visited_rocks(&self) -> &[NodeId] {
        &self.visited_rocks
    }

    pub fn collected_types(&self) -> &[usize] {
        &self.collected_types
    }
}

fn insert_sorted(v: &mut Vec<usize>, x: usize) -> bool {
    match v.binary_search(&x) {
        Ok(_) => false,
        Err(i) => {
            v.insert(i, x);
            true
        }
    }
}

#[derive(Clone, Debug)]
pub struct BeliefState {
    pub location: NodeId,
    pub remaining_budget: f64,
    pub gp: GaussianProcessBelief,
    pub memory: Memory,
    pub step: usize,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RewardConfig {
    pub lambda: f64,
    /// Magnitude of the rock reward (good +, bad −).
    pub rock_reward: f64,
    /// Magnitude of the drill reward (new type +, repeat −).
    pub drill_reward: f64,
}

impl RewardConfig {
    pub fn isrs() -> Self {
        RewardConfig {
            lambda: 1.0,
            rock_reward: 10.0,
            drill_reward: 1.0,
        }
    }

    pub fn rover() -> Self {
        RewardConfig {
            lambda: 0.5,
            ..Self::isrs()
        }
    }

    pub fn with_lambda(self, lambda: f64) -> Self {
        RewardConfig { lambda, ..self }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct IsrsRules {
    is_rock: Vec<bool>,
    is_beacon: Vec<bool>,
    rocks: Vec<NodeId>,
    pub sensing_radius: f64,
    pub decay_distance: f64,
}

impl IsrsRules {
    pub fn new(
        node_count: usize,
        rocks: &[NodeId],
        beacons: &[NodeId],
        sensing_radius: f64,
        decay_distance: f64,
    ) -> Result<Self> {
        let mut is_rock = vec![false; node_count];
        let mut is_beacon = vec![false; node_count];
        for &r in rocks {
            *is_rock.get_mut(r).ok_or(Error::InvalidNode(r))? = true;
        }
        for &b in beacons {
            *is_beacon.get_mut(b).ok_or(Error::InvalidNode(b))? = true;
        }
        if !(decay_distance > 0.0 && sensing_radius >= 0.0) {
            return Err(Error::InvalidEnvironment(
                "sensing radius must be non-negative and decay distance positive".into(),
            ));
        }
        let mut rocks = rocks.to_vec();
        rocks.sort_unstable();
        rocks.dedup();
        Ok(IsrsRules {
            is_rock,
            is_beacon,
            rocks,
            sensing_radius,
            decay_distance,
        })
    }

    pub fn is_rock(&self, node: NodeId) -> bool {
        self.is_rock[node]
    }

    pub fn is_beacon(&self, node: NodeId) -> bool {
        self.is_beacon[node]
    }

    pub fn rocks(&self) -> &[NodeId] {
        &self.rocks
    }
}

/// Observation noise of a beacon reading taken at distance `distance`.
pub fn fidelity_stddev(base_stddev: f64, distance: f64, decay_distance: f64) -> f64 {
    base_stddev * (distance / decay_distance).exp2()
}

#[derive(Clone, Debug, PartialEq)]
pub struct RoverRules {
    pub beta: usize,
    /// Variance of the spectrometer reading taken on arrival at every cell.
    pub spectrometer_noise_variance: f64,
}

impl RoverRules {
    pub fn new(beta: usize, spectrometer_sigma: f64) -> Result<Self> {
        if beta < 2 {
            return Err(Error::InvalidEnvironment(format!(
                "beta must be at least 2, got {beta}"
            )));
        }
        if !(spectrometer_sigma >= 0.0 && spectrometer_sigma.is_finite()) {
            return Err(Error::InvalidEnvironment(format!(
                "spectrometer sigma must be non-negative, got {spectrometer_sigma}"
            )));
        }
        Ok(RoverRules {
            beta,
            spectrometer_noise_variance: (spectrometer_sigma * spectrometer_sigma).max(JITTER_FLOOR),
        })
    }

    /// Nearest of the `beta` evenly spaced sample types to `value`.
    pub fn type_of(&self, value: f64) -> usize {
        let steps = (self.beta - 1) as f64;
        (value.clamp(0.0, 1.0) * steps).round() as usize
    }

    pub fn type_value(&self, kind: usize) -> f64 {
        kind as f64 / (self.beta - 1) as f64
    }

    /// Half the spacing between adjacent types.
    pub fn match_tolerance(&self) -> f64 {
        0.5 / (self.beta - 1) as f64
    }

    /// Probability that a cell with posterior `N(mean, variance)` holds a
    /// type absent from `collected`.
    pub fn unseen_probability(&self, mean: f64, variance: f64, collected: &[usize]) -> f64 {
        let delta = self.match_tolerance();
        let sd = variance.max(0.0).sqrt();
        let mut matched = 0.0;
        for &kind in collected {
            let tau = self.type_value(kind);
            matched += if sd < 1e-12 {
                if (mean - tau).abs() < delta {
                    1.0
                } else {
                    0.0
                }
            } else {
                normal_cdf((tau + delta - mean) / sd) - normal_cdf((tau - delta - mean) / sd)
            };
        }
        (1.0 - matched).clamp(0.0, 1.0)
    }
}

fn normal_cdf(z: f64) -> f64 {
    0.5 * erfc(-z / std::f64::consts::SQRT_2)
}

#[derive(Clone, Debug, PartialEq)]
pub enum EnvRules {
    Isrs(IsrsRules),
    Rover(RoverRules),
}

/// The belief MDP: graph, sensors, environment rules and reward weights.
#[derive(Clone, Debug)]
pub struct AippmsProblem {
    graph: LocationGraph,
    modalities: Vec<SensingModality>,
    rules: EnvRules,
    reward: RewardConfig,
    budget: f64,
    dist_to_goal: Vec<f64>,
    prior: GaussianProcessBelief,
}

impl AippmsProblem {
    pub fn new(
        graph: LocationGraph,
        modalities: Vec<SensingModality>,
        rules: EnvRules,
        reward: RewardConfig,
        budget: f64,
        prior: GaussianProcessBelief,
    ) -> Result<Self> {
        validate_modalities(&modalities)?;
        if !(budget >= 0.0 && budget.is_finite()) {
            return Err(Error::InvalidEnvironment(format!(
                "budget must be non-negative, got {budget}"
            )));
        }
        if reward.lambda.is_nan() || reward.lambda < 0.0 {
            return Err(Error::InvalidConfig(format!(
                "lambda must be non-negative, got {}",
                reward.lambda
            )));
        }
        if prior.query_set() != graph.nodes() {
            return Err(Error::InvalidConfig(
                "belief query set must match the graph nodes".into(),
            ));
        }
        if let EnvRules::Isrs(r) = &rules {
            if r.is_rock.len() != graph.len() {
                return Err(Error::InvalidEnvironment("rules sized for a different graph".into()));
            }
        }
        let dist_to_goal = graph.costs_from(graph.goal());
        Ok(AippmsProblem {
            graph,
            modalities,
            rules,
            reward,
            budget,
            dist_to_goal,
            prior,
        })
    }

    pub fn graph(&self) -> &LocationGraph {
        &self.graph
    }

    pub fn modalities(&self) -> &[SensingModality] {
        &self.modalities
    }

    pub fn rules(&self) -> &EnvRules {
        &self.rules
    }

    pub fn reward_config(&self) -> &RewardConfig {
        &self.reward
    }

    pub fn budget(&self) -> f64 {
        self.budget
    }

    pub fn goal(&self) -> NodeId {
        self.graph.goal()
    }

    /// Shortest-path cost from `node` to the goal.
    pub fn cost_to_goal(&self, node: NodeId) -> f64 {
        self.dist_to_goal[node]
    }

    pub fn initial_belief(&self) -> BeliefState {
        BeliefState {
            location: self.graph.start(),
            remaining_budget: self.budget,
            gp: self.prior.clone(),
            memory: Memory::default(),
            step: 0,
        }
    }

    fn sense_available(&self, location: NodeId, modality: usize) -> bool {
        if modality >= self.modalities.len() {
            return false;
        }
        match &self.rules {
            EnvRules::Isrs(r) => r.is_beacon(location),
            EnvRules::Rover(_) => true,
        }
    }

    /// Cost of `action` from `b`, or `None` if it is not in `neigh(v) ∪ S`.
    pub fn action_cost(&self, b: &BeliefState, action: &Action) -> Option<f64> {
        match *action {
            Action::Move(target) => self.graph.edge_cost(b.location, target),
            Action::Sense(m) => self.sense_available(b.location, m).then(|| self.modalities[m].cost),
        }
    }

    /// Location after taking `action`.
    pub fn successor_location(&self, b: &BeliefState, action: &Action) -> NodeId {
        match *action {
            Action::Move(target) => target,
            Action::Sense(_) => b.location,
        }
    }

    /// Every action applicable at the current location, moves first.
    pub fn available_actions(&self, b: &BeliefState) -> Vec<Action> {
        let mut actions: Vec<Action> = self
            .graph
            .neighbors(b.location)
            .iter()
            .map(|&(n, _)| Action::Move(n))
            .collect();
        actions.extend(
            (0..self.modalities.len())
                .filter(|&m| self.sense_available(b.location, m))
                .map(Action::Sense),
        );
        actions
    }

    fn is_feasible_with_cost(&self, b: &BeliefState, action: &Action, cost: f64) -> bool {
        let next = self.successor_location(b, action);
        b.remaining_budget - cost + BUDGET_EPS >= self.dist_to_goal[next]
    }

    pub fn is_feasible(&self, b: &BeliefState, action: &Action) -> bool {
        self.action_cost(b, action)
            .is_some_and(|c| self.is_feasible_with_cost(b, action, c))
    }

    /// Actions after which the goal stays reachable; empty when none.
    pub fn feasible_action_list(&self, b: &BeliefState) -> Vec<Action> {
        let mut out = Vec::new();
        for &(n, c) in self.graph.neighbors(b.location) {
            let a = Action::Move(n);
            if self.is_feasible_with_cost(b, &a, c) {
                out.push(a);
            }
        }
        for (m, modality) in self.modalities.iter().enumerate() {
            let a = Action::Sense(m);
            if self.sense_available(b.location, m) && self.is_feasible_with_cost(b, &a, modality.cost) {
                out.push(a);
            }
        }
        out
    }

    pub fn feasible_actions(&self, b: &BeliefState) -> Result<Vec<Action>> {
        let actions = self.feasible_action_list(b);
        if actions.is_empty() {
            Err(Error::NoFeasibleAction)
        } else {
            Ok(actions)
        }
    }

    /// True when the remaining budget cannot pay for any applicable action.
    pub fn is_terminal(&self, b: &BeliefState) -> bool {
        let cheapest = self
            .available_actions(b)
            .iter()
            .filter_map(|a| self.action_cost(b, a))
            .fold(f64::INFINITY, f64::min);
        b.remaining_budget < cheapest
    }

    /// Terminal, or no action keeps the goal reachable.
    pub fn is_done(&self, b: &BeliefState) -> bool {
        self.is_terminal(b) || self.feasible_action_list(b).is_empty()
    }

    /// Locations and noise variances of the measurements `action` produces
    /// when taken from `location`.
    pub fn sensing_footprint(&self, location: NodeId, action: &Action) -> Vec<(NodeId, f64)> {
        match (&self.rules, *action) {
            (EnvRules::Isrs(_), Action::Move(_)) => Vec::new(),
            (EnvRules::Isrs(r), Action::Sense(m)) => {
                let here = self.graph.coord(location);
                let base = self.modalities[m].noise_stddev;
                r.rocks
                    .iter()
                    .filter_map(|&rock| {
                        let at = self.graph.coord(rock);
                        let d = ((at[0] - here[0]).powi(2) + (at[1] - here[1]).powi(2)).sqrt();
                        (d <= r.sensing_radius).then(|| {
                            let sd = fidelity_stddev(base, d, r.decay_distance);
                            (rock, (sd * sd).max(JITTER_FLOOR))
                        })
                    })
                    .collect()
            }
            (EnvRules::Rover(r), Action::Move(target)) => vec![(target, r.spectrometer_noise_variance)],
            (EnvRules::Rover(_), Action::Sense(m)) => vec![(location, self.modalities[m].noise_variance())],
        }
    }

    /// Belief-weighted environment reward of taking `action` from `b`.
    pub fn expected_state_reward(&self, b: &BeliefState, action: &Action) -> f64 {
        match (&self.rules, *action) {
            (EnvRules::Isrs(r), Action::Move(target)) if r.is_rock(target) => {
                if b.memory.has_visited(target) {
                    -self.reward.rock_reward
                } else {
                    let p_good = b.gp.mean_at(target).clamp(0.0, 1.0);
                    self.reward.rock_reward * (2.0 * p_good - 1.0)
                }
            }
            (EnvRules::Rover(r), Action::Sense(m)) if self.modalities[m].reveals_truth => {
                let cell = b.location;
                let p_unseen =
                    r.unseen_probability(b.gp.mean_at(cell), b.gp.variance_at(cell), b.memory.collected_types());
                self.reward.drill_reward * (2.0 * p_unseen - 1.0)
            }
            _ => 0.0,
        }
    }

    /// Expected reward plus weighted variance reduction, or the failure
    /// sentinel when `next` is terminal away from the goal.
    pub fn belief_reward(&self, b: &BeliefState, action: &Action, next: &BeliefState) -> f64 {
        if next.location != self.goal() && self.is_terminal(next) {
            return FAILURE_REWARD;
        }
        self.expected_state_reward(b, action)
            + self.reward.lambda * (b.gp.trace_of_variance() - next.gp.trace_of_variance())
    }

    fn update_memory(&self, memory: &mut Memory, action: &Action, observations: &[Observation]) {
        match (&self.rules, *action) {
            (EnvRules::Isrs(r), Action::Move(target)) if r.is_rock(target) => {
                memory.visit(target);
            }
            (EnvRules::Rover(r), Action::Sense(m)) if self.modalities[m].reveals_truth => {
                for o in observations {
                    memory.collect(r.type_of(o.value));
                }
            }
            _ => {}
        }
    }

    /// Applies an action the caller has already validated.
    fn apply_in_place(&self, b: &mut BeliefState, action: &Action, cost: f64, observations: &[Observation]) {
        b.location = self.successor_location(b, action);
        b.remaining_budget -= cost;
        b.step += 1;
        self.update_memory(&mut b.memory, action, observations);
        for o in observations {
            b.gp.observe_query_point(o.node, o.value, o.noise_variance);
        }
    }

    /// Deterministic budget/location update plus belief conditioning on `observations`.
    pub fn transition(&self, b: &BeliefState, action: &Action, observations: &[Observation]) -> Result<BeliefState> {
        if !self.is_feasible(b, action) {
            return Err(Error::InfeasibleAction(action.to_string()));
        }
        self.apply_checked_cost(b, action, observations)
    }

    /// Like [`transition`](Self::transition) but only requires the action to
    /// be applicable and affordable, not goal-preserving.
    pub fn transition_unpruned(
        &self,
        b: &BeliefState,
        action: &Action,
        observations: &[Observation],
    ) -> Result<BeliefState> {
        match self.action_cost(b, action) {
            Some(c) if c <= b.remaining_budget + BUDGET_EPS => self.apply_checked_cost(b, action, observations),
            _ => Err(Error::InfeasibleAction(action.to_string())),
        }
    }

    fn apply_checked_cost(
        &self,
        b: &BeliefState,
        action: &Action,
        observations: &[Observation],
    ) -> Result<BeliefState> {
        let cost = self
            .action_cost(b, action)
            .ok_or_else(|| Error::InfeasibleAction(action.to_string()))?;
        for o in observations {
            if o.node >= self.graph.len() {
                return Err(Error::InvalidNode(o.node));
            }
            if !(o.noise_variance > 0.0 && o.noise_variance.is_finite()) {
                return Err(Error::InvalidNoise(o.noise_variance));
            }
        }
        let mut next = b.clone();
        self.apply_in_place(&mut next, action, cost, observations);
        Ok(next)
    }

    /// Draws observations from the current belief, applies the action in place
    /// and returns the belief reward.
    fn simulate_in_place<R: Rng + ?Sized>(&self, b: &mut BeliefState, action: &Action, rng: &mut R) -> f64 {
        let cost = self
            .action_cost(b, action)
            .expect("simulated action must be applicable");
        let expected = self.expected_state_reward(b, action);
        let trace_before = b.gp.trace_of_variance();
        let footprint = self.sensing_footprint(b.location, action);
        let mut observations = Vec::with_capacity(footprint.len());
        b.location = self.successor_location(b, action);
        b.remaining_budget -= cost;
        b.step += 1;
        for (node, nu) in footprint {
            let sd = (b.gp.variance_at(node) + nu).sqrt();
            let z: f64 = rng.sample(StandardNormal);
            let value = b.gp.mean_at(node) + sd * z;
            b.gp.observe_query_point(node, value, nu);
            observations.push(Observation {
                node,
                value,
                noise_variance: nu,
            });
        }
        self.update_memory(&mut b.memory, action, &observations);
        if b.location != self.goal() && self.is_terminal(b) {
            return FAILURE_REWARD;
        }
        expected + self.reward.lambda * (trace_before - b.gp.trace_of_variance())
    }

    /// Samples an outcome of `action` from the belief itself.
    pub fn generative_sample<R: Rng + ?Sized>(
        &self,
        b: &BeliefState,
        action: &Action,
        rng: &mut R,
    ) -> Result<(BeliefState, f64)> {
        if !self.is_feasible(b, action) {
            return Err(Error::InfeasibleAction(action.to_string()));
        }
        let mut next = b.clone();
        let reward = self.simulate_in_place(&mut next, action, rng);
        Ok((next, reward))
    }
}

impl BeliefMdp for AippmsProblem {
    type State = BeliefState;
    type Action = Action;

    fn actions(&self, state: &BeliefState) -> Vec<Action> {
        if self.is_terminal(state) {
            Vec::new()
        } else {
            self.feasible_action_list(state)
        }
    }

    fn generate<R: Rng + ?Sized>(&self, state: &BeliefState, action: &Action, rng: &mut R) -> (BeliefState, f64) {
        let mut next = state.clone();
        let reward = self.simulate_in_place(&mut next, action, rng);
        (next, reward)
    }

    fn step<R: Rng + ?Sized>(&self, state: &mut BeliefState, action: &Action, rng: &mut R) -> f64 {
        self.simulate_in_place(state, action, rng)
    }
}
