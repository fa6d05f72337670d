//! The belief MDP: location graph, actions, deterministic transitions,
//! belief-dependent rewards and feasibility pruning.

mod graph;
mod model;

pub use graph::{shortest_path_cost, LocationGraph, NodeId};
pub use model::{
    fidelity_stddev, validate_modalities, Action, AippmsProblem, BeliefState, EnvRules, IsrsRules, Memory, Observation,
    RewardConfig, RoverRules, SensingModality, FAILURE_REWARD,
};
