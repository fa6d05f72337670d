//! Adaptive informative path planning with multimodal sensing, solved as a
//! belief MDP over Gaussian-process beliefs with MCTS-DPW.
//!
//! - [`gp`]: GP posterior, entropy and mutual information.
//! - [`mdp`]: location graph, belief states, transitions, rewards, pruning.
//! - [`mcts`]: the MCTS-DPW planner over any [`BeliefMdp`].
//! - [`env`]: ISRS and Rover Exploration simulators and the episode runner.
//! - [`policy`]: planner and baseline policies.
//! - [`experiment`]: seeded batches, sweeps and output files.

pub mod env;
pub mod error;
pub mod experiment;
pub mod gp;
pub mod mcts;
pub mod mdp;
pub mod policy;

pub use env::{run_episode, EpisodeLog, EpisodeStatus, Instance, IsrsInstance, ModelConfig, RoverInstance};
pub use error::{Error, Result};
pub use experiment::{run_batch, sweep, AggregateResult, ExperimentConfig, SolverKind, SweepConfig};
pub use gp::{
    conditional_entropy, mutual_information_exact, mutual_information_trace, GaussianProcessBelief, KernelSpec,
    PosteriorSummary,
};
pub use mcts::{BeliefMdp, MctsDpw, SolverConfig};
pub use mdp::{Action, AippmsProblem, BeliefState, LocationGraph, NodeId, SensingModality};
pub use policy::{random_policy, raster_policy, Policy};
