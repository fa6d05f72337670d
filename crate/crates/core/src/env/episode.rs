use std::fmt::Write as _;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{Instance, ModelConfig};
use crate::error::{Error, Result};
use crate::mdp::{Action, AippmsProblem, Memory, FAILURE_REWARD};
use crate::policy::Policy;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EpisodeStatus {
    ReachedGoal,
    MissionFailure,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub step: usize,
    pub loc_x: usize,
    pub loc_y: usize,
    pub action: String,
    pub budget: f64,
    pub reward: f64,
    pub trace: f64,
    pub rmse: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpisodeLog {
    pub seed: u64,
    pub policy: String,
    pub status: EpisodeStatus,
    pub initial_trace: f64,
    pub initial_rmse: f64,
    pub records: Vec<StepRecord>,
    pub config: serde_json::Value,
}

pub const CSV_HEADER: [&str; 8] = ["step", "loc_x", "loc_y", "action", "budget", "reward", "trace", "rmse"];

impl EpisodeLog {
    /// Sum of the true rewards collected.
    pub fn total_reward(&self) -> f64 {
        self.records.iter().map(|r| r.reward).sum()
    }

    /// `total_reward`, or the failure sentinel on a mission failure.
    pub fn scored_reward(&self) -> f64 {
        match self.status {
            EpisodeStatus::ReachedGoal => self.total_reward(),
            EpisodeStatus::MissionFailure => FAILURE_REWARD,
        }
    }

    pub fn failed(&self) -> bool {
        self.status == EpisodeStatus::MissionFailure
    }

    pub fn final_trace(&self) -> f64 {
        self.records.last().map_or(self.initial_trace, |r| r.trace)
    }

    pub fn final_rmse(&self) -> f64 {
        self.records.last().map_or(self.initial_rmse, |r| r.rmse)
    }

    /// Tr(Σ) at steps `0..=len`, step 0 being the prior.
    pub fn trace_series(&self) -> Vec<f64> {
        std::iter::once(self.initial_trace)
            .chain(self.records.iter().map(|r| r.trace))
            .collect()
    }

    pub fn rmse_series(&self) -> Vec<f64> {
        std::iter::once(self.initial_rmse)
            .chain(self.records.iter().map(|r| r.rmse))
            .collect()
    }

    /// Per-step CSV, preceded by `#` lines carrying the config snapshot.
    pub fn to_csv(&self) -> Result<String> {
        let mut out = String::new();
        let _ = writeln!(out, "# config: {}", self.config);
        let _ = writeln!(
            out,
            "# seed: {} policy: {} status: {:?}",
            self.seed, self.policy, self.status
        );
        let mut w = csv::Writer::from_writer(Vec::new());
        let io = |e: csv::Error| Error::Io(e.to_string());
        w.write_record(CSV_HEADER).map_err(io)?;
        for r in &self.records {
            w.write_record([
                r.step.to_string(),
                r.loc_x.to_string(),
                r.loc_y.to_string(),
                r.action.clone(),
                r.budget.to_string(),
                r.reward.to_string(),
                r.trace.to_string(),
                r.rmse.to_string(),
            ])
            .map_err(io)?;
        }
        let bytes = w.into_inner().map_err(|e| Error::Io(e.to_string()))?;
        out.push_str(&String::from_utf8_lossy(&bytes));
        Ok(out)
    }
}

fn describe(problem: &AippmsProblem, action: &Action) -> String {
    match *action {
        Action::Move(n) => format!("move:{n}"),
        Action::Sense(m) => format!("sense:{}", problem.modalities()[m].name),
    }
}

/// Runs one episode: the policy acts on its belief, the environment answers
/// with true observations and rewards, and the belief is conditioned on them.
///
/// Policies that honor pruning must only return goal-preserving actions;
/// anything else aborts the episode with [`Error::InfeasibleAction`].
/// Open-loop policies may run out of budget, which ends the episode.
pub fn run_episode(instance: &Instance, policy: &mut dyn Policy, model: &ModelConfig, seed: u64) -> Result<EpisodeLog> {
    let problem = instance.problem(model)?;
    policy.begin(instance, &problem)?;
    let mut env_rng = ChaCha8Rng::seed_from_u64(seed);
    env_rng.set_stream(0);
    let mut policy_rng = ChaCha8Rng::seed_from_u64(seed);
    policy_rng.set_stream(1);

    let n = instance.grid_size();
    let pruned = policy.respects_pruning();
    let mut belief = problem.initial_belief();
    let mut truth = Memory::default();
    let initial_trace = belief.gp.trace_of_variance();
    let initial_rmse = instance.rmse(&belief.gp);
    let mut records = Vec::new();

    loop {
        if problem.is_terminal(&belief) {
            break;
        }
        if pruned && problem.feasible_action_list(&belief).is_empty() {
            break;
        }
        let Some(action) = policy.act(&problem, &belief, &mut policy_rng)? else {
            break;
        };
        let cost = problem
            .action_cost(&belief, &action)
            .ok_or_else(|| Error::InfeasibleAction(action.to_string()))?;
        if pruned {
            if !problem.is_feasible(&belief, &action) {
                return Err(Error::InfeasibleAction(action.to_string()));
            }
        } else if cost > belief.remaining_budget {
            break;
        }
        let reward = instance.true_reward(&truth, belief.location, &action);
        let observations = instance.observe(belief.location, &action, &mut env_rng)?;
        instance.record(&mut truth, belief.location, &action);
        belief = problem.transition_unpruned(&belief, &action, &observations)?;
        records.push(StepRecord {
            step: belief.step,
            loc_x: belief.location % n,
            loc_y: belief.location / n,
            action: describe(&problem, &action),
            budget: belief.remaining_budget,
            reward,
            trace: belief.gp.trace_of_variance(),
            rmse: instance.rmse(&belief.gp),
        });
    }

    let status = if belief.location == problem.goal() {
        EpisodeStatus::ReachedGoal
    } else {
        EpisodeStatus::MissionFailure
    };
    Ok(EpisodeLog {
        seed,
        policy: policy.name().to_string(),
        status,
        initial_trace,
        initial_rmse,
        records,
        config: serde_json::to_value(model)?,
    })
}
