//! Policies that drive episodes: the MCTS-DPW planner and the two
//! comparison baselines.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::env::rover::DRILL;
use crate::env::{Instance, RoverInstance};
use crate::error::{Error, Result};
use crate::mcts::{child_rng, MctsDpw, SolverConfig};
use crate::mdp::{Action, AippmsProblem, BeliefState, NodeId};

pub trait Policy {
    fn name(&self) -> &str;

    /// Whether every action is drawn from the feasibility-pruned set.
    fn respects_pruning(&self) -> bool {
        true
    }

    /// Called once before the first action of an episode.
    fn begin(&mut self, _instance: &Instance, _problem: &AippmsProblem) -> Result<()> {
        Ok(())
    }

    /// Next action, or `None` to stop acting.
    fn act(&mut self, problem: &AippmsProblem, belief: &BeliefState, rng: &mut ChaCha8Rng) -> Result<Option<Action>>;
}

/// Uniform draw from the feasible actions.
pub fn random_policy<R: Rng + ?Sized>(problem: &AippmsProblem, belief: &BeliefState, rng: &mut R) -> Result<Action> {
    if problem.is_terminal(belief) {
        return Err(Error::NoFeasibleAction);
    }
    let actions = problem.feasible_actions(belief)?;
    Ok(actions[rng.random_range(0..actions.len())])
}

#[derive(Clone, Debug, Default)]
pub struct RandomPolicy;

impl Policy for RandomPolicy {
    fn name(&self) -> &str {
        "random"
    }

    fn act(&mut self, problem: &AippmsProblem, belief: &BeliefState, rng: &mut ChaCha8Rng) -> Result<Option<Action>> {
        random_policy(problem, belief, rng).map(Some)
    }
}

#[derive(Clone, Debug)]
pub struct MctsPolicy {
    pub config: SolverConfig,
}

impl MctsPolicy {
    pub fn new(config: SolverConfig) -> Result<Self> {
        config.validate()?;
        Ok(MctsPolicy { config })
    }
}

impl Policy for MctsPolicy {
    fn name(&self) -> &str {
        "mcts-dpw"
    }

    fn act(&mut self, problem: &AippmsProblem, belief: &BeliefState, rng: &mut ChaCha8Rng) -> Result<Option<Action>> {
        let planner = MctsDpw::new(problem, self.config)?;
        let mut plan_rng = child_rng(rng);
        planner.plan_with_rng(belief, &mut plan_rng).map(Some)
    }
}

/// Boustrophedon sweep with drills spread evenly along it.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RasterPlan {
    /// Cells in visiting order, start first.
    pub sweep: Vec<NodeId>,
    /// Cells where a drill is scheduled, in sweep order.
    pub drill_cells: Vec<NodeId>,
    pub actions: Vec<Action>,
}

impl RasterPlan {
    pub fn moves(&self) -> usize {
        self.sweep.len().saturating_sub(1)
    }

    pub fn drills(&self) -> usize {
        self.drill_cells.len()
    }
}

/// Row-major boustrophedon from the corner `(0, 0)` to `(n-1, n-1)`.
///
/// For odd `n` this is a Hamiltonian path. For even `n` no Hamiltonian path
/// joins those corners, so the last two rows are swept column by column and
/// cell `(n-1, n-2)` is skipped.
fn corner_sweep(n: usize) -> Vec<NodeId> {
    let id = |x: usize, y: usize| y * n + x;
    let mut cells = Vec::with_capacity(n * n);
    let full_rows = if n % 2 == 1 { n } else { n - 2 };
    for y in 0..full_rows {
        if y % 2 == 0 {
            cells.extend((0..n).map(|x| id(x, y)));
        } else {
            cells.extend((0..n).rev().map(|x| id(x, y)));
        }
    }
    if n.is_multiple_of(2) {
        let (lo, hi) = (n - 2, n - 1);
        for x in 0..n - 1 {
            if x % 2 == 0 {
                cells.extend([id(x, lo), id(x, hi)]);
            } else {
                cells.extend([id(x, hi), id(x, lo)]);
            }
        }
        cells.push(id(n - 1, hi));
    }
    cells
}

fn sweep_for(inst: &RoverInstance) -> Result<Vec<NodeId>> {
    let n = inst.grid_size;
    if inst.start == 0 && inst.goal == n * n - 1 {
        return Ok(corner_sweep(n));
    }
    // Other endpoints: reach the corner, sweep, then head to the goal.
    let graph = inst.graph()?;
    let mut cells = graph.shortest_path(inst.start, 0)?;
    cells.pop();
    let sweep: Vec<NodeId> = (0..n)
        .flat_map(|y| {
            let row: Vec<NodeId> = (0..n).map(|x| y * n + x).collect();
            if y % 2 == 0 {
                row
            } else {
                row.into_iter().rev().collect()
            }
        })
        .collect();
    let last = *sweep.last().expect("grid is non-empty");
    cells.extend(sweep);
    cells.extend(graph.shortest_path(last, inst.goal)?.into_iter().skip(1));
    Ok(cells)
}

/// Deterministic sweep plan for a rover instance. Drills fill whatever budget
/// the sweep leaves, one per evenly spaced sweep index.
pub fn raster_policy(inst: &RoverInstance) -> Result<RasterPlan> {
    let sweep = sweep_for(inst)?;
    let moves = sweep.len() - 1;
    let spare = inst.budget - moves as f64 * inst.step_cost;
    let drills = if spare > 0.0 {
        ((spare / inst.drill_cost).floor() as usize).min(sweep.len())
    } else {
        0
    };
    let mut drill_at = vec![false; sweep.len()];
    for i in 0..drills {
        let index = ((i as f64 + 0.5) * sweep.len() as f64 / drills as f64).floor() as usize;
        drill_at[index.min(sweep.len() - 1)] = true;
    }
    let mut actions = Vec::with_capacity(sweep.len() + drills);
    let mut drill_cells = Vec::with_capacity(drills);
    for (i, &cell) in sweep.iter().enumerate() {
        if drill_at[i] {
            actions.push(Action::Sense(DRILL));
            drill_cells.push(cell);
        }
        if let Some(&next) = sweep.get(i + 1) {
            actions.push(Action::Move(next));
        }
    }
    Ok(RasterPlan {
        sweep,
        drill_cells,
        actions,
    })
}

/// Replays a [`RasterPlan`] open-loop.
#[derive(Clone, Debug, Default)]
pub struct RasterPolicy {
    plan: Vec<Action>,
    cursor: usize,
}

impl Policy for RasterPolicy {
    fn name(&self) -> &str {
        "raster"
    }

    fn respects_pruning(&self) -> bool {
        false
    }

    fn begin(&mut self, instance: &Instance, _problem: &AippmsProblem) -> Result<()> {
        match instance {
            Instance::Rover(r) => {
                self.plan = raster_policy(r)?.actions;
                self.cursor = 0;
                Ok(())
            }
            Instance::Isrs(_) => Err(Error::InvalidConfig(
                "the raster policy applies to the rover environment only".into(),
            )),
        }
    }

    fn act(
        &mut self,
        _problem: &AippmsProblem,
        _belief: &BeliefState,
        _rng: &mut ChaCha8Rng,
    ) -> Result<Option<Action>> {
        let next = self.plan.get(self.cursor).copied();
        self.cursor += 1;
        Ok(next)
    }
}
