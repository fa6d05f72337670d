//! Seeded batch experiments, parameter sweeps and their CSV/JSON output.

use std::fs;
use std::path::Path;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::env::{
    generate_isrs, generate_rover, run_episode, EpisodeLog, Instance, IsrsParams, ModelConfig, RoverParams,
};
use crate::error::{Error, Result};
use crate::mcts::SolverConfig;
use crate::policy::{MctsPolicy, Policy, RandomPolicy, RasterPolicy};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EnvKind {
    Isrs,
    Rover,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SolverKind {
    MctsDpw,
    Random,
    Raster,
}

impl SolverKind {
    pub fn name(self) -> &'static str {
        match self {
            SolverKind::MctsDpw => "mcts-dpw",
            SolverKind::Random => "random",
            SolverKind::Raster => "raster",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub env: EnvKind,
    pub isrs: IsrsParams,
    pub rover: RoverParams,
    pub solver: SolverKind,
    pub solver_config: SolverConfig,
    pub model: ModelConfig,
    pub runs: usize,
    pub base_seed: u64,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            env: EnvKind::Isrs,
            isrs: IsrsParams::default(),
            rover: RoverParams::default(),
            solver: SolverKind::MctsDpw,
            solver_config: SolverConfig::default(),
            model: ModelConfig::default(),
            runs: 50,
            base_seed: 0,
        }
    }
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        if self.runs == 0 {
            return Err(Error::InvalidConfig("runs must be at least 1".into()));
        }
        if self.solver == SolverKind::Raster && self.env != EnvKind::Rover {
            return Err(Error::InvalidConfig(
                "the raster solver applies to the rover environment only".into(),
            ));
        }
        self.solver_config.validate()?;
        self.model.kernel.validate()?;
        if !self.model.prior_mean.is_finite() {
            return Err(Error::InvalidConfig("prior mean must be finite".into()));
        }
        if let Some(l) = self.model.lambda {
            if !(l >= 0.0 && l.is_finite()) {
                return Err(Error::InvalidConfig(format!("lambda must be non-negative, got {l}")));
            }
        }
        // Generating one instance exercises every environment parameter check.
        self.instance(self.base_seed)?.problem(&self.model)?;
        Ok(())
    }

    pub fn instance(&self, seed: u64) -> Result<Instance> {
        match self.env {
            EnvKind::Isrs => generate_isrs(&self.isrs, seed).map(Instance::Isrs),
            EnvKind::Rover => generate_rover(&self.rover, seed).map(Instance::Rover),
        }
    }

    pub fn policy(&self) -> Result<Box<dyn Policy>> {
        Ok(match self.solver {
            SolverKind::MctsDpw => Box::new(MctsPolicy::new(self.solver_config)?),
            SolverKind::Random => Box::new(RandomPolicy),
            SolverKind::Raster => Box::new(RasterPolicy::default()),
        })
    }

    /// Seed of the `i`-th episode.
    pub fn seed(&self, i: usize) -> u64 {
        self.base_seed.wrapping_add(i as u64)
    }

    /// Generates the instance for `seed` and runs one episode on it.
    pub fn run_one(&self, seed: u64) -> Result<EpisodeLog> {
        let instance = self.instance(seed)?;
        let mut policy = self.policy()?;
        let mut log = run_episode(&instance, policy.as_mut(), &self.model, seed)?;
        log.config = serde_json::to_value(self)?;
        Ok(log)
    }
}

/// Per-step mean and population standard deviation across episodes.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Curves {
    pub trace_mean: Vec<f64>,
    pub trace_std: Vec<f64>,
    pub rmse_mean: Vec<f64>,
    pub rmse_std: Vec<f64>,
}

impl Curves {
    pub fn len(&self) -> usize {
        self.trace_mean.len()
    }

    pub fn is_empty(&self) -> bool {
        self.trace_mean.is_empty()
    }
}

fn mean_std(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    (mean, var.sqrt())
}

fn padded(series: &[f64], len: usize) -> impl Iterator<Item = f64> + '_ {
    let last = *series.last().expect("series include the prior step");
    series.iter().copied().chain(std::iter::repeat(last)).take(len)
}

fn column_stats(series: &[Vec<f64>], len: usize) -> (Vec<f64>, Vec<f64>) {
    let padded: Vec<Vec<f64>> = series.iter().map(|s| padded(s, len).collect()).collect();
    (0..len)
        .map(|t| {
            let col: Vec<f64> = padded.iter().map(|s| s[t]).collect();
            mean_std(&col)
        })
        .unzip()
}

/// Tr(Σ) and RMSE curves over steps, shorter episodes padded with their final values.
pub fn emit_curves(logs: &[EpisodeLog]) -> Result<Curves> {
    if logs.is_empty() {
        return Err(Error::InvalidConfig("curves need at least one episode".into()));
    }
    let traces: Vec<Vec<f64>> = logs.iter().map(EpisodeLog::trace_series).collect();
    let rmses: Vec<Vec<f64>> = logs.iter().map(EpisodeLog::rmse_series).collect();
    let len = traces.iter().map(Vec::len).max().unwrap_or(0);
    let (trace_mean, trace_std) = column_stats(&traces, len);
    let (rmse_mean, rmse_std) = column_stats(&rmses, len);
    Ok(Curves {
        trace_mean,
        trace_std,
        rmse_mean,
        rmse_std,
    })
}

/// Summary of a batch. Reward statistics cover successful episodes only;
/// failures are counted separately. Undefined statistics serialize as null.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AggregateResult {
    pub runs: usize,
    pub failures: usize,
    pub mean_reward: Option<f64>,
    pub std_reward: Option<f64>,
    pub mean_final_rmse: f64,
    pub mean_final_trace: f64,
    pub trace_curve: Vec<f64>,
    pub rmse_curve: Vec<f64>,
    /// Seconds per episode; kept out of serialized output.
    #[serde(skip)]
    pub wall_clock_secs: Vec<f64>,
}

impl AggregateResult {
    pub fn from_logs(logs: &[EpisodeLog]) -> Result<Self> {
        let curves = emit_curves(logs)?;
        let rewards: Vec<f64> = logs
            .iter()
            .filter(|l| !l.failed())
            .map(EpisodeLog::total_reward)
            .collect();
        let (mean_reward, std_reward) = if rewards.is_empty() {
            (None, None)
        } else {
            let (m, s) = mean_std(&rewards);
            (Some(m), Some(s))
        };
        let n = logs.len() as f64;
        Ok(AggregateResult {
            runs: logs.len(),
            failures: logs.len() - rewards.len(),
            mean_reward,
            std_reward,
            mean_final_rmse: logs.iter().map(EpisodeLog::final_rmse).sum::<f64>() / n,
            mean_final_trace: logs.iter().map(EpisodeLog::final_trace).sum::<f64>() / n,
            trace_curve: curves.trace_mean,
            rmse_curve: curves.rmse_mean,
            wall_clock_secs: Vec::new(),
        })
    }
}

#[derive(Clone, Debug)]
pub struct BatchResult {
    pub config: ExperimentConfig,
    pub logs: Vec<EpisodeLog>,
    pub aggregate: AggregateResult,
}

/// Runs `cfg.runs` episodes with seeds `base_seed + i`. Episodes run in
/// parallel; results are always ordered by seed.
pub fn run_batch(cfg: &ExperimentConfig) -> Result<BatchResult> {
    cfg.validate()?;
    let timed: Vec<Result<(EpisodeLog, f64)>> = (0..cfg.runs)
        .into_par_iter()
        .map(|i| {
            let start = Instant::now();
            let log = cfg.run_one(cfg.seed(i))?;
            Ok((log, start.elapsed().as_secs_f64()))
        })
        .collect();
    let mut logs = Vec::with_capacity(cfg.runs);
    let mut secs = Vec::with_capacity(cfg.runs);
    for r in timed {
        let (log, s) = r?;
        logs.push(log);
        secs.push(s);
    }
    let mut aggregate = AggregateResult::from_logs(&logs)?;
    aggregate.wall_clock_secs = secs;
    Ok(BatchResult {
        config: cfg.clone(),
        logs,
        aggregate,
    })
}

/// Instance parameters of one sweep row.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "env", rename_all = "kebab-case")]
pub enum SweepCell {
    Isrs { k: usize, b: usize, p: f64 },
    Rover { budget: f64, sigma: f64 },
}

impl SweepCell {
    pub fn env(&self) -> EnvKind {
        match self {
            SweepCell::Isrs { .. } => EnvKind::Isrs,
            SweepCell::Rover { .. } => EnvKind::Rover,
        }
    }

    pub fn apply(&self, base: &ExperimentConfig) -> ExperimentConfig {
        let mut cfg = base.clone();
        cfg.env = self.env();
        match *self {
            SweepCell::Isrs { k, b, p } => {
                cfg.isrs.rocks = k;
                cfg.isrs.beacons = b;
                cfg.isrs.good_probability = p;
            }
            SweepCell::Rover { budget, sigma } => {
                cfg.rover.budget = budget;
                cfg.rover.spectrometer_sigma = sigma;
            }
        }
        cfg
    }

    fn header(env: EnvKind) -> &'static [&'static str] {
        match env {
            EnvKind::Isrs => &["k", "b", "p"],
            EnvKind::Rover => &["budget", "sigma"],
        }
    }

    fn values(&self) -> Vec<String> {
        match *self {
            SweepCell::Isrs { k, b, p } => vec![k.to_string(), b.to_string(), p.to_string()],
            SweepCell::Rover { budget, sigma } => vec![budget.to_string(), sigma.to_string()],
        }
    }
}

/// Rocks and beacons in {10, 25}, good-rock probability in {0.5, 0.75, 1.0}.
pub fn isrs_grid() -> Vec<SweepCell> {
    let mut cells = Vec::new();
    for k in [10, 25] {
        for b in [10, 25] {
            for p in [0.5, 0.75, 1.0] {
                cells.push(SweepCell::Isrs { k, b, p });
            }
        }
    }
    cells
}

/// Budget in {30, 60, 100}, spectrometer noise in {0.1, 0.5, 1.0}.
pub fn rover_grid() -> Vec<SweepCell> {
    let mut cells = Vec::new();
    for budget in [30.0, 60.0, 100.0] {
        for sigma in [0.1, 0.5, 1.0] {
            cells.push(SweepCell::Rover { budget, sigma });
        }
    }
    cells
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepConfig {
    pub base: ExperimentConfig,
    pub cells: Vec<SweepCell>,
    pub solvers: Vec<SolverKind>,
}

impl Default for SweepConfig {
    fn default() -> Self {
        SweepConfig::for_env(ExperimentConfig::default())
    }
}

impl SweepConfig {
    /// The standard grid and solver columns for `base.env`.
    pub fn for_env(base: ExperimentConfig) -> Self {
        let (cells, solvers) = match base.env {
            EnvKind::Isrs => (isrs_grid(), vec![SolverKind::MctsDpw, SolverKind::Random]),
            EnvKind::Rover => (
                rover_grid(),
                vec![SolverKind::MctsDpw, SolverKind::Random, SolverKind::Raster],
            ),
        };
        SweepConfig { base, cells, solvers }
    }

    pub fn validate(&self) -> Result<()> {
        if self.cells.is_empty() {
            return Err(Error::InvalidConfig("sweep grid is empty".into()));
        }
        if self.solvers.is_empty() {
            return Err(Error::InvalidConfig("sweep needs at least one solver".into()));
        }
        let env = self.cells[0].env();
        if self.cells.iter().any(|c| c.env() != env) {
            return Err(Error::InvalidConfig("sweep cells mix environments".into()));
        }
        if self.base.runs == 0 {
            return Err(Error::InvalidConfig("runs must be at least 1".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepEntry {
    pub solver: SolverKind,
    pub result: Option<AggregateResult>,
    pub error: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub cell: SweepCell,
    pub entries: Vec<SweepEntry>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepTable {
    pub config: SweepConfig,
    pub rows: Vec<SweepRow>,
}

/// Runs every solver on every cell. A failing cell is recorded in its row
/// and the sweep moves on.
pub fn sweep(cfg: &SweepConfig) -> Result<SweepTable> {
    cfg.validate()?;
    let rows = cfg
        .cells
        .iter()
        .map(|cell| {
            let entries = cfg
                .solvers
                .iter()
                .map(|&solver| {
                    let mut run = cell.apply(&cfg.base);
                    run.solver = solver;
                    match run_batch(&run) {
                        Ok(batch) => SweepEntry {
                            solver,
                            result: Some(batch.aggregate),
                            error: None,
                        },
                        Err(e) => SweepEntry {
                            solver,
                            result: None,
                            error: Some(e.to_string()),
                        },
                    }
                })
                .collect();
            SweepRow { cell: *cell, entries }
        })
        .collect();
    Ok(SweepTable {
        config: cfg.clone(),
        rows,
    })
}

fn opt(v: Option<f64>) -> String {
    v.map_or_else(|| "--".to_string(), |x| x.to_string())
}

fn config_line(config: &impl Serialize) -> Result<String> {
    Ok(format!("# config: {}\n", serde_json::to_string(config)?))
}

fn csv_body(header: &[String], rows: &[Vec<String>]) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(header).map_err(csv_err)?;
    for r in rows {
        w.write_record(r).map_err(csv_err)?;
    }
    let bytes = w.into_inner().map_err(|e| Error::Io(e.to_string()))?;
    String::from_utf8(bytes).map_err(|e| Error::Io(e.to_string()))
}

fn csv_err(e: csv::Error) -> Error {
    Error::Io(e.to_string())
}

impl SweepTable {
    /// One row per cell; per solver a mean, standard deviation and failure count.
    pub fn to_csv(&self) -> Result<String> {
        let env = self.config.cells[0].env();
        let mut header: Vec<String> = SweepCell::header(env).iter().map(|s| s.to_string()).collect();
        for s in &self.config.solvers {
            for col in ["mean", "std", "failures", "error"] {
                header.push(format!("{}_{col}", s.name()));
            }
        }
        let rows: Vec<Vec<String>> = self
            .rows
            .iter()
            .map(|row| {
                let mut out = row.cell.values();
                for e in &row.entries {
                    match &e.result {
                        Some(a) => out.extend([
                            opt(a.mean_reward),
                            opt(a.std_reward),
                            a.failures.to_string(),
                            String::new(),
                        ]),
                        None => out.extend([
                            "--".into(),
                            "--".into(),
                            "--".into(),
                            e.error.clone().unwrap_or_default(),
                        ]),
                    }
                }
                out
            })
            .collect();
        Ok(config_line(&self.config)? + &csv_body(&header, &rows)?)
    }

    pub fn write(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir)?;
        fs::write(
            dir.join("config.json"),
            serde_json::to_string_pretty(&self.config)? + "\n",
        )?;
        fs::write(dir.join("table.csv"), self.to_csv()?)?;
        fs::write(dir.join("sweep.json"), serde_json::to_string_pretty(self)? + "\n")?;
        Ok(())
    }
}

pub const EPISODES_HEADER: [&str; 8] = [
    "seed",
    "policy",
    "status",
    "steps",
    "total_reward",
    "scored_reward",
    "final_trace",
    "final_rmse",
];

impl Curves {
    pub fn to_csv(&self, config: &impl Serialize) -> Result<String> {
        let header: Vec<String> = ["step", "trace_mean", "trace_std", "rmse_mean", "rmse_std"]
            .iter()
            .map(|s| s.to_string())
            .collect();
        let rows: Vec<Vec<String>> = (0..self.len())
            .map(|t| {
                vec![
                    t.to_string(),
                    self.trace_mean[t].to_string(),
                    self.trace_std[t].to_string(),
                    self.rmse_mean[t].to_string(),
                    self.rmse_std[t].to_string(),
                ]
            })
            .collect();
        Ok(config_line(config)? + &csv_body(&header, &rows)?)
    }
}

#[derive(Serialize)]
struct Summary<'a> {
    config: &'a ExperimentConfig,
    aggregate: &'a AggregateResult,
}

impl BatchResult {
    /// One line per episode, in seed order.
    pub fn episodes_csv(&self) -> Result<String> {
        let header: Vec<String> = EPISODES_HEADER.iter().map(|s| s.to_string()).collect();
        let rows: Vec<Vec<String>> = self
            .logs
            .iter()
            .map(|l| {
                vec![
                    l.seed.to_string(),
                    l.policy.clone(),
                    status_name(l),
                    l.records.len().to_string(),
                    l.total_reward().to_string(),
                    l.scored_reward().to_string(),
                    l.final_trace().to_string(),
                    l.final_rmse().to_string(),
                ]
            })
            .collect();
        Ok(config_line(&self.config)? + &csv_body(&header, &rows)?)
    }

    pub fn summary_json(&self) -> Result<String> {
        let summary = Summary {
            config: &self.config,
            aggregate: &self.aggregate,
        };
        Ok(serde_json::to_string_pretty(&summary)? + "\n")
    }

    /// Writes `config.json`, `episodes.csv`, `summary.json`, `curves.csv`
    /// and per-episode logs under `episodes/`.
    pub fn write(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir)?;
        fs::write(
            dir.join("config.json"),
            serde_json::to_string_pretty(&self.config)? + "\n",
        )?;
        fs::write(dir.join("episodes.csv"), self.episodes_csv()?)?;
        fs::write(dir.join("summary.json"), self.summary_json()?)?;
        fs::write(dir.join("curves.csv"), emit_curves(&self.logs)?.to_csv(&self.config)?)?;
        let episodes = dir.join("episodes");
        fs::create_dir_all(&episodes)?;
        for log in &self.logs {
            fs::write(episodes.join(format!("seed-{}.csv", log.seed)), log.to_csv()?)?;
            fs::write(
                episodes.join(format!("seed-{}.json", log.seed)),
                serde_json::to_string_pretty(log)? + "\n",
            )?;
        }
        Ok(())
    }
}

fn status_name(log: &EpisodeLog) -> String {
    serde_json::to_value(log.status)
        .ok()
        .and_then(|v| v.as_str().map(str::to_string))
        .unwrap_or_default()
}
