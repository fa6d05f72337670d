use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use aippms_core::experiment::{EnvKind, ExperimentConfig, SolverKind, SweepConfig};
use aippms_core::{run_batch, sweep, Error};
use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Parser)]
#[command(
    name = "aippms",
    version,
    about = "Informative path planning experiments with MCTS-DPW"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a seeded batch of episodes and write logs and aggregates.
    Run(Flags),
    /// Run every solver over a parameter grid and write a results table.
    Sweep(Flags),
    /// Generate one environment instance as JSON.
    GenInstance(Flags),
}

#[derive(Clone, Copy, ValueEnum)]
enum EnvArg {
    Isrs,
    Rover,
}

#[derive(Clone, Copy, ValueEnum)]
enum SolverArg {
    MctsDpw,
    Random,
    Raster,
}

#[derive(Args)]
struct Flags {
    #[arg(long, value_enum)]
    env: Option<EnvArg>,
    #[arg(long, value_enum)]
    solver: Option<SolverArg>,
    /// Number of rocks (ISRS).
    #[arg(long)]
    k: Option<usize>,
    /// Number of beacons (ISRS).
    #[arg(long)]
    b: Option<usize>,
    /// Probability that a rock is good (ISRS).
    #[arg(long)]
    p: Option<f64>,
    #[arg(long)]
    budget: Option<f64>,
    /// Spectrometer noise standard deviation (Rover).
    #[arg(long)]
    sigma: Option<f64>,
    /// Number of sample types (Rover).
    #[arg(long)]
    beta: Option<usize>,
    /// Grid side length.
    #[arg(long)]
    grid: Option<usize>,
    #[arg(long)]
    runs: Option<usize>,
    /// Base seed; episode i uses seed + i.
    #[arg(long)]
    seed: Option<u64>,
    /// MCTS iterations per decision.
    #[arg(long)]
    iters: Option<usize>,
    /// MCTS maximum search depth.
    #[arg(long)]
    depth: Option<usize>,
    /// Weight of the information term in the reward.
    #[arg(long)]
    lambda: Option<f64>,
    /// JSON config file; flags override its fields.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory (run, sweep) or file (gen-instance).
    #[arg(long)]
    out: Option<PathBuf>,
}

enum Failure {
    Config(String),
    Runtime(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        if e.is_config_error() {
            Failure::Config(e.to_string())
        } else {
            Failure::Runtime(e.to_string())
        }
    }
}

fn read_config(path: &Path) -> Result<serde_json::Value, Failure> {
    let text = fs::read_to_string(path).map_err(|e| Failure::Config(format!("{}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| Failure::Config(format!("{}: {e}", path.display())))
}

fn parse<T: serde::de::DeserializeOwned>(value: serde_json::Value) -> Result<T, Failure> {
    serde_json::from_value(value).map_err(|e| Failure::Config(e.to_string()))
}

impl Flags {
    fn apply(&self, cfg: &mut ExperimentConfig) {
        if let Some(env) = self.env {
            cfg.env = match env {
                EnvArg::Isrs => EnvKind::Isrs,
                EnvArg::Rover => EnvKind::Rover,
            };
        }
        if let Some(s) = self.solver {
            cfg.solver = solver_kind(s);
        }
        if let Some(k) = self.k {
            cfg.isrs.rocks = k;
        }
        if let Some(b) = self.b {
            cfg.isrs.beacons = b;
        }
        if let Some(p) = self.p {
            cfg.isrs.good_probability = p;
        }
        if let Some(budget) = self.budget {
            match cfg.env {
                EnvKind::Isrs => cfg.isrs.budget = budget,
                EnvKind::Rover => cfg.rover.budget = budget,
            }
        }
        if let Some(sigma) = self.sigma {
            cfg.rover.spectrometer_sigma = sigma;
        }
        if let Some(beta) = self.beta {
            cfg.rover.beta = beta;
        }
        if let Some(n) = self.grid {
            cfg.isrs.grid_size = n;
            cfg.rover.grid_size = n;
        }
        if let Some(runs) = self.runs {
            cfg.runs = runs;
        }
        if let Some(seed) = self.seed {
            cfg.base_seed = seed;
        }
        if let Some(iters) = self.iters {
            cfg.solver_config.iterations = iters;
        }
        if let Some(depth) = self.depth {
            cfg.solver_config.max_depth = depth;
        }
        if let Some(lambda) = self.lambda {
            cfg.model.lambda = Some(lambda);
        }
    }

    fn experiment(&self) -> Result<ExperimentConfig, Failure> {
        let mut cfg = match &self.config {
            Some(path) => parse(read_config(path)?)?,
            None => ExperimentConfig::default(),
        };
        self.apply(&mut cfg);
        Ok(cfg)
    }

    /// A sweep config file may be a full sweep spec or just its base experiment.
    fn sweep(&self) -> Result<SweepConfig, Failure> {
        let mut cfg = match &self.config {
            Some(path) => {
                let value = read_config(path)?;
                if value.get("base").is_some() || value.get("cells").is_some() {
                    parse(value)?
                } else {
                    SweepConfig::for_env(parse(value)?)
                }
            }
            None => SweepConfig::default(),
        };
        let env_before = cfg.base.env;
        self.apply(&mut cfg.base);
        if cfg.base.env != env_before || self.config.is_none() {
            let solvers = SweepConfig::for_env(cfg.base.clone());
            cfg.cells = solvers.cells;
            cfg.solvers = solvers.solvers;
        }
        if let Some(s) = self.solver {
            cfg.solvers = vec![solver_kind(s)];
        }
        Ok(cfg)
    }
}

fn solver_kind(s: SolverArg) -> SolverKind {
    match s {
        SolverArg::MctsDpw => SolverKind::MctsDpw,
        SolverArg::Random => SolverKind::Random,
        SolverArg::Raster => SolverKind::Raster,
    }
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map_or_else(|| "--".into(), |x| format!("{x:.3}"))
}

fn run(flags: &Flags) -> Result<(), Failure> {
    let cfg = flags.experiment()?;
    let batch = run_batch(&cfg)?;
    if let Some(dir) = &flags.out {
        batch.write(dir)?;
    }
    let a = &batch.aggregate;
    println!(
        "{} on {:?}: runs {}, failures {}, reward {} +/- {}, final rmse {:.4}, final trace {:.4}",
        cfg.solver.name(),
        cfg.env,
        a.runs,
        a.failures,
        fmt_opt(a.mean_reward),
        fmt_opt(a.std_reward),
        a.mean_final_rmse,
        a.mean_final_trace
    );
    let secs: f64 = a.wall_clock_secs.iter().sum::<f64>() / a.wall_clock_secs.len() as f64;
    eprintln!("wall clock: {secs:.3} s per episode");
    Ok(())
}

fn run_sweep(flags: &Flags) -> Result<(), Failure> {
    let cfg = flags.sweep()?;
    let table = sweep(&cfg)?;
    let csv = table.to_csv()?;
    if let Some(dir) = &flags.out {
        table.write(dir)?;
    }
    print!("{}", csv.lines().skip(1).map(|l| format!("{l}\n")).collect::<String>());
    Ok(())
}

fn gen_instance(flags: &Flags) -> Result<(), Failure> {
    let cfg = flags.experiment()?;
    cfg.validate()?;
    let instance = cfg.instance(cfg.base_seed)?;
    let json = serde_json::to_string_pretty(&instance).map_err(|e| Failure::Runtime(e.to_string()))? + "\n";
    match &flags.out {
        Some(path) => {
            if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
                fs::create_dir_all(parent).map_err(|e| Failure::Runtime(e.to_string()))?;
            }
            fs::write(path, json).map_err(|e| Failure::Runtime(e.to_string()))?;
        }
        None => print!("{json}"),
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Run(f) => run(f),
        Command::Sweep(f) => run_sweep(f),
        Command::GenInstance(f) => gen_instance(f),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Config(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
        Err(Failure::Runtime(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(3)
        }
    }
}
