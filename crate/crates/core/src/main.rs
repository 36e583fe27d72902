use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use log::info;

use robust_bo::acquisition::{AcquisitionKind, AcquisitionSpec};
use robust_bo::benchmarks::{GravityScenario, Objective};
use robust_bo::harness::{
    self, aggregate, cache_dir, cached_ground_truth, run_experiment, write_outcome, ExperimentConfig,
    HyperparameterMode, ObjectiveConfig, RegretTrace,
};
use robust_bo::{Error, Result};

#[derive(Parser)]
#[command(name = "robust-bo", version, about = "Bayesian optimization under input noise")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Execute an experiment config.
    Run(RunArgs),
    /// GP-prior samples with hyperparameters fixed to the truth, one per seed.
    WithinModel(WithinArgs),
    /// Compute and cache the robust optimum of an objective.
    GroundTruth {
        #[arg(long)]
        objective: String,
        /// Gravity scenario file.
        #[arg(long)]
        scenario: Option<PathBuf>,
    },
    /// Fold trace files into percentile curves.
    Aggregate {
        /// Trace CSV files or directories containing `trace_*.csv`.
        #[arg(required = true)]
        inputs: Vec<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Simulate a single gravity-assist trajectory.
    Gravity {
        /// Launch angle in degrees.
        #[arg(long)]
        alpha: f64,
        #[arg(long)]
        speed: f64,
        #[arg(long)]
        scenario: Option<PathBuf>,
        /// Write the trajectory as `t,x,y` CSV.
        #[arg(long)]
        trajectory: Option<PathBuf>,
    },
}

#[derive(Args)]
struct Overrides {
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    reps: Option<usize>,
    #[arg(long)]
    iters: Option<usize>,
    #[arg(long)]
    acquisition: Option<String>,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    workers: Option<usize>,
}

#[derive(Args)]
struct RunArgs {
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    objective: Option<String>,
    #[command(flatten)]
    overrides: Overrides,
}

#[derive(Args)]
struct WithinArgs {
    #[command(flatten)]
    overrides: Overrides,
}

fn apply(cfg: &mut ExperimentConfig, o: &Overrides) -> Result<()> {
    if let Some(s) = o.seed {
        cfg.seed = s;
    }
    if let Some(r) = o.reps {
        cfg.repetitions = r;
    }
    if let Some(i) = o.iters {
        cfg.iterations = i;
    }
    if let Some(a) = &o.acquisition {
        cfg.acquisition.kind = a.parse::<AcquisitionKind>()?;
    }
    if let Some(out) = &o.out {
        cfg.output_dir = out.clone();
    }
    if o.workers.is_some() {
        cfg.workers = o.workers;
    }
    cfg.validate()
}

fn execute(cfg: &ExperimentConfig) -> Result<()> {
    let outcome = run_experiment(cfg, &cache_dir())?;
    write_outcome(&outcome, &cfg.output_dir)?;
    let s = &outcome.summary;
    println!(
        "{} / {}: {} of {} repetitions completed, results in {}",
        s.objective,
        s.acquisition,
        s.completed,
        s.repetitions,
        cfg.output_dir.display()
    );
    if s.completed == 0 {
        return Err(Error::NumericalFailure("every repetition failed".into()));
    }
    Ok(())
}

fn collect_traces(inputs: &[PathBuf]) -> Result<Vec<RegretTrace>> {
    let mut files = Vec::new();
    for p in inputs {
        if p.is_dir() {
            let mut found: Vec<PathBuf> = std::fs::read_dir(p)?
                .filter_map(|e| e.ok().map(|e| e.path()))
                .filter(|f| {
                    f.file_name()
                        .and_then(|n| n.to_str())
                        .is_some_and(|n| n.starts_with("trace_") && n.ends_with(".csv"))
                })
                .collect();
            found.sort();
            files.extend(found);
        } else {
            files.push(p.clone());
        }
    }
    files.iter().map(|f| RegretTrace::load(f)).collect()
}

fn load_scenario(path: Option<&Path>) -> Result<GravityScenario> {
    match path {
        Some(p) => GravityScenario::load(p).map_err(|e| Error::Config(e.to_string())),
        None => Ok(GravityScenario::default()),
    }
}

fn dispatch(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Run(args) => {
            let mut cfg = match (&args.config, &args.objective) {
                (Some(path), _) => ExperimentConfig::load(path)?,
                (None, Some(name)) => ExperimentConfig::new(name, AcquisitionSpec::default(), 20),
                (None, None) => return Err(Error::Config("`run` needs --config or --objective".into())),
            };
            if let (Some(_), Some(name)) = (&args.config, &args.objective) {
                cfg.objective = ObjectiveConfig::named(name);
            }
            apply(&mut cfg, &args.overrides)?;
            execute(&cfg)
        }
        Command::WithinModel(args) => {
            let mut cfg = ExperimentConfig::new("gp_sample", AcquisitionSpec::default(), 50);
            cfg.objective.seed_per_repetition = true;
            cfg.hyperparameters = HyperparameterMode::Fixed;
            cfg.repetitions = 50;
            cfg.output_dir = PathBuf::from("results/within-model");
            apply(&mut cfg, &args.overrides)?;
            execute(&cfg)
        }
        Command::GroundTruth { objective, scenario } => {
            let obj = match scenario {
                Some(p) if objective == "gravity" => Objective::gravity(load_scenario(Some(&p))?)?,
                Some(_) => return Err(Error::Config("--scenario only applies to gravity".into())),
                None => Objective::by_name(&objective)?,
            };
            let dir = cache_dir();
            match cached_ground_truth(&obj, &dir)? {
                Some(opt) => {
                    println!("g* = {}", harness::trace::format_float(opt.value));
                    println!("x* = {:?}", opt.location);
                    println!("cache: {}", harness::run::cache_path(&obj, &dir).display());
                    Ok(())
                }
                None => Err(Error::UnsupportedDimension {
                    dim: obj.dim(),
                    reason: "grid ground truth is limited to three inputs",
                }),
            }
        }
        Command::Aggregate { inputs, out } => {
            let traces = collect_traces(&inputs)?;
            let rows = aggregate(&traces)?;
            if let Some(parent) = out.parent().filter(|p| !p.as_os_str().is_empty()) {
                std::fs::create_dir_all(parent)?;
            }
            harness::trace::write_aggregate(&rows, std::fs::File::create(&out)?)?;
            println!("aggregated {} traces into {}", traces.len(), out.display());
            Ok(())
        }
        Command::Gravity { alpha, speed, scenario, trajectory } => {
            let s = load_scenario(scenario.as_deref())?;
            let t = s.simulate_trajectory(alpha, speed)?;
            let j = robust_bo::benchmarks::gravity::cost_to_objective(t.d_target, s.beta_cost, speed);
            println!("d_target = {}", t.d_target);
            println!("objective = {j}");
            if let Some(path) = trajectory {
                let mut w = csv::Writer::from_path(&path).map_err(|e| Error::Config(e.to_string()))?;
                w.write_record(["t", "x", "y"]).map_err(|e| Error::Config(e.to_string()))?;
                for (i, p) in t.points.iter().enumerate() {
                    let time = i as f64 * s.integrator_step;
                    w.write_record([time.to_string(), p[0].to_string(), p[1].to_string()])
                        .map_err(|e| Error::Config(e.to_string()))?;
                }
                w.flush()?;
                info!("trajectory written to {}", path.display());
            }
            Ok(())
        }
    }
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Config(_) | Error::InvalidArgument(_) => 2,
        _ => 3,
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(2) } else { ExitCode::SUCCESS };
        }
    };
    match dispatch(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
