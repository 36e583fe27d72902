use std::path::{Path, PathBuf};
use std::time::Instant;

use log::{info, warn};
use rayon::prelude::*;
use serde::Serialize;

use super::config::{ExperimentConfig, HyperparameterMode};
use super::trace::{aggregate, write_aggregate, RegretTrace, TraceRecord};
use crate::acquisition::{recommend_incumbent, AcquisitionSpec, AcquisitionState, OptimizeOptions};
use crate::benchmarks::{ground_truth_robust_optimum, GroundTruthOptions, Objective, RobustOptimum};
use crate::error::{Error, Result};
use crate::gp::{fit_hyperparameters, Dataset, FitOptions, GpModel, KernelParams, LengthscalePrior};
use crate::rng;
use crate::stats::{mean, variance};

/// Environment variable overriding the ground-truth cache directory.
pub const CACHE_ENV: &str = "ROBUST_BO_CACHE";

/// Cache directory from `ROBUST_BO_CACHE`, else `.robust-bo-cache`.
pub fn cache_dir() -> PathBuf {
    std::env::var_os(CACHE_ENV)
        .map(PathBuf::from)
        .unwrap_or_else(|| PathBuf::from(".robust-bo-cache"))
}

#[derive(Debug, Serialize, serde::Deserialize)]
struct CacheEntry {
    key: String,
    value: f64,
    location: Vec<f64>,
}

pub fn cache_path(objective: &Objective, dir: &Path) -> PathBuf {
    let hash = rng::derive_seed(0, &objective.cache_key(), &[]);
    dir.join(format!("{}-{hash:016x}.toml", objective.name()))
}

/// Robust optimum of `objective`, read from the cache when present and
/// computed (FFT grid plus polish) and stored otherwise. `None` for
/// objectives with more than three inputs.
pub fn cached_ground_truth(objective: &Objective, dir: &Path) -> Result<Option<RobustOptimum>> {
    if objective.dim() > 3 {
        return Ok(None);
    }
    let path = cache_path(objective, dir);
    let key = objective.cache_key();
    if let Ok(text) = std::fs::read_to_string(&path) {
        match toml::from_str::<CacheEntry>(&text) {
            Ok(e) if e.key == key => {
                return Ok(Some(RobustOptimum { value: e.value, location: e.location }));
            }
            _ => warn!("ignoring stale cache entry {}", path.display()),
        }
    }
    let opts = GroundTruthOptions { polish: true, ..GroundTruthOptions::default() };
    let opt = ground_truth_robust_optimum(objective, &opts)?;
    std::fs::create_dir_all(dir)?;
    let entry = CacheEntry { key, value: opt.value, location: opt.location.clone() };
    let text = toml::to_string(&entry).map_err(|e| Error::Config(e.to_string()))?;
    std::fs::write(&path, text)?;
    Ok(Some(opt))
}

/// Everything a single repetition needs besides the objective.
#[derive(Debug, Clone)]
pub struct RunSettings {
    pub acquisition: AcquisitionSpec,
    pub iterations: usize,
    pub initial_points: usize,
    pub seed: u64,
    pub hyperparameters: HyperparameterMode,
    pub optimizer: OptimizeOptions,
}

impl RunSettings {
    pub fn from_config(cfg: &ExperimentConfig, dim: usize) -> Self {
        Self {
            acquisition: cfg.acquisition.clone(),
            iterations: cfg.iterations,
            initial_points: cfg.initial_points_for(dim),
            seed: cfg.seed,
            hyperparameters: cfg.hyperparameters,
            optimizer: OptimizeOptions::default(),
        }
    }
}

/// Uniform initial design of repetition `rep`; depends only on the master
/// seed, the repetition and the domain, so every acquisition sees it.
pub fn initial_design(objective: &Objective, n: usize, seed: u64, rep: usize) -> Vec<Vec<f64>> {
    let mut r = rng::stream(seed, "initial-design", &[rep as u64]);
    (0..n).map(|_| objective.domain().sample_uniform(&mut r)).collect()
}

fn observe(objective: &Objective, x: &[f64], seed: u64, rep: usize, index: usize) -> Result<f64> {
    let mut r = rng::stream(seed, "observation", &[rep as u64, index as u64]);
    objective.observe(x, &mut r)
}

/// Starting point for hyperparameter fitting.
fn initial_params(data: &Dataset, objective: &Objective) -> Result<KernelParams> {
    let var_y = variance(data.targets()).max(1e-6);
    let prior = LengthscalePrior::from_noise(objective.input_noise(), data.domain());
    let lens = prior.log_mean.iter().map(|m| m.exp()).collect();
    KernelParams::new(var_y, lens, (1e-2 * var_y).max(1e-8))
}

struct Hyper {
    params: Option<KernelParams>,
    prior_mean_zero: bool,
}

impl Hyper {
    fn choose(
        &mut self,
        objective: &Objective,
        settings: &RunSettings,
        data: &Dataset,
        rep: usize,
        iteration: usize,
    ) -> Result<(KernelParams, f64)> {
        let prior_mean = if self.prior_mean_zero { 0.0 } else { mean(data.targets()) };
        let refit = match settings.hyperparameters {
            HyperparameterMode::Refit => true,
            HyperparameterMode::Fixed => self.params.is_none(),
        };
        if refit {
            let init = match &self.params {
                Some(p) => p.clone(),
                None => initial_params(data, objective)?,
            };
            let fit = fit_hyperparameters(
                data,
                objective.input_noise(),
                &init,
                &FitOptions {
                    seed: rng::derive_seed(settings.seed, "hyperparameters", &[rep as u64, iteration as u64]),
                    prior_mean,
                    ..FitOptions::default()
                },
            )?;
            self.params = Some(fit.params);
        }
        Ok((self.params.clone().expect("set above"), prior_mean))
    }
}

fn record(
    objective: &Objective,
    model: &GpModel,
    truth: Option<&RobustOptimum>,
    seed: u64,
    iteration: usize,
    x: Vec<f64>,
    y: f64,
    wall_ms: f64,
) -> Result<TraceRecord> {
    let (incumbent, _) = recommend_incumbent(model, seed);
    let g = objective.robust_value(&incumbent)?;
    let (regret, distance) = match truth {
        Some(t) => (
            (g - t.value).abs(),
            incumbent.iter().zip(&t.location).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt(),
        ),
        None => (f64::NAN, f64::NAN),
    };
    Ok(TraceRecord { iteration, x, y, incumbent, regret, distance, wall_ms, robust_value: g })
}

/// One BO run. Acquisition failures are retried once with fresh random
/// numbers; a second failure aborts the repetition.
pub fn run_repetition(
    objective: &Objective,
    settings: &RunSettings,
    truth: Option<&RobustOptimum>,
    rep: usize,
) -> Result<RegretTrace> {
    let d = objective.dim();
    let seed = settings.seed;
    let mut data = Dataset::new(objective.domain().clone());
    for (i, x) in initial_design(objective, settings.initial_points, seed, rep).into_iter().enumerate() {
        let y = observe(objective, &x, seed, rep, i)?;
        data.push(x, y)?;
    }
    let mut hyper = Hyper {
        params: match settings.hyperparameters {
            HyperparameterMode::Fixed => objective.true_params().cloned(),
            HyperparameterMode::Refit => None,
        },
        prior_mean_zero: objective.true_params().is_some(),
    };
    let mut trace = RegretTrace::new(d);

    let start = Instant::now();
    let (params, prior_mean) = hyper.choose(objective, settings, &data, rep, 0)?;
    let model = GpModel::with_prior_mean(params, objective.input_noise().clone(), data.clone(), prior_mean)?;
    let wall = start.elapsed().as_secs_f64() * 1e3;
    let inc_seed = rng::derive_seed(seed, "incumbent", &[rep as u64, 0]);
    trace
        .records
        .push(record(objective, &model, truth, inc_seed, 0, vec![f64::NAN; d], f64::NAN, wall)?);

    for it in 1..=settings.iterations {
        let start = Instant::now();
        let (params, prior_mean) = hyper.choose(objective, settings, &data, rep, it)?;
        let model = GpModel::with_prior_mean(params.clone(), objective.input_noise().clone(), data.clone(), prior_mean)?;
        let mut next = None;
        let mut last_err = None;
        for attempt in 0..2u64 {
            let acq_seed = rng::derive_seed(seed, "acquisition", &[rep as u64, it as u64, attempt]);
            match AcquisitionState::prepare(&model, &settings.acquisition, acq_seed) {
                Ok(state) => {
                    next = Some(state.maximize(&settings.optimizer, acq_seed).0);
                    break;
                }
                Err(e) => {
                    warn!("repetition {rep}, iteration {it}, attempt {attempt}: {e}");
                    last_err = Some(e);
                }
            }
        }
        let x = match next {
            Some(x) => x,
            None => return Err(last_err.expect("an attempt failed")),
        };
        let wall = start.elapsed().as_secs_f64() * 1e3;
        let y = observe(objective, &x, seed, rep, settings.initial_points + it - 1)?;
        data.push(x.clone(), y)?;
        let prior_mean = if hyper.prior_mean_zero { prior_mean } else { mean(data.targets()) };
        let model = GpModel::with_prior_mean(params, objective.input_noise().clone(), data.clone(), prior_mean)?;
        let inc_seed = rng::derive_seed(seed, "incumbent", &[rep as u64, it as u64]);
        trace.records.push(record(objective, &model, truth, inc_seed, it, x, y, wall)?);
    }
    Ok(trace)
}

#[derive(Debug, Serialize)]
pub struct FailureNote {
    pub repetition: usize,
    pub error: String,
}

#[derive(Debug, Serialize)]
pub struct RunSummary {
    pub objective: String,
    pub acquisition: String,
    pub repetitions: usize,
    pub completed: usize,
    pub failed: usize,
    pub g_star: Option<f64>,
    pub x_star: Option<Vec<f64>>,
    pub failures: Vec<FailureNote>,
}

/// Results of [`run_experiment`]: one entry per repetition.
#[derive(Debug)]
pub struct ExperimentOutcome {
    pub traces: Vec<Result<RegretTrace>>,
    pub summary: RunSummary,
}

impl ExperimentOutcome {
    pub fn completed(&self) -> Vec<&RegretTrace> {
        self.traces.iter().filter_map(|t| t.as_ref().ok()).collect()
    }
}

/// Runs every repetition (in parallel when `workers > 1`) without writing
/// anything to disk.
pub fn run_experiment(cfg: &ExperimentConfig, cache: &Path) -> Result<ExperimentOutcome> {
    cfg.validate()?;
    let objectives: Vec<Objective> = (0..cfg.repetitions)
        .map(|r| cfg.objective.build(r))
        .collect::<Result<_>>()?;
    let truths: Vec<Option<RobustOptimum>> = if cfg.objective.seed_per_repetition {
        objectives.iter().map(|o| cached_ground_truth(o, cache)).collect::<Result<_>>()?
    } else {
        let t = cached_ground_truth(&objectives[0], cache)?;
        vec![t; cfg.repetitions]
    };
    let settings = RunSettings::from_config(cfg, objectives[0].dim());
    let job = |r: usize| {
        let t0 = Instant::now();
        let out = run_repetition(&objectives[r], &settings, truths[r].as_ref(), r);
        info!("repetition {r} finished in {:.1}s", t0.elapsed().as_secs_f64());
        out
    };
    let workers = cfg.workers.unwrap_or(1);
    let traces: Vec<Result<RegretTrace>> = if workers > 1 {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(workers)
            .build()
            .map_err(|e| Error::Config(e.to_string()))?;
        pool.install(|| (0..cfg.repetitions).into_par_iter().map(job).collect())
    } else {
        (0..cfg.repetitions).map(job).collect()
    };
    let failures: Vec<FailureNote> = traces
        .iter()
        .enumerate()
        .filter_map(|(r, t)| t.as_ref().err().map(|e| FailureNote { repetition: r, error: e.to_string() }))
        .collect();
    let summary = RunSummary {
        objective: objectives[0].name().to_string(),
        acquisition: cfg.acquisition.kind.to_string(),
        repetitions: cfg.repetitions,
        completed: cfg.repetitions - failures.len(),
        failed: failures.len(),
        g_star: if cfg.objective.seed_per_repetition { None } else { truths[0].as_ref().map(|t| t.value) },
        x_star: if cfg.objective.seed_per_repetition { None } else { truths[0].as_ref().map(|t| t.location.clone()) },
        failures,
    };
    Ok(ExperimentOutcome { traces, summary })
}

pub fn trace_file_name(rep: usize) -> String {
    format!("trace_{rep:03}.csv")
}

/// Writes traces of completed repetitions, `aggregate.csv` over them and
/// `summary.toml`.
pub fn write_outcome(outcome: &ExperimentOutcome, dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    for (r, t) in outcome.traces.iter().enumerate() {
        if let Ok(t) = t {
            t.save(&dir.join(trace_file_name(r)))?;
        }
    }
    let done: Vec<RegretTrace> = outcome.completed().into_iter().cloned().collect();
    if !done.is_empty() {
        let rows = aggregate(&done)?;
        write_aggregate(&rows, std::fs::File::create(dir.join("aggregate.csv"))?)?;
    }
    let text = toml::to_string(&outcome.summary).map_err(|e| Error::Config(e.to_string()))?;
    std::fs::write(dir.join("summary.toml"), text)?;
    Ok(())
}
