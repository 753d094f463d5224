//! Parallel Monte-Carlo sweeps with order-independent seeding.

use rayon::prelude::*;

use crate::config::SimConfig;
use crate::error::{Error, Result};
use crate::estimation::EstimatorKind;
use crate::sim::episode::{run_episode, ControllerMode, EpisodeTrace, RunMetrics};
use crate::sim::scenario::{scenario_control, scenario_estimation, ScenarioKind};
use crate::stats::hash_seed;

/// One experimental condition.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Cell {
    pub scenario: ScenarioKind,
    pub estimator: EstimatorKind,
    pub controller: ControllerMode,
    pub p_out: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CellResult {
    pub cell: Cell,
    pub runs: Vec<RunMetrics>,
}

impl CellResult {
    pub fn mean_rmse(&self) -> f64 {
        self.runs.iter().map(|r| r.rmse).sum::<f64>() / self.runs.len() as f64
    }

    /// Sample standard deviation of the per-run RMSE (0 for a single run).
    pub fn std_rmse(&self) -> f64 {
        let n = self.runs.len();
        if n < 2 {
            return 0.0;
        }
        let m = self.mean_rmse();
        (self.runs.iter().map(|r| (r.rmse - m).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt()
    }

    /// Fraction of runs with at least one violation step.
    pub fn violation_rate(&self) -> f64 {
        self.runs.iter().filter(|r| r.violation_steps > 0).count() as f64 / self.runs.len() as f64
    }
}

/// Seed of run `run`. Shared across cells so conditions are compared on common random numbers.
pub fn run_seed(base_seed: u64, run: usize) -> u64 {
    hash_seed(&[base_seed, run as u64])
}

/// Configuration of one cell: the base config with the cell's outlier probability.
pub fn cell_config(cfg: &SimConfig, cell: &Cell) -> SimConfig {
    let mut c = cfg.clone();
    c.p_out = cell.p_out;
    c
}

pub fn run_cell_episode(cell: &Cell, cfg: &SimConfig, seed: u64) -> Result<EpisodeTrace> {
    let c = cell_config(cfg, cell);
    let scenario = match cell.scenario {
        ScenarioKind::Estimation => scenario_estimation(&c)?,
        ScenarioKind::Control => scenario_control(&c)?,
    };
    run_episode(&scenario, cell.estimator, cell.controller, &c, seed)
}

/// Runs `n_runs` episodes per cell on `jobs` worker threads. Output order and values do
/// not depend on `jobs`.
pub fn monte_carlo(cells: &[Cell], n_runs: usize, cfg: &SimConfig, jobs: usize) -> Result<Vec<CellResult>> {
    monte_carlo_map(cells, n_runs, cfg, jobs, |cell, c, trace| Ok(RunMetrics::from_trace(trace, &cell_config(c, cell))))
        .map(|per_cell| {
            per_cell.into_iter().zip(cells).map(|(runs, cell)| CellResult { cell: *cell, runs }).collect()
        })
}

/// Generic sweep: applies `f` to every episode trace and groups the results by cell.
pub fn monte_carlo_map<T, F>(cells: &[Cell], n_runs: usize, cfg: &SimConfig, jobs: usize, f: F) -> Result<Vec<Vec<T>>>
where
    T: Send,
    F: Fn(&Cell, &SimConfig, &EpisodeTrace) -> Result<T> + Sync,
{
    if n_runs == 0 {
        return Err(Error::InvalidInput("n_runs must be at least 1".into()));
    }
    cfg.validate()?;
    let tasks: Vec<(usize, usize)> = (0..cells.len()).flat_map(|c| (0..n_runs).map(move |r| (c, r))).collect();
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs.max(1))
        .build()
        .map_err(|e| Error::InvalidInput(format!("thread pool: {e}")))?;
    let results: Vec<Result<T>> = pool.install(|| {
        tasks
            .par_iter()
            .map(|&(c, r)| {
                let cell = &cells[c];
                let trace = run_cell_episode(cell, cfg, run_seed(cfg.seed, r))?;
                f(cell, cfg, &trace)
            })
            .collect()
    });
    let mut out: Vec<Vec<T>> = (0..cells.len()).map(|_| Vec::with_capacity(n_runs)).collect();
    for ((c, _), res) in tasks.into_iter().zip(results) {
        out[c].push(res?);
    }
    Ok(out)
}

/// Outlier-probability grid of the estimator comparison.
pub const P_OUT_GRID: [f64; 6] = [0.0, 0.1, 0.2, 0.3, 0.4, 0.5];

pub fn estimator_sweep_cells(grid: &[f64], estimators: &[EstimatorKind]) -> Vec<Cell> {
    grid.iter()
        .flat_map(|&p| {
            estimators.iter().map(move |&e| Cell {
                scenario: ScenarioKind::Estimation,
                estimator: e,
                controller: ControllerMode::Scripted,
                p_out: p,
            })
        })
        .collect()
}

pub fn controller_cells(controllers: &[crate::control::ControllerKind], estimator: EstimatorKind, p_out: f64) -> Vec<Cell> {
    controllers
        .iter()
        .map(|&k| Cell { scenario: ScenarioKind::Control, estimator, controller: ControllerMode::Closed(k), p_out })
        .collect()
}
