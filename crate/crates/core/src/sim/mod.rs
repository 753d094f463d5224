//! Simulation harness: scenarios, episodes, Monte-Carlo sweeps and CSV reports.

pub mod episode;
pub mod montecarlo;
pub mod report;
pub mod scenario;

pub use episode::{run_episode, ControllerMode, EpisodeTrace, RunMetrics, StepRecord};
pub use montecarlo::{
    controller_cells, estimator_sweep_cells, monte_carlo, monte_carlo_map, run_cell_episode, run_seed, Cell,
    CellResult, P_OUT_GRID,
};
pub use scenario::{scenario_control, scenario_control_with, scenario_estimation, ControlProfile, Scenario, ScenarioKind};
