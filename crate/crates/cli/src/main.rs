use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use uwbtrack::control::ControllerKind;
use uwbtrack::estimation::EstimatorKind;
use uwbtrack::sim::report::{coverage_table, rmse_sweep_table, summary_table, trace_table};
use uwbtrack::sim::{
    controller_cells, estimator_sweep_cells, monte_carlo, run_cell_episode, run_seed, Cell, ControllerMode,
    ScenarioKind, P_OUT_GRID,
};
use uwbtrack::SimConfig;

#[derive(Parser, Debug)]
#[command(name = "uwbtrack", version, about = "Single-anchor UWB tracking simulations")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Compare estimators on the estimation scenario at the configured p_out.
    SimEstimators(CommonArgs),
    /// Compare the three controllers on the control scenario.
    SimControl(CommonArgs),
    /// Estimator RMSE over the outlier-probability grid.
    SweepOutliers(CommonArgs),
    /// Empirical coverage of the confidence radius under nominal sensing.
    Coverage(CommonArgs),
    /// Parse and validate a configuration file without running anything.
    ValidateConfig {
        /// Configuration file (alternative to --config).
        path: Option<PathBuf>,
        #[command(flatten)]
        common: CommonArgs,
    },
}

#[derive(Args, Debug, Clone, Default)]
struct CommonArgs {
    /// TOML configuration file.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Base seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads.
    #[arg(long)]
    jobs: Option<usize>,
    /// Override a configuration key, `key=value`; repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
}

/// Keys accepted in the config file besides the simulation parameters.
const RUN_KEYS: &[&str] = &["jobs", "out", "n_runs", "controller", "estimator"];

#[derive(Debug, Clone)]
struct RunSettings {
    sim: SimConfig,
    jobs: usize,
    out: PathBuf,
    n_runs: usize,
    controllers: Vec<ControllerKind>,
    estimators: Vec<EstimatorKind>,
    table: toml::Table,
}

enum Failure {
    Config(String),
    Runtime(String),
}

impl From<uwbtrack::Error> for Failure {
    fn from(e: uwbtrack::Error) -> Self {
        match e {
            uwbtrack::Error::Config(m) => Failure::Config(m),
            other => Failure::Runtime(other.to_string()),
        }
    }
}

fn parse_value(text: &str) -> toml::Value {
    let doc = format!("v = {text}");
    match doc.parse::<toml::Table>() {
        Ok(mut t) => t.remove("v").unwrap_or_else(|| toml::Value::String(text.to_string())),
        Err(_) => toml::Value::String(text.to_string()),
    }
}

fn take_int(table: &mut toml::Table, key: &str) -> Result<Option<i64>, Failure> {
    match table.remove(key) {
        None => Ok(None),
        Some(toml::Value::Integer(i)) => Ok(Some(i)),
        Some(v) => Err(Failure::Config(format!("{key}: expected an integer, got {v}"))),
    }
}

fn take_str(table: &mut toml::Table, key: &str) -> Result<Option<String>, Failure> {
    match table.remove(key) {
        None => Ok(None),
        Some(toml::Value::String(s)) => Ok(Some(s)),
        Some(v) => Err(Failure::Config(format!("{key}: expected a string, got {v}"))),
    }
}

fn load_settings(args: &CommonArgs, config_path: Option<&Path>) -> Result<RunSettings, Failure> {
    let mut table = match config_path {
        Some(p) => {
            let text = std::fs::read_to_string(p)
                .map_err(|e| Failure::Config(format!("{}: {e}", p.display())))?;
            text.parse::<toml::Table>().map_err(|e| Failure::Config(format!("{}: {e}", p.display())))?
        }
        None => toml::Table::new(),
    };
    for o in &args.overrides {
        let (k, v) = o
            .split_once('=')
            .ok_or_else(|| Failure::Config(format!("--set {o}: expected key=value")))?;
        let k = k.trim();
        if !uwbtrack::config::CONFIG_KEYS.contains(&k) && !RUN_KEYS.contains(&k) {
            return Err(Failure::Config(format!("--set {o}: unknown key `{k}`")));
        }
        table.insert(k.to_string(), parse_value(v.trim()));
    }
    if let Some(seed) = args.seed {
        let seed = i64::try_from(seed).map_err(|_| Failure::Config("--seed: value too large".into()))?;
        table.insert("seed".into(), toml::Value::Integer(seed));
    }
    if let Some(j) = args.jobs {
        table.insert("jobs".into(), toml::Value::Integer(j as i64));
    }
    if let Some(o) = &args.out {
        table.insert("out".into(), toml::Value::String(o.display().to_string()));
    }
    let echo = table.clone();

    let jobs = take_int(&mut table, "jobs")?.unwrap_or(1);
    let n_runs = take_int(&mut table, "n_runs")?.unwrap_or(50);
    if jobs < 1 || n_runs < 1 {
        return Err(Failure::Config("jobs/n_runs: must be >= 1".into()));
    }
    let out = PathBuf::from(take_str(&mut table, "out")?.unwrap_or_else(|| "out".into()));
    let controllers = match take_str(&mut table, "controller")?.as_deref() {
        None | Some("all") => ControllerKind::ALL.to_vec(),
        Some(name) => vec![ControllerKind::from_name(name)
            .ok_or_else(|| Failure::Config(format!("controller: unknown controller `{name}`")))?],
    };
    let estimators = match take_str(&mut table, "estimator")?.as_deref() {
        None | Some("all") => EstimatorKind::ALL.to_vec(),
        Some(name) => vec![EstimatorKind::from_name(name)
            .ok_or_else(|| Failure::Config(format!("estimator: unknown estimator `{name}`")))?],
    };
    // integer-valued reals such as `dt = 1` are accepted
    let keys: Vec<String> = table.keys().cloned().collect();
    for k in keys {
        if matches!(k.as_str(), "horizon" | "window_size" | "seed") {
            continue;
        }
        if let Some(toml::Value::Integer(i)) = table.get(&k) {
            let f = *i as f64;
            table.insert(k, toml::Value::Float(f));
        }
    }
    let sim = SimConfig::from_table(table)?;
    Ok(RunSettings { sim, jobs: jobs as usize, out, n_runs: n_runs as usize, controllers, estimators, table: echo })
}

fn write_effective_config(s: &RunSettings) -> Result<(), Failure> {
    let mut table: toml::Table = toml::from_str(&s.sim.to_toml_string())
        .map_err(|e| Failure::Runtime(format!("config echo: {e}")))?;
    table.insert("jobs".into(), toml::Value::Integer(s.jobs as i64));
    table.insert("n_runs".into(), toml::Value::Integer(s.n_runs as i64));
    table.insert("out".into(), toml::Value::String(s.out.display().to_string()));
    for key in ["controller", "estimator"] {
        let v = s.table.get(key).cloned().unwrap_or_else(|| toml::Value::String("all".into()));
        table.insert(key.into(), v);
    }
    let text = toml::to_string(&table).map_err(|e| Failure::Runtime(e.to_string()))?;
    std::fs::write(s.out.join("effective_config"), text).map_err(|e| Failure::Runtime(e.to_string()))
}

fn prepare_out(s: &RunSettings) -> Result<(), Failure> {
    std::fs::create_dir_all(&s.out).map_err(|e| Failure::Runtime(format!("{}: {e}", s.out.display())))?;
    write_effective_config(s)
}

fn sim_estimators(s: &RunSettings) -> Result<(), Failure> {
    prepare_out(s)?;
    let cells = estimator_sweep_cells(&[s.sim.p_out], &s.estimators);
    let results = monte_carlo(&cells, s.n_runs, &s.sim, s.jobs)?;
    rmse_sweep_table(&results).write(&s.out.join("rmse_sweep.csv"))?;
    summary_table(&results).write(&s.out.join("summary.csv"))?;
    let traces = cells
        .iter()
        .map(|c| run_cell_episode(c, &s.sim, run_seed(s.sim.seed, 0)))
        .collect::<uwbtrack::Result<Vec<_>>>()?;
    trace_table(&traces).write(&s.out.join("estimate_trace.csv"))?;
    for r in &results {
        println!("{} p_out={} mean_rmse={:.4}", r.cell.estimator.name(), r.cell.p_out, r.mean_rmse());
    }
    Ok(())
}

fn sweep_outliers(s: &RunSettings) -> Result<(), Failure> {
    prepare_out(s)?;
    let cells = estimator_sweep_cells(&P_OUT_GRID, &s.estimators);
    let results = monte_carlo(&cells, s.n_runs, &s.sim, s.jobs)?;
    rmse_sweep_table(&results).write(&s.out.join("rmse_sweep.csv"))?;
    summary_table(&results).write(&s.out.join("summary.csv"))?;
    for r in &results {
        println!("p_out={:.1} {:<10} mean_rmse={:.4}", r.cell.p_out, r.cell.estimator.name(), r.mean_rmse());
    }
    Ok(())
}

fn sim_control(s: &RunSettings) -> Result<(), Failure> {
    prepare_out(s)?;
    let estimator = if s.estimators.len() == 1 { s.estimators[0] } else { EstimatorKind::RobustFactorGraph };
    let cells = controller_cells(&s.controllers, estimator, s.sim.p_out);
    let results = monte_carlo(&cells, s.n_runs, &s.sim, s.jobs)?;
    summary_table(&results).write(&s.out.join("summary.csv"))?;
    let traces = cells
        .iter()
        .map(|c| run_cell_episode(c, &s.sim, run_seed(s.sim.seed, 0)))
        .collect::<uwbtrack::Result<Vec<_>>>()?;
    trace_table(&traces).write(&s.out.join("control_trace.csv"))?;
    for r in &results {
        let total: usize = r.runs.iter().map(|m| m.violation_steps).sum();
        println!(
            "{:<14} runs_with_violation={:.2} total_violation_steps={}",
            r.cell.controller.name(),
            r.violation_rate(),
            total
        );
    }
    Ok(())
}

fn coverage(s: &RunSettings) -> Result<(), Failure> {
    prepare_out(s)?;
    let cell = Cell {
        scenario: ScenarioKind::Estimation,
        estimator: EstimatorKind::RobustFactorGraph,
        controller: ControllerMode::Scripted,
        p_out: 0.0,
    };
    let results = monte_carlo(&[cell], s.n_runs, &s.sim, s.jobs)?;
    let runs = &results[0].runs;
    coverage_table(runs).write(&s.out.join("coverage.csv"))?;
    let steps: usize = runs.iter().map(|m| m.steps).sum();
    let covered: usize = runs.iter().map(|m| m.covered_steps).sum();
    println!("coverage={:.4} ({covered}/{steps}) target>={:.2}", covered as f64 / steps as f64, 1.0 - s.sim.alpha_risk);
    Ok(())
}

fn run(cli: Cli) -> Result<(), Failure> {
    match cli.command {
        Command::SimEstimators(a) => sim_estimators(&load_settings(&a, a.config.as_deref())?),
        Command::SimControl(a) => sim_control(&load_settings(&a, a.config.as_deref())?),
        Command::SweepOutliers(a) => sweep_outliers(&load_settings(&a, a.config.as_deref())?),
        Command::Coverage(a) => coverage(&load_settings(&a, a.config.as_deref())?),
        Command::ValidateConfig { path, common } => {
            let p = path.or_else(|| common.config.clone());
            let s = load_settings(&common, p.as_deref())?;
            println!("config ok (seed {}, horizon {})", s.sim.seed, s.sim.horizon);
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Config(m)) => {
            eprintln!("config error: {m}");
            ExitCode::from(1)
        }
        Err(Failure::Runtime(m)) => {
            eprintln!("runtime error: {m}");
            ExitCode::from(2)
        }
    }
}
