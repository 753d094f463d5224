//! CSV output with fixed columns and 9-significant-digit numbers.

use std::fmt::Write as _;
use std::io::Write as _;
use std::path::Path;

use crate::error::Result;
use crate::sim::episode::{EpisodeTrace, RunMetrics};
use crate::sim::montecarlo::CellResult;

/// `printf("%.9g")` equivalent.
pub fn fmt_g9(x: f64) -> String {
    if x.is_nan() {
        return "nan".into();
    }
    if x.is_infinite() {
        return if x > 0.0 { "inf".into() } else { "-inf".into() };
    }
    if x == 0.0 {
        return "0".into();
    }
    let sci = format!("{:.8e}", x);
    let (mantissa, exp) = sci.split_once('e').expect("exponent present");
    let exp: i32 = exp.parse().expect("integer exponent");
    if !(-4..9).contains(&exp) {
        let m = trim_zeros(mantissa);
        let sign = if exp < 0 { '-' } else { '+' };
        return format!("{m}e{sign}{:02}", exp.abs());
    }
    let decimals = (8 - exp).max(0) as usize;
    trim_zeros(&format!("{:.*}", decimals, x)).to_string()
}

fn trim_zeros(s: &str) -> &str {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.')
    } else {
        s
    }
}

pub struct CsvTable {
    text: String,
    columns: usize,
}

impl CsvTable {
    pub fn new(header: &[&str]) -> Self {
        Self { text: header.join(",") + "\n", columns: header.len() }
    }

    pub fn row(&mut self, fields: &[String]) {
        debug_assert_eq!(fields.len(), self.columns);
        self.text.push_str(&fields.join(","));
        self.text.push('\n');
    }

    pub fn as_str(&self) -> &str {
        &self.text
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        let mut f = std::fs::File::create(path)?;
        f.write_all(self.text.as_bytes())?;
        Ok(())
    }
}

fn g(x: f64) -> String {
    fmt_g9(x)
}

pub fn rmse_sweep_table(results: &[CellResult]) -> CsvTable {
    let mut t = CsvTable::new(&["p_out", "estimator", "mean_rmse", "std_rmse", "n_runs"]);
    for r in results {
        t.row(&[
            g(r.cell.p_out),
            r.cell.estimator.name().into(),
            g(r.mean_rmse()),
            g(r.std_rmse()),
            r.runs.len().to_string(),
        ]);
    }
    t
}

pub const SUMMARY_COLUMNS: [&str; 22] = [
    "scenario",
    "controller",
    "estimator",
    "p_out",
    "run",
    "seed",
    "steps",
    "rmse",
    "rmse_filtered",
    "violation_steps",
    "min_d",
    "max_d",
    "mean_r",
    "max_r",
    "median_r_degraded",
    "median_r_nominal",
    "relaxed_steps",
    "fallback_steps",
    "degraded_beliefs",
    "covered_steps",
    "coverage",
    "max_speed_excess",
];

pub fn summary_table(results: &[CellResult]) -> CsvTable {
    let mut t = CsvTable::new(&SUMMARY_COLUMNS);
    for r in results {
        for (i, m) in r.runs.iter().enumerate() {
            t.row(&summary_fields(r, i, m));
        }
    }
    t
}

fn summary_fields(r: &CellResult, run: usize, m: &RunMetrics) -> Vec<String> {
    let scenario = match r.cell.scenario {
        crate::sim::ScenarioKind::Estimation => "estimation",
        crate::sim::ScenarioKind::Control => "control",
    };
    vec![
        scenario.into(),
        r.cell.controller.name().into(),
        r.cell.estimator.name().into(),
        g(r.cell.p_out),
        run.to_string(),
        m.seed.to_string(),
        m.steps.to_string(),
        g(m.rmse),
        g(m.rmse_filtered),
        m.violation_steps.to_string(),
        g(m.min_d),
        g(m.max_d),
        g(m.mean_radius),
        g(m.max_radius),
        g(m.median_radius_degraded),
        g(m.median_radius_nominal),
        m.relaxed_steps.to_string(),
        m.fallback_steps.to_string(),
        m.degraded_beliefs.to_string(),
        m.covered_steps.to_string(),
        g(m.covered_steps as f64 / m.steps.max(1) as f64),
        g(m.max_speed_excess),
    ]
}

pub const TRACE_COLUMNS: [&str; 28] = [
    "controller",
    "estimator",
    "step",
    "t",
    "u_x",
    "u_y",
    "u_z",
    "qp_status",
    "h_near",
    "h_far",
    "R",
    "d_hat",
    "d_true",
    "degradation",
    "target_x",
    "target_y",
    "target_z",
    "est_x",
    "est_y",
    "est_z",
    "uav_x",
    "uav_y",
    "uav_z",
    "uav_vx",
    "uav_vy",
    "uav_vz",
    "z_r",
    "azimuth",
];

/// Per-step trace rows; several episodes may share one table.
pub fn append_trace(table: &mut CsvTable, trace: &EpisodeTrace) {
    for r in &trace.records {
        let mut row = vec![
            trace.controller.name().to_string(),
            trace.estimator.name().to_string(),
            r.step.to_string(),
            g(r.t),
            g(r.u.x),
            g(r.u.y),
            g(r.u.z),
            r.qp_status.map_or("none", |s| s.name()).to_string(),
            g(r.h_near),
            g(r.h_far),
            g(r.radius),
            g(r.d_hat),
            g(r.d_true),
            g(r.degradation),
        ];
        for v in [&r.target.position, &r.belief.mean.position, &r.uav.position, &r.uav.velocity] {
            row.extend(v.iter().map(|c| g(*c)));
        }
        row.push(g(r.z_r));
        row.push(g(r.azimuth));
        table.row(&row);
    }
}

pub fn trace_table(traces: &[EpisodeTrace]) -> CsvTable {
    let mut t = CsvTable::new(&TRACE_COLUMNS);
    for tr in traces {
        append_trace(&mut t, tr);
    }
    t
}

/// Per-run coverage of the confidence ball plus an aggregate row.
pub fn coverage_table(runs: &[RunMetrics]) -> CsvTable {
    let mut t = CsvTable::new(&["run", "seed", "steps", "covered", "coverage"]);
    let (mut steps, mut covered) = (0usize, 0usize);
    for (i, m) in runs.iter().enumerate() {
        steps += m.steps;
        covered += m.covered_steps;
        t.row(&[
            i.to_string(),
            m.seed.to_string(),
            m.steps.to_string(),
            m.covered_steps.to_string(),
            g(m.covered_steps as f64 / m.steps.max(1) as f64),
        ]);
    }
    let mut s = String::new();
    let _ = write!(s, "{}", g(covered as f64 / steps.max(1) as f64));
    t.row(&["all".into(), "".into(), steps.to_string(), covered.to_string(), s]);
    t
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn g9_matches_printf() {
        let cases = [
            (0.0, "0"),
            (1.0, "1"),
            (0.1, "0.1"),
            (-2.5, "-2.5"),
            (1.0 / 3.0, "0.333333333"),
            (123456789.0, "123456789"),
            (1234567890.0, "1.23456789e+09"),
            (0.0001, "0.0001"),
            (0.00001, "1e-05"),
            (2.0f64.sqrt(), "1.41421356"),
            (7.814727903251178, "7.8147279"),
            (-1.5e-7, "-1.5e-07"),
        ];
        for (x, want) in cases {
            assert_eq!(fmt_g9(x), want, "{x}");
        }
    }

    #[test]
    fn table_layout() {
        let mut t = CsvTable::new(&["a", "b"]);
        t.row(&["1".into(), "x".into()]);
        assert_eq!(t.as_str(), "a,b\n1,x\n");
    }
}
