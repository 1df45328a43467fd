//! Report files: pretty JSON plus flat CSV tables keyed by `(α, δ, repeat)`.
//!
//! Every writer is a pure function of its report, so equal reports give
//! byte-identical files.

use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::error::Result;
use crate::harness::experiment::TrialReport;
use crate::harness::montecarlo::{ModeEstimate, MonteCarloReport};

fn opt(value: Option<f64>) -> String {
    value.map_or_else(String::new, |v| v.to_string())
}

pub fn write_json<T: Serialize>(value: &T, path: impl AsRef<Path>) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text)?;
    Ok(())
}

/// Writes `report.json`, `outcomes.csv` and `cells.csv`; returns their paths.
pub fn write_split_report(report: &TrialReport, dir: impl AsRef<Path>) -> Result<Vec<PathBuf>> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir)?;
    let json = dir.join("report.json");
    write_json(report, &json)?;

    let outcomes = dir.join("outcomes.csv");
    let mut w = csv::Writer::from_path(&outcomes)?;
    w.write_record([
        "alpha",
        "delta",
        "repeat",
        "status",
        "lambda_star",
        "feasible_size",
        "violation",
        "efficiency_mean",
        "efficiency_min",
        "efficiency_median",
        "efficiency_max",
    ])?;
    for o in &report.outcomes {
        let lambda = o.lambda_star.as_ref().map_or_else(String::new, |l| {
            l.iter().map(f64::to_string).collect::<Vec<_>>().join(";")
        });
        let eff = o.efficiency;
        w.write_record([
            o.alpha.to_string(),
            o.delta.to_string(),
            o.repeat.to_string(),
            if o.infeasible.is_some() { "infeasible" } else { "ok" }.to_string(),
            lambda,
            o.feasible_size.to_string(),
            opt(o.violation),
            opt(eff.map(|s| s.mean)),
            opt(eff.map(|s| s.min)),
            opt(eff.map(|s| s.median)),
            opt(eff.map(|s| s.max)),
        ])?;
    }
    w.flush()?;

    let cells = dir.join("cells.csv");
    let mut w = csv::Writer::from_path(&cells)?;
    w.write_record(["alpha", "delta", "feasible_repeats", "infeasible_repeats", "mean_violation", "mean_efficiency"])?;
    for c in &report.cells {
        w.write_record([
            c.alpha.to_string(),
            c.delta.to_string(),
            c.feasible_repeats.to_string(),
            c.infeasible_repeats.to_string(),
            opt(c.mean_violation),
            opt(c.mean_efficiency),
        ])?;
    }
    w.flush()?;
    Ok(vec![json, outcomes, cells])
}

/// Writes `report.json` and `estimates.csv` (one row per cell and mode).
pub fn write_monte_carlo_report(report: &MonteCarloReport, dir: impl AsRef<Path>) -> Result<Vec<PathBuf>> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir)?;
    let json = dir.join("report.json");
    write_json(report, &json)?;

    let estimates = dir.join("estimates.csv");
    let mut w = csv::Writer::from_path(&estimates)?;
    w.write_record([
        "alpha",
        "delta",
        "mode",
        "feasible_trials",
        "infeasible_trials",
        "violations",
        "violation_rate",
        "tolerance",
        "within_tolerance",
        "agreement_rate",
        "inclusion_failures",
    ])?;
    for c in &report.cells {
        let modes: [(&str, &ModeEstimate); 2] = [("practical", &c.practical), ("ideal", &c.ideal)];
        for (name, e) in modes {
            w.write_record([
                c.alpha.to_string(),
                c.delta.to_string(),
                name.to_string(),
                e.feasible_trials.to_string(),
                e.infeasible_trials.to_string(),
                e.violations.to_string(),
                opt(e.violation_rate),
                opt(e.tolerance),
                e.within(c.delta).to_string(),
                opt(c.agreement_rate),
                c.inclusion_failures.to_string(),
            ])?;
        }
    }
    w.flush()?;
    Ok(vec![json, estimates])
}
