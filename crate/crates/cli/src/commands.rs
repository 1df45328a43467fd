use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use clap::{Args, ValueEnum};
use lcc_core::harness::{
    generate_fields, generate_regression, monte_carlo_guarantee, run_split_experiment, write_json,
    write_monte_carlo_report, write_split_report, ExperimentData, FieldDataset, FieldSource, MonteCarloConfig,
    MonteCarloReport, RegressionDataset, SelectiveSource, SplitExperiment, TrialReport,
};
use lcc_core::{
    calibrate as run_calibrate, calibrate_multi as run_calibrate_multi, sample_size_advisory, seeding,
    CalibrationMode, ControlSpec, LossMatrix, LossTensor, MultiControlSpec, MultiSearch, ParamGrid,
    SampleSizeAdvisory, SearchFunction,
};
use serde::{Deserialize, Serialize};

use crate::config::{parse_grid, stream, Family, Kind, RunConfig, SplitSettings, Validated};
use crate::CliError;

fn require_input(path: &Path) -> Result<()> {
    if !path.exists() {
        return Err(CliError::MissingInput(path.to_path_buf()).into());
    }
    Ok(())
}

fn config_error(problem: impl Into<String>) -> anyhow::Error {
    CliError::Config(vec![problem.into()]).into()
}

fn advise(n: usize, m: usize, delta: f64) -> SampleSizeAdvisory {
    let advisory = sample_size_advisory(n, m, delta);
    if let SampleSizeAdvisory::Warn(msg) = &advisory {
        eprintln!("warning: {msg}");
    }
    advisory
}

// calibrate ──────────────────────────────────────────────────────────────────

#[derive(Debug, Args)]
pub struct CalibrateArgs {
    /// Loss matrix CSV: header of grid points, one row per calibration sample.
    #[arg(long)]
    matrix: PathBuf,
    /// Loss level α.
    #[arg(long)]
    alpha: f64,
    /// Significance level δ.
    #[arg(long)]
    delta: f64,
    /// Upper bound B on every loss.
    #[arg(long, default_value_t = 1.0)]
    bound: f64,
    #[arg(long, default_value = "min", value_parser = ["min", "max", "first"])]
    search: String,
    /// Restrict to these grid points: `start:stop:step` or a file of values.
    #[arg(long)]
    grid: Option<String>,
    #[arg(long, default_value = "lcc-out")]
    out: PathBuf,
}

#[derive(Debug, Serialize)]
struct CalibrateReport<'a> {
    lambda_star: &'a [f64],
    lambda_index: usize,
    feasible_size: usize,
    grid_size: usize,
    n_samples: usize,
    alpha: f64,
    delta: f64,
    bound: f64,
    search: &'a str,
    mode: CalibrationMode,
    advisory: SampleSizeAdvisory,
    quantile_table: &'a str,
}

/// Keeps the columns of `matrix` at the points of a scalar `grid`.
fn restrict(matrix: &LossMatrix, grid: ParamGrid) -> Result<LossMatrix> {
    if matrix.grid().dim() != 1 {
        return Err(config_error("--grid only applies to matrices over a scalar grid"));
    }
    let columns = grid
        .points()
        .map(|p| {
            matrix
                .grid()
                .points()
                .position(|q| (q[0] - p[0]).abs() <= 1e-9)
                .ok_or_else(|| config_error(format!("--grid point {} is not a column of the matrix", p[0])))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(LossMatrix::from_row_fn(grid, matrix.n_samples(), |i| columns.iter().map(|&c| matrix.get(i, c)).collect())?)
}

pub fn calibrate(args: CalibrateArgs) -> Result<()> {
    require_input(&args.matrix)?;
    let spec = ControlSpec::new(args.alpha, args.delta, args.bound)?;
    let search = SearchFunction::parse(&args.search)?;
    let mut matrix =
        LossMatrix::read_csv(&args.matrix).with_context(|| format!("reading {}", args.matrix.display()))?;
    if let Some(grid) = &args.grid {
        matrix = restrict(&matrix, parse_grid(grid).map_err(config_error)?)?;
    }
    let advisory = advise(matrix.n_samples(), 1, args.delta);
    let result = run_calibrate(&matrix, &spec, &search)?;

    fs::create_dir_all(&args.out).with_context(|| format!("creating {}", args.out.display()))?;
    let table = args.out.join("quantiles.csv");
    result.write_quantile_table(fs::File::create(&table)?)?;
    let report = CalibrateReport {
        lambda_star: &result.lambda_star,
        lambda_index: result.lambda_index,
        feasible_size: result.feasible.len(),
        grid_size: result.grid.len(),
        n_samples: result.n_samples,
        alpha: spec.alpha,
        delta: spec.delta,
        bound: spec.bound.value(),
        search: &result.search,
        mode: result.mode,
        advisory,
        quantile_table: "quantiles.csv",
    };
    write_json(&report, args.out.join("result.json"))?;
    println!("λ* = {}", result.grid.format_point(result.lambda_index));
    println!("feasible points: {} of {}", result.feasible.len(), result.grid.len());
    println!("quantile table: {}", table.display());
    Ok(())
}

// calibrate-multi ────────────────────────────────────────────────────────────

#[derive(Debug, Args)]
pub struct MultiArgs {
    /// JSON manifest listing loss matrices with their α and bound.
    #[arg(long)]
    manifest: PathBuf,
    #[arg(long, default_value = "lcc-out")]
    out: PathBuf,
}

#[derive(Debug, Clone, Copy, Default, Deserialize, PartialEq, Eq)]
#[serde(rename_all = "snake_case")]
enum Layout {
    /// Every matrix shares one (possibly multi-dimensional) grid.
    #[default]
    Joint,
    /// Matrix `j` is indexed by coordinate `j` alone.
    PerAxis,
}

#[derive(Debug, Clone, Copy, Default, Deserialize, PartialEq, Eq)]
#[serde(rename_all = "snake_case")]
enum Strategy {
    #[default]
    Joint,
    Coordinatewise,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct ManifestLoss {
    matrix: PathBuf,
    alpha: f64,
    #[serde(default = "one")]
    bound: f64,
}

fn one() -> f64 {
    1.0
}

fn min_search() -> String {
    "min".into()
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct Manifest {
    delta: f64,
    losses: Vec<ManifestLoss>,
    #[serde(default)]
    weights: Option<Vec<f64>>,
    #[serde(default = "min_search")]
    search: String,
    #[serde(default)]
    strategy: Strategy,
    #[serde(default)]
    layout: Layout,
    /// Joint layout only: loss `j` depends on coordinate `j` alone.
    #[serde(default)]
    decomposable: bool,
}

pub fn calibrate_multi(args: MultiArgs) -> Result<()> {
    require_input(&args.manifest)?;
    let text = fs::read_to_string(&args.manifest)?;
    let manifest: Manifest = serde_json::from_str(&text).map_err(|e| config_error(e.to_string()))?;
    let base = args.manifest.parent().unwrap_or(Path::new("."));
    let matrices = manifest
        .losses
        .iter()
        .map(|l| {
            let path = base.join(&l.matrix);
            require_input(&path)?;
            LossMatrix::read_csv(&path).with_context(|| format!("reading {}", path.display()))
        })
        .collect::<Result<Vec<_>>>()?;
    let mut spec = MultiControlSpec::new(
        manifest.losses.iter().map(|l| l.alpha).collect(),
        manifest.delta,
        manifest.losses.iter().map(|l| l.bound).collect(),
    )?;
    if let Some(w) = manifest.weights {
        spec = spec.with_weights(w)?;
    }
    let tensor = match (manifest.layout, manifest.decomposable) {
        (Layout::PerAxis, _) => LossTensor::per_axis(matrices)?,
        (Layout::Joint, true) => LossTensor::joint_decomposable(matrices)?,
        (Layout::Joint, false) => LossTensor::joint(matrices)?,
    };
    let search = SearchFunction::parse(&manifest.search)?;
    let search = match manifest.strategy {
        Strategy::Joint => MultiSearch::Joint(search),
        Strategy::Coordinatewise => MultiSearch::Coordinatewise(search),
    };
    let advisory = advise(tensor.n_samples(), spec.m(), spec.delta);
    let result = run_calibrate_multi(&tensor, &spec, &search)?;

    fs::create_dir_all(&args.out).with_context(|| format!("creating {}", args.out.display()))?;
    let mut table = String::from("loss,lambda,quantile,feasible\n");
    for d in &result.per_loss {
        for (k, (point, q)) in d.points.iter().zip(&d.quantiles).enumerate() {
            let point: Vec<String> = point.iter().map(f64::to_string).collect();
            let feasible = d.feasible.binary_search(&k).is_ok();
            writeln!(table, "{},{},{q},{feasible}", d.loss, point.join(";")).expect("writing to a String");
        }
    }
    let table_path = args.out.join("quantiles.csv");
    fs::write(&table_path, table)?;
    #[derive(Serialize)]
    struct Report<'a> {
        result: &'a lcc_core::MultiCalibrationResult,
        advisory: SampleSizeAdvisory,
        quantile_table: &'a str,
    }
    write_json(&Report { result: &result, advisory, quantile_table: "quantiles.csv" }, args.out.join("result.json"))?;
    let lambda: Vec<String> = result.lambda_star.iter().map(f64::to_string).collect();
    println!("λ* = ({})", lambda.join(", "));
    for d in &result.per_loss {
        println!("loss {}: α={} δ_j={} feasible {} of {}", d.loss, d.alpha, d.delta, d.feasible.len(), d.points.len());
    }
    println!("quantile table: {}", table_path.display());
    Ok(())
}

// validate ───────────────────────────────────────────────────────────────────

const PRESETS: [(&str, &str); 4] = [
    ("ideal-mode.toy", include_str!("../configs/ideal-mode.toy.json")),
    ("selective-split", include_str!("../configs/selective-split.json")),
    ("segmentation-split", include_str!("../configs/segmentation-split.json")),
    ("multi-monte-carlo", include_str!("../configs/multi-monte-carlo.json")),
];

#[derive(Debug, Args)]
#[group(required = true, multiple = false)]
pub struct Source {
    /// JSON run configuration.
    #[arg(long)]
    config: Option<PathBuf>,
    /// A bundled configuration by name.
    #[arg(long, value_parser = PRESETS.map(|(name, _)| name))]
    preset: Option<String>,
}

#[derive(Debug, Args)]
pub struct ValidateArgs {
    #[command(flatten)]
    source: Source,
    #[arg(long, default_value = "lcc-out")]
    out: PathBuf,
}

enum Report {
    MonteCarlo(MonteCarloReport),
    Split(TrialReport),
}

fn run_experiment(v: &Validated) -> Result<Report> {
    let cfg = &v.config;
    match cfg.kind {
        Kind::MonteCarlo => {
            let mc = MonteCarloConfig {
                n: cfg.n(),
                trials: cfg.trials(),
                alphas: cfg.alphas.clone(),
                deltas: cfg.deltas.clone(),
                bound: cfg.bound,
                search: v.search.clone(),
                seed: seeding::derive(cfg.seed, &[stream::TRIALS]),
            };
            for &delta in &cfg.deltas {
                advise(mc.n, cfg.targets(), delta);
            }
            let report = match cfg.family {
                Family::Segmentation => {
                    monte_carlo_guarantee(&FieldSource::new(&cfg.field_config(), v.grid.clone())?, &mc)?
                }
                Family::Selective | Family::MultiSelective => {
                    let model = cfg.train_config().map_err(config_error)?;
                    let source = SelectiveSource::new(&cfg.regression_config(), cfg.n_train(), &model, v.grid.clone())?;
                    monte_carlo_guarantee(&source, &mc)?
                }
            };
            Ok(Report::MonteCarlo(report))
        }
        Kind::Split => {
            let exp = SplitExperiment {
                grid: v.grid.clone(),
                alphas: cfg.alphas.clone(),
                deltas: cfg.deltas.clone(),
                bound: cfg.bound,
                search: v.search.clone(),
                plan: cfg.plan(),
            };
            let report = match cfg.family {
                Family::Segmentation => {
                    let data = match &v.input {
                        Some(dir) => FieldDataset::read_dir(dir)?,
                        None => generate_fields(&cfg.field_config())?,
                    };
                    run_split_experiment(ExperimentData::Segmentation { data: &data }, &exp)?
                }
                Family::Selective | Family::MultiSelective => {
                    let data = match &v.input {
                        Some(path) => {
                            let targets = &cfg.input.as_ref().expect("input path implies settings").targets;
                            RegressionDataset::read_csv(path, targets)?.min_max_normalized()
                        }
                        None => generate_regression(&cfg.regression_config())?,
                    };
                    let model = cfg.train_config().map_err(config_error)?;
                    run_split_experiment(ExperimentData::Selective { data: &data, model }, &exp)?
                }
            };
            Ok(Report::Split(report))
        }
    }
}

fn write_report(report: &Report, dir: &Path) -> Result<Vec<PathBuf>> {
    Ok(match report {
        Report::MonteCarlo(r) => write_monte_carlo_report(r, dir)?,
        Report::Split(r) => write_split_report(r, dir)?,
    })
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map_or_else(|| "n/a".into(), |v| format!("{v:.4}"))
}

fn summarize(report: &Report, out: &mut String) {
    match report {
        Report::MonteCarlo(r) => {
            writeln!(out, "monte carlo [{}]: T={} n={} m={} search={}", r.source, r.trials, r.n, r.m, r.search).unwrap();
            for c in &r.cells {
                for e in [&c.practical, &c.ideal] {
                    let mode = if e.mode == CalibrationMode::Practical { "practical" } else { "ideal" };
                    writeln!(
                        out,
                        "  α={} δ={} {mode:<9} violation rate {} (limit {}) {}{}",
                        c.alpha,
                        c.delta,
                        fmt_opt(e.violation_rate),
                        fmt_opt(e.tolerance.map(|t| c.delta + t)),
                        if e.within(c.delta) { "ok" } else { "EXCEEDED" },
                        if e.infeasible_trials > 0 { format!(", {} infeasible trials", e.infeasible_trials) } else { String::new() },
                    )
                    .unwrap();
                }
                writeln!(
                    out,
                    "  α={} δ={} λ* agreement {}, inclusion failures {}",
                    c.alpha,
                    c.delta,
                    fmt_opt(c.agreement_rate),
                    c.inclusion_failures
                )
                .unwrap();
            }
        }
        Report::Split(r) => {
            writeln!(
                out,
                "split experiment [{}]: {} repeats, n={} (train {}, calib {}, test {}) search={}",
                r.family, r.plan.repeats, r.n_total, r.n_train, r.n_calib, r.n_test, r.search
            )
            .unwrap();
            for c in &r.cells {
                writeln!(
                    out,
                    "  α={} δ={} mean violation {} mean {} {}{}",
                    c.alpha,
                    c.delta,
                    fmt_opt(c.mean_violation),
                    r.efficiency_metric,
                    fmt_opt(c.mean_efficiency),
                    if c.infeasible_repeats > 0 { format!(", {} infeasible repeats", c.infeasible_repeats) } else { String::new() },
                )
                .unwrap();
            }
        }
    }
}

pub fn validate(args: ValidateArgs) -> Result<()> {
    let (text, base) = match (&args.source.config, &args.source.preset) {
        (Some(path), _) => {
            require_input(path)?;
            let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
            (text, path.parent().map_or_else(|| PathBuf::from("."), Path::to_path_buf))
        }
        (None, Some(name)) => {
            let text = PRESETS.iter().find(|(n, _)| n == name).expect("clap checks preset names").1;
            (text.to_string(), PathBuf::from("."))
        }
        (None, None) => unreachable!("clap requires a source"),
    };
    let validated = RunConfig::from_json(&text)?.validate(&base)?;
    let report = run_experiment(&validated)?;
    let files = write_report(&report, &args.out)?;
    let mut summary = String::new();
    summarize(&report, &mut summary);
    print!("{summary}");
    for f in files {
        println!("wrote {}", f.display());
    }
    Ok(())
}

// demo ───────────────────────────────────────────────────────────────────────

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum DemoFamily {
    Selective,
    Multi,
    Segmentation,
}

#[derive(Debug, Args)]
pub struct DemoArgs {
    #[arg(value_enum)]
    family: DemoFamily,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Loss level α; defaults to 0.01 for selective families and 0.4 for segmentation.
    #[arg(long)]
    alpha: Option<f64>,
    #[arg(long, default_value_t = 0.1)]
    delta: f64,
    #[arg(long, default_value = "0:1:0.01")]
    grid: String,
    #[arg(long, value_parser = ["min", "max", "first"])]
    search: Option<String>,
    /// Monte Carlo trials.
    #[arg(long, default_value_t = 500)]
    trials: usize,
    /// Calibration rows per Monte Carlo trial.
    #[arg(long, default_value_t = 200)]
    n: usize,
    /// Split experiment repeats.
    #[arg(long, default_value_t = 3)]
    repeats: usize,
    #[arg(long, default_value = "lcc-out")]
    out: PathBuf,
}

fn demo_config(args: &DemoArgs, kind: Kind) -> RunConfig {
    let family = match args.family {
        DemoFamily::Selective => Family::Selective,
        DemoFamily::Multi => Family::MultiSelective,
        DemoFamily::Segmentation => Family::Segmentation,
    };
    let alpha = args.alpha.unwrap_or(if family == Family::Segmentation { 0.4 } else { 0.01 });
    let mut cfg = RunConfig::from_json(&format!(
        r#"{{"kind":"split","family":"selective","alphas":[{alpha}],"deltas":[{}]}}"#,
        args.delta
    ))
    .expect("demo template parses");
    cfg.kind = kind;
    cfg.family = family;
    cfg.grid = args.grid.clone();
    cfg.search = args.search.clone();
    cfg.seed = args.seed;
    cfg.model.n_trees = 30;
    cfg.regression.n = 1000;
    cfg.fields.n = 1000;
    match kind {
        Kind::MonteCarlo => {
            cfg.trials = Some(args.trials);
            cfg.n = Some(args.n);
        }
        Kind::Split => cfg.split = Some(SplitSettings { repeats: args.repeats, ..Default::default() }),
    }
    cfg
}

pub fn demo(args: DemoArgs) -> Result<()> {
    let mut summary = format!("demo {:?} (seed {})\n", args.family, args.seed).to_lowercase();
    for (kind, dir) in [(Kind::MonteCarlo, "monte_carlo"), (Kind::Split, "split")] {
        let validated = demo_config(&args, kind).validate(Path::new("."))?;
        let report = run_experiment(&validated)?;
        write_report(&report, &args.out.join(dir))?;
        summarize(&report, &mut summary);
    }
    fs::write(args.out.join("summary.txt"), &summary)?;
    print!("{summary}");
    println!("reports: {}", args.out.display());
    Ok(())
}
