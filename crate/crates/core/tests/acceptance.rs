//! End-to-end acceptance checks. Prints one PASS/FAIL line per criterion and
//! exits nonzero if any criterion fails.

use std::panic::{self, AssertUnwindSafe};
use std::path::{Path, PathBuf};
use std::process::Command;
use std::time::{Duration, Instant};

use lcc_core::families::{false_discovery_loss, GridPredictionSet};
use lcc_core::harness::{
    generate_fields, generate_regression, monte_carlo_guarantee, run_split_experiment, write_monte_carlo_report,
    write_split_report, ExperimentData, FieldSource, MonteCarloConfig, MonteCarloReport, NoiseModel,
    SelectiveSource, SplitExperiment, SplitPlan, SyntheticFieldConfig, SyntheticRegressionConfig, TrialReport,
};
use lcc_core::{
    calibrate, clcp_calibrate, conservative_quantile, ControlSpec, Error, LossMatrix, ParamGrid, QuantileLevel,
    SearchFunction, TrainConfig,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Outcome = Result<String, String>;

const SELECTIVE_ALPHAS: [f64; 5] = [0.003, 0.005, 0.01, 0.03, 0.05];
const SEGMENTATION_ALPHAS: [f64; 5] = [0.3, 0.35, 0.4, 0.45, 0.5];
const SPLIT_DELTAS: [f64; 3] = [0.1, 0.15, 0.2];
const MC_TRIALS: usize = 2000;

fn unit_grid() -> ParamGrid {
    ParamGrid::range(0.0, 1.0, 0.01).unwrap()
}

fn regression_config(targets: usize, seed: u64) -> SyntheticRegressionConfig {
    SyntheticRegressionConfig {
        n: 2000,
        dim: 8,
        noise: NoiseModel::Heteroscedastic { sigma: 0.05 },
        targets,
        seed,
    }
}

fn field_config(seed: u64) -> SyntheticFieldConfig {
    SyntheticFieldConfig { n: 2000, seed, ..Default::default() }
}

fn model(seed: u64) -> TrainConfig {
    TrainConfig { n_trees: 50, ..TrainConfig::random_forest(seed) }
}

// 1 ──────────────────────────────────────────────────────────────────────────

/// `ceil(num·n/den)` in integers, clamped to `[1, n]`.
fn exact_rank(num: usize, den: usize, n: usize) -> usize {
    ((num * n).div_ceil(den)).clamp(1, n)
}

fn quantile_oracle() -> Outcome {
    let levels = [(1, 2), (3, 4), (4, 5), (9, 10), (9999, 10000)];
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let start = Instant::now();
    let mut mismatches = 0;
    for case in 0..10_000 {
        let n = rng.gen_range(1..=50);
        // small integer support forces ties
        let values: Vec<f64> = if case % 2 == 0 {
            (0..n).map(|_| f64::from(rng.gen_range(0..8u8))).collect()
        } else {
            (0..n).map(|_| rng.gen::<f64>()).collect()
        };
        let (num, den) = levels[case % levels.len()];
        let mut sorted = values.clone();
        sorted.sort_by(f64::total_cmp);
        let expected = sorted[exact_rank(num, den, n) - 1];
        let level = QuantileLevel::new(num as f64 / den as f64).unwrap();
        if conservative_quantile(&values, level).unwrap() != expected {
            mismatches += 1;
        }
    }
    let elapsed = start.elapsed();
    if mismatches == 0 && elapsed < Duration::from_secs(5) {
        Ok(format!("10000 multisets, 0 mismatches, {elapsed:.2?}"))
    } else {
        Err(format!("{mismatches} mismatches in {elapsed:.2?}"))
    }
}

// 2 ──────────────────────────────────────────────────────────────────────────

fn monotone_instance(rng: &mut ChaCha8Rng) -> (LossMatrix, ControlSpec) {
    let points = rng.gen_range(1..=101);
    let n = rng.gen_range(1..=500);
    let grid = ParamGrid::range(0.0, (points - 1) as f64 * 0.01, 0.01).unwrap();
    let rows: Vec<Vec<f64>> = (0..n)
        .map(|_| {
            if rng.gen_bool(0.5) {
                // miscoverage of a set that grows with λ: 1[score > λ]
                let score: f64 = rng.gen_range(0.0..(points as f64 * 0.01));
                grid.points().map(|p| f64::from(u8::from(score > p[0]))).collect()
            } else {
                // any nonincreasing loss
                let mut row: Vec<f64> = (0..points).map(|_| rng.gen::<f64>()).collect();
                row.sort_by(|a, b| b.total_cmp(a));
                row
            }
        })
        .collect();
    let spec = ControlSpec::new(rng.gen_range(0.0..1.0), rng.gen_range(0.01..0.5), 1.0).unwrap();
    (LossMatrix::from_rows(grid, rows).unwrap(), spec)
}

fn clcp_reduction() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let (mut mismatches, mut feasible) = (0, 0);
    for _ in 0..1000 {
        let (matrix, spec) = monotone_instance(&mut rng);
        let engine = calibrate(&matrix, &spec, &SearchFunction::Min);
        let clcp = clcp_calibrate(&matrix, &spec);
        match (engine, clcp) {
            (Ok(r), Ok(l)) if r.lambda_star == [l] => feasible += 1,
            (Err(Error::Infeasible { .. }), Err(Error::Infeasible { .. })) => {}
            _ => mismatches += 1,
        }
    }
    if mismatches == 0 {
        Ok(format!("1000 instances ({feasible} feasible), 0 mismatches"))
    } else {
        Err(format!("{mismatches} mismatches"))
    }
}

// 3, 5, 6 ───────────────────────────────────────────────────────────────────

struct MonteCarloRuns {
    selective: MonteCarloReport,
    segmentation: MonteCarloReport,
    multi: Vec<MonteCarloReport>,
    timings: Vec<(String, Duration)>,
}

fn mc_config(n: usize, alphas: Vec<f64>, search: SearchFunction, seed: u64) -> MonteCarloConfig {
    MonteCarloConfig { n, trials: MC_TRIALS, alphas, deltas: vec![0.1, 0.2], bound: 1.0, search, seed }
}

fn run_monte_carlo() -> MonteCarloRuns {
    let mut timings = Vec::new();
    let mut timed = |name: &str, f: &dyn Fn() -> MonteCarloReport| {
        let start = Instant::now();
        let report = f();
        timings.push((name.to_string(), start.elapsed()));
        report
    };
    let selective = timed("selective", &|| {
        let source = SelectiveSource::new(&regression_config(1, 30), 1000, &model(31), unit_grid()).unwrap();
        monte_carlo_guarantee(&source, &mc_config(200, vec![0.005, 0.01], SearchFunction::Max, 32)).unwrap()
    });
    let segmentation = timed("segmentation", &|| {
        let source = FieldSource::new(&field_config(33), unit_grid()).unwrap();
        monte_carlo_guarantee(&source, &mc_config(200, vec![0.3, 0.4], SearchFunction::Min, 34)).unwrap()
    });
    let multi = [2, 3]
        .into_iter()
        .map(|m| {
            timed(&format!("multi m={m}"), &|| {
                let source =
                    SelectiveSource::new(&regression_config(m, 40 + m as u64), 1000, &model(50), unit_grid()).unwrap();
                monte_carlo_guarantee(&source, &mc_config(200, vec![0.01], SearchFunction::Max, 60 + m as u64))
                    .unwrap()
            })
        })
        .collect();
    MonteCarloRuns { selective, segmentation, multi, timings }
}

fn describe(report: &MonteCarloReport, practical: bool) -> (bool, Vec<String>) {
    let mut ok = true;
    let mut parts = Vec::new();
    for c in &report.cells {
        let e = if practical { &c.practical } else { &c.ideal };
        let pass = e.within(c.delta) && e.feasible_trials > 0;
        ok &= pass;
        parts.push(format!(
            "{} α={} δ={}: {:.4} ≤ {:.4}{}",
            report.source,
            c.alpha,
            c.delta,
            e.violation_rate.unwrap_or(f64::NAN),
            c.delta + e.tolerance.unwrap_or(0.0),
            if e.infeasible_trials > 0 { format!(" ({} infeasible)", e.infeasible_trials) } else { String::new() }
        ));
    }
    (ok, parts)
}

fn ideal_guarantee(runs: &MonteCarloRuns) -> Outcome {
    let (a, mut pa) = describe(&runs.selective, false);
    let (b, pb) = describe(&runs.segmentation, false);
    pa.extend(pb);
    let slow: Vec<String> = runs
        .timings
        .iter()
        .filter(|(_, t)| *t > Duration::from_secs(240))
        .map(|(n, t)| format!("{n} took {t:.0?}"))
        .collect();
    let times: Vec<String> = runs.timings.iter().map(|(n, t)| format!("{n} {t:.1?}")).collect();
    let text = format!("T={MC_TRIALS}, n=200; {}; timings: {}", pa.join("; "), times.join(", "));
    if a && b && slow.is_empty() {
        Ok(text)
    } else {
        Err(format!("{text} {}", slow.join(", ")))
    }
}

fn inclusion(runs: &MonteCarloRuns) -> Outcome {
    let failures: usize = [&runs.selective, &runs.segmentation]
        .into_iter()
        .flat_map(|r| &r.cells)
        .map(|c| c.inclusion_failures)
        .sum();
    let checked = (runs.selective.cells.len() + runs.segmentation.cells.len()) * MC_TRIALS;
    if failures == 0 {
        Ok(format!("{checked} trial cells, 0 inclusion failures"))
    } else {
        Err(format!("{failures} of {checked} trial cells violate inclusion"))
    }
}

fn multi_control(runs: &MonteCarloRuns) -> Outcome {
    let mut ok = true;
    let mut parts = Vec::new();
    for r in &runs.multi {
        let (pass, text) = describe(r, true);
        ok &= pass;
        parts.extend(text.into_iter().map(|t| format!("m={} practical {t}", r.m)));
    }
    let text = parts.join("; ");
    if ok {
        Ok(text)
    } else {
        Err(text)
    }
}

// 4, 8 ──────────────────────────────────────────────────────────────────────

fn split_plan(seed: u64) -> SplitPlan {
    SplitPlan { test_frac: 0.2, calib_frac: 0.2, repeats: 10, seed }
}

fn selective_split() -> TrialReport {
    let data = generate_regression(&regression_config(1, 70)).unwrap();
    let exp = SplitExperiment {
        grid: unit_grid(),
        alphas: SELECTIVE_ALPHAS.to_vec(),
        deltas: SPLIT_DELTAS.to_vec(),
        bound: 1.0,
        search: SearchFunction::Max,
        plan: split_plan(71),
    };
    run_split_experiment(ExperimentData::Selective { data: &data, model: model(72) }, &exp).unwrap()
}

fn segmentation_split() -> TrialReport {
    let data = generate_fields(&field_config(80)).unwrap();
    let exp = SplitExperiment {
        grid: unit_grid(),
        alphas: SEGMENTATION_ALPHAS.to_vec(),
        deltas: SPLIT_DELTAS.to_vec(),
        bound: 1.0,
        search: SearchFunction::Min,
        plan: split_plan(81),
    };
    run_split_experiment(ExperimentData::Segmentation { data: &data }, &exp).unwrap()
}

fn practical_control(selective: &TrialReport, segmentation: &TrialReport) -> Outcome {
    let mut failures = Vec::new();
    let mut worst: f64 = f64::NEG_INFINITY;
    for report in [selective, segmentation] {
        for c in &report.cells {
            match c.mean_violation {
                Some(v) if v <= c.delta + 0.03 => worst = worst.max(v - c.delta),
                other => failures.push(format!("{} α={} δ={}: {other:?}", report.family, c.alpha, c.delta)),
            }
        }
    }
    if failures.is_empty() {
        Ok(format!("30 cells × 10 repeats, worst mean violation − δ = {worst:+.4}"))
    } else {
        Err(failures.join("; "))
    }
}

fn efficiency_trend(selective: &TrialReport) -> Outcome {
    let mut parts = Vec::new();
    let mut ok = true;
    for delta in SPLIT_DELTAS {
        let means: Vec<f64> = SELECTIVE_ALPHAS
            .iter()
            .map(|&a| selective.cell(a, delta).and_then(|c| c.mean_efficiency).unwrap_or(f64::NAN))
            .collect();
        ok &= means.windows(2).all(|w| w[1] <= w[0]);
        parts.push(format!(
            "δ={delta}: [{}]",
            means.iter().map(|m| format!("{m:.3}")).collect::<Vec<_>>().join(", ")
        ));
    }
    let text = format!("miscoverage over α sweep {}", parts.join(" "));
    if ok {
        Ok(text)
    } else {
        Err(text)
    }
}

// 7 ──────────────────────────────────────────────────────────────────────────

fn non_monotone_witness() -> Outcome {
    let y = GridPredictionSet::from_cells(2, 2, &[(0, 0)]).unwrap();
    let f1 = GridPredictionSet::from_cells(2, 2, &[(0, 0)]).unwrap();
    let f2 = GridPredictionSet::from_cells(2, 2, &[(0, 0), (1, 1)]).unwrap();
    let (l1, l2) = (false_discovery_loss(&y, &f1).unwrap(), false_discovery_loss(&y, &f2).unwrap());
    if f1.is_subset_of(&f2) && f1 != f2 && l2 > l1 {
        Ok(format!("F₁ ⊂ F₂ with loss {l1} < {l2}"))
    } else {
        Err(format!("witness failed: {l1} vs {l2}"))
    }
}

// 9 ──────────────────────────────────────────────────────────────────────────

fn read_all(paths: &[PathBuf]) -> Vec<Vec<u8>> {
    paths.iter().map(|p| std::fs::read(p).unwrap()).collect()
}

/// The `lcc` binary next to this test executable, if the workspace built it.
fn cli_binary() -> Option<PathBuf> {
    let exe = std::env::current_exe().ok()?;
    let dir = exe.parent()?.parent()?;
    let bin = dir.join(format!("lcc{}", std::env::consts::EXE_SUFFIX));
    bin.exists().then_some(bin)
}

fn files_under(dir: &Path) -> Vec<(PathBuf, Vec<u8>)> {
    let mut out = Vec::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for entry in std::fs::read_dir(&d).unwrap() {
            let path = entry.unwrap().path();
            if path.is_dir() {
                stack.push(path);
            } else {
                out.push((path.strip_prefix(dir).unwrap().to_path_buf(), std::fs::read(&path).unwrap()));
            }
        }
    }
    out.sort();
    out
}

fn cli_determinism(bin: &Path) -> Result<usize, String> {
    let tmp = tempfile::tempdir().unwrap();
    let matrix = tmp.path().join("matrix.csv");
    let grid = ParamGrid::range(0.0, 1.0, 0.01).unwrap();
    let rows = (0..100).map(|_| grid.points().map(|p| 1.0 - p[0]).collect()).collect();
    LossMatrix::from_rows(grid, rows).unwrap().write_csv(std::fs::File::create(&matrix).unwrap()).unwrap();
    let commands: Vec<Vec<String>> = vec![
        vec!["calibrate".into(), "--matrix".into(), matrix.display().to_string(), "--alpha".into(), "0.2".into(), "--delta".into(), "0.1".into()],
        vec!["demo".into(), "selective".into(), "--seed".into(), "5".into(), "--trials".into(), "100".into()],
        vec!["demo".into(), "segmentation".into(), "--seed".into(), "5".into(), "--trials".into(), "100".into()],
        vec!["demo".into(), "multi".into(), "--seed".into(), "5".into(), "--trials".into(), "100".into()],
    ];
    let mut compared = 0;
    for (i, args) in commands.iter().enumerate() {
        let mut outputs = Vec::new();
        for run in 0..2 {
            let out = tmp.path().join(format!("cmd{i}-run{run}"));
            let status = Command::new(bin).args(args).arg("--out").arg(&out).output().unwrap();
            if !status.status.success() {
                return Err(format!("`lcc {}` failed: {}", args.join(" "), String::from_utf8_lossy(&status.stderr)));
            }
            outputs.push(files_under(&out));
        }
        if outputs[0] != outputs[1] || outputs[0].is_empty() {
            return Err(format!("`lcc {}` reports differ between runs", args.join(" ")));
        }
        compared += outputs[0].len();
    }
    Ok(compared)
}

fn determinism() -> Outcome {
    let data = generate_regression(&SyntheticRegressionConfig { n: 300, seed: 90, ..Default::default() }).unwrap();
    let exp = SplitExperiment {
        grid: ParamGrid::range(0.0, 1.0, 0.05).unwrap(),
        alphas: vec![0.01, 0.05],
        deltas: vec![0.1],
        bound: 1.0,
        search: SearchFunction::Max,
        plan: SplitPlan { repeats: 1, seed: 91, ..Default::default() },
    };
    let small = TrainConfig { n_trees: 10, ..model(92) };
    let source = FieldSource::new(&SyntheticFieldConfig { rows: 9, cols: 9, ..Default::default() }, unit_grid()).unwrap();
    let mc = MonteCarloConfig {
        n: 50,
        trials: 100,
        alphas: vec![0.4],
        deltas: vec![0.2],
        bound: 1.0,
        search: SearchFunction::Min,
        seed: 93,
    };
    let run = || {
        let dir = tempfile::tempdir().unwrap();
        let split = run_split_experiment(ExperimentData::Selective { data: &data, model: small.clone() }, &exp).unwrap();
        let mut files = read_all(&write_split_report(&split, dir.path().join("split")).unwrap());
        let report = monte_carlo_guarantee(&source, &mc).unwrap();
        files.extend(read_all(&write_monte_carlo_report(&report, dir.path().join("mc")).unwrap()));
        files
    };
    let first = run();
    if first != run() {
        return Err("library report bytes differ between runs".into());
    }
    let library = format!("{} library report files identical", first.len());
    match cli_binary() {
        Some(bin) => cli_determinism(&bin).map(|n| format!("{library}; {n} CLI report files identical across 4 commands")),
        None => Ok(format!("{library}; lcc binary not built, CLI determinism covered by the cli test suite")),
    }
}

fn check(id: u32, name: &str, f: impl FnOnce() -> Outcome) -> bool {
    let start = Instant::now();
    let result = panic::catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|e| {
        let msg = e
            .downcast_ref::<String>()
            .cloned()
            .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
            .unwrap_or_default();
        Err(format!("panicked: {msg}"))
    });
    let secs = start.elapsed().as_secs_f64();
    match &result {
        Ok(detail) => println!("criterion {id} PASS [{secs:7.2}s] {name}: {detail}"),
        Err(detail) => println!("criterion {id} FAIL [{secs:7.2}s] {name}: {detail}"),
    }
    result.is_ok()
}

fn main() {
    // `cargo test -- --list` and filters are not meaningful for this suite
    if std::env::args().any(|a| a == "--list") {
        return;
    }
    let mut passed = Vec::new();
    passed.push(check(1, "quantile oracle equivalence", quantile_oracle));
    passed.push(check(2, "CLCP reduction identity", clcp_reduction));
    let mut runs = None;
    passed.push(check(3, "ideal-mode guarantee", || {
        let r = run_monte_carlo();
        let out = ideal_guarantee(&r);
        runs = Some(r);
        out
    }));
    let missing = "Monte Carlo runs did not complete";
    passed.push(check(5, "feasible-set inclusion", || inclusion(runs.as_ref().ok_or(missing)?)));
    passed.push(check(6, "multi-loss joint control", || multi_control(runs.as_ref().ok_or(missing)?)));
    let mut selective = None;
    passed.push(check(4, "practical-mode empirical control", || {
        let (sel, seg) = (selective_split(), segmentation_split());
        let out = practical_control(&sel, &seg);
        selective = Some(sel);
        out
    }));
    passed.push(check(7, "non-monotonicity witness", non_monotone_witness));
    passed.push(check(8, "efficiency trend", || {
        efficiency_trend(selective.as_ref().ok_or("split experiment did not complete")?)
    }));
    passed.push(check(9, "determinism", determinism));
    let failed = passed.iter().filter(|p| !**p).count();
    println!("acceptance: {} passed, {failed} failed", passed.len() - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
