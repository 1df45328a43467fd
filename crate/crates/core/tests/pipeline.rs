use lcc_core::harness::{
    field_matrices, generate_fields, monte_carlo_guarantee, FieldSource, MonteCarloConfig, SyntheticFieldConfig,
};
use lcc_core::{calibrate, calibrate_ideal, ControlSpec, ParamGrid, SearchFunction};

fn small_fields(seed: u64) -> SyntheticFieldConfig {
    SyntheticFieldConfig { rows: 12, cols: 12, n: 400, seed, ..Default::default() }
}

#[test]
fn practical_and_ideal_agree_more_often_with_more_data() {
    let grid = ParamGrid::range(0.0, 1.0, 0.02).unwrap();
    let source = FieldSource::new(&small_fields(1), grid).unwrap();
    let rates: Vec<f64> = [30, 300]
        .into_iter()
        .map(|n| {
            let config = MonteCarloConfig {
                n,
                trials: 200,
                alphas: vec![0.4],
                deltas: vec![0.1],
                bound: 1.0,
                search: SearchFunction::Min,
                seed: 4,
            };
            let report = monte_carlo_guarantee(&source, &config).unwrap();
            let cell = report.cell(0.4, 0.1).unwrap();
            assert_eq!(cell.inclusion_failures, 0);
            assert!(cell.practical.within(0.1) && cell.ideal.within(0.1), "{cell:?}");
            cell.agreement_rate.unwrap()
        })
        .collect();
    println!("agreement by n: {rates:?}");
    assert!(rates[1] >= rates[0], "{rates:?}");
}

#[test]
fn adding_the_test_row_never_shrinks_the_ideal_feasible_set_below_practical() {
    // With B = 1 and losses in [0, 1] the practical quantile dominates the
    // ideal one, so every practically feasible point is ideally feasible.
    let data = generate_fields(&small_fields(9)).unwrap();
    let grid = ParamGrid::range(0.0, 1.0, 0.02).unwrap();
    let fam = field_matrices(data.samples.iter(), &grid).unwrap();
    let spec = ControlSpec::new(0.4, 0.1, 1.0).unwrap();
    for start in (0..300).step_by(50) {
        let calib = fam.losses[0].select_rows(&(start..start + 99).collect::<Vec<_>>());
        let with_test = fam.losses[0].select_rows(&(start..start + 100).collect::<Vec<_>>());
        let practical = calibrate(&calib, &spec, &SearchFunction::Min).unwrap();
        let ideal = calibrate_ideal(&with_test, &spec, &SearchFunction::Min).unwrap();
        assert!(practical.feasible.iter().all(|i| ideal.feasible.contains(i)));
        assert!(ideal.lambda_index <= practical.lambda_index);
    }
}
