use ionres_core::bessel::bessel_first_zeros;
use ionres_core::model::SimulationSpec;
use ionres_core::sweep::*;

fn small_plan(workers: usize, models: ModelSelection) -> SweepPlan {
    let settings = SweepSettings {
        ratio_min: Some(11.8),
        ratio_max: Some(12.6),
        points: 5,
        gammas: vec![0.0, 5e6],
        models,
    };
    let mut base = SimulationSpec::desk_scale(0.0);
    base.integrator.max_periods = 400;
    SweepPlan::from_settings(base, &settings, None, workers).unwrap()
}

fn csv(outcome: &SweepOutcome) -> String {
    let mut buf = Vec::new();
    write_csv(&outcome.rows, &mut buf).unwrap();
    String::from_utf8(buf).unwrap()
}

#[test]
fn rows_are_ordered_and_independent_of_workers() {
    let one = run_sweep(&small_plan(1, ModelSelection::Quantum)).unwrap();
    let three = run_sweep(&small_plan(3, ModelSelection::Quantum)).unwrap();
    let again = run_sweep(&small_plan(1, ModelSelection::Quantum)).unwrap();
    assert_eq!(csv(&one), csv(&three));
    assert_eq!(csv(&one), csv(&again));
    assert_eq!(one.rows.len(), 10);
    let keys: Vec<(f64, f64)> = one
        .rows
        .iter()
        .map(|r| (r.gamma, r.omega1_over_omega))
        .collect();
    let mut sorted = keys.clone();
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
    assert_eq!(keys, sorted);
    assert!(one.rows.iter().all(|r| r.incoherence.is_some()));
}

#[test]
fn csv_schema_is_stable() {
    let outcome = run_sweep(&small_plan(0, ModelSelection::Both)).unwrap();
    let text = csv(&outcome);
    let mut lines = text.lines();
    assert_eq!(
        lines.next().unwrap(),
        "omega1_over_omega,gamma,model,current,converged,periods,incoherence"
    );
    assert_eq!(lines.clone().count(), 20);
    for line in lines {
        let fields: Vec<&str> = line.split(',').collect();
        assert_eq!(fields.len(), 7);
        match fields[2] {
            "quantum" => assert!(!fields[6].is_empty()),
            "classical" => assert!(fields[6].is_empty()),
            other => panic!("model {other}"),
        }
    }
    assert_eq!(outcome.analysis.predicted_zeros.len(), 1);
    assert_eq!(outcome.analysis.quantum.len(), 2);
    assert_eq!(outcome.analysis.classical.len(), 2);
    assert_eq!(outcome.analysis.coherence_points.len(), 2);
    assert!(outcome.analysis.fit.is_none());
    assert!(outcome
        .analysis
        .warnings
        .iter()
        .any(|w| w.contains("three dephasing rates")));
}

#[test]
fn severed_chain_rows_are_zero() {
    let mut base = SimulationSpec::desk_scale(0.0);
    base.chain = ionres_core::model::ChainSpec::uniform(2, 0.0, 1.6e9, 0.0, 0.0);
    let settings = SweepSettings {
        ratio_min: Some(3.0),
        ratio_max: Some(4.0),
        points: 2,
        gammas: vec![0.0],
        models: ModelSelection::Both,
    };
    let plan = SweepPlan::from_settings(base, &settings, None, 1).unwrap();
    let outcome = run_sweep(&plan).unwrap();
    assert_eq!(outcome.rows.len(), 4);
    assert!(outcome.rows.iter().all(|r| r.current == 0.0 && r.converged));
    assert!(outcome.all_converged());
}

#[test]
fn synthetic_rows_are_analysed() {
    let settings = SweepSettings {
        ratio_min: Some(10.0),
        ratio_max: Some(18.0),
        points: 81,
        gammas: vec![0.0, 1.0, 2.0, 3.0],
        models: ModelSelection::Quantum,
    };
    let plan =
        SweepPlan::from_settings(SimulationSpec::desk_scale(0.0), &settings, None, 1).unwrap();
    let zeros: Vec<f64> = bessel_first_zeros(8, 2);
    assert_eq!(plan.predicted_zeros(), zeros);
    let mut rows = Vec::new();
    for &gamma in &plan.gammas {
        let depth = 0.9 / (1.0 + gamma);
        for &x in &plan.ratios {
            let dip: f64 = zeros
                .iter()
                .map(|z| (-(x - z) * (x - z) / 0.08).exp())
                .sum();
            let current = 1e5 * (1.0 - depth * dip);
            rows.push(SweepRow {
                omega1_over_omega: x,
                gamma,
                model: ModelKind::Quantum,
                current,
                converged: true,
                periods: 10,
                // Incoherence peaks where the current dips.
                incoherence: Some(0.5 + 0.1 * (1.0 - current / 1e5)),
            });
        }
    }
    let analysis = analyse(&plan, &rows);
    assert!(analysis.warnings.is_empty(), "{:?}", analysis.warnings);
    assert_eq!(analysis.quantum.len(), 4);
    for report in &analysis.quantum {
        for (r, z) in report.resonances.iter().zip(&zeros) {
            assert!((r.located - z).abs() < 0.1);
        }
    }
    for w in analysis.quantum.windows(2) {
        for (a, b) in w[0].depths().iter().zip(w[1].depths()) {
            assert!(b < *a);
        }
    }
    for &(c, i) in &analysis.coherence_points {
        assert!((c / i - 0.2).abs() < 0.01, "({c}, {i})");
    }
    let fit = analysis.fit.unwrap();
    assert!((fit.slope / 5.0 - 1.0).abs() < 0.05, "{fit:?}");
    assert!(fit.r_squared > 0.999);
}

#[test]
fn plan_validation() {
    let base = SimulationSpec::desk_scale(0.0);
    let mut s = SweepSettings {
        ratio_min: Some(2.0),
        ratio_max: Some(1.0),
        ..SweepSettings::default()
    };
    assert!(matches!(
        SweepPlan::from_settings(base.clone(), &s, None, 1),
        Err(SweepError::EmptyRange(..))
    ));
    s.ratio_max = Some(3.0);
    s.points = 1;
    assert!(matches!(
        SweepPlan::from_settings(base.clone(), &s, None, 1),
        Err(SweepError::TooFewPoints(1))
    ));
    s.points = 3;
    s.gammas = vec![];
    assert!(matches!(
        SweepPlan::from_settings(base.clone(), &s, None, 1),
        Err(SweepError::NoGammas)
    ));
    s.gammas = vec![-1.0];
    assert!(matches!(
        SweepPlan::from_settings(base.clone(), &s, None, 1),
        Err(SweepError::BadGamma(_))
    ));
    let mut odd = base;
    odd.chain.onsite_base = 8.5 * odd.drive.angular_frequency;
    assert!(matches!(
        SweepPlan::from_settings(odd, &SweepSettings::default(), None, 1),
        Err(SweepError::NoDefaultRange(_))
    ));
}
