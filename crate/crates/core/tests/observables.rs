use ionres_core::density::DensityMatrix;
use ionres_core::linalg::CMatrix;
use ionres_core::observables::{ObservableError, MIN_NEIGHBORHOOD_POINTS};
use ionres_core::{contrast_at, fit_incoherence_vs_current, incoherence, locate_resonances};
use num_complex::Complex64;
use proptest::prelude::*;
use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};

/// Random density matrix `A A^dagger / Tr(A A^dagger)` of a given rank.
fn random_state(rng: &mut impl Rng, n_sites: usize, rank: usize) -> DensityMatrix<f64> {
    let dim = 1 << n_sites;
    let cols: Vec<Vec<Complex64>> = (0..rank)
        .map(|_| {
            (0..dim)
                .map(|_| Complex64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)))
                .collect()
        })
        .collect();
    let mut m = CMatrix::zeros(dim);
    for v in &cols {
        m.add_scaled(Complex64::new(1.0, 0.0), &CMatrix::outer(v, v));
    }
    let tr = m.trace().re;
    DensityMatrix::from_matrix(n_sites, m.scale_real(1.0 / tr)).unwrap()
}

/// Direct double sum over ordered pairs.
fn incoherence_reference(rho: &DensityMatrix<f64>) -> f64 {
    let d = rho.dim();
    let mut total = 0.0;
    for k in 0..d {
        for l in 0..d {
            if k != l {
                total += (rho.get(k, k) * rho.get(l, l) - rho.get(k, l) * rho.get(l, k)).norm();
            }
        }
    }
    total
}

#[test]
fn incoherence_examples() {
    let mut rng = StdRng::seed_from_u64(3);
    for n in 1..=3 {
        let pure = random_state(&mut rng, n, 1);
        assert!(incoherence(&pure) < 1e-10);
        let d = (1 << n) as f64;
        let mixed = DensityMatrix::<f64>::maximally_mixed(n);
        assert!((incoherence(&mixed) - (d - 1.0) / d).abs() < 1e-14);
    }
    let half = DensityMatrix::<f64>::from_matrix(1, CMatrix::from_diagonal(&[0.5, 0.5])).unwrap();
    assert!((incoherence(&half) - 0.5).abs() < 1e-15);
}

#[test]
fn incoherence_matches_direct_sum() {
    let mut rng = StdRng::seed_from_u64(11);
    for _ in 0..50 {
        let rank = rng.gen_range(1..=8);
        let rho = random_state(&mut rng, 3, rank);
        assert!((incoherence(&rho) - incoherence_reference(&rho)).abs() < 1e-13);
    }
}

#[test]
fn maximal_mixing_is_never_exceeded() {
    let mut rng = StdRng::seed_from_u64(5);
    for i in 0..1000 {
        let n = 1 + i % 3;
        let d = (1 << n) as f64;
        let rank = rng.gen_range(1..=(1 << n));
        let rho = random_state(&mut rng, n, rank);
        let c = incoherence(&rho);
        assert!(c >= 0.0);
        assert!(c <= (d - 1.0) / d + 1e-9, "N = {n}, rank {rank}: {c}");
    }
}

#[test]
fn synthetic_gaussian_dip_is_located() {
    let z = 7.3;
    let sigma = 0.4;
    let step = 0.1;
    let curve: Vec<(f64, f64)> = (0..=80)
        .map(|i| {
            let x = 3.0 + step * i as f64;
            (x, 1.0 - (-(x - z) * (x - z) / (2.0 * sigma * sigma)).exp())
        })
        .collect();
    let report = locate_resonances(&curve, &[z], 0.0).unwrap();
    let r = &report.resonances[0];
    assert!((r.located - z).abs() <= step, "{r:?}");
    assert!((r.grid_minimum - z).abs() <= step);
    assert!(r.depth > 0.99, "{r:?}");
}

#[test]
fn constant_curve_has_no_depth() {
    let curve: Vec<(f64, f64)> = (0..40).map(|i| (i as f64 * 0.5, 3.0)).collect();
    let report = locate_resonances(&curve, &[5.0, 12.0], 1.0).unwrap();
    assert_eq!(report.resonances.len(), 2);
    assert!(report.depths().iter().all(|&d| d == 0.0));
    assert_eq!(report.gamma, 1.0);
}

#[test]
fn zeros_outside_the_range_are_skipped() {
    let curve: Vec<(f64, f64)> = (0..20)
        .map(|i| (i as f64, (i as f64 - 9.0).abs()))
        .collect();
    let report = locate_resonances(&curve, &[-4.0, 9.0, 40.0], 0.0).unwrap();
    assert_eq!(report.resonances.len(), 1);
    assert_eq!(report.resonances[0].predicted, 9.0);
}

#[test]
fn sparse_neighbourhoods_are_rejected() {
    let curve: Vec<(f64, f64)> = (0..10).map(|i| (i as f64, 1.0)).collect();
    let err = locate_resonances(&curve, &[3.0, 4.0], 0.0).unwrap_err();
    assert!(matches!(
        err,
        ObservableError::InsufficientResolution {
            needed: MIN_NEIGHBORHOOD_POINTS,
            ..
        }
    ));
    let unsorted = vec![(1.0, 1.0), (0.5, 1.0)];
    assert_eq!(
        locate_resonances(&unsorted, &[0.7], 0.0),
        Err(ObservableError::UnsortedCurve)
    );
}

#[test]
fn contrast_of_peaks_and_dips() {
    let bump = |x: f64| (-(x - 5.0) * (x - 5.0) / 0.5).exp();
    let peak: Vec<(f64, f64)> = (0..=40)
        .map(|i| {
            let x = 0.25 * i as f64;
            (x, 2.0 + bump(x) - 0.5 * bump(x - 3.0) - 0.5 * bump(x + 3.0))
        })
        .collect();
    // Flanks are the dips at 2 and 8, both at 1.5 up to the bump tails.
    let c = contrast_at(&peak, 19);
    assert!((c - 3.0 / 1.5 + 1.0).abs() < 1e-3, "{c}");
    let dip: Vec<(f64, f64)> = peak.iter().map(|&(x, y)| (x, 4.0 - y)).collect();
    let report = locate_resonances(&dip, &[5.0], 0.0).unwrap();
    assert!((contrast_at(&dip, 20) - report.resonances[0].depth).abs() < 1e-12);
    let line: Vec<(f64, f64)> = (0..10).map(|i| (i as f64, i as f64)).collect();
    assert_eq!(contrast_at(&line, 4), 0.0);
}

#[test]
fn fit_examples() {
    let fit = fit_incoherence_vs_current(&[(0.0, 0.0), (1.0, 2.0), (2.0, 4.0)]).unwrap();
    assert!((fit.slope - 2.0).abs() < 1e-12 && fit.intercept.abs() < 1e-12);
    let line: Vec<(f64, f64)> = (0..7)
        .map(|i| (1e5 * i as f64, 0.3 + 2e-6 * i as f64))
        .collect();
    assert!((fit_incoherence_vs_current(&line).unwrap().r_squared - 1.0).abs() < 1e-12);
    assert_eq!(
        fit_incoherence_vs_current(&[(1.0, 0.0), (2.0, 1.0)]),
        Err(ObservableError::TooFewPoints {
            needed: 3,
            found: 2
        })
    );
    assert_eq!(
        fit_incoherence_vs_current(&[(3.0, 0.0), (3.0, 1.0), (3.0, 5.0)]),
        Err(ObservableError::DegenerateFit)
    );
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn diagonal_phases_leave_incoherence_unchanged(seed in any::<u64>(), phases in prop::collection::vec(0.0f64..6.3, 8)) {
        let mut rng = StdRng::seed_from_u64(seed);
        let rho = random_state(&mut rng, 3, 3);
        let rotated = CMatrix::from_fn(8, |r, c| {
            rho.get(r, c) * Complex64::from_polar(1.0, phases[r] - phases[c])
        });
        let rotated = DensityMatrix::from_matrix(3, rotated).unwrap();
        prop_assert!((incoherence(&rho) - incoherence(&rotated)).abs() < 1e-12);
    }

    #[test]
    fn mixing_diagonal_states_does_not_lower_incoherence(
        a in prop::collection::vec(0.01f64..1.0, 4),
        b in prop::collection::vec(0.01f64..1.0, 4),
        w in 0.0f64..1.0,
    ) {
        let norm = |v: &[f64]| -> Vec<f64> { let s: f64 = v.iter().sum(); v.iter().map(|x| x / s).collect() };
        let (a, b) = (norm(&a), norm(&b));
        let mix: Vec<f64> = a.iter().zip(&b).map(|(x, y)| w * x + (1.0 - w) * y).collect();
        let c = |p: &[f64]| incoherence(&DensityMatrix::from_matrix(2, CMatrix::from_diagonal(p)).unwrap());
        prop_assert!(c(&mix) >= c(&a).min(c(&b)) - 1e-12);
    }

    #[test]
    fn depths_lie_in_the_unit_interval(values in prop::collection::vec(0.0f64..10.0, 30..60)) {
        let curve: Vec<(f64, f64)> = values.iter().enumerate().map(|(i, &v)| (i as f64 * 0.25, v)).collect();
        let hi = curve.last().unwrap().0;
        let report = locate_resonances(&curve, &[hi * 0.3, hi * 0.7], 0.0).unwrap();
        for r in &report.resonances {
            prop_assert!((0.0..=1.0).contains(&r.depth));
            prop_assert!(r.minimum <= r.shoulder + 1e-12);
        }
    }

    #[test]
    fn r_squared_is_a_fraction(points in prop::collection::vec((0.0f64..1e6, 0.0f64..1.0), 3..12)) {
        if let Ok(fit) = fit_incoherence_vs_current(&points) {
            prop_assert!((0.0..=1.0).contains(&fit.r_squared));
        }
    }
}
