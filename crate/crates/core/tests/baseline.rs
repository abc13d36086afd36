use ionres_core::baseline::{default_broadening, BaselineError, RateModel};
use ionres_core::bessel::bessel_first_zeros;
use ionres_core::model::*;
use ionres_core::{classical_current, classical_rates, validate};
use proptest::prelude::*;

fn single_site(gamma: f64) -> ValidatedSpec {
    let mut spec = SimulationSpec::desk_scale(0.0);
    spec.chain = ChainSpec::uniform(1, 0.0, 0.0, 0.0, 0.0);
    spec.baths.gamma_source = gamma;
    spec.baths.gamma_drain = gamma;
    validate(spec).unwrap()
}

#[test]
fn lorentzian_rate_examples() {
    let drive = DriveSpec {
        amplitude: 0.0,
        angular_frequency: 2e8,
        waveform: Waveform::Cosine,
    };
    let resonant = ChainSpec::uniform(2, 3.0, 0.0, 0.0, 0.0);
    assert!((classical_rates(&resonant, &drive, 0.5, 0.0)[0] - 2.0 * 9.0 / 0.5).abs() < 1e-12);

    let fig3 = ChainSpec::uniform(2, 8e8, 2.56e10, 0.0, 0.0);
    let w = classical_rates(&fig3, &drive, 2e8, 0.0)[0];
    assert!((w / 3.9e5 - 1.0).abs() < 0.01, "{w:e}");

    let far = ChainSpec::uniform(2, 1.0, 1e12, 0.0, 0.0);
    assert!(classical_rates(&far, &drive, 1.0, 0.0)[0] < 1e-20);
}

#[test]
fn default_broadening_adds_dephasing_and_baths() {
    let spec = validate(SimulationSpec::full_scale(5e7)).unwrap();
    assert_eq!(default_broadening(&spec, 1), 5e7 + 2e8);
}

#[test]
fn single_site_matches_two_level_balance() {
    for gamma in [1e6, 1e8] {
        let r = classical_current::<f64>(&single_site(gamma), None).unwrap();
        assert!(r.converged);
        assert!((r.current / (gamma / 2.0) - 1.0).abs() < 1e-3, "{r:?}");
        assert!(r.incoherence.is_none());
    }
}

#[test]
fn closed_bonds_carry_nothing() {
    let mut spec = SimulationSpec::desk_scale(0.0).with_amplitude_ratio(5.0);
    spec.chain.hopping = vec![0.0; 3];
    let r = classical_current::<f64>(&validate(spec).unwrap(), None).unwrap();
    assert!(r.current.abs() < 1e-9);
}

#[test]
fn input_errors() {
    let spec = validate(SimulationSpec::desk_scale(0.0)).unwrap();
    assert!(matches!(
        classical_current::<f64>(&spec, Some(0.0)),
        Err(BaselineError::NonpositiveBroadening(_))
    ));
    let mut dry = SimulationSpec::desk_scale(0.0);
    dry.baths.gamma_drain = 0.0;
    assert!(matches!(
        classical_current::<f64>(&validate(dry).unwrap(), None),
        Err(BaselineError::NoDrain)
    ));
}

#[test]
fn classical_current_has_no_bessel_structure() {
    // Between two adjacent zeros dI/dOmega_1 changes sign at most once.
    let zeros: Vec<f64> = bessel_first_zeros(8, 2);
    let ratios: Vec<f64> = (0..=24)
        .map(|i| zeros[0] - 1.0 + i as f64 * (zeros[1] - zeros[0] + 2.0) / 24.0)
        .collect();
    let currents: Vec<f64> = ratios
        .iter()
        .map(|&x| {
            let spec = validate(SimulationSpec::desk_scale(0.0).with_amplitude_ratio(x)).unwrap();
            classical_current::<f64>(&spec, None).unwrap().current
        })
        .collect();
    let signs: Vec<bool> = currents.windows(2).map(|w| w[1] > w[0]).collect();
    let flips = signs.windows(2).filter(|s| s[0] != s[1]).count();
    assert!(flips <= 1, "{currents:?}");
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn flows_balance_injection_and_extraction(
        p in prop::collection::vec(0.0f64..=1.0, 4),
        t in 0.0f64..1e-7,
        gamma in 0.0f64..5e7,
        n_drain in 0.0f64..2.0,
    ) {
        let mut spec = SimulationSpec::desk_scale(gamma).with_amplitude_ratio(11.0);
        spec.baths.n_drain = n_drain;
        spec.chain.thermal = vec![1e6; 3];
        let spec = validate(spec).unwrap();
        let model = RateModel::new(&spec, None).unwrap();
        let rates = model.rates(t);
        prop_assert!(rates.iter().all(|&w| w >= 0.0));
        let mut dp = vec![0.0; 4];
        model.derivative(&rates, &p, &mut dp);
        let (inject, extract) = model.boundary_fluxes(&p);
        let total: f64 = dp.iter().sum();
        let scale = inject.abs() + extract.abs() + rates.iter().sum::<f64>();
        prop_assert!((total - (inject - extract)).abs() <= 1e-14 * scale.max(1.0));
        // Full sites cannot gain and empty sites cannot lose.
        for (k, (&pk, &d)) in p.iter().zip(&dp).enumerate() {
            if pk == 1.0 { prop_assert!(d <= 1e-6 * scale, "site {} gains {}", k + 1, d); }
            if pk == 0.0 { prop_assert!(d >= -1e-6 * scale, "site {} loses {}", k + 1, d); }
        }
    }
}

#[test]
fn fixed_point_matches_long_integration() {
    let mut spec = SimulationSpec::desk_scale(0.0).with_amplitude_ratio(12.2);
    let direct = classical_current::<f64>(&validate(spec.clone()).unwrap(), None).unwrap();
    spec.integrator.steady_method = SteadyMethod::Stepping;
    spec.integrator.steady_state_rel_change = 1e-9;
    let stepped = classical_current::<f64>(&validate(spec).unwrap(), None).unwrap();
    assert!(direct.converged && stepped.converged);
    assert!(direct.periods_used < 20, "{direct:?}");
    assert!(
        (direct.current / stepped.current - 1.0).abs() < 1e-6,
        "{direct:?} vs {stepped:?}"
    );
}
