//! Simulation inputs and their validation.
//!
//! Units: every rate and energy is an angular frequency in rad/s with
//! hbar = 1; times are in seconds. Site 1 couples to the source, site N to
//! the drain.

use std::fmt;
use std::ops::Deref;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::basis::MAX_SITES;

/// Static description of the chain.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ChainSpec {
    pub n_sites: usize,
    /// Hopping rates `c_k` between sites k and k+1 (N-1 entries).
    pub hopping: Vec<f64>,
    /// Tilt `Omega_0`: site k sits at energy `Omega_0 * k`.
    pub onsite_base: f64,
    /// Pure dephasing rates `gamma_k` (N entries).
    pub dephasing: Vec<f64>,
    /// Incoherent nearest-neighbour exchange rates (N-1 entries).
    pub thermal: Vec<f64>,
}

impl ChainSpec {
    /// Chain with the same coupling on every bond and the same dephasing on
    /// every site.
    pub fn uniform(
        n_sites: usize,
        hopping: f64,
        onsite_base: f64,
        dephasing: f64,
        thermal: f64,
    ) -> Self {
        let bonds = n_sites.saturating_sub(1);
        Self {
            n_sites,
            hopping: vec![hopping; bonds],
            onsite_base,
            dephasing: vec![dephasing; n_sites],
            thermal: vec![thermal; bonds],
        }
    }

    pub fn n_bonds(&self) -> usize {
        self.n_sites.saturating_sub(1)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Waveform {
    /// On-site energies `(Omega_0 + Omega_1 cos(omega t)) * k`.
    Cosine,
    /// Couplings `(c/2)[1 + sgn(sin(omega t + k pi))]`, no on-site term.
    SquareCoupling,
}

impl fmt::Display for Waveform {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Waveform::Cosine => "cosine",
            Waveform::SquareCoupling => "square_coupling",
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DriveSpec {
    /// `Omega_1`, rad/s.
    pub amplitude: f64,
    /// `omega`, rad/s.
    pub angular_frequency: f64,
    pub waveform: Waveform,
}

impl DriveSpec {
    pub fn period(&self) -> f64 {
        2.0 * std::f64::consts::PI / self.angular_frequency
    }

    /// `Omega_1 / omega`, the sweep axis.
    pub fn amplitude_ratio(&self) -> f64 {
        self.amplitude / self.angular_frequency
    }
}

/// Source and drain reservoirs.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BathSpec {
    pub gamma_source: f64,
    pub gamma_drain: f64,
    /// Reservoir occupation at the source.
    pub n_source: f64,
    pub n_drain: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Frame {
    Lab,
    /// Interaction picture that removes the time-dependent tilt.
    Rotating,
}

impl fmt::Display for Frame {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Frame::Lab => "lab",
            Frame::Rotating => "rotating",
        })
    }
}

/// How [`crate::steady_current`] reaches the periodic steady state.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SteadyMethod {
    /// Fixed point of the one-period map, then checked period to period.
    #[default]
    Floquet,
    /// Plain integration from the vacuum until the period average settles.
    Stepping,
}

impl fmt::Display for SteadyMethod {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SteadyMethod::Floquet => "floquet",
            SteadyMethod::Stepping => "stepping",
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IntegratorSpec {
    pub rel_tol: f64,
    pub abs_tol: f64,
    /// Optional user cap on the step, seconds.
    pub max_step: Option<f64>,
    /// Fixed step size, seconds; disables error control when set.
    pub fixed_step: Option<f64>,
    pub frame: Frame,
    /// Relative change of the period-averaged current that counts as steady.
    pub steady_state_rel_change: f64,
    pub steady_method: SteadyMethod,
    pub max_periods: usize,
    pub min_periods: usize,
    /// Samples per drive period used for period averages of nonlinear
    /// observables.
    pub samples_per_period: usize,
}

impl Default for IntegratorSpec {
    fn default() -> Self {
        Self {
            rel_tol: 1e-8,
            abs_tol: 1e-10,
            max_step: None,
            fixed_step: None,
            frame: Frame::Lab,
            steady_state_rel_change: 1e-4,
            steady_method: SteadyMethod::Floquet,
            max_periods: 10_000,
            min_periods: 3,
            samples_per_period: 16,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SimulationSpec {
    pub chain: ChainSpec,
    pub drive: DriveSpec,
    pub baths: BathSpec,
    pub integrator: IntegratorSpec,
}

impl SimulationSpec {
    /// Five-site chain with the conductivity-resonance parameters:
    /// `Omega_0 = 2.56e10`, `Gamma_s = Gamma_d = 1e8`, `omega = 2e8`,
    /// `c = 8e8` (all s^-1), unit source occupation, empty drain.
    pub fn full_scale(dephasing: f64) -> Self {
        Self {
            chain: ChainSpec::uniform(5, 8e8, 2.56e10, dephasing, 0.0),
            drive: DriveSpec {
                amplitude: 0.0,
                angular_frequency: 2e8,
                waveform: Waveform::Cosine,
            },
            baths: BathSpec {
                gamma_source: 1e8,
                gamma_drain: 1e8,
                n_source: 1.0,
                n_drain: 0.0,
            },
            integrator: IntegratorSpec {
                frame: Frame::Rotating,
                ..IntegratorSpec::default()
            },
        }
    }

    /// Four-site chain with `Omega_0/omega = 8`, cheap enough for routine
    /// sweeps: `omega = 2e8`, `c = 5e7`, `Gamma_s = Gamma_d = 1e7`.
    pub fn desk_scale(dephasing: f64) -> Self {
        Self {
            chain: ChainSpec::uniform(4, 5e7, 1.6e9, dephasing, 0.0),
            drive: DriveSpec {
                amplitude: 0.0,
                angular_frequency: 2e8,
                waveform: Waveform::Cosine,
            },
            baths: BathSpec {
                gamma_source: 1e7,
                gamma_drain: 1e7,
                n_source: 1.0,
                n_drain: 0.0,
            },
            integrator: IntegratorSpec {
                frame: Frame::Rotating,
                ..IntegratorSpec::default()
            },
        }
    }

    /// Sets `Omega_1` from the ratio `Omega_1/omega`.
    pub fn with_amplitude_ratio(mut self, ratio: f64) -> Self {
        self.drive.amplitude = ratio * self.drive.angular_frequency;
        self
    }

    /// Sets a uniform dephasing rate on every site.
    pub fn with_dephasing(mut self, gamma: f64) -> Self {
        self.chain.dephasing = vec![gamma; self.chain.n_sites];
        self
    }
}

/// One violated input invariant.
#[derive(Clone, Debug, PartialEq, Error)]
pub enum Violation {
    #[error("chain must have at least one site")]
    EmptyChain,
    #[error("chain of {0} sites exceeds the supported maximum of {MAX_SITES}")]
    TooManySites(usize),
    #[error("drive angular frequency must be positive, got {0}")]
    NonpositiveFrequency(f64),
    #[error("{field} must be non-negative, got {value}")]
    NegativeRate { field: String, value: f64 },
    #[error("{field} must be finite")]
    NonFinite { field: String },
    #[error("{field} has {found} entries, expected {expected}")]
    LengthMismatch {
        field: &'static str,
        expected: usize,
        found: usize,
    },
    #[error("{field} must be positive, got {value}")]
    NonpositiveSetting { field: &'static str, value: f64 },
}

/// Every invariant violated by a [`SimulationSpec`].
#[derive(Clone, Debug, PartialEq, Error)]
pub struct ValidationError {
    pub violations: Vec<Violation>,
}

impl fmt::Display for ValidationError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "invalid simulation spec:")?;
        for v in &self.violations {
            write!(f, "\n  - {v}")?;
        }
        Ok(())
    }
}

/// A [`SimulationSpec`] that passed [`validate`].
#[derive(Clone, Debug, PartialEq)]
pub struct ValidatedSpec(SimulationSpec);

impl ValidatedSpec {
    pub fn into_inner(self) -> SimulationSpec {
        self.0
    }
}

impl Deref for ValidatedSpec {
    type Target = SimulationSpec;
    fn deref(&self) -> &SimulationSpec {
        &self.0
    }
}

fn check_rate(out: &mut Vec<Violation>, field: String, value: f64) {
    if !value.is_finite() {
        out.push(Violation::NonFinite { field });
    } else if value < 0.0 {
        out.push(Violation::NegativeRate { field, value });
    }
}

fn check_list(out: &mut Vec<Violation>, field: &'static str, values: &[f64], expected: usize) {
    if values.len() != expected {
        out.push(Violation::LengthMismatch {
            field,
            expected,
            found: values.len(),
        });
    }
    for (i, &v) in values.iter().enumerate() {
        check_rate(out, format!("{field}[{}]", i + 1), v);
    }
}

fn check_positive(out: &mut Vec<Violation>, field: &'static str, value: f64) {
    if !(value > 0.0) || !value.is_finite() {
        out.push(Violation::NonpositiveSetting { field, value });
    }
}

/// Checks every input invariant and reports all violations at once.
pub fn validate(spec: SimulationSpec) -> Result<ValidatedSpec, ValidationError> {
    let mut v = Vec::new();
    let chain = &spec.chain;
    let n = chain.n_sites;
    if n < 1 {
        v.push(Violation::EmptyChain);
    } else if n > MAX_SITES {
        v.push(Violation::TooManySites(n));
    }
    check_list(&mut v, "hopping", &chain.hopping, n.saturating_sub(1));
    check_list(&mut v, "dephasing", &chain.dephasing, n);
    check_list(&mut v, "thermal", &chain.thermal, n.saturating_sub(1));
    if !chain.onsite_base.is_finite() {
        v.push(Violation::NonFinite {
            field: "onsite_base".into(),
        });
    }

    let drive = &spec.drive;
    if !(drive.angular_frequency > 0.0) || !drive.angular_frequency.is_finite() {
        v.push(Violation::NonpositiveFrequency(drive.angular_frequency));
    }
    check_rate(&mut v, "amplitude".into(), drive.amplitude);

    let baths = &spec.baths;
    check_rate(&mut v, "gamma_source".into(), baths.gamma_source);
    check_rate(&mut v, "gamma_drain".into(), baths.gamma_drain);
    check_rate(&mut v, "n_source".into(), baths.n_source);
    check_rate(&mut v, "n_drain".into(), baths.n_drain);

    let int = &spec.integrator;
    check_positive(&mut v, "rel_tol", int.rel_tol);
    check_positive(&mut v, "abs_tol", int.abs_tol);
    check_positive(
        &mut v,
        "steady_state_rel_change",
        int.steady_state_rel_change,
    );
    if let Some(h) = int.max_step {
        check_positive(&mut v, "max_step", h);
    }
    if let Some(h) = int.fixed_step {
        check_positive(&mut v, "fixed_step", h);
    }
    if int.max_periods == 0 {
        v.push(Violation::NonpositiveSetting {
            field: "max_periods",
            value: 0.0,
        });
    }
    if int.samples_per_period < 2 {
        v.push(Violation::NonpositiveSetting {
            field: "samples_per_period",
            value: int.samples_per_period as f64,
        });
    }

    if v.is_empty() {
        Ok(ValidatedSpec(spec))
    } else {
        Err(ValidationError { violations: v })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn full_parameter_set_validates() {
        let spec = SimulationSpec::full_scale(5e7);
        let ok = validate(spec.clone()).expect("full-scale spec is valid");
        assert_eq!(ok.chain.n_sites, 5);
        assert_eq!(ok.chain.onsite_base, 2.56e10);
        assert_eq!(ok.baths.gamma_source, 1e8);
        assert_eq!(ok.drive.angular_frequency, 2e8);
        assert_eq!(ok.chain.hopping, vec![8e8; 4]);
        assert_eq!(*ok, spec);
    }

    #[test]
    fn hopping_list_of_length_n_is_rejected() {
        let mut spec = SimulationSpec::full_scale(0.0);
        spec.chain.hopping = vec![8e8; 5];
        let err = validate(spec).unwrap_err();
        assert_eq!(
            err.violations,
            vec![Violation::LengthMismatch {
                field: "hopping",
                expected: 4,
                found: 5
            }]
        );
    }

    #[test]
    fn negative_source_rate_is_rejected() {
        let mut spec = SimulationSpec::desk_scale(0.0);
        spec.baths.gamma_source = -1.0;
        let err = validate(spec).unwrap_err();
        assert!(matches!(
            err.violations.as_slice(),
            [Violation::NegativeRate { field, value }] if field == "gamma_source" && *value == -1.0
        ));
    }

    #[test]
    fn all_violations_are_listed() {
        let mut spec = SimulationSpec::desk_scale(0.0);
        spec.drive.angular_frequency = 0.0;
        spec.chain.dephasing = vec![-1.0; 4];
        spec.baths.n_drain = -0.5;
        let err = validate(spec).unwrap_err();
        assert!(err
            .violations
            .contains(&Violation::NonpositiveFrequency(0.0)));
        let negatives = err
            .violations
            .iter()
            .filter(|v| matches!(v, Violation::NegativeRate { .. }))
            .count();
        assert_eq!(negatives, 5);
        assert!(err.to_string().contains("n_drain"));
    }

    #[test]
    fn empty_chain_is_rejected() {
        let mut spec = SimulationSpec::desk_scale(0.0);
        spec.chain = ChainSpec::uniform(0, 1.0, 0.0, 0.0, 0.0);
        let err = validate(spec).unwrap_err();
        assert!(err.violations.contains(&Violation::EmptyChain));
    }

    #[test]
    fn validation_is_idempotent() {
        let once = validate(SimulationSpec::desk_scale(5e6)).unwrap();
        let twice = validate(once.clone().into_inner()).unwrap();
        assert_eq!(once, twice);
    }
}
