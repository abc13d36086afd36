//! Classical rate-equation control: site populations hop with
//! dephasing-broadened Lorentzian rates and no coherence at all.

use nalgebra::{DMatrix, DVector};
use thiserror::Error;

use crate::integrator::{DormandPrince, IntegratorError, OdeElem, OdeSystem, StepControl};
use crate::model::{ChainSpec, DriveSpec, SteadyMethod, ValidatedSpec, Waveform};
use crate::propagator::{CurrentResult, SteadyTracker};
use crate::scalar::Real;

/// Populations may leave `[0, 1]` by this much before the run is aborted.
pub const POPULATION_SLACK: f64 = 1e-9;

#[derive(Clone, Debug, PartialEq, Error)]
pub enum BaselineError {
    #[error("broadening must be positive, got {0}")]
    NonpositiveBroadening(f64),
    #[error("steady current needs a drain (gamma_drain > 0)")]
    NoDrain,
    #[error("population of site {site} left [0, 1]: {value:e} at t = {t:e}")]
    PopulationOutOfRange { site: usize, value: f64, t: f64 },
    #[error(transparent)]
    Integrator(#[from] IntegratorError),
}

/// Default broadening of bond `k`: the mean dephasing of its two sites plus
/// both bath rates.
pub fn default_broadening(spec: &ValidatedSpec, bond: usize) -> f64 {
    let g = &spec.chain.dephasing;
    0.5 * (g[bond - 1] + g[bond]) + spec.baths.gamma_source + spec.baths.gamma_drain
}

fn lorentzian_rate(c: f64, broadening: f64, detuning: f64) -> f64 {
    2.0 * c * c * broadening / (broadening * broadening + detuning * detuning)
}

/// Hop rates `W_k(t) = 2 c_k^2 G / (G^2 + Delta(t)^2)` with
/// `Delta = Omega_0 + Omega_1 cos(omega t)`, one per bond.
///
/// For the square-coupling drive the bond is resonant while switched on and
/// closed otherwise.
pub fn classical_rates(chain: &ChainSpec, drive: &DriveSpec, broadening: f64, t: f64) -> Vec<f64> {
    let omega = drive.angular_frequency;
    chain
        .hopping
        .iter()
        .enumerate()
        .map(|(i, &c)| match drive.waveform {
            Waveform::Cosine => {
                let detuning = chain.onsite_base + drive.amplitude * (omega * t).cos();
                lorentzian_rate(c, broadening, detuning)
            }
            Waveform::SquareCoupling => {
                let on = crate::generators::square_switch(omega, i + 1, t);
                lorentzian_rate(c * on, broadening, 0.0)
            }
        })
        .collect()
}

/// Pauli master equation over the site populations.
#[derive(Clone, Debug)]
pub struct RateModel {
    chain: ChainSpec,
    drive: DriveSpec,
    broadening: Vec<f64>,
    inject: f64,
    remove: f64,
    drain_in: f64,
    drain_out: f64,
}

impl RateModel {
    /// `broadening = None` uses [`default_broadening`] on every bond.
    pub fn new(spec: &ValidatedSpec, broadening: Option<f64>) -> Result<Self, BaselineError> {
        let bonds = spec.chain.n_bonds();
        let broadening = match broadening {
            Some(g) if g > 0.0 && g.is_finite() => vec![g; bonds],
            Some(g) => return Err(BaselineError::NonpositiveBroadening(g)),
            None => (1..=bonds).map(|k| default_broadening(spec, k)).collect(),
        };
        if let Some(&g) = broadening.iter().find(|&&g| g <= 0.0) {
            return Err(BaselineError::NonpositiveBroadening(g));
        }
        let b = &spec.baths;
        Ok(Self {
            chain: spec.chain.clone(),
            drive: spec.drive.clone(),
            broadening,
            inject: 2.0 * b.gamma_source * b.n_source,
            remove: 2.0 * b.gamma_source * (b.n_source + 1.0),
            drain_in: 2.0 * b.gamma_drain * b.n_drain,
            drain_out: 2.0 * b.gamma_drain * (b.n_drain + 1.0),
        })
    }

    pub fn n_sites(&self) -> usize {
        self.chain.n_sites
    }

    /// Hop rate of every bond at time `t`, thermal hopping included.
    pub fn rates(&self, t: f64) -> Vec<f64> {
        let mut w = Vec::with_capacity(self.broadening.len());
        self.rates_into(t, &mut w);
        w
    }

    fn rates_into(&self, t: f64, w: &mut Vec<f64>) {
        w.clear();
        let omega = self.drive.angular_frequency;
        for (i, &c) in self.chain.hopping.iter().enumerate() {
            let g = self.broadening[i];
            let coherent = match self.drive.waveform {
                Waveform::Cosine => {
                    let detuning =
                        self.chain.onsite_base + self.drive.amplitude * (omega * t).cos();
                    lorentzian_rate(c, g, detuning)
                }
                Waveform::SquareCoupling => {
                    let on = crate::generators::square_switch(omega, i + 1, t);
                    lorentzian_rate(c * on, g, 0.0)
                }
            };
            w.push(coherent + 2.0 * self.chain.thermal[i]);
        }
    }

    /// `(injection, extraction)` fluxes for populations `p`.
    pub fn boundary_fluxes<T: Real>(&self, p: &[T]) -> (T, T) {
        let n = p.len();
        let one = T::one();
        let injection = T::of(self.inject) * (one - p[0]) + T::of(self.drain_in) * (one - p[n - 1]);
        let extraction = T::of(self.remove) * p[0] + T::of(self.drain_out) * p[n - 1];
        (injection, extraction)
    }

    /// `dp/dt` for populations `p` at time `t`, given the bond rates.
    pub fn derivative<T: Real>(&self, rates: &[f64], p: &[T], dp: &mut [T]) {
        let n = self.n_sites();
        let one = T::one();
        for v in dp[..n].iter_mut() {
            *v = T::zero();
        }
        for (k, &w) in rates.iter().enumerate() {
            let flow = T::of(w) * (p[k] - p[k + 1]);
            dp[k] -= flow;
            dp[k + 1] += flow;
        }
        dp[0] += T::of(self.inject) * (one - p[0]) - T::of(self.remove) * p[0];
        dp[n - 1] += T::of(self.drain_in) * (one - p[n - 1]) - T::of(self.drain_out) * p[n - 1];
    }
}

/// The extra slot integrates `omega p_N` so that it is of order one per
/// period.
struct RateSystem<'a> {
    model: &'a RateModel,
    omega: f64,
    rates: Vec<f64>,
}

impl<T: Real + OdeElem<T>> OdeSystem<T, T> for RateSystem<'_> {
    fn rhs(&mut self, t: T, y: &[T], dy: &mut [T]) {
        let n = self.model.n_sites();
        self.model.rates_into(t.as_f64(), &mut self.rates);
        self.model.derivative(&self.rates, &y[..n], &mut dy[..n]);
        dy[n] = y[n - 1] * T::of(self.omega);
    }
}

/// Step cap that resolves both the drive and the narrow rate peaks while
/// the detuning sweeps through resonance.
pub fn baseline_max_step(spec: &ValidatedSpec, model: &RateModel) -> f64 {
    let mut cap = spec.drive.period() / 20.0;
    let sweep_rate = spec.drive.amplitude * spec.drive.angular_frequency;
    if spec.drive.waveform == Waveform::Cosine && sweep_rate > 0.0 {
        let narrowest = model
            .broadening
            .iter()
            .copied()
            .fold(f64::INFINITY, f64::min);
        cap = cap.min(narrowest / sweep_rate / 4.0);
    }
    if let Some(user) = spec.integrator.max_step {
        cap = cap.min(user);
    }
    cap
}

/// Period-averaged `2 Gamma_d (n_d + 1) <p_N>` at the periodic steady state of
/// the rate model, found the same way as the quantum current: from the fixed
/// point of the one-period map, or from empty sites with
/// [`SteadyMethod::Stepping`] or when that fixed point is not unique.
pub fn classical_current<T: Real + OdeElem<T>>(
    spec: &ValidatedSpec,
    broadening: Option<f64>,
) -> Result<CurrentResult, BaselineError> {
    let gamma_d = spec.baths.gamma_drain;
    if gamma_d <= 0.0 {
        return Err(BaselineError::NoDrain);
    }
    let model = RateModel::new(spec, broadening)?;
    let n = model.n_sites();
    let settings = &spec.integrator;
    let period = spec.drive.period();
    let n_d = spec.baths.n_drain;
    let control = StepControl {
        rel_tol: settings.rel_tol,
        abs_tol: settings.abs_tol,
        max_step: Some(baseline_max_step(spec, &model)),
        fixed_step: settings.fixed_step,
        ..StepControl::default()
    };
    let mut integrator = DormandPrince::<T, T>::new(n + 1, control);
    let mut sys = RateSystem {
        model: &model,
        omega: spec.drive.angular_frequency,
        rates: Vec::with_capacity(n),
    };
    let mut y = vec![T::zero(); n + 1];
    let mut spent = 0;
    if settings.steady_method == SteadyMethod::Floquet {
        spent = n + 1;
        if let Some(start) = periodic_start(&mut integrator, &mut sys, period)? {
            y[..n].copy_from_slice(&start);
        }
    }
    let mut tracker = SteadyTracker::new(
        settings.steady_state_rel_change,
        1e-12 * 2.0 * gamma_d,
        settings.min_periods,
    );
    let mut result = CurrentResult {
        current: 0.0,
        net_current: 0.0,
        periods_used: 0,
        rel_change_last: f64::INFINITY,
        converged: false,
        incoherence: None,
    };
    for p in 1..=settings.max_periods.max(1) {
        y[n] = T::zero();
        let t0 = T::of((p - 1) as f64 * period);
        let t1 = T::of(p as f64 * period);
        integrator.advance(&mut sys, t0, t1, &mut y)?;
        for (k, v) in y[..n].iter().enumerate() {
            let v = v.as_f64();
            if !(-POPULATION_SLACK..=1.0 + POPULATION_SLACK).contains(&v) {
                return Err(BaselineError::PopulationOutOfRange {
                    site: k + 1,
                    value: v,
                    t: t1.as_f64(),
                });
            }
        }
        let mean_pn = y[n].as_f64() / (spec.drive.angular_frequency * period);
        let current = 2.0 * gamma_d * (n_d + 1.0) * mean_pn;
        let converged = tracker.push(p, current);
        result = CurrentResult {
            current,
            net_current: 2.0 * gamma_d * ((n_d + 1.0) * mean_pn - n_d * (1.0 - mean_pn)),
            periods_used: p + spent,
            rel_change_last: tracker.rel_change,
            converged,
            incoherence: None,
        };
        if converged {
            break;
        }
    }
    Ok(result)
}

/// Populations at the start of a period of the periodic steady state. The
/// period map is affine, `p -> M p + v`; `v` comes from empty sites and each
/// column of `M` from one occupied site.
fn periodic_start<T: Real + OdeElem<T>>(
    integrator: &mut DormandPrince<T, T>,
    sys: &mut RateSystem<'_>,
    period: f64,
) -> Result<Option<Vec<T>>, BaselineError> {
    let n = sys.model.n_sites();
    let mut run = |start: Option<usize>| -> Result<Vec<f64>, BaselineError> {
        let mut y = vec![T::zero(); n + 1];
        if let Some(k) = start {
            y[k] = T::one();
        }
        integrator.reset();
        integrator.advance(sys, T::zero(), T::of(period), &mut y)?;
        Ok(y[..n].iter().map(|v| v.as_f64()).collect())
    };
    let offset = run(None)?;
    let mut system = DMatrix::<f64>::identity(n, n);
    for j in 0..n {
        let column = run(Some(j))?;
        for i in 0..n {
            system[(i, j)] -= column[i] - offset[i];
        }
    }
    integrator.reset();
    let rhs = DVector::from_vec(offset);
    let Some(p) = system.clone().lu().solve(&rhs) else {
        return Ok(None);
    };
    let residual = (&system * &p - &rhs).amax();
    let physical = p
        .iter()
        .all(|v| (-POPULATION_SLACK..=1.0 + POPULATION_SLACK).contains(v));
    if residual.is_nan() || residual > 1e-8 || !physical {
        return Ok(None);
    }
    Ok(Some(p.iter().map(|&v| T::of(v)).collect()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{validate, SimulationSpec};

    #[test]
    fn lorentzian_examples() {
        assert!((lorentzian_rate(8e8, 2e8, 0.0) - 2.0 * 8e8 * 8e8 / 2e8).abs() < 1.0);
        let w = lorentzian_rate(8e8, 2e8, 2.56e10);
        assert!((w - 3.9e5).abs() / 3.9e5 < 0.01, "w = {w}");
        assert!(lorentzian_rate(8e8, 2e8, 1e20) < 1e-10);
    }

    #[test]
    fn bulk_hopping_conserves_population() {
        let spec = validate(SimulationSpec::desk_scale(1e6)).unwrap();
        let model = RateModel::new(&spec, None).unwrap();
        let p = [0.3, 0.1, 0.7, 0.2];
        let mut dp = [0.0; 4];
        let rates = model.rates(1.7e-9);
        model.derivative(&rates, &p, &mut dp);
        let (inj, ext) = model.boundary_fluxes(&p);
        let total: f64 = dp.iter().sum();
        assert!((total - (inj - ext)).abs() <= 1e-12 * (inj.abs() + ext.abs()));
    }
}
