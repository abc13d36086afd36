//! Order-of-magnitude estimates in SI units: matter-wave length, barrier
//! tunnelling, double-well tunnelling splittings and patch-clamp
//! feasibility numbers.

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// CODATA 2018 values.
pub mod constants {
    pub const PLANCK: f64 = 6.626_070_15e-34;
    pub const HBAR: f64 = 1.054_571_817e-34;
    pub const BOLTZMANN: f64 = 1.380_649e-23;
    pub const ATOMIC_MASS: f64 = 1.660_539_066_60e-27;
    pub const ELEMENTARY_CHARGE: f64 = 1.602_176_634e-19;
    pub const ELECTRON_MASS: f64 = 9.109_383_701_5e-31;
    /// Temperature used wherever `k_B T` appears.
    pub const ROOM_TEMPERATURE: f64 = 300.0;
    /// Potassium mass in atomic mass units.
    pub const POTASSIUM_AMU: f64 = 39.1;
}

use constants::*;

#[derive(Clone, Debug, PartialEq, Error)]
pub enum EstimateError {
    #[error("{name} must be positive, got {value:e}")]
    NonpositiveInput { name: &'static str, value: f64 },
    #[error("{name} must be non-negative, got {value:e}")]
    NegativeInput { name: &'static str, value: f64 },
    #[error("grid half-width {half_width:e} m does not reach {needed:e} m (minimum plus ten oscillator lengths)")]
    GridTooNarrow { half_width: f64, needed: f64 },
    #[error("splitting of doublet {doublet} changed by {change:.3e} (relative) when the grid was doubled")]
    GridTooCoarse { doublet: usize, change: f64 },
}

fn positive(name: &'static str, value: f64) -> Result<f64, EstimateError> {
    if value > 0.0 && value.is_finite() {
        Ok(value)
    } else {
        Err(EstimateError::NonpositiveInput { name, value })
    }
}

fn non_negative(name: &'static str, value: f64) -> Result<f64, EstimateError> {
    if value >= 0.0 && value.is_finite() {
        Ok(value)
    } else {
        Err(EstimateError::NegativeInput { name, value })
    }
}

pub fn thermal_energy() -> f64 {
    BOLTZMANN * ROOM_TEMPERATURE
}

pub fn potassium_mass() -> f64 {
    POTASSIUM_AMU * ATOMIC_MASS
}

pub fn electron_volts(ev: f64) -> f64 {
    ev * ELEMENTARY_CHARGE
}

/// `h / sqrt(2 m E)`.
pub fn de_broglie(mass: f64, energy: f64) -> Result<f64, EstimateError> {
    let m = positive("mass", mass)?;
    let e = positive("energy", energy)?;
    Ok(PLANCK / (2.0 * m * e).sqrt())
}

/// Which Planck constant divides the barrier exponent.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExponentConvention {
    /// `exp(-width sqrt(2 m dE / h^2))`.
    #[default]
    Planck,
    /// `exp(-width sqrt(2 m dE) / hbar)`, the WKB/Gamow factor of a square
    /// barrier.
    Reduced,
}

impl ExponentConvention {
    fn constant(self) -> f64 {
        match self {
            Self::Planck => PLANCK,
            Self::Reduced => HBAR,
        }
    }
}

/// Square-barrier penetration factor for excess height `barrier_height`
/// (`E_0 - E`) and `width`.
pub fn tunneling_probability(
    mass: f64,
    barrier_height: f64,
    width: f64,
    convention: ExponentConvention,
) -> Result<f64, EstimateError> {
    let m = positive("mass", mass)?;
    let dh = non_negative("barrier height", barrier_height)?;
    let w = non_negative("width", width)?;
    Ok((-w * (2.0 * m * dh).sqrt() / convention.constant()).exp())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TunnelingInputs {
    pub mass: f64,
    /// Barrier top `E_0` (J).
    pub barrier_top: f64,
    /// Ion energy `E` (J).
    pub ion_energy: f64,
    pub width: f64,
    pub attempt_frequency: Option<f64>,
    pub convention: ExponentConvention,
}

impl Default for TunnelingInputs {
    /// Potassium at `E = 2e-21 J` under a 0.04 eV barrier as wide as the
    /// separation of the binding sites (0.24 nm), with a 1e12 Hz trapping
    /// frequency.
    fn default() -> Self {
        Self {
            mass: potassium_mass(),
            barrier_top: electron_volts(0.04),
            ion_energy: 2e-21,
            width: 0.24e-9,
            attempt_frequency: Some(1e12),
            convention: ExponentConvention::Planck,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TunnelingEstimate {
    pub probability: f64,
    /// Probability times attempt frequency (1/s).
    pub rate: Option<f64>,
}

pub fn tunneling_estimate(inputs: &TunnelingInputs) -> Result<TunnelingEstimate, EstimateError> {
    let excess = inputs.barrier_top - inputs.ion_energy;
    let probability = tunneling_probability(inputs.mass, excess, inputs.width, inputs.convention)?;
    let rate = match inputs.attempt_frequency {
        Some(f) => Some(probability * positive("attempt frequency", f)?),
        None => None,
    };
    Ok(TunnelingEstimate { probability, rate })
}

/// Quartic double well `V(x) = alpha x^4 - 2 beta x^2` on a symmetric grid.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DoubleWellSpec {
    /// J/m^4.
    pub alpha: f64,
    /// J/m^2.
    pub beta: f64,
    pub mass: f64,
    /// Grid covers `[-half_width, half_width]` (m).
    pub half_width: f64,
    /// Grid points on each side of the origin.
    pub points: usize,
}

impl DoubleWellSpec {
    /// Well with barrier `beta^2/alpha = barrier` and minima
    /// `2 sqrt(beta/alpha) = separation` apart. The grid extends to twice
    /// the minimum position plus ten oscillator lengths.
    pub fn from_barrier(barrier: f64, separation: f64, mass: f64) -> Self {
        let x_min2 = (separation / 2.0).powi(2);
        let beta = barrier / x_min2;
        let alpha = beta / x_min2;
        let mut spec = Self {
            alpha,
            beta,
            mass,
            half_width: 0.0,
            points: 0,
        };
        spec.half_width = 2.0 * spec.minimum_position() + 10.0 * spec.oscillator_length();
        spec.points = ((spec.half_width / spec.oscillator_length()) * 40.0).ceil() as usize;
        spec
    }

    /// Selectivity-filter well: 0.04 eV barrier, minima 0.24 nm apart,
    /// potassium mass.
    pub fn selectivity_filter() -> Self {
        Self::from_barrier(electron_volts(0.04), 0.24e-9, potassium_mass())
    }

    pub fn barrier(&self) -> f64 {
        self.beta * self.beta / self.alpha
    }

    pub fn minimum_position(&self) -> f64 {
        (self.beta / self.alpha).sqrt()
    }

    /// Harmonic frequency at the minima, `sqrt(V''/m) = sqrt(8 beta/m)`.
    pub fn well_frequency(&self) -> f64 {
        (8.0 * self.beta / self.mass).sqrt()
    }

    pub fn oscillator_length(&self) -> f64 {
        (HBAR / (self.mass * self.well_frequency())).sqrt()
    }

    /// Potential measured from the bottom of the wells.
    pub fn potential(&self, x: f64) -> f64 {
        let x2 = x * x;
        self.alpha * x2 * x2 - 2.0 * self.beta * x2 + self.barrier()
    }

    fn check(&self) -> Result<(), EstimateError> {
        positive("alpha", self.alpha)?;
        positive("beta", self.beta)?;
        positive("mass", self.mass)?;
        positive("half width", self.half_width)?;
        positive("grid points", self.points as f64)?;
        let needed = self.minimum_position() + 10.0 * self.oscillator_length();
        if self.half_width < needed {
            return Err(EstimateError::GridTooNarrow {
                half_width: self.half_width,
                needed,
            });
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Parity {
    Even,
    Odd,
}

/// One eigenpair class of a symmetric potential.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Level {
    /// Energy in J, on the scale of the supplied potential.
    pub energy: f64,
    pub parity: Parity,
    /// `||H psi - E psi|| / ||psi||` in units of the grid kinetic scale
    /// `hbar^2 / (2 m dx^2)`.
    pub residual: f64,
}

/// Symmetric tridiagonal matrix in dimensionless form.
struct Tridiagonal {
    diag: Vec<f64>,
    off: f64,
}

impl Tridiagonal {
    /// Number of eigenvalues strictly below `lambda` (Sturm count).
    fn count_below(&self, lambda: f64) -> usize {
        let tiny = f64::MIN_POSITIVE.sqrt();
        let off2 = self.off * self.off;
        let mut count = 0;
        let mut q = 1.0;
        for (i, &d) in self.diag.iter().enumerate() {
            q = if i == 0 {
                d - lambda
            } else {
                d - lambda - off2 / q
            };
            if q == 0.0 {
                q = -tiny;
            }
            if q < 0.0 {
                count += 1;
            }
        }
        count
    }

    fn bounds(&self) -> (f64, f64) {
        let r = 2.0 * self.off.abs();
        let lo = self.diag.iter().fold(f64::INFINITY, |a, &d| a.min(d)) - r;
        let hi = self.diag.iter().fold(f64::NEG_INFINITY, |a, &d| a.max(d)) + r;
        (lo, hi)
    }

    /// The `k`-th smallest eigenvalue by bisection.
    fn eigenvalue(&self, k: usize) -> f64 {
        let (mut lo, mut hi) = self.bounds();
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if mid <= lo || mid >= hi {
                break;
            }
            if self.count_below(mid) > k {
                hi = mid;
            } else {
                lo = mid;
            }
        }
        0.5 * (lo + hi)
    }

    /// Eigenvector for `lambda` by inverse iteration (Thomas algorithm).
    fn eigenvector(&self, lambda: f64) -> Vec<f64> {
        let n = self.diag.len();
        let mut v = vec![1.0; n];
        let scale = self.bounds().1.abs().max(1.0);
        let shift = lambda + scale * 1e-14;
        for _ in 0..3 {
            let mut c = vec![0.0; n];
            let mut d = vec![0.0; n];
            let mut prev_c = 0.0;
            let mut prev_d = 0.0;
            for i in 0..n {
                let mut m = self.diag[i] - shift - if i > 0 { self.off * prev_c } else { 0.0 };
                if m == 0.0 {
                    m = f64::EPSILON * scale;
                }
                c[i] = self.off / m;
                d[i] = (v[i] - if i > 0 { self.off * prev_d } else { 0.0 }) / m;
                prev_c = c[i];
                prev_d = d[i];
            }
            let mut x = vec![0.0; n];
            x[n - 1] = d[n - 1];
            for i in (0..n - 1).rev() {
                x[i] = d[i] - c[i] * x[i + 1];
            }
            let norm = x.iter().map(|a| a * a).sum::<f64>().sqrt();
            v = x.into_iter().map(|a| a / norm).collect();
        }
        v
    }

    fn residual(&self, lambda: f64, v: &[f64]) -> f64 {
        let n = v.len();
        let mut acc = 0.0;
        for i in 0..n {
            let mut hv = self.diag[i] * v[i];
            if i > 0 {
                hv += self.off * v[i - 1];
            }
            if i + 1 < n {
                hv += self.off * v[i + 1];
            }
            acc += (hv - lambda * v[i]).powi(2);
        }
        let norm = v.iter().map(|a| a * a).sum::<f64>();
        (acc / norm).sqrt()
    }
}

/// Lowest `count` even and `count` odd levels of `-hbar^2/(2m) psi'' + V psi`
/// for an even potential `V`, sorted by energy.
///
/// The half line is sampled at `x_j = (j - 1/2) dx`, so the mirror condition
/// at the origin is `psi_0 = psi_1` (even) or `psi_0 = -psi_1` (odd), and
/// `psi = 0` just beyond `half_width`.
pub fn symmetric_well_levels(
    potential: impl Fn(f64) -> f64,
    mass: f64,
    half_width: f64,
    points: usize,
    count: usize,
) -> Result<Vec<Level>, EstimateError> {
    positive("mass", mass)?;
    positive("half width", half_width)?;
    positive("grid points", points as f64)?;
    let dx = half_width / points as f64;
    let kinetic = HBAR * HBAR / (2.0 * mass * dx * dx);
    let interior: Vec<f64> = (1..=points)
        .map(|j| 2.0 + potential((j as f64 - 0.5) * dx) / kinetic)
        .collect();
    let mut levels = Vec::with_capacity(2 * count);
    for parity in [Parity::Even, Parity::Odd] {
        let mut diag = interior.clone();
        diag[0] += match parity {
            Parity::Even => -1.0,
            Parity::Odd => 1.0,
        };
        let matrix = Tridiagonal { diag, off: -1.0 };
        for k in 0..count.min(points) {
            let lambda = matrix.eigenvalue(k);
            let v = matrix.eigenvector(lambda);
            levels.push(Level {
                energy: lambda * kinetic,
                parity,
                residual: matrix.residual(lambda, &v),
            });
        }
    }
    levels.sort_by(|a, b| a.energy.total_cmp(&b.energy));
    Ok(levels)
}

/// A tunnelling doublet of the double well.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Doublet {
    pub index: usize,
    /// Even-level energy above the well bottom (J).
    pub lower: f64,
    /// Odd-level energy above the well bottom (J).
    pub upper: f64,
    pub splitting: f64,
    /// `splitting / hbar` (1/s).
    pub rate: f64,
    /// Whether the splitting is far enough above the eigenvalue rounding
    /// level to be meaningful; the grid-doubling check covers only these.
    pub resolved: bool,
}

impl Doublet {
    pub fn mean_energy(&self) -> f64 {
        0.5 * (self.lower + self.upper)
    }

    pub fn below_barrier(&self, spec: &DoubleWellSpec) -> bool {
        self.upper < spec.barrier()
    }
}

fn doublets(
    spec: &DoubleWellSpec,
    points: usize,
    count: usize,
) -> Result<Vec<Doublet>, EstimateError> {
    let levels = symmetric_well_levels(
        |x| spec.potential(x),
        spec.mass,
        spec.half_width,
        points,
        count,
    )?;
    let dx = spec.half_width / points as f64;
    let kinetic = HBAR * HBAR / (2.0 * spec.mass * dx * dx);
    let floor = 64.0 * f64::EPSILON * 4.0 * kinetic;
    let even: Vec<f64> = levels
        .iter()
        .filter(|l| l.parity == Parity::Even)
        .map(|l| l.energy)
        .collect();
    let odd: Vec<f64> = levels
        .iter()
        .filter(|l| l.parity == Parity::Odd)
        .map(|l| l.energy)
        .collect();
    Ok(even
        .iter()
        .zip(&odd)
        .enumerate()
        .map(|(index, (&lower, &upper))| {
            let splitting = upper - lower;
            Doublet {
                index,
                lower,
                upper,
                splitting,
                rate: splitting / HBAR,
                resolved: splitting > floor,
            }
        })
        .collect())
}

/// Lowest `count` doublets of the double well. The grid is checked by
/// doubling the point count: every resolved splitting must change by less
/// than 1%.
pub fn double_well_splittings(
    spec: &DoubleWellSpec,
    count: usize,
) -> Result<Vec<Doublet>, EstimateError> {
    spec.check()?;
    let coarse = doublets(spec, spec.points, count)?;
    let fine = doublets(spec, 2 * spec.points, count)?;
    for (c, f) in coarse.iter().zip(&fine) {
        if c.resolved && f.resolved {
            let change = ((f.splitting - c.splitting) / f.splitting).abs();
            if change > 0.01 {
                return Err(EstimateError::GridTooCoarse {
                    doublet: c.index,
                    change,
                });
            }
        }
    }
    Ok(fine)
}

/// Doublets below the barrier whose mean energy lies within one well quantum
/// `hbar omega` of `k_B T`.
pub fn near_thermal<'a>(spec: &DoubleWellSpec, doublets: &'a [Doublet]) -> Vec<&'a Doublet> {
    let kt = thermal_energy();
    let quantum = HBAR * spec.well_frequency();
    doublets
        .iter()
        .filter(|d| (d.mean_energy() - kt).abs() <= quantum && d.below_barrier(spec))
        .collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PatchClampInputs {
    /// Membrane capacitance (F); derived from density and tip area when
    /// absent.
    pub membrane_capacitance: Option<f64>,
    /// F/m^2.
    pub capacitance_density: f64,
    pub tip_diameter: f64,
    pub pipette_capacitance: f64,
    pub pipette_resistance: Option<f64>,
    /// Required time constant (s).
    pub target_tau: f64,
    pub delta_v: f64,
    pub rise_time: f64,
}

impl Default for PatchClampInputs {
    /// 1 uF/cm^2 over a 1 um tip, 5 ns time constant, 0.1 pF pipette,
    /// 315 mV in 10 ns.
    fn default() -> Self {
        Self {
            membrane_capacitance: None,
            capacitance_density: 1e-2,
            tip_diameter: 1e-6,
            pipette_capacitance: 1e-13,
            pipette_resistance: None,
            target_tau: 5e-9,
            delta_v: 0.315,
            rise_time: 1e-8,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PatchClampReport {
    pub membrane_capacitance: f64,
    /// Largest pipette resistance giving `C_m R_p <= target_tau`.
    pub max_pipette_resistance: f64,
    /// `C_m R_p` when a pipette resistance is given.
    pub tau: Option<f64>,
    /// `C_p dV / rise_time`.
    pub capacitive_current: f64,
}

pub fn patch_clamp_feasibility(
    inputs: &PatchClampInputs,
) -> Result<PatchClampReport, EstimateError> {
    let c_m = match inputs.membrane_capacitance {
        Some(c) => positive("membrane capacitance", c)?,
        None => {
            let radius = positive("tip diameter", inputs.tip_diameter)? / 2.0;
            positive("capacitance density", inputs.capacitance_density)?
                * std::f64::consts::PI
                * radius
                * radius
        }
    };
    let tau = match inputs.pipette_resistance {
        Some(r) => Some(c_m * positive("pipette resistance", r)?),
        None => None,
    };
    Ok(PatchClampReport {
        membrane_capacitance: c_m,
        max_pipette_resistance: positive("target tau", inputs.target_tau)? / c_m,
        tau,
        capacitive_current: positive("pipette capacitance", inputs.pipette_capacitance)?
            * positive("delta V", inputs.delta_v)?
            / positive("rise time", inputs.rise_time)?,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EstimateInputs {
    pub ion_mass: f64,
    pub ion_energy: f64,
    pub tunneling: TunnelingInputs,
    pub double_well: DoubleWellSpec,
    pub doublets: usize,
    pub patch_clamp: PatchClampInputs,
}

impl Default for EstimateInputs {
    fn default() -> Self {
        Self {
            ion_mass: potassium_mass(),
            ion_energy: 2e-21,
            tunneling: TunnelingInputs::default(),
            double_well: DoubleWellSpec::selectivity_filter(),
            doublets: 10,
            patch_clamp: PatchClampInputs::default(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EstimateReport {
    pub de_broglie_wavelength: f64,
    pub tunneling: TunnelingEstimate,
    pub thermal_energy: f64,
    pub barrier: f64,
    pub doublets: Vec<Doublet>,
    /// Indices of the doublets near `k_B T`.
    pub near_thermal: Vec<usize>,
    pub patch_clamp: PatchClampReport,
}

pub fn estimate_report(inputs: &EstimateInputs) -> Result<EstimateReport, EstimateError> {
    let doublets = double_well_splittings(&inputs.double_well, inputs.doublets)?;
    let near = near_thermal(&inputs.double_well, &doublets)
        .iter()
        .map(|d| d.index)
        .collect();
    Ok(EstimateReport {
        de_broglie_wavelength: de_broglie(inputs.ion_mass, inputs.ion_energy)?,
        tunneling: tunneling_estimate(&inputs.tunneling)?,
        thermal_energy: thermal_energy(),
        barrier: inputs.double_well.barrier(),
        doublets,
        near_thermal: near,
        patch_clamp: patch_clamp_feasibility(&inputs.patch_clamp)?,
    })
}

impl fmt::Display for EstimateReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(
            f,
            "de Broglie wavelength      {:.3e} m",
            self.de_broglie_wavelength
        )?;
        writeln!(
            f,
            "tunnelling probability     {:.3e}",
            self.tunneling.probability
        )?;
        if let Some(rate) = self.tunneling.rate {
            writeln!(f, "tunnelling rate            {rate:.3e} 1/s")?;
        }
        writeln!(
            f,
            "thermal energy k_B T       {:.3e} J",
            self.thermal_energy
        )?;
        writeln!(f, "double-well barrier        {:.3e} J", self.barrier)?;
        writeln!(f, "doublet  energy/k_BT  splitting rate (1/s)")?;
        for d in &self.doublets {
            let mark = if self.near_thermal.contains(&d.index) {
                " *"
            } else {
                ""
            };
            let rate = if d.resolved {
                format!("{:.3e}", d.rate)
            } else {
                "unresolved".to_string()
            };
            writeln!(
                f,
                "{:>6}  {:>11.3}  {rate}{mark}",
                d.index,
                d.mean_energy() / self.thermal_energy
            )?;
        }
        writeln!(
            f,
            "membrane capacitance       {:.3e} F",
            self.patch_clamp.membrane_capacitance
        )?;
        writeln!(
            f,
            "max pipette resistance     {:.3e} Ohm",
            self.patch_clamp.max_pipette_resistance
        )?;
        if let Some(tau) = self.patch_clamp.tau {
            writeln!(f, "time constant              {tau:.3e} s")?;
        }
        write!(
            f,
            "capacitive current         {:.3e} A",
            self.patch_clamp.capacitive_current
        )
    }
}
