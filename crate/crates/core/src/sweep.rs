//! Grid sweeps over drive amplitude and dephasing, with resonance analysis.

use std::fmt;
use std::io::{self, Write};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::baseline::{classical_current, BaselineError};
use crate::bessel::bessel_first_zeros;
use crate::model::{validate, SimulationSpec, ValidationError};
use crate::observables::{
    contrast_at, fit_incoherence_vs_current, locate_resonances, FitResult, ResonanceReport,
};
use crate::propagator::{steady_current, CurrentResult, PropagationError};

pub const CSV_HEADER: &str = "omega1_over_omega,gamma,model,current,converged,periods,incoherence";

/// Padding of the default amplitude range around the first two zeros.
pub const DEFAULT_RANGE_PADDING: f64 = 15.0;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelKind {
    Quantum,
    Classical,
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ModelKind::Quantum => "quantum",
            ModelKind::Classical => "classical",
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelSelection {
    Quantum,
    Classical,
    Both,
}

impl ModelSelection {
    pub fn kinds(self) -> &'static [ModelKind] {
        match self {
            ModelSelection::Quantum => &[ModelKind::Quantum],
            ModelSelection::Classical => &[ModelKind::Classical],
            ModelSelection::Both => &[ModelKind::Quantum, ModelKind::Classical],
        }
    }
}

/// Sweep axes as read from a config file; an unset range is derived from
/// the Bessel zeros.
#[derive(Clone, Debug, PartialEq)]
pub struct SweepSettings {
    pub ratio_min: Option<f64>,
    pub ratio_max: Option<f64>,
    pub points: usize,
    pub gammas: Vec<f64>,
    pub models: ModelSelection,
}

impl Default for SweepSettings {
    fn default() -> Self {
        Self {
            ratio_min: None,
            ratio_max: None,
            points: 61,
            gammas: vec![0.0, 5e6],
            models: ModelSelection::Both,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Error)]
pub enum SweepError {
    #[error("sweep range must satisfy min < max, got [{0}, {1}]")]
    EmptyRange(f64, f64),
    #[error("sweep needs at least 2 points, got {0}")]
    TooFewPoints(usize),
    #[error("sweep needs at least one dephasing rate")]
    NoGammas,
    #[error("dephasing rate {0} must be non-negative and finite")]
    BadGamma(f64),
    #[error("Omega_0/omega = {0} is not an integer; give sweep.ratio_min and sweep.ratio_max explicitly")]
    NoDefaultRange(f64),
    #[error(transparent)]
    Invalid(#[from] ValidationError),
    #[error("{model} point at Omega_1/omega = {ratio}, gamma = {gamma}: {message}")]
    Point {
        model: ModelKind,
        ratio: f64,
        gamma: f64,
        message: String,
    },
    #[error("worker pool: {0}")]
    Pool(String),
}

#[derive(Clone, Debug, PartialEq)]
pub struct SweepPlan {
    pub base: SimulationSpec,
    pub ratios: Vec<f64>,
    pub gammas: Vec<f64>,
    pub models: ModelSelection,
    pub broadening: Option<f64>,
    /// Worker threads; 0 uses rayon's default.
    pub workers: usize,
}

/// Resonance order `round(Omega_0 / omega)` when the ratio is an integer.
pub fn resonance_order(spec: &SimulationSpec) -> Option<u32> {
    let ratio = spec.chain.onsite_base / spec.drive.angular_frequency;
    let n = ratio.round();
    ((ratio - n).abs() <= crate::generators::COMMENSURABILITY_TOL && n >= 0.0).then_some(n as u32)
}

/// `points` evenly spaced values from `lo` to `hi` inclusive.
pub fn linspace(lo: f64, hi: f64, points: usize) -> Vec<f64> {
    let step = (hi - lo) / (points - 1) as f64;
    (0..points)
        .map(|i| {
            if i + 1 == points {
                hi
            } else {
                lo + step * i as f64
            }
        })
        .collect()
}

impl SweepPlan {
    pub fn from_settings(
        base: SimulationSpec,
        settings: &SweepSettings,
        broadening: Option<f64>,
        workers: usize,
    ) -> Result<Self, SweepError> {
        let (lo, hi) = match (settings.ratio_min, settings.ratio_max) {
            (Some(lo), Some(hi)) => (lo, hi),
            (lo, hi) => {
                let order = resonance_order(&base).ok_or(SweepError::NoDefaultRange(
                    base.chain.onsite_base / base.drive.angular_frequency,
                ))?;
                let zeros = bessel_first_zeros::<f64>(order, 2);
                (
                    lo.unwrap_or((zeros[0] - DEFAULT_RANGE_PADDING).max(0.0)),
                    hi.unwrap_or(zeros[1] + DEFAULT_RANGE_PADDING),
                )
            }
        };
        if !(lo < hi) {
            return Err(SweepError::EmptyRange(lo, hi));
        }
        if settings.points < 2 {
            return Err(SweepError::TooFewPoints(settings.points));
        }
        let plan = Self {
            base,
            ratios: linspace(lo, hi, settings.points),
            gammas: settings.gammas.clone(),
            models: settings.models,
            broadening,
            workers,
        };
        plan.check()?;
        Ok(plan)
    }

    fn check(&self) -> Result<(), SweepError> {
        if self.ratios.len() < 2 {
            return Err(SweepError::TooFewPoints(self.ratios.len()));
        }
        if self.gammas.is_empty() {
            return Err(SweepError::NoGammas);
        }
        if let Some(&g) = self.gammas.iter().find(|g| !(**g >= 0.0 && g.is_finite())) {
            return Err(SweepError::BadGamma(g));
        }
        validate(self.base.clone())?;
        Ok(())
    }

    /// Bessel zeros inside the amplitude range, when the tilt is commensurate.
    pub fn predicted_zeros(&self) -> Vec<f64> {
        let Some(order) = resonance_order(&self.base) else {
            return Vec::new();
        };
        let hi = self.ratios.last().copied().unwrap_or(0.0);
        let lo = self.ratios.first().copied().unwrap_or(0.0);
        let mut count = 1;
        loop {
            let zeros = bessel_first_zeros::<f64>(order, count);
            if *zeros.last().expect("count >= 1") > hi || count > 64 {
                return zeros.into_iter().filter(|&z| z >= lo && z <= hi).collect();
            }
            count += 1;
        }
    }

    /// Grid points in output order: dephasing, then amplitude, then model.
    pub fn tasks(&self) -> Vec<(f64, f64, ModelKind)> {
        let mut out = Vec::new();
        for &gamma in &self.gammas {
            for &ratio in &self.ratios {
                for &model in self.models.kinds() {
                    out.push((gamma, ratio, model));
                }
            }
        }
        out
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub omega1_over_omega: f64,
    pub gamma: f64,
    pub model: ModelKind,
    pub current: f64,
    pub converged: bool,
    pub periods: usize,
    pub incoherence: Option<f64>,
}

impl SweepRow {
    pub fn csv_line(&self) -> String {
        let incoherence = self
            .incoherence
            .map(|c| format!("{c:e}"))
            .unwrap_or_default();
        format!(
            "{},{},{},{:e},{},{},{}",
            self.omega1_over_omega,
            self.gamma,
            self.model,
            self.current,
            self.converged,
            self.periods,
            incoherence
        )
    }
}

pub fn write_csv<W: Write>(rows: &[SweepRow], mut out: W) -> io::Result<()> {
    writeln!(out, "{CSV_HEADER}")?;
    for row in rows {
        writeln!(out, "{}", row.csv_line())?;
    }
    Ok(())
}

/// Resonance analysis of a finished sweep.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct SweepAnalysis {
    pub predicted_zeros: Vec<f64>,
    /// One report per dephasing rate.
    pub quantum: Vec<ResonanceReport>,
    pub classical: Vec<ResonanceReport>,
    /// `(incoherence contrast, current depth)` at the first resonance for
    /// each dephasing rate, and the straight-line fit through them. The
    /// incoherence contrast is that of the feature in the incoherence curve
    /// nearest the current minimum.
    pub coherence_points: Vec<(f64, f64)>,
    pub fit: Option<FitResult>,
    pub warnings: Vec<String>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SweepOutcome {
    pub rows: Vec<SweepRow>,
    pub analysis: SweepAnalysis,
}

impl SweepOutcome {
    pub fn all_converged(&self) -> bool {
        self.rows.iter().all(|r| r.converged)
    }
}

fn run_point(
    plan: &SweepPlan,
    gamma: f64,
    ratio: f64,
    model: ModelKind,
) -> Result<SweepRow, SweepError> {
    let spec = plan
        .base
        .clone()
        .with_dephasing(gamma)
        .with_amplitude_ratio(ratio);
    let point_error = |message: String| SweepError::Point {
        model,
        ratio,
        gamma,
        message,
    };
    let spec = validate(spec)?;
    let result: CurrentResult = match model {
        ModelKind::Quantum => steady_current::<f64>(&spec)
            .map_err(|e: PropagationError| point_error(e.to_string()))?,
        ModelKind::Classical => classical_current::<f64>(&spec, plan.broadening)
            .map_err(|e: BaselineError| point_error(e.to_string()))?,
    };
    Ok(SweepRow {
        omega1_over_omega: ratio,
        gamma,
        model,
        current: result.current,
        converged: result.converged,
        periods: result.periods_used,
        incoherence: result.incoherence,
    })
}

/// Runs every grid point (in parallel) and analyses the curves.
pub fn run_sweep(plan: &SweepPlan) -> Result<SweepOutcome, SweepError> {
    plan.check()?;
    let tasks = plan.tasks();
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(plan.workers)
        .build()
        .map_err(|e| SweepError::Pool(e.to_string()))?;
    let rows: Vec<SweepRow> = pool.install(|| {
        tasks
            .par_iter()
            .map(|&(gamma, ratio, model)| run_point(plan, gamma, ratio, model))
            .collect::<Result<_, _>>()
    })?;
    let analysis = analyse(plan, &rows);
    Ok(SweepOutcome { rows, analysis })
}

fn curve(rows: &[SweepRow], gamma: f64, model: ModelKind) -> Vec<&SweepRow> {
    rows.iter()
        .filter(|r| r.gamma == gamma && r.model == model)
        .collect()
}

/// Locates the resonances of every curve and fits incoherence against
/// current at the first one.
pub fn analyse(plan: &SweepPlan, rows: &[SweepRow]) -> SweepAnalysis {
    let mut analysis = SweepAnalysis {
        predicted_zeros: plan.predicted_zeros(),
        ..SweepAnalysis::default()
    };
    if analysis.predicted_zeros.is_empty() {
        analysis
            .warnings
            .push("no Bessel zero inside the sweep range; resonance analysis skipped".into());
        return analysis;
    }
    for &model in plan.models.kinds() {
        for &gamma in &plan.gammas {
            let points = curve(rows, gamma, model);
            let xy: Vec<(f64, f64)> = points
                .iter()
                .map(|r| (r.omega1_over_omega, r.current))
                .collect();
            match locate_resonances(&xy, &analysis.predicted_zeros, gamma) {
                Ok(report) => {
                    if model == ModelKind::Quantum {
                        if let Some(first) = report.resonances.first() {
                            let at = points
                                .iter()
                                .position(|r| r.omega1_over_omega == first.grid_minimum)
                                .expect("grid minimum is a curve point");
                            let c: Option<Vec<(f64, f64)>> = points
                                .iter()
                                .map(|r| r.incoherence.map(|c| (r.omega1_over_omega, c)))
                                .collect();
                            if let Some(c) = c {
                                analysis
                                    .coherence_points
                                    .push((contrast_at(&c, at), first.depth));
                            }
                        }
                        analysis.quantum.push(report);
                    } else {
                        analysis.classical.push(report);
                    }
                }
                Err(e) => analysis
                    .warnings
                    .push(format!("{model} curve at gamma = {gamma}: {e}")),
            }
        }
    }
    if analysis.coherence_points.len() >= 3 {
        match fit_incoherence_vs_current(&analysis.coherence_points) {
            Ok(fit) => analysis.fit = Some(fit),
            Err(e) => analysis.warnings.push(format!("incoherence fit: {e}")),
        }
    } else if plan.models.kinds().contains(&ModelKind::Quantum) {
        analysis
            .warnings
            .push("incoherence fit needs at least three dephasing rates".into());
    }
    analysis
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn linspace_hits_endpoints() {
        let v = linspace(1.0, 2.0, 5);
        assert_eq!(v, vec![1.0, 1.25, 1.5, 1.75, 2.0]);
    }

    #[test]
    fn default_range_brackets_first_two_zeros() {
        let plan = SweepPlan::from_settings(
            SimulationSpec::desk_scale(0.0),
            &SweepSettings::default(),
            None,
            1,
        )
        .unwrap();
        assert_eq!(plan.ratios.len(), 61);
        assert_eq!(plan.ratios[0], 0.0);
        let zeros = plan.predicted_zeros();
        let first_two = bessel_first_zeros::<f64>(8, 2);
        assert_eq!(&zeros[..2], &first_two[..]);
        assert!(zeros.iter().all(|&z| z <= plan.ratios[60]));
        assert!((plan.ratios[60] - (first_two[1] + 15.0)).abs() < 1e-12);
    }

    #[test]
    fn task_order_is_gamma_then_ratio_then_model() {
        let settings = SweepSettings {
            ratio_min: Some(1.0),
            ratio_max: Some(2.0),
            points: 2,
            gammas: vec![0.0, 1.0],
            models: ModelSelection::Both,
        };
        let plan =
            SweepPlan::from_settings(SimulationSpec::desk_scale(0.0), &settings, None, 1).unwrap();
        let tasks = plan.tasks();
        assert_eq!(tasks[0], (0.0, 1.0, ModelKind::Quantum));
        assert_eq!(tasks[1], (0.0, 1.0, ModelKind::Classical));
        assert_eq!(tasks[2], (0.0, 2.0, ModelKind::Quantum));
        assert_eq!(tasks[4], (1.0, 1.0, ModelKind::Quantum));
    }
}
