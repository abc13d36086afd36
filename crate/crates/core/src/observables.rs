//! Incoherence measure, resonance extraction and the incoherence-current fit.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::density::DensityMatrix;
use crate::scalar::Real;

#[derive(Clone, Debug, PartialEq, Error)]
pub enum ObservableError {
    #[error("only {found} curve points within +/-{half_width} of the zero at {zero}; need at least {needed}")]
    InsufficientResolution {
        zero: f64,
        half_width: f64,
        found: usize,
        needed: usize,
    },
    #[error("curve is not sorted by its abscissa")]
    UnsortedCurve,
    #[error("fit needs at least {needed} points, got {found}")]
    TooFewPoints { needed: usize, found: usize },
    #[error("all abscissae are identical; the slope is undefined")]
    DegenerateFit,
}

/// Minimum number of curve points around each predicted zero.
pub const MIN_NEIGHBORHOOD_POINTS: usize = 5;

/// `sum_{k != l} |rho_kk rho_ll - rho_kl rho_lk|` over the full basis.
pub fn incoherence<T: Real>(rho: &DensityMatrix<T>) -> T {
    let d = rho.dim();
    let diag: Vec<T> = (0..d).map(|k| rho.get(k, k).re).collect();
    let mut total = T::zero();
    for k in 0..d {
        for l in (k + 1)..d {
            let term = rho.get(k, l) * rho.get(l, k);
            let re = diag[k] * diag[l] - term.re;
            // The pair (k, l) and (l, k) contribute identically.
            total += re.hypot(term.im);
        }
    }
    total + total
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Resonance {
    /// Predicted minimum position in units of `Omega_1 / omega`.
    pub predicted: f64,
    /// Grid point with the lowest current in the neighbourhood.
    pub grid_minimum: f64,
    /// Minimum position refined by a parabola through the grid minimum and
    /// its neighbours.
    pub located: f64,
    pub minimum: f64,
    /// Mean of the two adjacent local maxima.
    pub shoulder: f64,
    /// `1 - I_min / I_shoulder`, clamped to `[0, 1]`.
    pub depth: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ResonanceReport {
    pub gamma: f64,
    pub resonances: Vec<Resonance>,
}

impl ResonanceReport {
    pub fn depths(&self) -> Vec<f64> {
        self.resonances.iter().map(|r| r.depth).collect()
    }
}

/// Finds the conduction minimum next to each predicted zero.
///
/// Zeros outside the curve's range are skipped. Each neighbourhood spans half
/// the spacing to the adjacent zeros (the spacing to the single neighbour for
/// the outermost ones; a lone zero uses the whole curve). A grid minimum that
/// sits on the neighbourhood edge, or on the curve's ends, is not a
/// resonance: it gets depth 0 and its position is reported as found.
pub fn locate_resonances(
    curve: &[(f64, f64)],
    predicted: &[f64],
    gamma: f64,
) -> Result<ResonanceReport, ObservableError> {
    if curve.windows(2).any(|w| w[1].0 <= w[0].0) {
        return Err(ObservableError::UnsortedCurve);
    }
    let (lo, hi) = match (curve.first(), curve.last()) {
        (Some(a), Some(b)) => (a.0, b.0),
        _ => {
            return Ok(ResonanceReport {
                gamma,
                resonances: Vec::new(),
            })
        }
    };
    let zeros: Vec<f64> = predicted
        .iter()
        .copied()
        .filter(|&z| z >= lo && z <= hi)
        .collect();
    let mut resonances = Vec::with_capacity(zeros.len());
    for (i, &z) in zeros.iter().enumerate() {
        let left_gap = if i > 0 { z - zeros[i - 1] } else { f64::NAN };
        let right_gap = if i + 1 < zeros.len() {
            zeros[i + 1] - z
        } else {
            f64::NAN
        };
        let half_width = match (left_gap.is_nan(), right_gap.is_nan()) {
            (true, true) => (z - lo).max(hi - z),
            (false, true) => left_gap / 2.0,
            (true, false) => right_gap / 2.0,
            (false, false) => left_gap.min(right_gap) / 2.0,
        };
        let window: Vec<usize> = (0..curve.len())
            .filter(|&j| (curve[j].0 - z).abs() <= half_width)
            .collect();
        if window.len() < MIN_NEIGHBORHOOD_POINTS {
            return Err(ObservableError::InsufficientResolution {
                zero: z,
                half_width,
                found: window.len(),
                needed: MIN_NEIGHBORHOOD_POINTS,
            });
        }
        resonances.push(resonance_at(curve, &window, z));
    }
    Ok(ResonanceReport { gamma, resonances })
}

fn resonance_at(curve: &[(f64, f64)], window: &[usize], predicted: f64) -> Resonance {
    let m = *window
        .iter()
        .min_by(|&&a, &&b| curve[a].1.total_cmp(&curve[b].1))
        .expect("window is not empty");
    let y = |j: usize| curve[j].1;
    let interior = m > 0 && m + 1 < curve.len() && y(m - 1) > y(m) && y(m + 1) > y(m);
    if !interior {
        return Resonance {
            predicted,
            grid_minimum: curve[m].0,
            located: curve[m].0,
            minimum: y(m),
            shoulder: y(m),
            depth: 0.0,
        };
    }
    let mut left = m;
    while left > 0 && y(left - 1) >= y(left) {
        left -= 1;
    }
    let mut right = m;
    while right + 1 < curve.len() && y(right + 1) >= y(right) {
        right += 1;
    }
    let shoulder = 0.5 * (y(left) + y(right));
    let depth = if shoulder > 0.0 {
        (1.0 - y(m) / shoulder).clamp(0.0, 1.0)
    } else {
        0.0
    };
    Resonance {
        predicted,
        grid_minimum: curve[m].0,
        located: parabolic_vertex(curve[m - 1], curve[m], curve[m + 1]),
        minimum: y(m),
        shoulder,
        depth,
    }
}

/// Relative contrast of the curve feature (dip or peak) nearest to index
/// `near`: `|y_extremum - y_flank| / y_flank`, where `y_flank` is the mean of
/// the adjacent extrema of the opposite kind. For a dip this is the same
/// `1 - min / shoulder` as a resonance depth. Returns 0 when the curve has no
/// interior extremum or the flanks vanish.
pub fn contrast_at(curve: &[(f64, f64)], near: usize) -> f64 {
    let y = |j: usize| curve[j].1;
    let is_extremum =
        |j: usize| j > 0 && j + 1 < curve.len() && (y(j - 1) - y(j)) * (y(j + 1) - y(j)) > 0.0;
    let Some(m) = (0..curve.len())
        .flat_map(|d| [near.checked_sub(d), Some(near + d)])
        .flatten()
        .find(|&j| j < curve.len() && is_extremum(j))
    else {
        return 0.0;
    };
    // +1 walks down from a peak, -1 walks up from a dip.
    let sign = if y(m - 1) < y(m) { 1.0 } else { -1.0 };
    let mut left = m;
    while left > 0 && sign * (y(left) - y(left - 1)) >= 0.0 {
        left -= 1;
    }
    let mut right = m;
    while right + 1 < curve.len() && sign * (y(right) - y(right + 1)) >= 0.0 {
        right += 1;
    }
    let flank = 0.5 * (y(left) + y(right));
    if flank == 0.0 {
        return 0.0;
    }
    ((y(m) - flank) / flank).abs()
}

/// Abscissa of the vertex of the parabola through three points, kept inside
/// the outer two.
fn parabolic_vertex(a: (f64, f64), b: (f64, f64), c: (f64, f64)) -> f64 {
    let num = (b.0 - a.0).powi(2) * (b.1 - c.1) - (b.0 - c.0).powi(2) * (b.1 - a.1);
    let den = (b.0 - a.0) * (b.1 - c.1) - (b.0 - c.0) * (b.1 - a.1);
    if den == 0.0 || !num.is_finite() {
        return b.0;
    }
    (b.0 - 0.5 * num / den).clamp(a.0, c.0)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FitResult {
    pub slope: f64,
    pub intercept: f64,
    pub r_squared: f64,
}

/// Ordinary least squares `y = slope x + intercept` through `(x, y)` pairs,
/// here the incoherence and current resonance depths `(C, I)` across
/// dephasing rates.
pub fn fit_incoherence_vs_current(points: &[(f64, f64)]) -> Result<FitResult, ObservableError> {
    if points.len() < 3 {
        return Err(ObservableError::TooFewPoints {
            needed: 3,
            found: points.len(),
        });
    }
    let n = points.len() as f64;
    let mx = points.iter().map(|p| p.0).sum::<f64>() / n;
    let my = points.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = points.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = points.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let syy: f64 = points.iter().map(|p| (p.1 - my).powi(2)).sum();
    let x_scale = points.iter().fold(0.0f64, |a, p| a.max(p.0.abs()));
    if sxx <= n * (16.0 * f64::EPSILON * x_scale).powi(2) {
        return Err(ObservableError::DegenerateFit);
    }
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let r_squared = if syy == 0.0 {
        1.0
    } else {
        (sxy * sxy / (sxx * syy)).clamp(0.0, 1.0)
    };
    Ok(FitResult {
        slope,
        intercept,
        r_squared,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use num_complex::Complex64;

    #[test]
    fn incoherence_examples() {
        let pure = DensityMatrix::<f64>::pure(
            2,
            &[
                Complex64::new(0.5, 0.0),
                Complex64::new(0.0, 0.5),
                Complex64::new(-0.5, 0.0),
                Complex64::new(0.5, 0.1),
            ],
        );
        assert!(incoherence(&pure) < 1e-10);
        for n in 1..5 {
            let d = (1usize << n) as f64;
            let mixed = DensityMatrix::<f64>::maximally_mixed(n);
            assert!((incoherence(&mixed) - (d - 1.0) / d).abs() < 1e-14);
        }
        assert!((incoherence(&DensityMatrix::<f64>::maximally_mixed(1)) - 0.5).abs() < 1e-15);
    }

    #[test]
    fn fit_exact_line() {
        let fit = fit_incoherence_vs_current(&[(0.0, 0.0), (1.0, 2.0), (2.0, 4.0)]).unwrap();
        assert!((fit.slope - 2.0).abs() < 1e-12);
        assert!(fit.intercept.abs() < 1e-12);
        assert!((fit.r_squared - 1.0).abs() < 1e-12);
        assert_eq!(
            fit_incoherence_vs_current(&[(1.0, 0.0), (1.0, 2.0), (1.0, 4.0)]),
            Err(ObservableError::DegenerateFit)
        );
    }

    #[test]
    fn parabola_vertex_is_exact_for_parabolas() {
        let f = |x: f64| (x - 0.3).powi(2);
        let v = parabolic_vertex((0.0, f(0.0)), (0.5, f(0.5)), (1.0, f(1.0)));
        assert!((v - 0.3).abs() < 1e-12);
    }
}
