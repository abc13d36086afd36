//! Explicit Runge-Kutta integration: Dormand-Prince 5(4) with PI step-size
//! control, or fixed steps of the same tableau.

use std::ops::{Add, Mul};

use num_complex::Complex;
use num_traits::Zero;
use thiserror::Error;

use crate::scalar::Real;

#[derive(Clone, Debug, PartialEq, Error)]
pub enum IntegratorError {
    #[error("step size underflow at t = {t:e} (h = {h:e})")]
    StepSizeUnderflow { t: f64, h: f64 },
    #[error("step budget of {0} exhausted")]
    TooManySteps(usize),
    #[error("non-finite state at t = {0:e}")]
    NonFinite(f64),
}

/// State element: a real or complex number over a real field `T`.
pub trait OdeElem<T: Real>:
    Copy + Zero + Add<Output = Self> + Mul<T, Output = Self> + Send + Sync + 'static
{
    fn magnitude(self) -> T;
    fn is_finite_elem(self) -> bool;
}

impl OdeElem<f32> for f32 {
    fn magnitude(self) -> f32 {
        self.abs()
    }
    fn is_finite_elem(self) -> bool {
        self.is_finite()
    }
}

impl OdeElem<f64> for f64 {
    fn magnitude(self) -> f64 {
        self.abs()
    }
    fn is_finite_elem(self) -> bool {
        self.is_finite()
    }
}

impl<T: Real> OdeElem<T> for Complex<T> {
    fn magnitude(self) -> T {
        self.re.abs().max(self.im.abs())
    }
    fn is_finite_elem(self) -> bool {
        self.re.is_finite() && self.im.is_finite()
    }
}

/// Right-hand side `dy/dt = f(t, y)`.
pub trait OdeSystem<T: Real, E: OdeElem<T>> {
    fn rhs(&mut self, t: T, y: &[E], dy: &mut [E]);
}

impl<T: Real, E: OdeElem<T>, F: FnMut(T, &[E], &mut [E])> OdeSystem<T, E> for F {
    fn rhs(&mut self, t: T, y: &[E], dy: &mut [E]) {
        self(t, y, dy)
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct StepControl {
    pub rel_tol: f64,
    pub abs_tol: f64,
    pub max_step: Option<f64>,
    /// Take steps of exactly this size (the last one shortened) with no
    /// error control.
    pub fixed_step: Option<f64>,
    pub max_steps: usize,
}

impl Default for StepControl {
    fn default() -> Self {
        Self {
            rel_tol: 1e-8,
            abs_tol: 1e-10,
            max_step: None,
            fixed_step: None,
            max_steps: 50_000_000,
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct StepStats {
    pub accepted: usize,
    pub rejected: usize,
    pub evaluations: usize,
}

const C2: f64 = 1.0 / 5.0;
const C3: f64 = 3.0 / 10.0;
const C4: f64 = 4.0 / 5.0;
const C5: f64 = 8.0 / 9.0;
const A21: f64 = 1.0 / 5.0;
const A31: f64 = 3.0 / 40.0;
const A32: f64 = 9.0 / 40.0;
const A41: f64 = 44.0 / 45.0;
const A42: f64 = -56.0 / 15.0;
const A43: f64 = 32.0 / 9.0;
const A51: f64 = 19372.0 / 6561.0;
const A52: f64 = -25360.0 / 2187.0;
const A53: f64 = 64448.0 / 6561.0;
const A54: f64 = -212.0 / 729.0;
const A61: f64 = 9017.0 / 3168.0;
const A62: f64 = -355.0 / 33.0;
const A63: f64 = 46732.0 / 5247.0;
const A64: f64 = 49.0 / 176.0;
const A65: f64 = -5103.0 / 18656.0;
const B1: f64 = 35.0 / 384.0;
const B3: f64 = 500.0 / 1113.0;
const B4: f64 = 125.0 / 192.0;
const B5: f64 = -2187.0 / 6784.0;
const B6: f64 = 11.0 / 84.0;
const E1: f64 = 71.0 / 57600.0;
const E3: f64 = -71.0 / 16695.0;
const E4: f64 = 71.0 / 1920.0;
const E5: f64 = -17253.0 / 339200.0;
const E6: f64 = 22.0 / 525.0;
const E7: f64 = -1.0 / 40.0;

const SAFETY: f64 = 0.9;
const FAC_MIN: f64 = 0.2;
const FAC_MAX: f64 = 10.0;
const BETA: f64 = 0.04;
const ALPHA: f64 = 0.2 - 0.75 * BETA;

/// Dormand-Prince 5(4) integrator with reusable stage buffers.
#[derive(Clone, Debug)]
pub struct DormandPrince<T: Real, E> {
    control: StepControl,
    k: [Vec<E>; 7],
    y_stage: Vec<E>,
    y_new: Vec<E>,
    h: Option<T>,
    err_old: f64,
    pub stats: StepStats,
}

impl<T: Real, E: OdeElem<T>> DormandPrince<T, E> {
    pub fn new(len: usize, control: StepControl) -> Self {
        let z = || vec![E::zero(); len];
        Self {
            control,
            k: [z(), z(), z(), z(), z(), z(), z()],
            y_stage: z(),
            y_new: z(),
            h: None,
            err_old: 1e-4,
            stats: StepStats::default(),
        }
    }

    pub fn control(&self) -> &StepControl {
        &self.control
    }

    /// Forgets the step-size history, e.g. after a discontinuity of `f`.
    pub fn reset(&mut self) {
        self.h = None;
        self.err_old = 1e-4;
    }

    /// Integrates `y` in place from `t0` to `t1 > t0`.
    pub fn advance<S: OdeSystem<T, E>>(
        &mut self,
        sys: &mut S,
        t0: T,
        t1: T,
        y: &mut [E],
    ) -> Result<(), IntegratorError> {
        if t1 <= t0 {
            return Ok(());
        }
        if let Some(h) = self.control.fixed_step {
            return self.advance_fixed(sys, t0, t1, y, T::of(h));
        }
        let span = t1 - t0;
        let max_step = self.control.max_step.map(T::of).unwrap_or(span).min(span);
        let mut t = t0;
        sys.rhs(t, y, &mut self.k[0]);
        self.stats.evaluations += 1;
        let mut h = match self.h {
            Some(h) => h.min(max_step),
            None => self.initial_step(sys, t, y, max_step),
        };
        let mut steps = 0usize;
        while t < t1 {
            steps += 1;
            if steps > self.control.max_steps {
                return Err(IntegratorError::TooManySteps(self.control.max_steps));
            }
            let remaining = t1 - t;
            // Stretch a step that would leave a sliver before t1.
            let last = h * T::of(1.01) >= remaining;
            let step = if last { remaining } else { h };
            if step <= T::epsilon() * T::of(16.0) * t.abs().max(span) {
                return Err(IntegratorError::StepSizeUnderflow {
                    t: t.as_f64(),
                    h: step.as_f64(),
                });
            }
            let err = self.trial(sys, t, y, step);
            if !err.is_finite() {
                // Treat a blow-up like a badly rejected step.
                h = step * T::of(FAC_MIN);
                self.stats.rejected += 1;
                continue;
            }
            if err <= 1.0 {
                let fac = (SAFETY * err.max(1e-10).powf(-ALPHA) * self.err_old.powf(BETA))
                    .clamp(FAC_MIN, FAC_MAX);
                self.err_old = err.max(1e-4);
                y.copy_from_slice(&self.y_new);
                // FSAL: the last stage is f at the new point.
                self.k.swap(0, 6);
                t = if last { t1 } else { t + step };
                self.stats.accepted += 1;
                let proposal = step * T::of(fac);
                if !last || proposal < h {
                    h = proposal;
                }
                h = h.min(max_step);
                if !y.iter().all(|v| v.is_finite_elem()) {
                    return Err(IntegratorError::NonFinite(t.as_f64()));
                }
            } else {
                let fac = (SAFETY * err.powf(-0.2)).clamp(FAC_MIN, 1.0);
                h = step * T::of(fac);
                self.stats.rejected += 1;
            }
        }
        self.h = Some(h);
        Ok(())
    }

    fn advance_fixed<S: OdeSystem<T, E>>(
        &mut self,
        sys: &mut S,
        t0: T,
        t1: T,
        y: &mut [E],
        h: T,
    ) -> Result<(), IntegratorError> {
        let count = ((t1 - t0) / h)
            .ceil()
            .to_usize()
            .unwrap_or(usize::MAX)
            .max(1);
        if count > self.control.max_steps {
            return Err(IntegratorError::TooManySteps(self.control.max_steps));
        }
        let step = (t1 - t0) / T::of_usize(count);
        for i in 0..count {
            let t = t0 + step * T::of_usize(i);
            sys.rhs(t, y, &mut self.k[0]);
            self.stats.evaluations += 1;
            self.trial(sys, t, y, step);
            y.copy_from_slice(&self.y_new);
            self.stats.accepted += 1;
        }
        if !y.iter().all(|v| v.is_finite_elem()) {
            return Err(IntegratorError::NonFinite(t1.as_f64()));
        }
        Ok(())
    }

    fn initial_step<S: OdeSystem<T, E>>(&mut self, sys: &mut S, t: T, y: &[E], max_step: T) -> T {
        let k0 = self.k[0].clone();
        let d0 = self.norm_of(y, y);
        let f0 = self.norm_of(&k0, y);
        let mut h0 = if d0 < 1e-5 || f0 < 1e-5 {
            1e-6
        } else {
            0.01 * d0 / f0
        };
        h0 = h0.min(max_step.as_f64());
        let h0t = T::of(h0);
        for ((s, &yi), &ki) in self.y_stage.iter_mut().zip(y).zip(&k0) {
            *s = yi + ki * h0t;
        }
        let stage = std::mem::take(&mut self.y_stage);
        sys.rhs(t + h0t, &stage, &mut self.k[1]);
        self.y_stage = stage;
        self.stats.evaluations += 1;
        let diff: Vec<E> = self.k[1]
            .iter()
            .zip(&k0)
            .map(|(&a, &b)| a + b * T::of(-1.0))
            .collect();
        let d2 = self.norm_of(&diff, y) / h0;
        let h1 = if f0.max(d2) <= 1e-15 {
            (h0 * 1e-3).max(1e-6 * h0)
        } else {
            (0.01 / f0.max(d2)).powf(0.2)
        };
        T::of((100.0 * h0).min(h1)).min(max_step)
    }

    fn norm_of(&self, v: &[E], y: &[E]) -> f64 {
        let (atol, rtol) = (self.control.abs_tol, self.control.rel_tol);
        let mut acc = 0.0;
        for (&vi, &yi) in v.iter().zip(y) {
            let sc = atol + rtol * yi.magnitude().as_f64();
            let r = vi.magnitude().as_f64() / sc;
            acc += r * r;
        }
        (acc / v.len().max(1) as f64).sqrt()
    }

    /// One trial step from `(t, y)` with `k[0] = f(t, y)`; leaves the
    /// candidate in `y_new`, `f(t + h, y_new)` in `k[6]`, and returns the
    /// scaled error norm.
    fn trial<S: OdeSystem<T, E>>(&mut self, sys: &mut S, t: T, y: &[E], h: T) -> f64 {
        let c = |x: f64| T::of(x) * h;
        let n = y.len();
        let mut stage = std::mem::take(&mut self.y_stage);
        macro_rules! combine {
            ($($coef:expr => $idx:expr),+) => {{
                for i in 0..n {
                    stage[i] = y[i] $(+ self.k[$idx][i] * c($coef))+;
                }
            }};
        }
        combine!(A21 => 0);
        sys.rhs(t + c(C2), &stage, &mut self.k[1]);
        combine!(A31 => 0, A32 => 1);
        sys.rhs(t + c(C3), &stage, &mut self.k[2]);
        combine!(A41 => 0, A42 => 1, A43 => 2);
        sys.rhs(t + c(C4), &stage, &mut self.k[3]);
        combine!(A51 => 0, A52 => 1, A53 => 2, A54 => 3);
        sys.rhs(t + c(C5), &stage, &mut self.k[4]);
        combine!(A61 => 0, A62 => 1, A63 => 2, A64 => 3, A65 => 4);
        sys.rhs(t + h, &stage, &mut self.k[5]);
        for i in 0..n {
            self.y_new[i] = y[i]
                + self.k[0][i] * c(B1)
                + self.k[2][i] * c(B3)
                + self.k[3][i] * c(B4)
                + self.k[4][i] * c(B5)
                + self.k[5][i] * c(B6);
        }
        sys.rhs(t + h, &self.y_new, &mut self.k[6]);
        self.stats.evaluations += 6;

        let (atol, rtol) = (self.control.abs_tol, self.control.rel_tol);
        let mut acc = 0.0;
        for i in 0..n {
            let e = self.k[0][i] * c(E1)
                + self.k[2][i] * c(E3)
                + self.k[3][i] * c(E4)
                + self.k[4][i] * c(E5)
                + self.k[5][i] * c(E6)
                + self.k[6][i] * c(E7);
            let sc = atol + rtol * y[i].magnitude().max(self.y_new[i].magnitude()).as_f64();
            let r = e.magnitude().as_f64() / sc;
            acc += r * r;
        }
        self.y_stage = stage;
        (acc / n.max(1) as f64).sqrt()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exponential_decay_meets_tolerance() {
        let mut sys = |_t: f64, y: &[f64], dy: &mut [f64]| dy[0] = -2.0 * y[0];
        let mut dp = DormandPrince::new(1, StepControl::default());
        let mut y = [1.0];
        dp.advance(&mut sys, 0.0, 3.0, &mut y).unwrap();
        assert!((y[0] - (-6.0f64).exp()).abs() < 1e-9);
        assert!(dp.stats.accepted > 5);
    }

    #[test]
    fn complex_rotation_keeps_norm() {
        let mut sys = |_t: f64, y: &[Complex<f64>], dy: &mut [Complex<f64>]| {
            dy[0] = y[0] * Complex::new(0.0, -5.0);
        };
        let mut dp = DormandPrince::new(1, StepControl::default());
        let mut y = [Complex::new(1.0, 0.0)];
        dp.advance(&mut sys, 0.0, 10.0, &mut y).unwrap();
        let exact = Complex::new(0.0, -50.0f64).exp();
        assert!((y[0] - exact).norm() < 1e-7);
    }

    #[test]
    fn fixed_step_is_fifth_order() {
        let run = |h: f64| {
            let mut sys = |t: f64, _y: &[f64], dy: &mut [f64]| dy[0] = t.cos();
            let control = StepControl {
                fixed_step: Some(h),
                ..StepControl::default()
            };
            let mut dp = DormandPrince::new(1, control);
            let mut y = [0.0];
            dp.advance(&mut sys, 0.0, 2.0, &mut y).unwrap();
            (y[0] - 2.0f64.sin()).abs()
        };
        let ratio = run(0.2) / run(0.1);
        assert!(ratio > 25.0, "ratio {ratio}");
    }

    #[test]
    fn resumes_across_calls() {
        let mut sys = |t: f64, _y: &[f64], dy: &mut [f64]| dy[0] = t;
        let mut dp = DormandPrince::new(1, StepControl::default());
        let mut y = [0.0];
        for i in 0..10 {
            dp.advance(&mut sys, i as f64 * 0.1, (i + 1) as f64 * 0.1, &mut y)
                .unwrap();
        }
        assert!((y[0] - 0.5).abs() < 1e-12);
    }

    #[test]
    fn single_precision() {
        let mut sys = |_t: f32, y: &[f32], dy: &mut [f32]| dy[0] = -y[0];
        let control = StepControl {
            rel_tol: 1e-5,
            abs_tol: 1e-6,
            ..StepControl::default()
        };
        let mut dp = DormandPrince::new(1, control);
        let mut y = [1.0f32];
        dp.advance(&mut sys, 0.0, 1.0, &mut y).unwrap();
        assert!((y[0] - (-1.0f32).exp()).abs() < 1e-4);
    }
}
