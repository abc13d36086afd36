//! Hamiltonians and dissipators of the driven chain, built as explicit dense
//! operators.
//!
//! This is the reference route: every piece of the master equation is an
//! ordinary matrix and dissipators act as `rate * (2 L rho L^dagger -
//! {L^dagger L, rho})` through dense products. The propagator runs on the
//! packed kernel in [`crate::kernel`], which is checked against this module.

use std::ops::Deref;

use num_complex::Complex;
use num_traits::One;
use thiserror::Error;

use crate::basis;
use crate::bessel::bessel_j;
use crate::linalg::CMatrix;
use crate::model::{BathSpec, ChainSpec, DriveSpec, Frame, ValidatedSpec, Waveform};
use crate::scalar::Real;

/// Largest distance of `Omega_0/omega` from an integer accepted by
/// [`effective_hamiltonian`].
pub const COMMENSURABILITY_TOL: f64 = 1e-6;

#[derive(Clone, Debug, PartialEq, Error)]
pub enum GeneratorError {
    #[error("the {0} waveform has no interaction-picture form")]
    WaveformUnsupported(Waveform),
    #[error(
        "Omega_0/omega = {0} is not an integer; the period-averaged model needs Omega_0 = n*omega"
    )]
    IncommensurateRatio(f64),
}

/// Matrix that equals its conjugate transpose.
#[derive(Clone, Debug, PartialEq)]
pub struct HermitianOperator<T>(CMatrix<T>);

impl<T: Real> HermitianOperator<T> {
    fn new(matrix: CMatrix<T>) -> Self {
        debug_assert!(
            matrix.hermiticity_error().as_f64() <= 1e-12 * (1.0 + matrix.max_abs().as_f64())
        );
        Self(matrix)
    }

    pub fn into_matrix(self) -> CMatrix<T> {
        self.0
    }
}

impl<T> Deref for HermitianOperator<T> {
    type Target = CMatrix<T>;
    fn deref(&self) -> &CMatrix<T> {
        &self.0
    }
}

fn real<T: Real>(x: T) -> Complex<T> {
    Complex::new(x, T::zero())
}

/// `sigma_k^+ sigma_k^-` on 1-based site `k`.
pub fn number_operator<T: Real>(n_sites: usize, k: usize) -> CMatrix<T> {
    let diag: Vec<T> = (0..basis::dimension(n_sites))
        .map(|a| T::of_usize(basis::occupation(a, n_sites, k)))
        .collect();
    CMatrix::from_diagonal(&diag)
}

/// `sum_k k sigma_k^+ sigma_k^-`.
pub fn tilt_operator<T: Real>(n_sites: usize) -> CMatrix<T> {
    let diag: Vec<T> = (0..basis::dimension(n_sites))
        .map(|a| T::of_usize(basis::tilt_weight(a, n_sites)))
        .collect();
    CMatrix::from_diagonal(&diag)
}

/// `sigma_k^-` on 1-based site `k`.
pub fn lowering_operator<T: Real>(n_sites: usize, k: usize) -> CMatrix<T> {
    let dim = basis::dimension(n_sites);
    let mask = basis::site_mask(n_sites, k);
    let mut m = CMatrix::zeros(dim);
    for b in 0..dim {
        if b & mask != 0 {
            m[(b ^ mask, b)] = Complex::one();
        }
    }
    m
}

pub fn raising_operator<T: Real>(n_sites: usize, k: usize) -> CMatrix<T> {
    lowering_operator::<T>(n_sites, k).adjoint()
}

/// `sigma_to^+ sigma_from^-`: moves an excitation from `from` to `to`.
pub fn transfer_operator<T: Real>(n_sites: usize, from: usize, to: usize) -> CMatrix<T> {
    raising_operator::<T>(n_sites, to).matmul(&lowering_operator(n_sites, from))
}

/// `sigma_k^+ sigma_{k+1}^- + h.c.` for bond `k` with unit coupling.
pub fn hopping_operator<T: Real>(n_sites: usize, k: usize) -> CMatrix<T> {
    let forward = transfer_operator::<T>(n_sites, k + 1, k);
    &forward + &forward.adjoint()
}

/// Fraction `(1/2)[1 + sgn(sin(omega t + k pi))]` of bond `k` switched on
/// by the square coupling drive.
pub fn square_switch<T: Real>(omega: T, bond: usize, t: T) -> T {
    let s = (omega * t + T::of_usize(bond) * T::PI()).sin();
    let sgn = if s > T::zero() {
        T::one()
    } else if s < T::zero() {
        -T::one()
    } else {
        T::zero()
    };
    (T::one() + sgn) * T::of(0.5)
}

/// Coherent chain Hamiltonian at time `t` in the lab frame.
pub fn hamiltonian_at<T: Real>(chain: &ChainSpec, drive: &DriveSpec, t: T) -> HermitianOperator<T> {
    let n = chain.n_sites;
    let dim = basis::dimension(n);
    let omega = T::of(drive.angular_frequency);
    let mut h = CMatrix::zeros(dim);
    match drive.waveform {
        Waveform::Cosine => {
            let level = T::of(chain.onsite_base) + T::of(drive.amplitude) * (omega * t).cos();
            h.add_scaled(real(level), &tilt_operator(n));
            for (i, &c) in chain.hopping.iter().enumerate() {
                h.add_scaled(real(T::of(c)), &hopping_operator(n, i + 1));
            }
        }
        Waveform::SquareCoupling => {
            for (i, &c) in chain.hopping.iter().enumerate() {
                let on = square_switch(omega, i + 1, t);
                h.add_scaled(real(T::of(c) * on), &hopping_operator(n, i + 1));
            }
        }
    }
    HermitianOperator::new(h)
}

/// Interaction-picture phase `A(t) = -Omega_0 t - (Omega_1/omega) sin(omega t)`.
pub fn rotating_frame_phase<T: Real>(drive: &DriveSpec, onsite: T, t: T) -> T {
    let omega = T::of(drive.angular_frequency);
    -onsite * t - T::of(drive.amplitude) / omega * (omega * t).sin()
}

/// Hopping Hamiltonian in the frame `exp(-i A(t) sum_k k n_k)`, where the
/// tilt is absorbed into time-dependent coupling phases.
///
/// The bond term is `c (e^{iA} sigma_k^+ sigma_{k+1}^- + e^{-iA} sigma_k^-
/// sigma_{k+1}^+)`: the operator that lowers `sum_k k n_k` by one picks up
/// `e^{iA}` under the transformation.
pub fn interaction_hamiltonian_at<T: Real>(
    chain: &ChainSpec,
    drive: &DriveSpec,
    t: T,
) -> Result<HermitianOperator<T>, GeneratorError> {
    if drive.waveform != Waveform::Cosine {
        return Err(GeneratorError::WaveformUnsupported(drive.waveform));
    }
    let n = chain.n_sites;
    let a = rotating_frame_phase(drive, T::of(chain.onsite_base), t);
    let phase = Complex::new(a.cos(), a.sin());
    let mut h = CMatrix::zeros(basis::dimension(n));
    for (i, &c) in chain.hopping.iter().enumerate() {
        let k = i + 1;
        let forward = transfer_operator::<T>(n, k + 1, k);
        let c = T::of(c);
        h.add_scaled(phase * c, &forward);
        h.add_scaled(phase.conj() * c, &forward.adjoint());
    }
    Ok(HermitianOperator::new(h))
}

/// `J_m(x)` for signed integer order.
pub fn bessel_j_signed<T: Real>(order: i64, x: T) -> T {
    let value = bessel_j(order.unsigned_abs() as u32, x);
    if order < 0 && order % 2 != 0 {
        -value
    } else {
        value
    }
}

/// Nearest integer to `Omega_0/omega`, if within [`COMMENSURABILITY_TOL`].
pub fn commensurate_order(chain: &ChainSpec, drive: &DriveSpec) -> Result<i64, GeneratorError> {
    let ratio = chain.onsite_base / drive.angular_frequency;
    let n = ratio.round();
    if (ratio - n).abs() > COMMENSURABILITY_TOL {
        return Err(GeneratorError::IncommensurateRatio(ratio));
    }
    Ok(n as i64)
}

/// Effective coupling of the period-averaged model: the average of
/// `c e^{iA(t)}` over one period, `c J_{-n}(Omega_1/omega) = c (-1)^n
/// J_n(Omega_1/omega)` with `n = Omega_0/omega`.
pub fn effective_coupling<T: Real>(coupling: T, order: i64, amplitude_ratio: T) -> T {
    coupling * bessel_j_signed(-order, amplitude_ratio)
}

/// Period-averaged hopping Hamiltonian for `Omega_0 = n omega`.
pub fn effective_hamiltonian<T: Real>(
    chain: &ChainSpec,
    drive: &DriveSpec,
) -> Result<HermitianOperator<T>, GeneratorError> {
    if drive.waveform != Waveform::Cosine {
        return Err(GeneratorError::WaveformUnsupported(drive.waveform));
    }
    let order = commensurate_order(chain, drive)?;
    let x = T::of(drive.amplitude_ratio());
    let n = chain.n_sites;
    let mut h = CMatrix::zeros(basis::dimension(n));
    for (i, &c) in chain.hopping.iter().enumerate() {
        let eff = effective_coupling(T::of(c), order, x);
        h.add_scaled(real(eff), &hopping_operator(n, i + 1));
    }
    Ok(HermitianOperator::new(h))
}

/// Lindblad jump operator `L` entering as `rate * (2 L rho L^dagger -
/// {L^dagger L, rho})`.
#[derive(Clone, Debug)]
pub struct Jump<T> {
    pub label: String,
    pub rate: T,
    pub operator: CMatrix<T>,
    decay: CMatrix<T>,
}

impl<T: Real> Jump<T> {
    pub fn new(label: impl Into<String>, rate: T, operator: CMatrix<T>) -> Self {
        let decay = operator.adjoint().matmul(&operator);
        Self {
            label: label.into(),
            rate,
            operator,
            decay,
        }
    }

    pub fn apply(&self, rho: &CMatrix<T>) -> CMatrix<T> {
        let sandwich = self
            .operator
            .matmul(rho)
            .matmul(&self.operator.adjoint())
            .scale_real(T::of(2.0));
        (&sandwich - &self.decay.anticommutator(rho)).scale_real(self.rate)
    }
}

/// Sum of Lindblad terms, applied as dense products.
#[derive(Clone, Debug, Default)]
pub struct Dissipator<T> {
    pub jumps: Vec<Jump<T>>,
}

impl<T: Real> Dissipator<T> {
    fn push(&mut self, label: String, rate: f64, operator: CMatrix<T>) {
        if rate != 0.0 {
            self.jumps.push(Jump::new(label, T::of(rate), operator));
        }
    }

    pub fn extend(&mut self, other: Dissipator<T>) {
        self.jumps.extend(other.jumps);
    }

    pub fn is_empty(&self) -> bool {
        self.jumps.is_empty()
    }

    pub fn apply(&self, rho: &CMatrix<T>) -> CMatrix<T> {
        let mut out = CMatrix::zeros(rho.dim());
        for jump in &self.jumps {
            out = &out + &jump.apply(rho);
        }
        out
    }
}

/// Source on site 1 and drain on site N, each removing at `Gamma (n+1)` and
/// injecting at `Gamma n`.
pub fn dissipator_source_drain<T: Real>(baths: &BathSpec, n_sites: usize) -> Dissipator<T> {
    let mut d = Dissipator::default();
    let ends = [
        ("source", 1, baths.gamma_source, baths.n_source),
        ("drain", n_sites, baths.gamma_drain, baths.n_drain),
    ];
    for (name, site, gamma, occupation) in ends {
        d.push(
            format!("{name} removal"),
            gamma * (occupation + 1.0),
            lowering_operator(n_sites, site),
        );
        d.push(
            format!("{name} injection"),
            gamma * occupation,
            raising_operator(n_sites, site),
        );
    }
    d
}

/// Pure dephasing with jump operators `sigma_k^+ sigma_k^-`.
pub fn dissipator_dephasing<T: Real>(chain: &ChainSpec) -> Dissipator<T> {
    let mut d = Dissipator::default();
    for (i, &gamma) in chain.dephasing.iter().enumerate() {
        d.push(
            format!("dephasing {}", i + 1),
            gamma,
            number_operator(chain.n_sites, i + 1),
        );
    }
    d
}

/// Incoherent nearest-neighbour exchange in both directions.
pub fn dissipator_thermal<T: Real>(chain: &ChainSpec) -> Dissipator<T> {
    let mut d = Dissipator::default();
    let n = chain.n_sites;
    for (i, &rate) in chain.thermal.iter().enumerate() {
        let k = i + 1;
        d.push(
            format!("thermal {k}->{}", k + 1),
            rate,
            transfer_operator(n, k, k + 1),
        );
        d.push(
            format!("thermal {}->{k}", k + 1),
            rate,
            transfer_operator(n, k + 1, k),
        );
    }
    d
}

/// Master-equation generator split into its static and driven pieces.
#[derive(Clone, Debug)]
pub struct GeneratorParts<T> {
    pub chain: ChainSpec,
    pub drive: DriveSpec,
    /// `Omega_0 sum_k k n_k + sum_k c_k hop_k` (zero for square coupling).
    pub h_static: HermitianOperator<T>,
    /// `sum_k k n_k`, multiplied by `Omega_1 cos(omega t)`.
    pub h_drive: HermitianOperator<T>,
    pub dissipator: Dissipator<T>,
}

impl<T: Real> GeneratorParts<T> {
    pub fn n_sites(&self) -> usize {
        self.chain.n_sites
    }

    /// Lab-frame Hamiltonian at time `t`.
    pub fn hamiltonian(&self, t: T) -> CMatrix<T> {
        match self.drive.waveform {
            Waveform::Cosine => {
                let omega = T::of(self.drive.angular_frequency);
                let mut h = self.h_static.0.clone();
                let s = T::of(self.drive.amplitude) * (omega * t).cos();
                h.add_scaled(real(s), &self.h_drive);
                h
            }
            Waveform::SquareCoupling => hamiltonian_at(&self.chain, &self.drive, t).into_matrix(),
        }
    }

    /// `d rho/dt` in the requested frame.
    pub fn apply(
        &self,
        frame: Frame,
        t: T,
        rho: &CMatrix<T>,
    ) -> Result<CMatrix<T>, GeneratorError> {
        let h = match frame {
            Frame::Lab => self.hamiltonian(t),
            Frame::Rotating => {
                interaction_hamiltonian_at(&self.chain, &self.drive, t)?.into_matrix()
            }
        };
        let coherent = h.commutator(rho).scale(Complex::new(T::zero(), -T::one()));
        Ok(&coherent + &self.dissipator.apply(rho))
    }

    /// Largest rate or energy scale entering the generator; a natural unit
    /// for judging rounding-level residuals.
    pub fn rate_scale(&self) -> T {
        let mut scale =
            self.h_static.max_abs() + T::of(self.drive.amplitude) * self.h_drive.max_abs();
        for jump in &self.dissipator.jumps {
            scale += jump.rate * T::of(2.0);
        }
        scale
    }
}

/// Assembles the full master-equation generator.
pub fn assemble_generator<T: Real>(spec: &ValidatedSpec) -> GeneratorParts<T> {
    let chain = &spec.chain;
    let drive = &spec.drive;
    let n = chain.n_sites;
    let dim = basis::dimension(n);
    let tilt = tilt_operator::<T>(n);
    let h_static = match drive.waveform {
        Waveform::Cosine => {
            let mut h = tilt.scale_real(T::of(chain.onsite_base));
            for (i, &c) in chain.hopping.iter().enumerate() {
                h.add_scaled(real(T::of(c)), &hopping_operator(n, i + 1));
            }
            h
        }
        Waveform::SquareCoupling => CMatrix::zeros(dim),
    };
    let mut dissipator = dissipator_source_drain(&spec.baths, n);
    dissipator.extend(dissipator_dephasing(chain));
    dissipator.extend(dissipator_thermal(chain));
    GeneratorParts {
        chain: chain.clone(),
        drive: drive.clone(),
        h_static: HermitianOperator::new(h_static),
        h_drive: HermitianOperator::new(match drive.waveform {
            Waveform::Cosine => tilt,
            Waveform::SquareCoupling => CMatrix::zeros(dim),
        }),
        dissipator,
    }
}

/// Total excitation number `sum_k n_k`.
pub fn excitation_operator<T: Real>(n_sites: usize) -> CMatrix<T> {
    let diag: Vec<T> = (0..basis::dimension(n_sites))
        .map(|a| T::of_usize(basis::excitations(a) as usize))
        .collect();
    CMatrix::from_diagonal(&diag)
}
