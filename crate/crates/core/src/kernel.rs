//! Packed master-equation kernel used by the propagator.
//!
//! Every operator in the model is a bit manipulation in the occupation
//! basis, so `d rho/dt` is assembled entry by entry from precomputed index
//! lists instead of dense products. Only the upper triangle `a <= b` is
//! stored; the lower triangle is its conjugate, which keeps the state exactly
//! Hermitian through every Runge-Kutta stage.
//!
//! None of the terms changes the difference of excitation numbers between
//! the two indices of `rho_ab`. A state that starts block diagonal in the
//! excitation number stays so, and [`Sectors::NumberDiagonal`] stores only
//! those blocks.
//!
//! The packed state has one extra slot after the matrix entries that
//! integrates `omega rho_NN(t)`; the drive frequency makes it dimensionless
//! and of order one per period, so the error control sees it.

use num_complex::Complex;
use num_traits::Zero;

use crate::basis;
use crate::density::DensityMatrix;
use crate::generators::{rotating_frame_phase, GeneratorError};
use crate::linalg::CMatrix;
use crate::model::{Frame, ValidatedSpec, Waveform};
use crate::scalar::Real;

const NONE: u32 = u32::MAX;

/// Which entries of `rho` the kernel stores.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Sectors {
    /// Only entries between states with equal excitation number.
    NumberDiagonal,
    /// The whole upper triangle.
    Full,
}

#[derive(Clone, Copy, Debug)]
struct HopTerm {
    src: u32,
    conj: bool,
    slot: u16,
}

#[derive(Clone, Copy, Debug)]
struct JumpTerm<T> {
    src: u32,
    weight: T,
}

/// Time-dependent coefficients of one generator evaluation.
#[derive(Clone, Debug)]
pub struct Coefficients<T> {
    /// Multiplier of `sum_k k n_k` in the Hamiltonian.
    tilt: T,
    /// Per bond: `(-i g, -i g*, +i g, +i g*)` where `g` multiplies
    /// `sigma_k^+ sigma_{k+1}^-`.
    slots: Vec<Complex<T>>,
}

#[derive(Clone, Debug)]
pub struct LiouvilleKernel<T> {
    n_sites: usize,
    frame: Frame,
    waveform: Waveform,
    onsite_base: T,
    amplitude: T,
    omega: T,
    couplings: Vec<T>,
    pairs: Vec<(u32, u32)>,
    index: Vec<u32>,
    own_rate: Vec<T>,
    tilt_delta: Vec<T>,
    hop_start: Vec<u32>,
    hops: Vec<HopTerm>,
    jump_start: Vec<u32>,
    jumps: Vec<JumpTerm<T>>,
    diagonal: Vec<u32>,
    drain_diagonal: Vec<u32>,
}

impl<T: Real> LiouvilleKernel<T> {
    pub fn new(
        spec: &ValidatedSpec,
        frame: Frame,
        sectors: Sectors,
    ) -> Result<Self, GeneratorError> {
        let chain = &spec.chain;
        let drive = &spec.drive;
        if frame == Frame::Rotating && drive.waveform != Waveform::Cosine {
            return Err(GeneratorError::WaveformUnsupported(drive.waveform));
        }
        let n = chain.n_sites;
        let dim = basis::dimension(n);

        let mut pairs = Vec::new();
        let mut index = vec![NONE; dim * dim];
        for a in 0..dim {
            for b in a..dim {
                if sectors == Sectors::Full || basis::excitations(a) == basis::excitations(b) {
                    index[a * dim + b] = pairs.len() as u32;
                    pairs.push((a as u32, b as u32));
                }
            }
        }
        let lookup = |a: usize, b: usize| -> (u32, bool) {
            let (lo, hi, conj) = if a <= b { (a, b, false) } else { (b, a, true) };
            let idx = index[lo * dim + hi];
            assert_ne!(
                idx, NONE,
                "kernel sector set is not closed under the generator"
            );
            (idx, conj)
        };

        // Jump operators as (kind, rate): decay[a] collects <a|L^dagger L|a>.
        let baths = &spec.baths;
        let mut decay = vec![0.0f64; dim];
        let ends = [
            (1usize, baths.gamma_source, baths.n_source),
            (n, baths.gamma_drain, baths.n_drain),
        ];
        for &(site, gamma, occ) in &ends {
            for (a, d) in decay.iter_mut().enumerate() {
                if basis::occupied(a, n, site) {
                    *d += gamma * (occ + 1.0);
                } else {
                    *d += gamma * occ;
                }
            }
        }
        for (i, &g) in chain.dephasing.iter().enumerate() {
            for (a, d) in decay.iter_mut().enumerate() {
                if basis::occupied(a, n, i + 1) {
                    *d += g;
                }
            }
        }
        for (i, &rate) in chain.thermal.iter().enumerate() {
            let k = i + 1;
            for (a, d) in decay.iter_mut().enumerate() {
                if basis::occupied(a, n, k) != basis::occupied(a, n, k + 1) {
                    *d += rate;
                }
            }
        }

        let mut own_rate = Vec::with_capacity(pairs.len());
        let mut tilt_delta = Vec::with_capacity(pairs.len());
        let mut hop_start = Vec::with_capacity(pairs.len() + 1);
        let mut hops = Vec::new();
        let mut jump_start = Vec::with_capacity(pairs.len() + 1);
        let mut jumps = Vec::new();

        for &(a, b) in &pairs {
            let (a, b) = (a as usize, b as usize);
            let mut rate = -(decay[a] + decay[b]);
            for (i, &g) in chain.dephasing.iter().enumerate() {
                if basis::occupied(a, n, i + 1) && basis::occupied(b, n, i + 1) {
                    rate += 2.0 * g;
                }
            }
            own_rate.push(T::of(rate));
            tilt_delta.push(T::of(
                basis::tilt_weight(a, n) as f64 - basis::tilt_weight(b, n) as f64,
            ));

            hop_start.push(hops.len() as u32);
            for bond in 1..n {
                let mask = basis::site_mask(n, bond) | basis::site_mask(n, bond + 1);
                // -i H_ac rho_cb, c = a with the excitation on the other site.
                let a_bits = a & mask;
                if a_bits != 0 && a_bits != mask {
                    let c = a ^ mask;
                    let forward = basis::occupied(a, n, bond);
                    let (src, conj) = lookup(c, b);
                    hops.push(HopTerm {
                        src,
                        conj,
                        slot: (4 * (bond - 1) + if forward { 0 } else { 1 }) as u16,
                    });
                }
                // +i rho_ac H_cb, c = b with the excitation on the other site.
                let b_bits = b & mask;
                if b_bits != 0 && b_bits != mask {
                    let c = b ^ mask;
                    let forward = basis::occupied(c, n, bond);
                    let (src, conj) = lookup(a, c);
                    hops.push(HopTerm {
                        src,
                        conj,
                        slot: (4 * (bond - 1) + if forward { 2 } else { 3 }) as u16,
                    });
                }
            }

            jump_start.push(jumps.len() as u32);
            let mut push_jump = |src_a: usize, src_b: usize, rate: f64| {
                if rate != 0.0 {
                    let (src, conj) = lookup(src_a, src_b);
                    debug_assert!(!conj);
                    jumps.push(JumpTerm {
                        src,
                        weight: T::of(2.0 * rate),
                    });
                }
            };
            for &(site, gamma, occ) in &ends {
                let m = basis::site_mask(n, site);
                if a & m == 0 && b & m == 0 {
                    push_jump(a | m, b | m, gamma * (occ + 1.0));
                }
                if a & m != 0 && b & m != 0 {
                    push_jump(a ^ m, b ^ m, gamma * occ);
                }
            }
            for (i, &rate) in chain.thermal.iter().enumerate() {
                let k = i + 1;
                let mk = basis::site_mask(n, k);
                let mk1 = basis::site_mask(n, k + 1);
                let both = mk | mk1;
                // k -> k+1 lands on (k empty, k+1 occupied); k+1 -> k the reverse.
                if a & both == mk1 && b & both == mk1 {
                    push_jump(a ^ both, b ^ both, rate);
                }
                if a & both == mk && b & both == mk {
                    push_jump(a ^ both, b ^ both, rate);
                }
            }
        }
        hop_start.push(hops.len() as u32);
        jump_start.push(jumps.len() as u32);

        let diagonal: Vec<u32> = (0..dim).map(|a| index[a * dim + a]).collect();
        let drain_diagonal = (0..dim)
            .filter(|&a| basis::occupied(a, n, n))
            .map(|a| index[a * dim + a])
            .collect();

        Ok(Self {
            n_sites: n,
            frame,
            waveform: drive.waveform,
            onsite_base: T::of(chain.onsite_base),
            amplitude: T::of(drive.amplitude),
            omega: T::of(drive.angular_frequency),
            couplings: chain.hopping.iter().map(|&c| T::of(c)).collect(),
            pairs,
            index,
            own_rate,
            tilt_delta,
            hop_start,
            hops,
            jump_start,
            jumps,
            diagonal,
            drain_diagonal,
        })
    }

    pub fn n_sites(&self) -> usize {
        self.n_sites
    }

    pub fn frame(&self) -> Frame {
        self.frame
    }

    pub fn waveform(&self) -> Waveform {
        self.waveform
    }

    /// Number of stored matrix entries.
    pub fn n_entries(&self) -> usize {
        self.pairs.len()
    }

    /// Row and column of stored entry `p`.
    pub fn entry(&self, p: usize) -> (usize, usize) {
        let (a, b) = self.pairs[p];
        (a as usize, b as usize)
    }

    /// Length of a packed state including the drain-population integral.
    pub fn state_len(&self) -> usize {
        self.pairs.len() + 1
    }

    /// Slot holding `omega int rho_NN dt`.
    pub fn drain_integral_slot(&self) -> usize {
        self.pairs.len()
    }

    /// `int rho_NN dt` read back from a packed state.
    pub fn drain_integral(&self, y: &[Complex<T>]) -> T {
        y[self.pairs.len()].re / self.omega
    }

    pub fn fresh_coefficients(&self) -> Coefficients<T> {
        Coefficients {
            tilt: T::zero(),
            slots: vec![Complex::zero(); 4 * self.couplings.len()],
        }
    }

    fn set_bonds(&self, coeffs: &mut Coefficients<T>, mut g: impl FnMut(usize, T) -> Complex<T>) {
        let minus_i = Complex::new(T::zero(), -T::one());
        let plus_i = Complex::new(T::zero(), T::one());
        for (i, &c) in self.couplings.iter().enumerate() {
            let value = g(i + 1, c);
            coeffs.slots[4 * i] = minus_i * value;
            coeffs.slots[4 * i + 1] = minus_i * value.conj();
            coeffs.slots[4 * i + 2] = plus_i * value;
            coeffs.slots[4 * i + 3] = plus_i * value.conj();
        }
    }

    /// Coefficients at time `t`. For the square waveform the switching is
    /// evaluated at `t` directly; use [`Self::square_segment_coefficients`]
    /// when integrating across the switching instants.
    pub fn coefficients_at(&self, t: T, coeffs: &mut Coefficients<T>) {
        match (self.waveform, self.frame) {
            (Waveform::Cosine, Frame::Lab) => {
                coeffs.tilt = self.onsite_base + self.amplitude * (self.omega * t).cos();
                self.set_bonds(coeffs, |_, c| Complex::new(c, T::zero()));
            }
            (Waveform::Cosine, Frame::Rotating) => {
                coeffs.tilt = T::zero();
                let drive = crate::model::DriveSpec {
                    amplitude: self.amplitude.as_f64(),
                    angular_frequency: self.omega.as_f64(),
                    waveform: Waveform::Cosine,
                };
                let a = rotating_frame_phase(&drive, self.onsite_base, t);
                let phase = Complex::new(a.cos(), a.sin());
                self.set_bonds(coeffs, |_, c| phase * c);
            }
            (Waveform::SquareCoupling, _) => {
                coeffs.tilt = T::zero();
                let omega = self.omega;
                self.set_bonds(coeffs, |bond, c| {
                    Complex::new(
                        c * crate::generators::square_switch(omega, bond, t),
                        T::zero(),
                    )
                });
            }
        }
    }

    /// Square-wave couplings held at their value inside half period
    /// `segment`, i.e. on `[segment T/2, (segment+1) T/2]`.
    pub fn square_segment_coefficients(&self, segment: usize, coeffs: &mut Coefficients<T>) {
        coeffs.tilt = T::zero();
        self.set_bonds(coeffs, |bond, c| {
            let on = (segment + bond).is_multiple_of(2);
            Complex::new(if on { c } else { T::zero() }, T::zero())
        });
    }

    /// `dy = L(y)` for a packed state, given precomputed coefficients.
    pub fn apply(&self, coeffs: &Coefficients<T>, y: &[Complex<T>], dy: &mut [Complex<T>]) {
        let n = self.pairs.len();
        debug_assert_eq!(y.len(), n + 1);
        for p in 0..n {
            let own = Complex::new(self.own_rate[p], -coeffs.tilt * self.tilt_delta[p]);
            let mut acc = y[p] * own;
            let (h0, h1) = (self.hop_start[p] as usize, self.hop_start[p + 1] as usize);
            for h in &self.hops[h0..h1] {
                let s = y[h.src as usize];
                let s = if h.conj { s.conj() } else { s };
                acc = acc + coeffs.slots[h.slot as usize] * s;
            }
            let (j0, j1) = (self.jump_start[p] as usize, self.jump_start[p + 1] as usize);
            for j in &self.jumps[j0..j1] {
                acc = acc + y[j.src as usize] * j.weight;
            }
            dy[p] = acc;
        }
        dy[n] = Complex::new(self.omega * self.drain_population(y), T::zero());
    }

    /// Population of the last site, `rho_NN`.
    pub fn drain_population(&self, y: &[Complex<T>]) -> T {
        self.drain_diagonal.iter().map(|&p| y[p as usize].re).sum()
    }

    pub fn trace(&self, y: &[Complex<T>]) -> T {
        self.diagonal
            .iter()
            .filter(|&&p| p != NONE)
            .map(|&p| y[p as usize].re)
            .sum()
    }

    pub fn site_population(&self, y: &[Complex<T>], k: usize) -> T {
        let dim = basis::dimension(self.n_sites);
        (0..dim)
            .filter(|&a| basis::occupied(a, self.n_sites, k))
            .map(|a| y[self.diagonal[a] as usize].re)
            .sum()
    }

    /// Packs a density matrix; fails if it has weight outside the stored
    /// sectors.
    pub fn pack(&self, rho: &DensityMatrix<T>) -> Option<Vec<Complex<T>>> {
        let dim = rho.dim();
        if dim != basis::dimension(self.n_sites) {
            return None;
        }
        for a in 0..dim {
            for b in a..dim {
                if self.index[a * dim + b] == NONE && !rho.get(a, b).is_zero() {
                    return None;
                }
            }
        }
        let mut y: Vec<Complex<T>> = self
            .pairs
            .iter()
            .map(|&(a, b)| rho.get(a as usize, b as usize))
            .collect();
        y.push(Complex::zero());
        Some(y)
    }

    pub fn unpack_matrix(&self, y: &[Complex<T>]) -> CMatrix<T> {
        let dim = basis::dimension(self.n_sites);
        let mut m = CMatrix::zeros(dim);
        for (&(a, b), &v) in self.pairs.iter().zip(y) {
            let (a, b) = (a as usize, b as usize);
            m[(a, b)] = v;
            if a != b {
                m[(b, a)] = v.conj();
            } else {
                m[(a, a)] = Complex::new(v.re, T::zero());
            }
        }
        m
    }

    pub fn unpack(&self, y: &[Complex<T>]) -> DensityMatrix<T> {
        DensityMatrix::from_matrix_unchecked(self.n_sites, self.unpack_matrix(y))
            .expect("kernel dimension matches its chain")
    }
}
