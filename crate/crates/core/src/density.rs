//! Density matrices over the full occupation basis.

use num_complex::Complex;
use num_traits::{One, Zero};
use thiserror::Error;

use crate::basis;
use crate::linalg::CMatrix;
use crate::scalar::Real;

pub const HERMITICITY_TOL: f64 = 1e-12;
pub const TRACE_TOL: f64 = 1e-9;
pub const POSITIVITY_TOL: f64 = 1e-9;

#[derive(Clone, Debug, PartialEq, Error)]
pub enum DensityError {
    #[error("matrix dimension {found} does not match 2^{n_sites}")]
    Dimension { n_sites: usize, found: usize },
    #[error("matrix is not Hermitian (max |rho - rho^dagger| = {0:e})")]
    NotHermitian(f64),
    #[error("trace deviates from one by {0:e}")]
    Trace(f64),
    #[error("minimum eigenvalue {0:e} is negative")]
    NotPositive(f64),
}

/// Tolerances used by [`DensityMatrix::check_with`].
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Tolerances {
    pub hermiticity: f64,
    pub trace: f64,
    pub positivity: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Self {
            hermiticity: HERMITICITY_TOL,
            trace: TRACE_TOL,
            positivity: POSITIVITY_TOL,
        }
    }
}

impl Tolerances {
    pub fn scaled(self, factor: f64) -> Self {
        Self {
            hermiticity: self.hermiticity * factor,
            trace: self.trace * factor,
            positivity: self.positivity * factor,
        }
    }
}

/// State of an N-site chain: a `2^N x 2^N` matrix in the site-occupation
/// basis.
#[derive(Clone, Debug, PartialEq)]
pub struct DensityMatrix<T> {
    n_sites: usize,
    matrix: CMatrix<T>,
}

impl<T: Real> DensityMatrix<T> {
    /// All sites empty.
    pub fn vacuum(n_sites: usize) -> Self {
        Self::basis_state(n_sites, 0)
    }

    /// Pure basis state `|index><index|`.
    pub fn basis_state(n_sites: usize, index: usize) -> Self {
        let dim = basis::dimension(n_sites);
        assert!(
            index < dim,
            "basis index {index} out of range for {n_sites} sites"
        );
        let mut matrix = CMatrix::zeros(dim);
        matrix[(index, index)] = Complex::one();
        Self { n_sites, matrix }
    }

    /// A single excitation on 1-based site `k`.
    pub fn site_excitation(n_sites: usize, k: usize) -> Self {
        Self::basis_state(n_sites, basis::site_mask(n_sites, k))
    }

    pub fn maximally_mixed(n_sites: usize) -> Self {
        let dim = basis::dimension(n_sites);
        let p = T::one() / T::of_usize(dim);
        Self {
            n_sites,
            matrix: CMatrix::from_diagonal(&vec![p; dim]),
        }
    }

    /// Pure state from a (not necessarily normalised) amplitude vector.
    pub fn pure(n_sites: usize, amplitudes: &[Complex<T>]) -> Self {
        assert_eq!(amplitudes.len(), basis::dimension(n_sites));
        let norm = amplitudes.iter().map(|z| z.norm_sqr()).sum::<T>().sqrt();
        let psi: Vec<_> = amplitudes.iter().map(|&z| z / norm).collect();
        Self {
            n_sites,
            matrix: CMatrix::outer(&psi, &psi),
        }
    }

    /// Wraps a matrix after checking every density-matrix invariant.
    pub fn from_matrix(n_sites: usize, matrix: CMatrix<T>) -> Result<Self, DensityError> {
        let rho = Self::from_matrix_unchecked(n_sites, matrix)?;
        rho.check()?;
        Ok(rho)
    }

    /// Wraps a matrix checking only its dimension.
    pub fn from_matrix_unchecked(n_sites: usize, matrix: CMatrix<T>) -> Result<Self, DensityError> {
        if matrix.dim() != basis::dimension(n_sites) {
            return Err(DensityError::Dimension {
                n_sites,
                found: matrix.dim(),
            });
        }
        Ok(Self { n_sites, matrix })
    }

    #[inline]
    pub fn n_sites(&self) -> usize {
        self.n_sites
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.matrix.dim()
    }

    #[inline]
    pub fn matrix(&self) -> &CMatrix<T> {
        &self.matrix
    }

    pub fn into_matrix(self) -> CMatrix<T> {
        self.matrix
    }

    #[inline]
    pub fn get(&self, r: usize, c: usize) -> Complex<T> {
        self.matrix[(r, c)]
    }

    pub fn trace(&self) -> T {
        self.matrix.trace().re
    }

    pub fn purity(&self) -> T {
        self.matrix.matmul(&self.matrix).trace().re
    }

    /// Occupation probability of 1-based site `k`.
    pub fn site_population(&self, k: usize) -> T {
        (0..self.dim())
            .filter(|&a| basis::occupied(a, self.n_sites, k))
            .map(|a| self.matrix[(a, a)].re)
            .sum()
    }

    pub fn site_populations(&self) -> Vec<T> {
        (1..=self.n_sites)
            .map(|k| self.site_population(k))
            .collect()
    }

    /// `Tr(rho sigma)`, which equals the fidelity when either state is pure.
    pub fn overlap(&self, other: &Self) -> T {
        assert_eq!(self.dim(), other.dim());
        let n = self.dim();
        let mut acc = Complex::zero();
        for r in 0..n {
            for c in 0..n {
                acc = acc + self.matrix[(r, c)] * other.matrix[(c, r)];
            }
        }
        acc.re
    }

    pub fn min_eigenvalue(&self) -> f64 {
        self.matrix.hermitian_eigenvalues()[0]
    }

    pub fn check(&self) -> Result<(), DensityError> {
        self.check_with(Tolerances::default())
    }

    pub fn check_with(&self, tol: Tolerances) -> Result<(), DensityError> {
        let herm = self.matrix.hermiticity_error().as_f64();
        if herm > tol.hermiticity {
            return Err(DensityError::NotHermitian(herm));
        }
        let dev = (self.trace().as_f64() - 1.0).abs();
        if dev > tol.trace {
            return Err(DensityError::Trace(dev));
        }
        let min = self.min_eigenvalue();
        if min < -tol.positivity {
            return Err(DensityError::NotPositive(min));
        }
        Ok(())
    }

    /// Whether every coherence between different excitation numbers vanishes.
    pub fn is_number_block_diagonal(&self) -> bool {
        let n = self.dim();
        (0..n).all(|r| {
            (0..n).all(|c| {
                basis::excitations(r) == basis::excitations(c) || self.matrix[(r, c)].is_zero()
            })
        })
    }
}
