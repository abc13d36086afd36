//! Small dense complex matrices.
//!
//! Hilbert spaces here stay below a few hundred dimensions, so a plain
//! row-major `Vec` with naive products is all the kernels need. Spectral
//! diagnostics go through `nalgebra` in double precision.

use std::ops::{Add, Index, IndexMut, Mul, Sub};

use nalgebra::DMatrix;
use num_complex::{Complex, Complex64};
use num_traits::{One, Zero};

use crate::scalar::Real;

/// Square complex matrix stored row-major.
#[derive(Clone, Debug, PartialEq)]
pub struct CMatrix<T> {
    dim: usize,
    data: Vec<Complex<T>>,
}

impl<T: Real> CMatrix<T> {
    pub fn zeros(dim: usize) -> Self {
        Self {
            dim,
            data: vec![Complex::zero(); dim * dim],
        }
    }

    pub fn identity(dim: usize) -> Self {
        let mut m = Self::zeros(dim);
        for i in 0..dim {
            m[(i, i)] = Complex::one();
        }
        m
    }

    pub fn from_fn(dim: usize, mut f: impl FnMut(usize, usize) -> Complex<T>) -> Self {
        let mut data = Vec::with_capacity(dim * dim);
        for r in 0..dim {
            for c in 0..dim {
                data.push(f(r, c));
            }
        }
        Self { dim, data }
    }

    pub fn from_diagonal(diag: &[T]) -> Self {
        let mut m = Self::zeros(diag.len());
        for (i, &d) in diag.iter().enumerate() {
            m[(i, i)] = Complex::new(d, T::zero());
        }
        m
    }

    /// Outer product `|u><v|`.
    pub fn outer(u: &[Complex<T>], v: &[Complex<T>]) -> Self {
        assert_eq!(u.len(), v.len());
        Self::from_fn(u.len(), |r, c| u[r] * v[c].conj())
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.dim
    }

    #[inline]
    pub fn as_slice(&self) -> &[Complex<T>] {
        &self.data
    }

    #[inline]
    pub fn as_mut_slice(&mut self) -> &mut [Complex<T>] {
        &mut self.data
    }

    pub fn adjoint(&self) -> Self {
        Self::from_fn(self.dim, |r, c| self[(c, r)].conj())
    }

    pub fn trace(&self) -> Complex<T> {
        (0..self.dim)
            .map(|i| self[(i, i)])
            .fold(Complex::zero(), |a, b| a + b)
    }

    pub fn scale(&self, s: Complex<T>) -> Self {
        Self {
            dim: self.dim,
            data: self.data.iter().map(|&z| z * s).collect(),
        }
    }

    pub fn scale_real(&self, s: T) -> Self {
        Self {
            dim: self.dim,
            data: self.data.iter().map(|&z| z * s).collect(),
        }
    }

    /// `self += s * other`.
    pub fn add_scaled(&mut self, s: Complex<T>, other: &Self) {
        assert_eq!(self.dim, other.dim);
        for (a, &b) in self.data.iter_mut().zip(&other.data) {
            *a = *a + b * s;
        }
    }

    pub fn matmul(&self, rhs: &Self) -> Self {
        assert_eq!(self.dim, rhs.dim);
        let n = self.dim;
        let mut out = Self::zeros(n);
        for i in 0..n {
            for k in 0..n {
                let a = self.data[i * n + k];
                if a.is_zero() {
                    continue;
                }
                let row = &rhs.data[k * n..(k + 1) * n];
                let dst = &mut out.data[i * n..(i + 1) * n];
                for (d, &b) in dst.iter_mut().zip(row) {
                    *d = *d + a * b;
                }
            }
        }
        out
    }

    /// `[self, rhs]`
    pub fn commutator(&self, rhs: &Self) -> Self {
        &self.matmul(rhs) - &rhs.matmul(self)
    }

    /// `{self, rhs}`
    pub fn anticommutator(&self, rhs: &Self) -> Self {
        &self.matmul(rhs) + &rhs.matmul(self)
    }

    pub fn matvec(&self, v: &[Complex<T>]) -> Vec<Complex<T>> {
        let n = self.dim;
        assert_eq!(v.len(), n);
        (0..n)
            .map(|r| {
                self.data[r * n..(r + 1) * n]
                    .iter()
                    .zip(v)
                    .fold(Complex::zero(), |acc, (&a, &b)| acc + a * b)
            })
            .collect()
    }

    /// Largest entry of `|A - A^dagger|`.
    pub fn hermiticity_error(&self) -> T {
        let mut worst = T::zero();
        for r in 0..self.dim {
            for c in r..self.dim {
                let d = (self[(r, c)] - self[(c, r)].conj()).norm();
                if d > worst {
                    worst = d;
                }
            }
        }
        worst
    }

    /// Replaces the matrix by `(A + A^dagger)/2`.
    pub fn symmetrize(&mut self) {
        let half = T::of(0.5);
        for r in 0..self.dim {
            for c in r..self.dim {
                let avg = (self[(r, c)] + self[(c, r)].conj()) * half;
                self[(r, c)] = avg;
                self[(c, r)] = avg.conj();
            }
        }
    }

    pub fn max_abs(&self) -> T {
        self.data
            .iter()
            .map(|z| z.norm())
            .fold(T::zero(), |a, b| if b > a { b } else { a })
    }

    pub fn frobenius_norm(&self) -> T {
        self.data.iter().map(|z| z.norm_sqr()).sum::<T>().sqrt()
    }

    /// `exp(-i * self * t)` for a Hermitian `self`, by scaling and squaring
    /// of a truncated Taylor series.
    pub fn unitary_exp(&self, t: T) -> Self {
        let generator = self.scale(Complex::new(T::zero(), -t));
        let norm = generator.frobenius_norm().as_f64();
        let squarings = if norm > 0.5 {
            (norm / 0.5).log2().ceil() as u32
        } else {
            0
        };
        let scaled = generator.scale_real(T::of(0.5f64.powi(squarings as i32)));
        let mut result = Self::identity(self.dim);
        let mut term = Self::identity(self.dim);
        for k in 1..=24 {
            term = term.matmul(&scaled).scale_real(T::one() / T::of_usize(k));
            result = &result + &term;
        }
        for _ in 0..squarings {
            result = result.matmul(&result);
        }
        result
    }

    pub fn to_f64(&self) -> CMatrix<f64> {
        CMatrix {
            dim: self.dim,
            data: self
                .data
                .iter()
                .map(|z| Complex64::new(z.re.as_f64(), z.im.as_f64()))
                .collect(),
        }
    }

    /// Eigenvalues of the Hermitian part, ascending, evaluated in `f64`.
    pub fn hermitian_eigenvalues(&self) -> Vec<f64> {
        let n = self.dim;
        let m = DMatrix::<Complex64>::from_fn(n, n, |r, c| {
            let a = self[(r, c)];
            let b = self[(c, r)].conj();
            Complex64::new(
                0.5 * (a.re.as_f64() + b.re.as_f64()),
                0.5 * (a.im.as_f64() + b.im.as_f64()),
            )
        });
        let mut ev: Vec<f64> = m.symmetric_eigenvalues().iter().copied().collect();
        ev.sort_by(f64::total_cmp);
        ev
    }
}

impl<T> Index<(usize, usize)> for CMatrix<T> {
    type Output = Complex<T>;
    #[inline]
    fn index(&self, (r, c): (usize, usize)) -> &Complex<T> {
        &self.data[r * self.dim + c]
    }
}

impl<T> IndexMut<(usize, usize)> for CMatrix<T> {
    #[inline]
    fn index_mut(&mut self, (r, c): (usize, usize)) -> &mut Complex<T> {
        &mut self.data[r * self.dim + c]
    }
}

impl<T: Real> Add for &CMatrix<T> {
    type Output = CMatrix<T>;
    fn add(self, rhs: Self) -> CMatrix<T> {
        assert_eq!(self.dim, rhs.dim);
        CMatrix {
            dim: self.dim,
            data: self
                .data
                .iter()
                .zip(&rhs.data)
                .map(|(&a, &b)| a + b)
                .collect(),
        }
    }
}

impl<T: Real> Sub for &CMatrix<T> {
    type Output = CMatrix<T>;
    fn sub(self, rhs: Self) -> CMatrix<T> {
        assert_eq!(self.dim, rhs.dim);
        CMatrix {
            dim: self.dim,
            data: self
                .data
                .iter()
                .zip(&rhs.data)
                .map(|(&a, &b)| a - b)
                .collect(),
        }
    }
}

impl<T: Real> Mul for &CMatrix<T> {
    type Output = CMatrix<T>;
    fn mul(self, rhs: Self) -> CMatrix<T> {
        self.matmul(rhs)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    #[test]
    fn pauli_algebra() {
        let x = CMatrix::from_fn(2, |r, col| if r != col { c(1.0, 0.0) } else { c(0.0, 0.0) });
        let y = CMatrix::from_fn(2, |r, col| match (r, col) {
            (0, 1) => c(0.0, -1.0),
            (1, 0) => c(0.0, 1.0),
            _ => c(0.0, 0.0),
        });
        let z = CMatrix::from_diagonal(&[1.0, -1.0]);
        // [X, Y] = 2iZ
        let comm = x.commutator(&y);
        let expected = z.scale(c(0.0, 2.0));
        assert!((&comm - &expected).max_abs() < 1e-15);
        assert_eq!(x.hermiticity_error(), 0.0);
        assert_eq!(x.anticommutator(&x), CMatrix::identity(2).scale_real(2.0));
    }

    #[test]
    fn unitary_exp_of_pauli_x() {
        // exp(-i X t) = cos t I - i sin t X
        let x = CMatrix::from_fn(2, |r, col| if r != col { c(1.0, 0.0) } else { c(0.0, 0.0) });
        let t = 1.3_f64;
        let u = x.unitary_exp(t);
        assert!((u[(0, 0)] - c(t.cos(), 0.0)).norm() < 1e-13);
        assert!((u[(0, 1)] - c(0.0, -t.sin())).norm() < 1e-13);
        let large = x.unitary_exp(40.0);
        assert!((large[(1, 1)] - c(40f64.cos(), 0.0)).norm() < 1e-11);
    }

    #[test]
    fn eigenvalues_of_hermitian_matrix() {
        let m = CMatrix::from_fn(2, |r, col| match (r, col) {
            (0, 0) => c(2.0, 0.0),
            (1, 1) => c(2.0, 0.0),
            (0, 1) => c(0.0, 1.0),
            _ => c(0.0, -1.0),
        });
        let ev = m.hermitian_eigenvalues();
        assert!((ev[0] - 1.0).abs() < 1e-12);
        assert!((ev[1] - 3.0).abs() < 1e-12);
    }

    #[test]
    fn generic_over_f32() {
        let m = CMatrix::<f32>::identity(3);
        assert_eq!(m.trace(), Complex::new(3.0f32, 0.0));
        assert_eq!(m.matmul(&m), m);
    }
}
