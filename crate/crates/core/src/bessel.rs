//! Integer-order Bessel functions of the first kind and their zeros.
//!
//! `J_n(x)` is evaluated with Miller's downward recurrence normalised by
//! `J_0 + 2 sum_k J_2k = 1`, which is stable for every order and argument
//! and reaches ~1e-14 absolute accuracy in double precision.

use crate::scalar::Real;

/// `J_n(x)` for integer order `n >= 0` and any real `x`.
pub fn bessel_j<T: Real>(order: u32, x: T) -> T {
    if x == T::zero() {
        return if order == 0 { T::one() } else { T::zero() };
    }
    let ax = x.abs();
    let value = miller(order, ax);
    if x < T::zero() && order % 2 == 1 {
        -value
    } else {
        value
    }
}

fn miller<T: Real>(order: u32, x: T) -> T {
    let n = order as usize;
    let xf = x.as_f64();
    let top = (n as f64).max(xf);
    // Start far enough above both the order and the turning point that the
    // seed's contamination has decayed below rounding.
    let mut start = top.ceil() as usize + 40 + 10 * top.cbrt().ceil() as usize;
    start += start % 2;

    let rescale_above = T::max_value().sqrt();
    let rescale_by = T::one() / rescale_above;
    let two_over_x = T::of(2.0) / x;

    let mut above = T::zero();
    let mut current = T::min_positive_value().sqrt();
    let mut result = T::zero();
    let mut norm = T::zero();
    // Descend from J_start to J_0, accumulating the even-order sum.
    for k in (1..=start).rev() {
        let below = T::of_usize(k) * two_over_x * current - above;
        above = current;
        current = below;
        let idx = k - 1;
        if idx == n {
            result = current;
        }
        if idx % 2 == 0 && idx > 0 {
            norm += current;
        }
        if current.abs() > rescale_above {
            current *= rescale_by;
            above *= rescale_by;
            result *= rescale_by;
            norm *= rescale_by;
        }
    }
    let total = current + T::of(2.0) * norm;
    result / total
}

/// Leading-order estimate `n + 1.8557 n^(1/3)` of the first positive zero of
/// `J_n`, valid for large orders.
pub fn first_zero_estimate(order: u32) -> f64 {
    let n = order as f64;
    n + 1.8557 * n.cbrt()
}

/// First `count` positive zeros of `J_n`, ascending.
///
/// Zeros are bracketed by a forward scan starting at `x = n` (`J_n` has no
/// positive zero below its order) and refined by bisection to within a few
/// ulps.
pub fn bessel_first_zeros<T: Real>(order: u32, count: usize) -> Vec<T> {
    let mut zeros = Vec::with_capacity(count);
    if count == 0 {
        return zeros;
    }
    let step = T::of(0.1);
    // Stay off x = 0, where J_n vanishes for n >= 1.
    let mut lo = T::of((order as f64).max(1e-3));
    let mut f_lo = bessel_j(order, lo);
    while zeros.len() < count {
        let hi = lo + step;
        let f_hi = bessel_j(order, hi);
        if f_hi == T::zero() {
            zeros.push(hi);
            lo = hi + step * T::of(1e-3);
            f_lo = bessel_j(order, lo);
            continue;
        }
        if f_lo.signum() != f_hi.signum() {
            zeros.push(bisect(order, lo, hi, f_lo));
        }
        lo = hi;
        f_lo = f_hi;
    }
    zeros
}

fn bisect<T: Real>(order: u32, mut lo: T, mut hi: T, mut f_lo: T) -> T {
    let two = T::of(2.0);
    for _ in 0..200 {
        let mid = (lo + hi) / two;
        if mid <= lo || mid >= hi {
            break;
        }
        let f_mid = bessel_j(order, mid);
        if f_mid == T::zero() {
            return mid;
        }
        if f_mid.signum() == f_lo.signum() {
            lo = mid;
            f_lo = f_mid;
        } else {
            hi = mid;
        }
        if hi - lo <= T::epsilon() * T::of(4.0) * hi {
            break;
        }
    }
    (lo + hi) / two
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn values_at_origin() {
        assert_eq!(bessel_j(0, 0.0f64), 1.0);
        assert_eq!(bessel_j(1, 0.0f64), 0.0);
        assert_eq!(bessel_j(7, 0.0f64), 0.0);
    }

    #[test]
    fn first_zero_of_j0() {
        assert!(bessel_j(0, 2.404826f64).abs() < 1e-6);
        let z = bessel_first_zeros::<f64>(0, 1);
        assert!((z[0] - 2.404826).abs() < 1e-6);
    }

    #[test]
    fn reflection_parity() {
        for n in 0..6 {
            let a = bessel_j(n, 3.7f64);
            let b = bessel_j(n, -3.7f64);
            let sign = if n % 2 == 0 { 1.0 } else { -1.0 };
            assert!((a - sign * b).abs() < 1e-15);
        }
    }

    #[test]
    fn zeros_increase_and_change_sign() {
        for order in [0u32, 1, 8, 40] {
            let zeros = bessel_first_zeros::<f64>(order, 4);
            for w in zeros.windows(2) {
                assert!(w[1] > w[0]);
            }
            for &z in &zeros {
                let below = bessel_j(order, z - 1e-6);
                let above = bessel_j(order, z + 1e-6);
                assert!(below * above < 0.0, "no sign change at {z} for J_{order}");
            }
        }
    }

    #[test]
    fn large_order_first_zero() {
        let z = bessel_first_zeros::<f64>(128, 1)[0];
        assert!((z - 137.6).abs() < 0.5, "got {z}");
        assert!((first_zero_estimate(128) - z).abs() < 0.5);
    }

    #[test]
    fn single_precision_path() {
        let z = bessel_first_zeros::<f32>(0, 2);
        assert!((z[0] - 2.404_825_6).abs() < 1e-5);
        assert!((z[1] - 5.520_078).abs() < 1e-5);
        assert!((bessel_j(3, 10.0f32) - 0.058_379_38).abs() < 1e-5);
    }
}
