//! Bessel function of the first kind, order zero.

use std::f64::consts::{FRAC_PI_4, PI};

/// Below this |x| the power series is used, above it the Hankel expansion.
const SERIES_LIMIT: f64 = 12.0;

/// `J0(x)` with absolute error below 1e-10 on the whole real line.
pub fn bessel_j0(x: f64) -> f64 {
    let x = x.abs();
    if x.is_nan() {
        return f64::NAN;
    }
    if x < SERIES_LIMIT {
        series(x)
    } else {
        asymptotic(x)
    }
}

fn series(x: f64) -> f64 {
    let q = -0.25 * x * x;
    let mut term = 1.0;
    let mut sum = 1.0;
    let mut k = 1.0;
    loop {
        term *= q / (k * k);
        sum += term;
        if term.abs() < 1e-17 * sum.abs().max(1e-3) {
            return sum;
        }
        k += 1.0;
    }
}

/// Hankel expansion, truncated at the smallest term.
fn asymptotic(x: f64) -> f64 {
    let mut p = 0.0;
    let mut q = 0.0;
    // a_k = Π_{i=1..k} (2i−1)² / (k! 8^k x^k)
    let mut a = 1.0;
    let mut last = f64::INFINITY;
    for k in 0..60 {
        if k > 0 {
            let odd = (2 * k - 1) as f64;
            a *= odd * odd / (k as f64 * 8.0 * x);
        }
        if a.abs() > last {
            break;
        }
        last = a.abs();
        // P = Σ (−1)^m a_{2m}, Q = −Σ (−1)^m a_{2m+1}
        let sign = if (k / 2) % 2 == 0 { 1.0 } else { -1.0 };
        if k % 2 == 0 {
            p += sign * a;
        } else {
            q -= sign * a;
        }
        if a.abs() < 1e-17 {
            break;
        }
    }
    let chi = x - FRAC_PI_4;
    (2.0 / (PI * x)).sqrt() * (p * chi.cos() - q * chi.sin())
}

/// Bisection root of `f` on a sign-changing bracket.
pub fn bisect(mut f: impl FnMut(f64) -> f64, mut lo: f64, mut hi: f64, tol: f64) -> Option<f64> {
    let mut flo = f(lo);
    let fhi = f(hi);
    if !(flo.signum() != fhi.signum()) {
        return None;
    }
    while hi - lo > tol {
        let mid = 0.5 * (lo + hi);
        let fm = f(mid);
        if fm == 0.0 {
            return Some(mid);
        }
        if fm.signum() == flo.signum() {
            lo = mid;
            flo = fm;
        } else {
            hi = mid;
        }
    }
    Some(0.5 * (lo + hi))
}

/// Argument `x0` at which `J0(x0)² = 1/2`.
pub fn j0_half_power_argument() -> f64 {
    bisect(|x| bessel_j0(x).powi(2) - 0.5, 0.5, 2.0, 1e-15).expect("bracketed")
}
