//! `Y_0` and `K_0` to absolute accuracy `1e-10` on `(0, inf)`.
//!
//! `Y_0`: ascending series for `x <= 12`, Hankel expansion beyond. `K_0`:
//! ascending series for `x <= 2`, trapezoidal rule on
//! `int_0^inf exp(-x cosh t) dt` for `2 < x <= 8`, asymptotic expansion beyond.
//! The switch points are where the optimally truncated expansions, whose
//! error is of size `exp(-2x)`, fall below the target accuracy.

use std::f64::consts::{FRAC_PI_2, FRAC_PI_4, PI};

use crate::error::{Error, Result};

/// Euler's constant.
pub const EULER_GAMMA: f64 = 0.577_215_664_901_532_860_61;

pub const Y0_SERIES_MAX: f64 = 12.0;
pub const K0_SERIES_MAX: f64 = 2.0;
pub const K0_ASYMPTOTIC_MIN: f64 = 8.0;

/// `(J_0(x), sum_{k>=1} (-1)^(k+1) H_k (x^2/4)^k / (k!)^2)`.
fn j0_and_y0_tail(x: f64) -> (f64, f64) {
    let z = 0.25 * x * x;
    let (mut term, mut j0, mut tail, mut harmonic) = (1.0f64, 1.0f64, 0.0f64, 0.0f64);
    for k in 1..200 {
        let kf = k as f64;
        term *= -z / (kf * kf);
        harmonic += 1.0 / kf;
        j0 += term;
        tail -= harmonic * term;
        if term.abs() * harmonic.max(1.0) < 1e-18 {
            break;
        }
    }
    (j0, tail)
}

/// `Y_0` by its ascending series.
pub fn y0_series(x: f64) -> f64 {
    let (j0, tail) = j0_and_y0_tail(x);
    (2.0 / PI) * (((0.5 * x).ln() + EULER_GAMMA) * j0 + tail)
}

/// Hankel `P_0(x)`, `Q_0(x)`, truncated at the smallest term.
fn hankel_pq(x: f64) -> (f64, f64) {
    let inv8x = 1.0 / (8.0 * x);
    let (mut p, mut q) = (1.0f64, 0.0f64);
    let mut t = 1.0f64;
    let mut last = f64::INFINITY;
    for m in 1..200u32 {
        let odd = (2 * m - 1) as f64;
        t *= -odd * odd * inv8x / m as f64;
        if t.abs() >= last || t.abs() < 1e-18 {
            break;
        }
        last = t.abs();
        // t_m enters P with sign (-1)^(m/2) for even m, Q with (-1)^((m-1)/2) for odd m
        let sign = if (m / 2) % 2 == 0 { 1.0 } else { -1.0 };
        if m % 2 == 0 {
            p += sign * t;
        } else {
            q += sign * t;
        }
    }
    (p, q)
}

/// `Y_0` by the Hankel expansion.
pub fn y0_asymptotic(x: f64) -> f64 {
    let (p, q) = hankel_pq(x);
    let (s, c) = (x - FRAC_PI_4).sin_cos();
    (2.0 / (PI * x)).sqrt() * (p * s + q * c)
}

/// `Y_0(x)` for `x > 0` without the argument check.
#[inline]
pub fn y0_unchecked(x: f64) -> f64 {
    if x <= Y0_SERIES_MAX {
        y0_series(x)
    } else {
        y0_asymptotic(x)
    }
}

/// Bessel function of the second kind of order 0.
pub fn bessel_y0(x: f64) -> Result<f64> {
    if !(x > 0.0) || !x.is_finite() {
        return Err(Error::NonPositiveArgument(x));
    }
    Ok(y0_unchecked(x))
}

/// `K_0` by its ascending series.
pub fn k0_series(x: f64) -> f64 {
    let z = 0.25 * x * x;
    let (mut term, mut i0, mut tail, mut harmonic) = (1.0f64, 1.0f64, 0.0f64, 0.0f64);
    for k in 1..200 {
        let kf = k as f64;
        term *= z / (kf * kf);
        harmonic += 1.0 / kf;
        i0 += term;
        tail += harmonic * term;
        if term * harmonic < 1e-18 * i0 {
            break;
        }
    }
    -((0.5 * x).ln() + EULER_GAMMA) * i0 + tail
}

/// `K_0(x) = int_0^inf exp(-x cosh t) dt` by the trapezoidal rule, which
/// converges geometrically for this analytic, rapidly decaying integrand.
pub fn k0_integral(x: f64) -> f64 {
    const STEP: f64 = 0.125;
    let mut sum = 0.5;
    let mut k = 1;
    loop {
        let v = (-x * ((k as f64 * STEP).cosh() - 1.0)).exp();
        sum += v;
        if v < 1e-18 {
            break;
        }
        k += 1;
    }
    (-x).exp() * STEP * sum
}

/// `K_0` by the asymptotic expansion, truncated at the smallest term.
pub fn k0_asymptotic(x: f64) -> f64 {
    let inv8x = 1.0 / (8.0 * x);
    let (mut sum, mut t, mut last) = (1.0f64, 1.0f64, f64::INFINITY);
    for m in 1..200u32 {
        let odd = (2 * m - 1) as f64;
        t *= -odd * odd * inv8x / m as f64;
        if t.abs() >= last || t.abs() < 1e-18 {
            break;
        }
        last = t.abs();
        sum += t;
    }
    (FRAC_PI_2 / x).sqrt() * (-x).exp() * sum
}

/// `K_0(x)` for `x > 0` without the argument check.
#[inline]
pub fn k0_unchecked(x: f64) -> f64 {
    if x <= K0_SERIES_MAX {
        k0_series(x)
    } else if x <= K0_ASYMPTOTIC_MIN {
        k0_integral(x)
    } else {
        k0_asymptotic(x)
    }
}

/// Modified Bessel function of the second kind of order 0.
pub fn bessel_k0(x: f64) -> Result<f64> {
    if !(x > 0.0) || !x.is_finite() {
        return Err(Error::NonPositiveArgument(x));
    }
    Ok(k0_unchecked(x))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    /// Double-exponential quadrature on `[a, b]`, robust to endpoint
    /// logarithmic singularities.
    fn tanh_sinh(a: f64, b: f64, f: impl Fn(f64) -> f64) -> f64 {
        let (h, c, d) = (1.0 / 64.0, 0.5 * (a + b), 0.5 * (b - a));
        let mut sum = 0.0;
        for k in -400i32..=400 {
            let t = k as f64 * h;
            let u = FRAC_PI_2 * t.sinh();
            let x = u.tanh();
            let w = FRAC_PI_2 * t.cosh() / (u.cosh() * u.cosh());
            // distance to the nearer endpoint, kept exact for tiny values
            let gap = d / ((2.0 * u.abs()).exp() + 1.0) * 2.0;
            if gap <= 0.0 || w < 1e-300 {
                continue;
            }
            let point = if x < 0.0 { a + gap } else { b - gap };
            let point = if k == 0 { c } else { point };
            sum += w * f(point);
        }
        d * h * sum
    }

    /// `Y_0(x) = (4/pi^2) int_0^{pi/2} cos(x cos th) (gamma + ln(2 x sin^2 th)) dth`.
    fn y0_oracle(x: f64) -> f64 {
        4.0 / (PI * PI)
            * tanh_sinh(0.0, FRAC_PI_2, |th| {
                (x * th.cos()).cos() * (EULER_GAMMA + (2.0 * x).ln() + 2.0 * th.sin().ln())
            })
    }

    /// `K_0(x) = int_0^inf exp(-x cosh t) dt` by composite Simpson.
    fn k0_oracle(x: f64) -> f64 {
        let upper = (1.0 + 60.0 / x).acosh();
        let n = 20_000;
        let h = upper / n as f64;
        let f = |t: f64| (-x * t.cosh()).exp();
        let mut s = f(0.0) + f(upper);
        for i in 1..n {
            s += if i % 2 == 1 { 4.0 } else { 2.0 } * f(i as f64 * h);
        }
        s * h / 3.0
    }

    #[test]
    fn y0_examples() {
        assert_abs_diff_eq!(bessel_y0(1.0).unwrap(), 0.0882569642, epsilon = 1e-10);
        assert_abs_diff_eq!(y0_oracle(1.0), 0.0882569642, epsilon = 1e-10);
        let y = bessel_y0(10.0).unwrap();
        let envelope = (2.0 / (PI * 10.0)).sqrt();
        let leading = envelope * (10.0 - FRAC_PI_4).sin();
        // within 3% of the envelope amplitude
        assert!((y - leading).abs() <= 0.03 * envelope, "{y} vs {leading}");
        assert!(bessel_y0(1e-8).unwrap() < -10.0);
        assert_eq!(bessel_y0(0.0), Err(Error::NonPositiveArgument(0.0)));
        assert!(bessel_y0(-1.0).is_err());
    }

    #[test]
    fn y0_matches_integral_oracle() {
        for x in [
            0.05, 0.3, 0.8936, 2.0, 5.0, 8.0, 11.0, 12.0, 13.0, 20.0, 40.0,
        ] {
            let a = bessel_y0(x).unwrap();
            let b = y0_oracle(x);
            assert!((a - b).abs() <= 1e-10, "x={x}: {a} vs {b}");
        }
    }

    #[test]
    fn y0_branches_agree_at_switch() {
        let x = Y0_SERIES_MAX;
        assert!((y0_series(x) - y0_asymptotic(x)).abs() <= 1e-10);
        assert!((y0_series(x + 1e-9) - y0_asymptotic(x - 1e-9)).abs() <= 1e-8);
    }

    #[test]
    fn y0_first_zero() {
        let (mut lo, mut hi) = (0.5, 1.5);
        assert!(bessel_y0(lo).unwrap() < 0.0 && bessel_y0(hi).unwrap() > 0.0);
        while hi - lo > 1e-6 {
            let mid = 0.5 * (lo + hi);
            if bessel_y0(mid).unwrap() < 0.0 {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        assert_abs_diff_eq!(lo, 0.8936, epsilon = 1e-4);
    }

    #[test]
    fn k0_examples() {
        assert_abs_diff_eq!(bessel_k0(1.0).unwrap(), 0.4210244382, epsilon = 1e-10);
        assert_abs_diff_eq!(k0_oracle(1.0), 0.4210244382, epsilon = 1e-10);
        assert!(bessel_k0(20.0).unwrap() < 1e-9);
        assert!(bessel_k0(0.0).is_err());
    }

    #[test]
    fn k0_matches_integral_oracle() {
        for x in [0.01, 0.5, 1.5, 2.0, 2.5, 4.0, 7.9, 8.0, 8.1, 12.0, 30.0] {
            let a = bessel_k0(x).unwrap();
            let b = k0_oracle(x);
            assert!((a - b).abs() <= 1e-10, "x={x}: {a} vs {b}");
        }
    }

    #[test]
    fn k0_branches_agree_at_switches() {
        assert!((k0_series(2.0) - k0_integral(2.0)).abs() <= 1e-8);
        assert!((k0_integral(8.0) - k0_asymptotic(8.0)).abs() <= 1e-8);
    }

    #[test]
    fn k0_monotone_decreasing() {
        let mut prev = f64::INFINITY;
        for i in 1..2000 {
            let v = bessel_k0(i as f64 * 0.01).unwrap();
            assert!(v < prev);
            prev = v;
        }
    }
}
