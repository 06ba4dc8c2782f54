//! Time kernels of the three-wave interaction integrals.
//!
//! All three switch to a truncated Taylor series when `|delta * t|` drops
//! below [`DEGENERACY_THRESHOLD`], so they stay continuous through `delta = 0`.

use num_complex::Complex64;

pub const DEGENERACY_THRESHOLD: f64 = 1e-6;

/// `F(t) = int_0^t exp(i delta tau) dtau`.
pub fn f_kernel(delta: f64, t: f64) -> Complex64 {
    let x = delta * t;
    if x.abs() < DEGENERACY_THRESHOLD {
        // t * sum_j (i x)^j / (j + 1)!, four terms
        let x2 = x * x;
        return Complex64::new(t * (1.0 - x2 / 6.0), t * (x / 2.0 - x * x2 / 24.0));
    }
    // (e^{ix} - 1) / (i delta), with 1 - cos x = 2 sin^2(x/2)
    let h = (0.5 * x).sin();
    Complex64::new(x.sin() / delta, 2.0 * h * h / delta)
}

/// `sin(delta t) / delta`, which equals `Re(-F(-t))`.
pub fn sinc_kernel(delta: f64, t: f64) -> f64 {
    let x = delta * t;
    if x.abs() < DEGENERACY_THRESHOLD {
        let x2 = x * x;
        return t * (1.0 - x2 / 6.0 + x2 * x2 / 120.0 - x2 * x2 * x2 / 5040.0);
    }
    x.sin() / delta
}

/// `(1 - cos(delta t)) / delta^2`, the time integral of [`sinc_kernel`].
pub fn tilde_f_kernel(delta: f64, t: f64) -> f64 {
    let x = delta * t;
    if x.abs() < DEGENERACY_THRESHOLD {
        let x2 = x * x;
        return t * t * (0.5 - x2 / 24.0 + x2 * x2 / 720.0 - x2 * x2 * x2 / 40320.0);
    }
    // 1 - cos x = 2 sin^2(x/2) avoids cancellation just above the threshold
    let h = (0.5 * x).sin();
    2.0 * h * h / (delta * delta)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn rel(a: f64, b: f64) -> f64 {
        (a - b).abs() / b.abs().max(1e-300)
    }

    #[test]
    fn f_kernel_examples() {
        assert_eq!(f_kernel(0.0, 5.0), Complex64::new(5.0, 0.0));
        let z = f_kernel(PI, 1.0);
        assert!(z.re.abs() < 1e-15);
        assert!((z.im - 2.0 / PI).abs() < 1e-15);
        assert_eq!(f_kernel(3.7, 0.0), Complex64::new(0.0, 0.0));
    }

    #[test]
    fn sinc_examples() {
        assert_eq!(sinc_kernel(0.0, 3.0), 3.0);
        assert!(sinc_kernel(PI, 1.0).abs() < 1e-15);
    }

    #[test]
    fn tilde_examples() {
        assert_eq!(tilde_f_kernel(0.0, 2.0), 2.0);
        assert!(rel(tilde_f_kernel(PI, 1.0), 2.0 / (PI * PI)) < 1e-14);
        for &d in &[-50.0, -3.0, -0.1, 0.0, 1e-4, 2.0, 17.0] {
            for &t in &[0.0, 0.3, 1.0, 7.0] {
                let v = tilde_f_kernel(d, t);
                let cap = if d == 0.0 {
                    t * t
                } else {
                    (t * t).min(2.0 / (d * d))
                };
                assert!(v >= 0.0 && v <= cap + 1e-12, "d={d} t={t} v={v}");
            }
        }
    }

    #[test]
    fn sinc_matches_minus_f_at_minus_t() {
        for i in -20..=20 {
            let d = i as f64 * 0.731;
            for j in -10..=10 {
                let t = j as f64 * 0.37;
                let lhs = sinc_kernel(d, t);
                let rhs = (-f_kernel(d, -t)).re;
                assert!((lhs - rhs).abs() < 1e-13, "d={d} t={t}");
            }
        }
    }

    #[test]
    fn continuous_across_threshold() {
        for &t in &[0.5, 1.0, 3.0] {
            for &d in &[1e-9, -1e-9] {
                let f0 = f_kernel(0.0, t);
                let f = f_kernel(d, t);
                assert!((f - f0).norm() / f0.norm() < 1e-8);
                assert!(rel(sinc_kernel(d, t), sinc_kernel(0.0, t)) < 1e-8);
                assert!(rel(tilde_f_kernel(d, t), tilde_f_kernel(0.0, t)) < 1e-8);
            }
            // either side of the series switch
            let d_lo = 0.999 * DEGENERACY_THRESHOLD / t;
            let d_hi = 1.001 * DEGENERACY_THRESHOLD / t;
            assert!((f_kernel(d_lo, t) - f_kernel(d_hi, t)).norm() / t < 1e-8);
            assert!(rel(sinc_kernel(d_lo, t), sinc_kernel(d_hi, t)) < 1e-8);
            assert!(rel(tilde_f_kernel(d_lo, t), tilde_f_kernel(d_hi, t)) < 1e-8);
        }
    }

    #[test]
    fn tilde_derivative_is_sinc() {
        let h = 1e-5;
        for i in -12..=12 {
            let d = i as f64 * 0.9;
            for j in 1..=12 {
                let t = j as f64 * 0.41;
                let fd = (tilde_f_kernel(d, t + h) - tilde_f_kernel(d, t - h)) / (2.0 * h);
                let s = sinc_kernel(d, t);
                assert!((fd - s).abs() <= 1e-6 * (1.0 + s.abs()), "d={d} t={t}");
            }
        }
    }
}
