//! Low-degree real polynomial roots.

use std::f64::consts::PI;

/// Discriminant of the monic cubic `x³ + b x² + c x + d`.
pub fn cubic_discriminant(b: f64, c: f64, d: f64) -> f64 {
    18.0 * b * c * d - 4.0 * b.powi(3) * d + b * b * c * c - 4.0 * c.powi(3) - 27.0 * d * d
}

/// Roots of `x³ + b x² + c x + d`, descending.
///
/// With a nonnegative discriminant the three real roots come from the
/// trigonometric form. Otherwise the complex pair is replaced by its real
/// part, so callers always get three numbers and decide from the returned
/// discriminant whether to trust them.
pub fn cubic_roots_projected(b: f64, c: f64, d: f64) -> ([f64; 3], f64) {
    let disc = cubic_discriminant(b, c, d);
    let shift = -b / 3.0;
    let p = c - b * b / 3.0;
    let q = 2.0 * b.powi(3) / 27.0 - b * c / 3.0 + d;

    let mut roots = if p < 0.0 && disc >= 0.0 {
        let m = 2.0 * (-p / 3.0).sqrt();
        let arg = ((3.0 * q / (2.0 * p)) * (-3.0 / p).sqrt()).clamp(-1.0, 1.0);
        let phi = arg.acos() / 3.0;
        [0, 1, 2].map(|k| shift + m * (phi - 2.0 * PI * k as f64 / 3.0).cos())
    } else {
        // One real root plus a conjugate pair (or a degenerate triple root).
        let h = (q * q / 4.0 + p.powi(3) / 27.0).max(0.0).sqrt();
        let y1 = (-q / 2.0 + h).cbrt() + (-q / 2.0 - h).cbrt();
        [shift + y1, shift - y1 / 2.0, shift - y1 / 2.0]
    };
    roots.sort_by(|a, b| b.total_cmp(a));
    (roots, disc)
}

/// Root of a continuous `f` with a sign change on `[lo, hi]`, by bisection to
/// machine resolution.
pub fn bisect(f: impl Fn(f64) -> f64, mut lo: f64, mut hi: f64) -> f64 {
    let flo = f(lo);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        let fm = f(mid);
        if fm == 0.0 {
            return mid;
        }
        if (fm < 0.0) == (flo < 0.0) {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

/// Horner evaluation, coefficients from the highest degree down.
pub fn horner(coeffs: &[f64], x: f64) -> f64 {
    coeffs.iter().fold(0.0, |acc, &c| acc * x + c)
}

/// Number of sign changes in a coefficient sequence, ignoring entries with
/// magnitude at most `zero_tol`. Equals the number of positive roots when all
/// roots are real.
pub fn sign_changes(coeffs: &[f64], zero_tol: f64) -> usize {
    let signs: Vec<bool> = coeffs.iter().filter(|c| c.abs() > zero_tol).map(|&c| c > 0.0).collect();
    signs.windows(2).filter(|w| w[0] != w[1]).count()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    #[test]
    fn triple_root() {
        let (r, disc) = cubic_roots_projected(-3.0, 3.0, -1.0);
        assert_abs_diff_eq!(disc, 0.0);
        for x in r {
            assert_abs_diff_eq!(x, 1.0, epsilon = 1e-12);
        }
    }

    #[test]
    fn complex_pair_projects_to_real_part() {
        // (x - 2)(x² + 1): roots 2, ±i.
        let (r, disc) = cubic_roots_projected(-2.0, 1.0, -2.0);
        assert!(disc < 0.0);
        assert_abs_diff_eq!(r[0], 2.0, epsilon = 1e-12);
        assert_abs_diff_eq!(r[1], 0.0, epsilon = 1e-12);
        assert_abs_diff_eq!(r[2], 0.0, epsilon = 1e-12);
    }

    #[test]
    fn sign_change_count() {
        assert_eq!(sign_changes(&[3.0, 6.0, 0.0, 0.0, 0.0], 1e-14), 0);
        assert_eq!(sign_changes(&[3.0, 6.0, 1.0, -2.0, -0.5], 1e-14), 1);
        assert_eq!(sign_changes(&[1.0, -1e-16, 1.0], 1e-14), 0);
    }

    #[test]
    fn bisection_finds_sqrt2() {
        assert_abs_diff_eq!(bisect(|x| x * x - 2.0, 0.0, 2.0), 2f64.sqrt(), epsilon = 1e-15);
    }

    proptest! {
        #[test]
        fn recovers_three_real_roots(a in -2.0f64..2.0, b in -2.0f64..2.0, c in -2.0f64..2.0) {
            let (bb, cc, dd) = (-(a + b + c), a * b + b * c + a * c, -a * b * c);
            let (r, disc) = cubic_roots_projected(bb, cc, dd);
            prop_assert!(disc >= -1e-9);
            let mut want = [a, b, c];
            want.sort_by(|x, y| y.total_cmp(x));
            // Near-multiple roots lose accuracy as the cube root of rounding.
            for (x, w) in r.iter().zip(want) {
                prop_assert!((x - w).abs() < 1e-4, "{:?} vs {:?}", r, want);
            }
            for x in r {
                prop_assert!(horner(&[1.0, bb, cc, dd], x).abs() < 1e-9);
            }
        }
    }
}
