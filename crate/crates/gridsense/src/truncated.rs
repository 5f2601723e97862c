//! Numerically stable moments of a truncated standard normal.
//!
//! The quantized measurement channel needs the mean and variance of a real
//! Gaussian restricted to a (possibly half-infinite) interval. The naive
//! `phi`/`Phi` ratios underflow once the interval sits a few tens of standard
//! deviations out, so everything here is expressed through the scaled
//! complementary error function `erfcx(x) = exp(x^2) * erfc(x)`, which stays
//! representable arbitrarily far into the tail. Bounded narrow intervals take a
//! cell-centered quadrature path instead because the closed form cancels
//! catastrophically.

// Quadrature nodes and reference values are written out to full precision on
// purpose; the last digits are rounding guards, not noise.
#![allow(clippy::excessive_precision)]

const SQRT_2: f64 = std::f64::consts::SQRT_2;
const SQRT_2_OVER_PI: f64 = 0.797_884_560_802_865_4; // sqrt(2/pi)
const FRAC_1_SQRT_PI: f64 = 0.564_189_583_547_756_3; // 1/sqrt(pi)

/// Alternating Taylor series of erf; terms stay O(1) for the argument range
/// it is used on, so the summation loses no significant precision.
fn erf_series(x: f64) -> f64 {
    let mut sum = 0.0f64;
    let mut term = x;
    let mut n = 0u32;
    while term.abs() > 1e-20 * sum.abs().max(f64::MIN_POSITIVE) {
        sum += term / (2 * n + 1) as f64;
        n += 1;
        term *= -x * x / n as f64;
    }
    2.0 * FRAC_1_SQRT_PI * sum
}

/// Error function accurate to a few ulps over the whole line (library
/// implementations of erf/erfc are not reliable to better than ~1e-10,
/// which the cancellation-prone moment formulas below would amplify).
pub fn erf_acc(x: f64) -> f64 {
    if x.is_infinite() {
        return x.signum();
    }
    let ax = x.abs();
    if ax <= 1.5 {
        erf_series(x)
    } else {
        let tail = (-ax * ax).exp() * erfcx(ax);
        (1.0 - tail).copysign(x)
    }
}

/// Scaled complementary error function `exp(x^2) * erfc(x)` for non-negative
/// arguments.
///
/// Small arguments go through the erf Taylor series; from `x = 1.2` a
/// 100-term Laplace continued fraction takes over (relative error below
/// 3e-14 at the crossover, falling rapidly with `x`). Both branches stay
/// representable arbitrarily far into the tail.
pub fn erfcx(x: f64) -> f64 {
    debug_assert!(x >= 0.0);
    if x < 1.2 {
        (x * x).exp() * (1.0 - erf_series(x))
    } else {
        // erfcx(x) = (1/sqrt(pi)) / (x + (1/2)/(x + 1/(x + (3/2)/(x + ...))))
        let mut cf = 0.0;
        for k in (1..=100).rev() {
            cf = (k as f64 / 2.0) / (x + cf);
        }
        FRAC_1_SQRT_PI / (x + cf)
    }
}

/// Mean and variance of a standard normal truncated to `(a, b]`.
///
/// Bounds may be infinite. Valid for any `a < b`; the result is finite and
/// the variance positive even when the interval carries probability mass far
/// below the smallest subnormal (the mass itself cancels out of the ratios).
pub fn trunc_std_normal_moments(a: f64, b: f64) -> (f64, f64) {
    debug_assert!(a < b);
    if a == f64::NEG_INFINITY && b == f64::INFINITY {
        return (0.0, 1.0);
    }
    // Bounded cells that are narrow relative to their distance from the
    // origin make every closed form subtract nearly equal quantities; a
    // fixed-order quadrature in cell-centered coordinates is exact there.
    if a.is_finite() && b.is_finite() {
        let mid = 0.5 * (a + b);
        if (b - a) * (1.0 + mid.abs()) < 1.0 {
            return gauss_legendre_moments(a, b);
        }
    }
    // reflect intervals on the negative axis onto the positive one
    if b <= 0.0 {
        let (m, v) = trunc_std_normal_moments(-b, -a);
        return (-m, v);
    }
    if a >= 0.0 {
        return one_sided_tail_moments(a, b);
    }
    // a < 0 < b: the plain phi/Phi formulas do not cancel here
    let z = 0.5 * (erf_acc(b / SQRT_2) - erf_acc(a / SQRT_2));
    let pa = phi(a);
    let pb = phi(b);
    let mean = (pa - pb) / z;
    let apa = if a.is_infinite() { 0.0 } else { a * pa };
    let bpb = if b.is_infinite() { 0.0 } else { b * pb };
    let var = 1.0 + (apa - bpb) / z - mean * mean;
    (mean, var.max(f64::MIN_POSITIVE))
}

fn phi(x: f64) -> f64 {
    if x.is_infinite() {
        return 0.0;
    }
    (-0.5 * x * x).exp() / (2.0 * std::f64::consts::PI).sqrt()
}

/// Moments for `0 <= a < b`, written entirely in erfcx ratios so the common
/// factor `exp(-a^2/2)` cancels.
fn one_sided_tail_moments(a: f64, b: f64) -> (f64, f64) {
    // d = phi(b)/phi(a)
    let d = if b.is_infinite() {
        0.0
    } else {
        (-0.5 * (b - a) * (b + a)).exp()
    };
    let denom = if b.is_infinite() {
        erfcx(a / SQRT_2)
    } else {
        erfcx(a / SQRT_2) - d * erfcx(b / SQRT_2)
    };
    let mean = SQRT_2_OVER_PI * (1.0 - d) / denom;
    let bd = if b.is_infinite() { 0.0 } else { b * d };
    let var = 1.0 + SQRT_2_OVER_PI * (a - bd) / denom - mean * mean;
    // The var expression cancels to O(1/a^2); far past a ~ 1e4 rounding can
    // drive it nonpositive, where the leading asymptotic takes over.
    let var = if var > 0.0 { var } else { 1.0 / (a * a) };
    (mean, var)
}

/// 16-point Gauss-Legendre abscissae (positive half) and weights on [-1, 1].
const GL16: [(f64, f64); 8] = [
    (0.095_012_509_837_637_44, 0.189_450_610_455_068_5),
    (0.281_603_550_779_258_9, 0.182_603_415_044_923_6),
    (0.458_016_777_657_227_4, 0.169_156_519_395_002_5),
    (0.617_876_244_402_643_8, 0.149_595_988_816_576_7),
    (0.755_404_408_355_003_0, 0.124_628_971_255_533_9),
    (0.865_631_202_387_831_7, 0.095_158_511_682_492_78),
    (0.944_575_023_073_232_6, 0.062_253_523_938_647_89),
    (0.989_400_934_991_650_0, 0.027_152_459_411_754_1),
];

/// Moments of a bounded, relatively narrow cell via fixed-order quadrature
/// in cell-centered coordinates `u = t - m0`: the density ratio
/// `exp(-m0*u - u^2/2)` is evaluated directly (the common `phi(m0)` factor
/// cancels), so nothing large is ever subtracted. For arguments bounded by
/// the caller's narrowness condition the quadrature error is far below
/// machine precision.
fn gauss_legendre_moments(a: f64, b: f64) -> (f64, f64) {
    let m0 = 0.5 * (a + b);
    let h = 0.5 * (b - a);
    let (mut i0, mut i1, mut i2) = (0.0, 0.0, 0.0);
    for (x, w) in GL16 {
        for u in [h * x, -h * x] {
            let f = w * (-u * (m0 + 0.5 * u)).exp();
            i0 += f;
            i1 += u * f;
            i2 += u * u * f;
        }
    }
    let r = i1 / i0;
    let var = i2 / i0 - r * r;
    (m0 + r, var.max(f64::MIN_POSITIVE))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn erfcx_matches_high_precision_reference() {
        // reference values computed with 40-digit arithmetic
        let cases = [
            (0.0, 1.0),
            (0.5, 0.61569034419292587487),
            (1.0, 0.42758357615580700441),
            (2.0, 0.25539567631050574387),
            (2.4, 0.21849873453703333187),
            (2.5, 0.21080636406114358065),
            (2.6, 0.20361324735670921149),
            (5.0, 0.11070463773306862637),
            (12.0, 0.04685422101489376262),
            (25.0, 0.022549572432641358944),
            (100.0, 0.0056416137829894329036),
        ];
        for (x, want) in cases {
            assert_relative_eq!(erfcx(x), want, max_relative = 1e-13);
        }
        // far tail against the leading asymptotic 1/(x sqrt(pi))
        let x = 1e6;
        assert_relative_eq!(erfcx(x), FRAC_1_SQRT_PI / x, max_relative = 1e-6);
    }

    #[test]
    fn half_normal_moments() {
        let (mean, var) = trunc_std_normal_moments(0.0, f64::INFINITY);
        assert_relative_eq!(mean, SQRT_2_OVER_PI, max_relative = 1e-14);
        assert_relative_eq!(var, 1.0 - SQRT_2_OVER_PI * SQRT_2_OVER_PI, max_relative = 1e-13);
    }

    #[test]
    fn symmetric_interval_has_zero_mean() {
        let (mean, var) = trunc_std_normal_moments(-1.5, 1.5);
        assert!(mean.abs() < 1e-15);
        assert!(var > 0.0 && var < 1.0);
    }

    #[test]
    fn reflection_consistency() {
        let (m1, v1) = trunc_std_normal_moments(0.7, 2.3);
        let (m2, v2) = trunc_std_normal_moments(-2.3, -0.7);
        assert_relative_eq!(m1, -m2, max_relative = 1e-13);
        assert_relative_eq!(v1, v2, max_relative = 1e-13);
    }

    #[test]
    fn far_tail_stays_finite_and_sane() {
        for &a in &[10.0, 40.0, 200.0, 5e3] {
            let (mean, var) = trunc_std_normal_moments(a, f64::INFINITY);
            assert!(mean > a && mean < a + 1.5 / a, "mean {mean} at a={a}");
            // the closed form cancels to O(1/a^2); allow the rounding floor
            // mean^2 * eps on top of the asymptotic tolerance
            let tol = 20.0 / (a * a) + 3.0 * (a * a * 1e-16) * (a * a);
            assert_relative_eq!(var, 1.0 / (a * a), max_relative = tol);
            let (mean_b, var_b) = trunc_std_normal_moments(a, a + 0.5);
            assert!(mean_b > a && mean_b < a + 0.5);
            assert!(var_b > 0.0 && var_b < 0.25);
        }
    }

    #[test]
    fn narrow_cells_match_second_order_reference() {
        for &m0 in &[0.0, 0.4, 2.0, 6.0] {
            let w = 1e-3 / (1.0 + m0);
            let (mean, var) = trunc_std_normal_moments(m0 - w / 2.0, m0 + w / 2.0);
            let expect_mean = m0 - m0 * w * w / 12.0;
            let expect_var = w * w / 12.0;
            assert_relative_eq!(mean, expect_mean, max_relative = 1e-9);
            assert_relative_eq!(var, expect_var, max_relative = 1e-6);
        }
    }

    #[test]
    fn quadrature_and_closed_form_agree_at_the_switch_width() {
        // widths straddling (b - a) * (1 + mid) = 1 must agree: both paths
        // are accurate there
        for &m0 in &[0.0, 1.5, 4.0, 8.0] {
            let w_switch = 1.0 / (1.0 + m0);
            for &scale in &[0.98, 1.02] {
                let w = w_switch * scale;
                let (a, b) = (m0 - w / 2.0, m0 + w / 2.0);
                let (mean, var) = trunc_std_normal_moments(a, b);
                let (mean_q, var_q) = gauss_legendre_moments(a, b);
                assert_relative_eq!(mean, mean_q, max_relative = 1e-9);
                assert_relative_eq!(var, var_q, max_relative = 1e-7);
            }
        }
    }

    #[test]
    fn mean_lies_inside_interval_and_var_below_unconstrained() {
        let cases = [
            (-3.0, -1.0),
            (-0.25, 0.75),
            (1.0, 1.5),
            (5.0, f64::INFINITY),
            (f64::NEG_INFINITY, -2.0),
            (f64::NEG_INFINITY, 3.0),
        ];
        for (a, b) in cases {
            let (mean, var) = trunc_std_normal_moments(a, b);
            assert!(mean > a && mean < b, "mean {mean} outside ({a}, {b})");
            assert!(var > 0.0 && var <= 1.0 + 1e-12);
        }
    }
}
