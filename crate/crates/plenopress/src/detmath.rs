//! Deterministic elementary functions.
//!
//! Entropy-coding tables must be byte-identical across platforms, so the
//! Gaussian CDF used to build them cannot go through platform libm. This
//! module evaluates exp and the standard normal CDF/PDF with fixed
//! coefficients and plain IEEE-754 arithmetic (+, -, *, /, sqrt), which is
//! exactly rounded and therefore reproducible everywhere.

/// ln(2), split not needed at our accuracy target.
const LN2: f64 = 0.693_147_180_559_945_3;
/// 1/sqrt(2*pi)
const FRAC_1_SQRT_2PI: f64 = 0.398_942_280_401_432_7;

/// exp(x) via range reduction x = k*ln2 + r, |r| <= ln2/2, and a fixed
/// Taylor polynomial for exp(r). Relative error below 1e-15 on the
/// reduced interval; arguments far outside the double range saturate.
pub fn det_exp(x: f64) -> f64 {
    if x.is_nan() {
        return f64::NAN;
    }
    if x > 709.0 {
        return f64::INFINITY;
    }
    if x < -745.0 {
        return 0.0;
    }
    let k = (x / LN2).round();
    let r = x - k * LN2;
    // Taylor series around 0, degree 13: remainder < 2^-60 for |r| <= 0.347.
    let mut term = 1.0;
    let mut sum = 1.0;
    for i in 1..=13u32 {
        term *= r / f64::from(i);
        sum += term;
    }
    sum * pow2i(k as i32)
}

/// 2^k constructed from the IEEE exponent field (exact for normal range).
fn pow2i(k: i32) -> f64 {
    if k >= 1024 {
        return f64::INFINITY;
    }
    if k < -1022 {
        // Subnormal range: split into two exact steps.
        if k < -2044 {
            return 0.0;
        }
        return f64::from_bits(((1023 + k + 1022) as u64) << 52) * pow2i(-1022);
    }
    f64::from_bits(((1023 + k) as u64) << 52)
}

/// Standard normal PDF.
pub fn det_normal_pdf(x: f64) -> f64 {
    FRAC_1_SQRT_2PI * det_exp(-0.5 * x * x)
}

/// Standard normal CDF by the Abramowitz-Stegun 26.2.17 rational
/// approximation (|error| < 7.5e-8), evaluated with [`det_exp`].
pub fn det_normal_cdf(x: f64) -> f64 {
    if x.is_nan() {
        return f64::NAN;
    }
    let ax = x.abs();
    if ax > 37.0 {
        return if x > 0.0 { 1.0 } else { 0.0 };
    }
    const P: f64 = 0.231_641_9;
    const B1: f64 = 0.319_381_530;
    const B2: f64 = -0.356_563_782;
    const B3: f64 = 1.781_477_937;
    const B4: f64 = -1.821_255_978;
    const B5: f64 = 1.330_274_429;
    let t = 1.0 / (1.0 + P * ax);
    let poly = t * (B1 + t * (B2 + t * (B3 + t * (B4 + t * B5))));
    let tail = det_normal_pdf(ax) * poly;
    if x >= 0.0 {
        1.0 - tail
    } else {
        tail
    }
}

/// Probability mass the standard Gaussian N(mu, sigma) assigns to the
/// unit-width quantization interval [v-0.5, v+0.5).
pub fn gaussian_interval_mass(v: f64, mu: f64, sigma: f64) -> f64 {
    let hi = det_normal_cdf((v + 0.5 - mu) / sigma);
    let lo = det_normal_cdf((v - 0.5 - mu) / sigma);
    (hi - lo).max(0.0)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exp_matches_libm() {
        for i in -200..=200 {
            let x = f64::from(i) * 0.173;
            let e = det_exp(x);
            let rel = (e - x.exp()).abs() / x.exp().max(1e-300);
            assert!(rel < 1e-13, "x={x} det={e} libm={}", x.exp());
        }
        assert_eq!(det_exp(0.0), 1.0);
        assert_eq!(det_exp(-800.0), 0.0);
    }

    #[test]
    fn normal_cdf_table_values() {
        // Reference values from standard normal tables.
        let cases = [
            (0.0, 0.5),
            (0.5, 0.691_462_461),
            (1.0, 0.841_344_746),
            (2.0, 0.977_249_868),
            (-1.5, 0.066_807_201),
            (3.0, 0.998_650_102),
        ];
        for (x, want) in cases {
            let got = det_normal_cdf(x);
            assert!((got - want).abs() < 5e-7, "phi({x}) = {got}, want {want}");
        }
    }

    #[test]
    fn cdf_symmetry_and_monotonicity() {
        let mut prev = 0.0;
        for i in -60..=60 {
            let x = f64::from(i) * 0.1;
            let v = det_normal_cdf(x);
            assert!(v >= prev);
            prev = v;
            let sym = det_normal_cdf(x) + det_normal_cdf(-x);
            assert!((sym - 1.0).abs() < 2e-7);
        }
    }

    #[test]
    fn interval_mass_center() {
        // Phi(0.5) - Phi(-0.5) = 0.382925 for v = mu, sigma = 1.
        let p = gaussian_interval_mass(0.0, 0.0, 1.0);
        assert!((p - 0.382_925).abs() < 1e-5);
    }
}
