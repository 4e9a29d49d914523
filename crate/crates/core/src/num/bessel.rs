use std::f64::consts::PI;

use crate::error::{Result, SsbError};

/// Below this argument the power series is summed; above it the asymptotic
/// expansion is used.
const SERIES_LIMIT: f64 = 15.0;

/// Largest argument accepted by [`bessel_i1`]; `I₁(700)` is about `1.5e302`.
pub const I1_MAX_ARG: f64 = 700.0;

/// Modified Bessel function of the first kind, order one.
pub fn bessel_i1(x: f64) -> Result<f64> {
    check_arg(x)?;
    if x > I1_MAX_ARG {
        return Err(SsbError::arg(format!(
            "bessel_i1 argument {x} exceeds overflow guard {I1_MAX_ARG}"
        )));
    }
    if x < SERIES_LIMIT {
        Ok(series(x))
    } else {
        Ok(asymptotic_scaled(x) * x.exp())
    }
}

/// `e^{-x} I₁(x)`, finite for every non-negative argument.
pub fn bessel_i1_scaled(x: f64) -> Result<f64> {
    check_arg(x)?;
    if x < SERIES_LIMIT {
        Ok(series(x) * (-x).exp())
    } else {
        Ok(asymptotic_scaled(x))
    }
}

fn check_arg(x: f64) -> Result<()> {
    if x.is_nan() || x < 0.0 || x.is_infinite() {
        return Err(SsbError::arg(format!("bessel_i1 needs finite x >= 0, got {x}")));
    }
    Ok(())
}

fn series(x: f64) -> f64 {
    let h = 0.5 * x;
    let h2 = h * h;
    let mut term = h;
    let mut sum = term;
    for m in 1..200 {
        let mf = m as f64;
        term *= h2 / (mf * (mf + 1.0));
        sum += term;
        if term < sum * 1e-17 {
            break;
        }
    }
    sum
}

fn asymptotic_scaled(x: f64) -> f64 {
    // e^{-x} I₁(x) ~ (2πx)^{-1/2} Σ_k (-1)^k a_k(1) / x^k
    let mu = 4.0;
    let mut term = 1.0;
    let mut sum = 1.0;
    for k in 1..60 {
        let odd = (2 * k - 1) as f64;
        let next = -term * (mu - odd * odd) / (k as f64 * 8.0 * x);
        if next.abs() >= term.abs() {
            break;
        }
        term = next;
        sum += term;
        if term.abs() < 1e-17 * sum.abs() {
            break;
        }
    }
    sum / (2.0 * PI * x).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn series_oracle(x: f64, terms: usize) -> f64 {
        let mut total = 0.0;
        for m in 0..terms {
            let mut fact_m = 1.0;
            for j in 1..=m {
                fact_m *= j as f64;
            }
            let fact_m1 = fact_m * (m as f64 + 1.0);
            total += (x / 2.0).powi(2 * m as i32 + 1) / (fact_m * fact_m1);
        }
        total
    }

    #[test]
    fn zero_gives_zero() {
        assert_eq!(bessel_i1(0.0).unwrap(), 0.0);
        assert_eq!(bessel_i1_scaled(0.0).unwrap(), 0.0);
    }

    #[test]
    fn one_matches_power_series() {
        let oracle = series_oracle(1.0, 40);
        let got = bessel_i1(1.0).unwrap();
        assert!(((got - oracle) / oracle).abs() < 1e-14);
        // 40-digit reference
        assert!((got - 0.565_159_103_992_485_027_207_696).abs() < 1e-15);
    }

    #[test]
    fn twenty_matches_high_precision_reference() {
        let reference = 42_454_973.385_127_770_181_409_91;
        let got = bessel_i1(20.0).unwrap();
        assert!(((got - reference) / reference).abs() < 1e-10, "{got}");
    }

    #[test]
    fn scaled_values_match_references() {
        let cases = [
            (14.999, 0.100_377_341_449_485_419_207_505_3),
            (15.0, 0.100_374_175_045_166_655_291_707_7),
            (30.0, 0.071_916_330_598_647_554_706_128_74),
            (100.0, 0.039_744_153_025_130_252_673_638_93),
            (700.0, 0.015_070_519_444_716_846_949_257_75),
        ];
        for (x, want) in cases {
            let got = bessel_i1_scaled(x).unwrap();
            assert!(((got - want) / want).abs() < 1e-10, "x={x}: {got} vs {want}");
        }
    }

    #[test]
    fn crossover_is_continuous_against_series() {
        for &x in &[14.0, 15.0, 16.0, 18.0] {
            let oracle = series_oracle(x, 80);
            let got = bessel_i1(x).unwrap();
            assert!(((got - oracle) / oracle).abs() < 1e-10, "x={x}");
        }
    }

    #[test]
    fn small_argument_is_half_x() {
        for &x in &[1e-10, 1e-7, 5e-5, 9e-5] {
            let got = bessel_i1(x).unwrap();
            assert!(((got - x / 2.0) / (x / 2.0)).abs() < 1e-6);
        }
    }

    #[test]
    fn guards() {
        assert!(bessel_i1(-1.0).is_err());
        assert!(bessel_i1(700.5).is_err());
        assert!(bessel_i1(f64::NAN).is_err());
        assert!(bessel_i1_scaled(1e6).unwrap() > 0.0);
    }
}
