//! Small special-function helpers.

use crate::error::{Error, Result};

/// Binomial coefficient as a float. Exact up to `n = 50`; log-space beyond.
pub fn binomial(n: usize, k: usize) -> f64 {
    if k > n {
        return 0.0;
    }
    let k = k.min(n - k);
    if n <= 50 {
        let mut c = 1.0f64;
        for j in 0..k {
            c = c * (n - j) as f64 / (j + 1) as f64;
        }
        return c.round();
    }
    (ln_factorial(n) - ln_factorial(k) - ln_factorial(n - k)).exp()
}

pub fn ln_factorial(n: usize) -> f64 {
    (2..=n).map(|j| (j as f64).ln()).sum()
}

/// `B(l + 1, y)` for integer `l >= 0` and real `y > 0`: `l! / (y (y+1) ... (y+l))`.
pub fn beta_integer_first(l: usize, y: f64) -> f64 {
    let mut v = 1.0;
    for j in 0..=l {
        v *= if j == 0 { 1.0 } else { j as f64 } / (y + j as f64);
    }
    v
}

/// Gauss series `2F1(a, b; c; z)` for `0 <= z < 1` and positive parameters.
pub fn hyp2f1(a: f64, b: f64, c: f64, z: f64) -> Result<f64> {
    if !(0.0..1.0).contains(&z) || c <= 0.0 {
        return Err(Error::Hypergeometric { z });
    }
    let mut term = 1.0;
    let mut sum = 1.0;
    for k in 0..200_000u32 {
        let k = k as f64;
        term *= (a + k) * (b + k) / ((c + k) * (k + 1.0)) * z;
        sum += term;
        let ratio = (a + k + 1.0) * (b + k + 1.0) / ((c + k + 1.0) * (k + 2.0)) * z;
        // Terms are positive; once the ratio is below one the tail is
        // bounded by a geometric series.
        if ratio < 1.0 && term.abs() * ratio / (1.0 - ratio) <= 1e-17 * sum.abs() {
            return Ok(sum);
        }
    }
    Err(Error::Hypergeometric { z })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn binomials() {
        assert_eq!(binomial(20, 10), 184_756.0);
        assert_eq!(binomial(5, 7), 0.0);
        let big = binomial(60, 30);
        assert!((big / 1.182_645_815_648_614_2e17 - 1.0).abs() < 1e-12);
    }

    #[test]
    fn beta_values() {
        // B(1, y) = 1/y, B(3, 2) = 1/12
        assert!((beta_integer_first(0, 2.5) - 0.4).abs() < 1e-16);
        assert!((beta_integer_first(2, 2.0) - 1.0 / 12.0).abs() < 1e-16);
    }

    #[test]
    fn hypergeometric_closed_forms() {
        // 2F1(1, 1; 2; z) = -ln(1 - z) / z
        let z = 0.6;
        let v = hyp2f1(1.0, 1.0, 2.0, z).unwrap();
        assert!((v + (1.0f64 - z).ln() / z).abs() < 1e-14);
        // 2F1(a, b; b; z) = (1 - z)^(-a)
        let v = hyp2f1(2.3, 1.7, 1.7, 0.5).unwrap();
        assert!((v - 0.5f64.powf(-2.3)).abs() < 1e-13);
        assert!(hyp2f1(1.0, 1.0, 2.0, 1.0).is_err());
    }
}
