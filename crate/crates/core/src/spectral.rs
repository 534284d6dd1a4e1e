//! Roots of the characteristic polynomial and the kernel built from them.

use num_complex::Complex64 as C64;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::model::ModelParams;

/// `P(s, u) = u^2 - (s + 1 + rho + q) u + s q + rho + q`.
pub fn char_poly(rho: f64, q: f64, s: f64, u: C64) -> C64 {
    u * u - (s + 1.0 + rho + q) * u + (s * q + rho + q)
}

/// Roots and residue weights of `P(s, .)` for one real `s > 0`.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct SpectralData {
    pub s: f64,
    pub rho: f64,
    pub q: f64,
    pub delta: f64,
    pub u_minus: f64,
    pub u_plus: f64,
    pub c_plus: f64,
    pub c_minus: f64,
}

impl SpectralData {
    pub fn new(params: &ModelParams, s: f64) -> Result<Self> {
        Self::from_rates(params.rho, params.q, s)
    }

    pub fn from_rates(rho: f64, q: f64, s: f64) -> Result<Self> {
        if !(s > 0.0 && s.is_finite()) {
            return Err(Error::InvalidParameter(format!("s = {s} must be positive and finite")));
        }
        // Every term is non-negative when q < 1, so no cancellation.
        let a = 1.0 - rho - q;
        let delta = s * s + 2.0 * (1.0 + rho - q) * s + a * a;
        let sq = delta.sqrt();
        let u_plus = 0.5 * (s + 1.0 + rho + q + sq);
        let u_minus = (s * q + rho + q) / u_plus;
        // (U- - q)(U+ - q) = P(s, q) = rho (1 - q); avoids cancellation at large s.
        let um_minus_q = rho * (1.0 - q) / (u_plus - q);
        let c_plus = -um_minus_q / sq;
        Ok(SpectralData {
            s,
            rho,
            q,
            delta,
            u_minus,
            u_plus,
            c_plus,
            c_minus: 1.0 - c_plus,
        })
    }

    /// Exponent of the `(zeta - U-)` factor, `C- - 1 > 0`.
    pub fn exp_minus(&self) -> f64 {
        -self.c_plus
    }

    /// Exponent of the `(zeta - U+)` factor, `C+ - 1 < -1`.
    pub fn exp_plus(&self) -> f64 {
        self.c_plus - 1.0
    }

    /// `1 + rho + s`, the recurring drift constant.
    pub fn drift(&self) -> f64 {
        1.0 + self.rho + self.s
    }

    pub fn poly(&self, u: C64) -> C64 {
        char_poly(self.rho, self.q, self.s, u)
    }

    pub fn poly_real(&self, u: f64) -> f64 {
        (u - self.u_minus) * (u - self.u_plus)
    }

    /// `R(s, u0; zeta)` on the principal branch.
    pub fn kernel(&self, u0: C64, zeta: C64) -> Result<C64> {
        self.kernel_pow(u0, zeta, 1.0)
    }

    /// `R(s, u0; zeta)^b`, computed as one exponential.
    pub fn kernel_pow(&self, u0: C64, zeta: C64, b: f64) -> Result<C64> {
        let r1 = (zeta - self.u_minus) / (u0 - self.u_minus);
        let r2 = (zeta - self.u_plus) / (u0 - self.u_plus);
        check_cut(r1)?;
        check_cut(r2)?;
        if r1 == C64::new(0.0, 0.0) {
            return Ok(C64::new(0.0, 0.0));
        }
        Ok((b * (self.exp_minus() * r1.ln() + self.exp_plus() * r2.ln())).exp())
    }

    /// Real kernel `R(s, 0; zeta)^b` for `0 <= zeta <= U-`.
    pub fn kernel_origin_pow(&self, zeta: f64, b: f64) -> f64 {
        if zeta >= self.u_minus {
            return 0.0;
        }
        let l1 = (-zeta / self.u_minus).ln_1p();
        let l2 = (-zeta / self.u_plus).ln_1p();
        (b * (self.exp_minus() * l1 + self.exp_plus() * l2)).exp()
    }

    /// Kernel along the segment `zeta = u + t (U- - u)`, `t` in `[0, 1]`.
    pub fn kernel_param(&self, u: C64, t: f64, b: f64) -> C64 {
        let w = (self.u_minus - u) / (self.u_plus - u);
        let second = C64::new(1.0, 0.0) - t * w;
        if t >= 1.0 {
            return C64::new(0.0, 0.0);
        }
        (b * (self.exp_minus() * (-t).ln_1p() + self.exp_plus() * second.ln())).exp()
    }

    /// `d/du log R(s, u0; u) = (q - u) / P(s, u)`.
    pub fn kernel_log_derivative(&self, u: C64) -> C64 {
        (self.q - u) / self.poly(u)
    }

    /// Residuals of the algebraic identities the spectral data must satisfy.
    pub fn identity_residuals(&self) -> SpectralIdentities {
        let up = C64::new(self.u_plus, 0.0);
        let um = C64::new(self.u_minus, 0.0);
        let b = self.s + 1.0 + self.rho + self.q;
        let c0 = self.s * self.q + self.rho + self.q;
        let scale = |u: f64| u * u + b * u + c0;
        SpectralIdentities {
            weight_sum: (self.c_plus + self.c_minus - 1.0).abs(),
            root_plus: self.poly(up).norm() / scale(self.u_plus),
            root_minus: self.poly(um).norm() / scale(self.u_minus),
            vieta_sum: (self.u_plus + self.u_minus - b).abs() / b,
            vieta_product: (self.u_plus * self.u_minus - c0).abs() / c0,
            weighted_roots: (self.c_plus * self.u_plus + self.c_minus * self.u_minus - self.q).abs(),
            ordered: self.q < self.u_minus
                && self.u_minus < 1.0
                && 1.0 < self.u_plus
                && self.c_plus < 0.0
                && 1.0 < self.c_minus,
        }
    }
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct SpectralIdentities {
    pub weight_sum: f64,
    pub root_plus: f64,
    pub root_minus: f64,
    pub vieta_sum: f64,
    pub vieta_product: f64,
    pub weighted_roots: f64,
    pub ordered: bool,
}

impl SpectralIdentities {
    pub fn max_residual(&self) -> f64 {
        [
            self.weight_sum,
            self.root_plus,
            self.root_minus,
            self.vieta_sum,
            self.vieta_product,
            self.weighted_roots,
        ]
        .into_iter()
        .fold(0.0, f64::max)
    }
}

fn check_cut(r: C64) -> Result<()> {
    if r.im == 0.0 && r.re < 0.0 {
        return Err(Error::CutViolation { re: r.re, im: r.im });
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn c(x: f64) -> C64 {
        C64::new(x, 0.0)
    }

    #[test]
    fn reference_values() {
        let p = ModelParams::new(0.5, 0.2).unwrap();
        let sd = SpectralData::new(&p, 1.0).unwrap();
        assert!((sd.delta - 3.69).abs() < 1e-14);
        assert!((sd.u_minus - 0.389_531_364_385_072_63).abs() < 1e-15);
        assert!((sd.u_plus - 2.310_468_635_614_927_5).abs() < 1e-14);
        assert!((sd.c_plus + 0.098_666_087_239_656_53).abs() < 1e-15);
        assert!((sd.c_minus - 1.098_666_087_239_656_5).abs() < 1e-14);
    }

    #[test]
    fn small_and_large_s_limits() {
        let sd = SpectralData::from_rates(0.5, 0.2, 1e-9).unwrap();
        assert!((sd.u_minus - 0.7).abs() < 1e-8);
        let sd = SpectralData::from_rates(0.5, 0.2, 1e8).unwrap();
        assert!((sd.u_minus - 0.2).abs() < 1e-7);
        assert!(sd.u_minus > 0.2);
        assert!(sd.c_plus < 0.0);
    }

    #[test]
    fn rejects_non_positive_s() {
        assert!(SpectralData::from_rates(0.5, 0.2, 0.0).is_err());
        assert!(SpectralData::from_rates(0.5, 0.2, -1.0).is_err());
    }

    #[test]
    fn kernel_detects_cut() {
        let sd = SpectralData::from_rates(0.5, 0.2, 1.0).unwrap();
        // Past U- on the real axis the first ratio turns negative.
        assert!(matches!(sd.kernel(c(0.0), c(0.5)), Err(Error::CutViolation { .. })));
        assert!((sd.kernel(c(0.0), c(0.0)).unwrap() - 1.0).norm() < 1e-15);
        assert_eq!(sd.kernel(c(0.0), c(sd.u_minus)).unwrap(), c(0.0));
    }

    #[test]
    fn kernel_forms_agree() {
        let sd = SpectralData::from_rates(0.5, 0.2, 1.0).unwrap();
        for &zeta in &[0.05, 0.2, 0.35] {
            let direct = sd.kernel_pow(c(0.0), c(zeta), 3.0).unwrap();
            let real = sd.kernel_origin_pow(zeta, 3.0);
            let param = sd.kernel_param(c(0.0), zeta / sd.u_minus, 3.0);
            assert!((direct.re - real).abs() < 1e-14 * real);
            assert!((param - direct).norm() < 1e-14 * real);
        }
    }

    proptest! {
        #[test]
        fn identities_hold(s in 1e-3..50.0f64, q in 0.0..0.8f64, frac in 0.02..0.98f64) {
            let rho = frac * (1.0 - q);
            let sd = SpectralData::from_rates(rho, q, s).unwrap();
            let id = sd.identity_residuals();
            prop_assert!(id.ordered);
            prop_assert!(id.max_residual() < 1e-12, "{:?}", id);
        }

        #[test]
        fn kernel_composes(z in 0.0..0.9f64, w in 0.0..1.0f64, s in 0.05..10.0f64) {
            let sd = SpectralData::from_rates(0.5, 0.2, s).unwrap();
            let z = z * sd.u_minus;
            let zeta = z + w * (sd.u_minus - z) * 0.999;
            let a = sd.kernel(c(0.0), c(z)).unwrap();
            let b = sd.kernel(c(z), c(zeta)).unwrap();
            let ab = sd.kernel(c(0.0), c(zeta)).unwrap();
            prop_assert!((a * b - ab).norm() <= 1e-12 * ab.norm().max(1e-300));
        }

        #[test]
        fn kernel_derivative_matches_differences(u in 0.05..0.9f64, s in 0.05..10.0f64) {
            let sd = SpectralData::from_rates(0.5, 0.2, s).unwrap();
            let u = u * sd.u_minus;
            let h = 1e-5 * sd.u_minus;
            let f = |x: f64| sd.kernel(c(0.0), c(x)).unwrap();
            let fd = (f(u - 2.0 * h) - 8.0 * f(u - h) + 8.0 * f(u + h) - f(u + 2.0 * h)) / (12.0 * h);
            let exact = f(u) * sd.kernel_log_derivative(c(u));
            // (q - u) can vanish, so scale by the size of its two terms.
            let scale = f(u).norm() * (sd.q + u) / sd.poly_real(u).abs();
            prop_assert!((fd - exact).norm() <= 1e-6 * scale);
        }
    }
}
