//! Boundary coefficients `E_b(s, q)`.
//!
//! Two routes are provided. The triangular system built from the moment
//! table is fast but its conditioning degrades quickly with `b`: forward
//! errors grow by several orders of magnitude per four orders. The
//! analyticity condition on each level gives `E_b(s, q)` as a ratio of two
//! integrals once level `b - 1` is known; it is well conditioned for all
//! `b` and is used wherever the triangular bound exceeds the trust level.

use num_complex::Complex64 as C64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kernels::MomentTable;
use crate::quadrature::{integrate_endpoint_power, QuadOptions};
use crate::special::binomial;
use crate::spectral::SpectralData;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum CoefficientSource {
    Triangular,
    Condition,
}

#[derive(Debug, Clone, Serialize)]
pub struct BoundaryCoefficients {
    pub s: f64,
    pub rho: f64,
    pub q: f64,
    /// `e[b - 1] = E_b(s, q)`.
    pub e: Vec<f64>,
    /// Normalised residual of the order-`b` triangular equation.
    pub residual: Vec<f64>,
    /// Propagated forward-error bound.
    pub error_bound: Vec<f64>,
    pub source: Vec<CoefficientSource>,
}

/// Solves the lower-triangular system
/// `sum_{l=1}^{b} (-1)^l C(b, l) Q[b][l] E_l = K[b]`,
/// `Q[b][l] = (l + 1 - b) M[b][l] - l (1 + rho + s) M[b][l-1]`,
/// by forward substitution with a running forward-error bound.
pub fn solve_triangular(sd: &SpectralData, table: &MomentTable, b_max: usize) -> Result<BoundaryCoefficients> {
    let b_max = b_max.min(table.b_max);
    let c = sd.drift();
    let eps = f64::EPSILON;
    let mut e: Vec<f64> = Vec::with_capacity(b_max);
    let mut bound: Vec<f64> = Vec::with_capacity(b_max);
    let mut residual = Vec::with_capacity(b_max);
    for b in 1..=b_max {
        let bf = b as f64;
        let q_entry = |l: usize| -> (f64, f64) {
            let lf = l as f64;
            let a = (lf + 1.0 - bf) * table.m(b, l);
            let d = lf * c * table.m(b, l - 1);
            let err = (lf + 1.0 - bf).abs() * table.m_err(b, l).max(eps * table.m(b, l).abs())
                + lf * c * table.m_err(b, l - 1).max(eps * table.m(b, l - 1).abs());
            (a - d, err + eps * (a.abs() + d.abs()))
        };
        let mut acc = table.k(b);
        let mut acc_abs = table.k(b).abs();
        let mut err = table.k_err(b).max(eps * table.k(b).abs());
        for l in 1..b {
            let sign = if l % 2 == 0 { 1.0 } else { -1.0 };
            let w = sign * binomial(b, l);
            let (ql, ql_err) = q_entry(l);
            let term = w * ql * e[l - 1];
            acc -= term;
            acc_abs += term.abs();
            err += w.abs() * (ql_err * e[l - 1].abs() + ql.abs() * bound[l - 1]);
        }
        let (qbb, qbb_err) = q_entry(b);
        let diag = if b % 2 == 0 { qbb } else { -qbb };
        if qbb.abs() <= 1e3 * eps * (table.m(b, b) + c * bf * table.m(b, b - 1)) {
            return Err(Error::SingularDiagonal { b, value: qbb.abs() });
        }
        let eb = acc / diag;
        err = (err + qbb_err * eb.abs() + eps * acc_abs) / diag.abs();
        // Residual of the order-b equation with the rounded solution.
        let mut lhs = 0.0;
        let mut lhs_abs = 0.0;
        for l in 1..=b {
            let sign = if l % 2 == 0 { 1.0 } else { -1.0 };
            let el = if l == b { eb } else { e[l - 1] };
            let term = sign * binomial(b, l) * q_entry(l).0 * el;
            lhs += term;
            lhs_abs += term.abs();
        }
        residual.push((lhs - table.k(b)).abs() / (lhs_abs + table.k(b).abs()));
        e.push(eb);
        bound.push(err);
    }
    Ok(BoundaryCoefficients {
        s: sd.s,
        rho: sd.rho,
        q: sd.q,
        e,
        residual,
        error_bound: bound,
        source: vec![CoefficientSource::Triangular; b_max],
    })
}

/// `E_b(s, q)` from the analyticity condition at order `b`, given level
/// `b - 1` on `[0, U-]` (`prev` is ignored for `b = 1`).
///
/// `E_b = -N_b / D_b` with
/// `N_b = int_0^{U-} [(z + b(1-z))/(1-z)^2 + b E_{b-1}(z)] R^b z^(b-1) dz`,
/// `D_b = int_0^{U-} (z - b (1 + rho + s)) R^b z^(b-1) dz`.
pub fn condition_coefficient<F: Fn(f64) -> f64>(
    sd: &SpectralData,
    b: usize,
    prev: F,
    rel_tol: f64,
) -> Result<(f64, f64)> {
    let bf = b as f64;
    let c = sd.drift();
    let alpha = bf * sd.exp_minus();
    let opts = QuadOptions::rel(rel_tol);
    let num = integrate_endpoint_power(
        |z: f64| {
            let w = sd.kernel_origin_pow(z, bf) * z.powi(b as i32 - 1);
            let om = 1.0 - z;
            let mut g = (z + bf * om) / (om * om);
            if b > 1 {
                g += bf * prev(z);
            }
            g * w
        },
        0.0,
        sd.u_minus,
        alpha,
        &opts,
    )?;
    let den = integrate_endpoint_power(
        |z: f64| (z - bf * c) * sd.kernel_origin_pow(z, bf) * z.powi(b as i32 - 1),
        0.0,
        sd.u_minus,
        alpha,
        &opts,
    )?;
    let value = -num.value / den.value;
    let err = (num.abs_err + value.abs() * den.abs_err) / den.value.abs();
    Ok((value, err))
}

/// Absolute bound allowed on the neglected tail of a truncated series.
const SERIES_TOL: f64 = 1e-9;

impl BoundaryCoefficients {
    pub fn b_max(&self) -> usize {
        self.e.len()
    }

    pub fn get(&self, b: usize) -> f64 {
        if b == 0 {
            0.0
        } else {
            self.e[b - 1]
        }
    }

    /// Largest order up to which the triangular bound stays within
    /// `rel_trust` of the value.
    pub fn trusted_prefix(&self, rel_trust: f64) -> usize {
        self.e
            .iter()
            .zip(&self.error_bound)
            .take_while(|(e, err)| **err <= rel_trust * e.abs())
            .count()
    }

    /// Copy with `E_b` multiplied by `factor`.
    pub fn with_scaled(&self, b: usize, factor: f64) -> Self {
        let mut out = self.clone();
        out.e[b - 1] *= factor;
        out
    }

    fn max_abs(&self) -> f64 {
        self.e.iter().fold(0.0f64, |m, v| m.max(v.abs()))
    }

    /// Exponential generating function `e(v) = sum_b E_b v^b / b!` and its derivative.
    pub fn egf(&self, v: C64) -> Result<(C64, C64)> {
        let n = self.b_max();
        let r = v.norm();
        let mut tail = 2.0 * self.max_abs();
        for k in 1..=n + 1 {
            tail *= r / k as f64;
        }
        if tail > SERIES_TOL {
            return Err(Error::SeriesTruncation { tail, tol: SERIES_TOL });
        }
        let mut val = C64::new(0.0, 0.0);
        let mut der = C64::new(0.0, 0.0);
        let mut pw = C64::new(1.0, 0.0);
        let mut fact = 1.0;
        for b in 1..=n {
            // pw = v^(b-1), fact = (b-1)!
            der += pw * (self.e[b - 1] / fact);
            fact *= b as f64;
            pw *= v;
            val += pw * (self.e[b - 1] / fact);
        }
        Ok((val, der))
    }

    /// Ordinary generating function `sum_b E_b v^b` and its derivative.
    pub fn ogf(&self, v: C64) -> Result<(C64, C64)> {
        let n = self.b_max();
        let r = v.norm();
        if r >= 1.0 {
            return Err(Error::SeriesTruncation {
                tail: f64::INFINITY,
                tol: SERIES_TOL,
            });
        }
        let tail = 2.0 * self.max_abs() * r.powi(n as i32 + 1) / (1.0 - r) * (n as f64 + 1.0) / (1.0 - r);
        if tail > SERIES_TOL {
            return Err(Error::SeriesTruncation { tail, tol: SERIES_TOL });
        }
        let mut val = C64::new(0.0, 0.0);
        let mut der = C64::new(0.0, 0.0);
        let mut pw = C64::new(1.0, 0.0);
        for b in 1..=n {
            der += pw * (b as f64 * self.e[b - 1]);
            pw *= v;
            val += pw * self.e[b - 1];
        }
        Ok((val, der))
    }

    /// Source term of the equation for the exponential generating function
    /// `F(u, v) = sum_b F_b(s, u) v^b / b!`:
    /// `[u (e^v - 1) + (1 - u) v e^v] / (1 - u)^2 + (u + v) e(v) - (1 + rho + s) v e'(v)`.
    pub fn eval_l(&self, u: C64, v: C64) -> Result<C64> {
        let (e, de) = self.egf(v)?;
        let c = 1.0 + self.rho + self.s;
        let one = C64::new(1.0, 0.0);
        let om = one - u;
        let ev = v.exp();
        // e^v - 1 without cancellation for small v.
        let em1 = if v.norm() < 1e-3 {
            v * (one + v * (0.5 + v * (1.0 / 6.0 + v / 24.0)))
        } else {
            ev - one
        };
        Ok((u * em1 + om * v * ev) / (om * om) + (u + v) * e - c * v * de)
    }

    /// Source term of the equation for the ordinary generating function
    /// `F(u, v) = sum_b F_b(s, u) v^b`:
    /// `v (1 - u v) / ((1 - u)^2 (1 - v)^2) + (u + v) e(v) + v (v - 1 - rho - s) e'(v)`.
    pub fn eval_l_ordinary(&self, u: C64, v: C64) -> Result<C64> {
        let (e, de) = self.ogf(v)?;
        let c = 1.0 + self.rho + self.s;
        let one = C64::new(1.0, 0.0);
        let om = one - u;
        let ov = one - v;
        Ok(v * (one - u * v) / (om * om * ov * ov) + (u + v) * e + v * (v - c) * de)
    }
}

/// Normalised residuals, per order, of the boundary conditions with the
/// given coefficients. The integrals are recomputed in the original
/// variable with the whole integrand assembled pointwise, so they share no
/// quadrature with the moment table.
pub fn cnc0_residual(sd: &SpectralData, coeffs: &BoundaryCoefficients, rel_tol: f64) -> Result<Vec<f64>> {
    let c = sd.drift();
    (1..=coeffs.b_max())
        .map(|b| {
            let bf = b as f64;
            let sum = |z: f64| -> f64 {
                let mut acc = 0.0;
                for l in 1..=b {
                    let lf = l as f64;
                    let el = coeffs.get(l);
                    let zl1 = z.powi(l as i32 - 1);
                    let lam = zl1 * z * el + lf * zl1 * coeffs.get(l - 1) - lf * c * zl1 * el;
                    let w = binomial(b, l) * lam;
                    acc += if l % 2 == 0 { w } else { -w };
                }
                let om = 1.0 - z;
                let rhs = ((bf - 1.0) * om.powi(b as i32) + 1.0) / (om * om);
                acc - rhs
            };
            let alpha = bf * sd.exp_minus();
            let opts = QuadOptions::rel(rel_tol);
            let rhs = integrate_endpoint_power(
                |z: f64| {
                    let om = 1.0 - z;
                    ((bf - 1.0) * om.powi(b as i32) + 1.0) / (om * om) * sd.kernel_origin_pow(z, bf)
                },
                0.0,
                sd.u_minus,
                alpha,
                &opts,
            )?;
            // The residual integral is close to zero, so the stopping rule is
            // an absolute target tied to the right-hand side.
            let res = integrate_endpoint_power(
                |z: f64| sum(z) * sd.kernel_origin_pow(z, bf),
                0.0,
                sd.u_minus,
                alpha,
                &opts.with_abs(0.1 * rel_tol * rhs.value.abs()),
            )?;
            Ok(res.value.abs() / rhs.value.abs())
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernels::MomentTable;

    // E_b(1, q) at (rho, q) = (0.5, 0.2), from an independent truncated
    // solve of the transformed backward equations.
    const REFERENCE: [f64; 8] = [
        0.703_346_965_669_15,
        1.006_715_265_429_51,
        1.141_823_847_610_96,
        1.202_022_892_089_05,
        1.228_773_151_425_30,
        1.240_627_689_163_43,
        1.245_868_897_248_03,
        1.248_181_704_847_37,
    ];

    fn setup(b_max: usize) -> (SpectralData, BoundaryCoefficients) {
        let sd = SpectralData::from_rates(0.5, 0.2, 1.0).unwrap();
        let t = MomentTable::compute(&sd, b_max, 1e-13).unwrap();
        let c = solve_triangular(&sd, &t, b_max).unwrap();
        (sd, c)
    }

    #[test]
    fn triangular_matches_reference() {
        let (_, c) = setup(8);
        for b in 1..=6 {
            assert!((c.get(b) - REFERENCE[b - 1]).abs() < 1e-11, "b={b}: {}", c.get(b));
        }
        assert!(c.residual.iter().all(|&r| r < 1e-14));
    }

    #[test]
    fn error_bound_grows_and_covers() {
        let (_, c) = setup(12);
        assert!(c.error_bound[11] > c.error_bound[0]);
        for b in 1..=8 {
            assert!((c.get(b) - REFERENCE[b - 1]).abs() <= c.error_bound[b - 1] + 1e-13);
        }
        assert!(c.trusted_prefix(1e-9) >= 4);
    }

    #[test]
    fn first_order_condition_matches_triangular() {
        let (sd, c) = setup(1);
        let (e1, _) = condition_coefficient(&sd, 1, |_| 0.0, 1e-13).unwrap();
        assert!((e1 - c.get(1)).abs() < 1e-13);
    }

    #[test]
    fn cnc_residual_small_and_detects_corruption() {
        let (sd, c) = setup(10);
        let r = cnc0_residual(&sd, &c, 1e-12).unwrap();
        assert!(r.iter().all(|&x| x < 1e-9), "{r:?}");
        let bad = c.with_scaled(1, 1.01);
        let r = cnc0_residual(&sd, &bad, 1e-12).unwrap();
        assert!(r[0] > 1e-3);
    }

    #[test]
    fn generating_functions() {
        let (_, c) = setup(8);
        let v = C64::new(0.1, 0.05);
        let (e, de) = c.egf(v).unwrap();
        let h = 1e-5;
        let (ep, _) = c.egf(v + h).unwrap();
        let (em, _) = c.egf(v - h).unwrap();
        assert!(((ep - em) / (2.0 * h) - de).norm() < 1e-9);
        assert!((e - c.get(1) * v).norm() < 0.1 * e.norm());
        assert!(c.egf(C64::new(3.0, 0.0)).is_err());
        assert!(c.ogf(C64::new(0.9, 0.0)).is_err());
        let (o, _) = c.ogf(C64::new(0.01, 0.0)).unwrap();
        assert!((o.re - 0.01 * c.get(1) - 1e-4 * c.get(2)).abs() < 2e-6);
    }

    #[test]
    fn eval_l_small_v_limit() {
        // As v -> 0 both source terms behave like v [1/(1-u)^2 + (u - 1 - rho - s) E_1].
        let (_, c) = setup(8);
        let u = C64::new(0.3, 0.0);
        let v = C64::new(1e-6, 0.0);
        let l = c.eval_l(u, v).unwrap();
        let lead = (1.0 / 0.49 + c.get(1) * 0.3 - (2.5) * c.get(1)) * 1e-6;
        assert!((l.re - lead).abs() < 1e-10);
        let lo = c.eval_l_ordinary(u, v).unwrap();
        assert!((lo.re - lead).abs() < 1e-10);
    }
}
