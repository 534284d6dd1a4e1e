//! Kernel moment integrals `M[b][l]` and right-hand sides `K[b]`.
//!
//! With `zeta = U- t` the moments become
//! `M[b][l] = U-^(l+1) int_0^1 t^l (1-t)^alpha (1 - z t)^beta dt`,
//! `alpha = b (C- - 1)`, `beta = b (C+ - 1)`, `z = U- / U+`.

use rayon::prelude::*;
use serde::Serialize;

use crate::error::Result;
use crate::quadrature::{integrate_endpoint_power, Integral, QuadOptions};
use crate::special::{beta_integer_first, hyp2f1};
use crate::spectral::SpectralData;

pub const DEFAULT_REL_TOL: f64 = 1e-13;

fn weight(sd: &SpectralData, b: usize, t: f64) -> f64 {
    if t >= 1.0 {
        return 0.0;
    }
    let bf = b as f64;
    let z = sd.u_minus / sd.u_plus;
    (bf * (sd.exp_minus() * (-t).ln_1p() + sd.exp_plus() * (-z * t).ln_1p())).exp()
}

/// `M[b][l] = int_0^{U-} zeta^l R(s, 0; zeta)^b dzeta`.
pub fn moment_integral(sd: &SpectralData, b: usize, l: usize, rel_tol: f64) -> Result<Integral<f64>> {
    let alpha = b as f64 * sd.exp_minus();
    let um = sd.u_minus;
    let r = integrate_endpoint_power(
        |t: f64| t.powi(l as i32) * weight(sd, b, t),
        0.0,
        1.0,
        alpha,
        &QuadOptions::rel(rel_tol),
    )?;
    let scale = um.powi(l as i32 + 1);
    Ok(Integral {
        value: r.value * scale,
        abs_err: r.abs_err * scale,
        abs_value: r.abs_value * scale,
        evaluations: r.evaluations,
    })
}

/// `K[b] = int_0^{U-} [(b-1)(1-zeta)^b + 1] R(s, 0; zeta)^b / (1-zeta)^2 dzeta`.
pub fn rhs_integral(sd: &SpectralData, b: usize, rel_tol: f64) -> Result<Integral<f64>> {
    let alpha = b as f64 * sd.exp_minus();
    let um = sd.u_minus;
    let bf = b as f64;
    let r = integrate_endpoint_power(
        |t: f64| {
            let om = 1.0 - um * t;
            ((bf - 1.0) * om.powi(b as i32) + 1.0) / (om * om) * weight(sd, b, t)
        },
        0.0,
        1.0,
        alpha,
        &QuadOptions::rel(rel_tol),
    )?;
    Ok(Integral {
        value: r.value * um,
        abs_err: r.abs_err * um,
        abs_value: r.abs_value * um,
        evaluations: r.evaluations,
    })
}

/// Series value of `M[b][l]` through the Gauss hypergeometric function.
pub fn moment_series(sd: &SpectralData, b: usize, l: usize) -> Result<f64> {
    let bf = b as f64;
    let alpha = bf * sd.exp_minus();
    let z = sd.u_minus / sd.u_plus;
    let lf = l as f64;
    let f = hyp2f1(bf * (1.0 - sd.c_plus), lf + 1.0, lf + 2.0 + alpha, z)?;
    Ok(sd.u_minus.powi(l as i32 + 1) * beta_integer_first(l, alpha + 1.0) * f)
}

/// Relative difference between the quadrature and series values of `M[b][l]`.
pub fn hypergeometric_check(sd: &SpectralData, b: usize, l: usize) -> Result<f64> {
    let quad = moment_integral(sd, b, l, DEFAULT_REL_TOL)?.value;
    let series = moment_series(sd, b, l)?;
    Ok((quad - series).abs() / series.abs())
}

/// All moments `M[b][l]`, `1 <= b <= b_max`, `0 <= l <= b`, and `K[b]`.
#[derive(Debug, Clone, Serialize)]
pub struct MomentTable {
    pub s: f64,
    pub b_max: usize,
    /// `m[b - 1][l]`.
    m: Vec<Vec<f64>>,
    m_err: Vec<Vec<f64>>,
    k: Vec<f64>,
    k_err: Vec<f64>,
}

impl MomentTable {
    pub fn compute(sd: &SpectralData, b_max: usize, rel_tol: f64) -> Result<Self> {
        let rows: Vec<Result<(Vec<Integral<f64>>, Integral<f64>)>> = (1..=b_max)
            .into_par_iter()
            .map(|b| {
                let m = (0..=b)
                    .map(|l| moment_integral(sd, b, l, rel_tol))
                    .collect::<Result<Vec<_>>>()?;
                Ok((m, rhs_integral(sd, b, rel_tol)?))
            })
            .collect();
        let mut table = MomentTable {
            s: sd.s,
            b_max,
            m: Vec::with_capacity(b_max),
            m_err: Vec::with_capacity(b_max),
            k: Vec::with_capacity(b_max),
            k_err: Vec::with_capacity(b_max),
        };
        for row in rows {
            let (m, k) = row?;
            table.m.push(m.iter().map(|i| i.value).collect());
            table.m_err.push(m.iter().map(|i| i.abs_err).collect());
            table.k.push(k.value);
            table.k_err.push(k.abs_err);
        }
        Ok(table)
    }

    pub fn m(&self, b: usize, l: usize) -> f64 {
        self.m[b - 1][l]
    }

    pub fn m_err(&self, b: usize, l: usize) -> f64 {
        self.m_err[b - 1][l]
    }

    pub fn k(&self, b: usize) -> f64 {
        self.k[b - 1]
    }

    pub fn k_err(&self, b: usize) -> f64 {
        self.k_err[b - 1]
    }

    /// Scales every moment of order `b` by `factor`; for sensitivity tests.
    pub fn perturb(&mut self, b: usize, factor: f64) {
        for v in &mut self.m[b - 1] {
            *v *= factor;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::quadrature::integrate;
    use proptest::prelude::*;

    fn sd(s: f64) -> SpectralData {
        SpectralData::from_rates(0.5, 0.2, s).unwrap()
    }

    #[test]
    fn first_moment_against_plain_quadrature() {
        // Direct integration in zeta, against the substituted form.
        let sd = sd(1.0);
        let plain = integrate(
            |z: f64| sd.kernel_origin_pow(z, 1.0),
            0.0,
            sd.u_minus,
            &QuadOptions::rel(1e-10),
        )
        .unwrap();
        let m = moment_integral(&sd, 1, 0, 1e-13).unwrap();
        assert!((plain.value - m.value).abs() < 1e-9 * m.value);
    }

    #[test]
    fn reference_table_values() {
        let sd = sd(1.0);
        let t = MomentTable::compute(&sd, 3, 1e-13).unwrap();
        for b in 1..=3 {
            for l in 0..=b {
                let series = moment_series(&sd, b, l).unwrap();
                assert!((t.m(b, l) - series).abs() < 1e-12 * series, "b={b} l={l}");
            }
        }
        assert!(t.k(1) > 0.0);
    }

    #[test]
    fn hypergeometric_agreement_small_grid() {
        for &s in &[0.5, 1.0, 5.0] {
            let sd = sd(s);
            for b in 1..=6 {
                for l in 0..=b {
                    assert!(hypergeometric_check(&sd, b, l).unwrap() < 1e-10);
                }
            }
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]
        #[test]
        fn moments_positive_and_decreasing_in_l(s in 0.05..20.0f64, b in 1usize..8) {
            let sd = sd(s);
            let mut prev = f64::INFINITY;
            for l in 0..=b {
                let m = moment_integral(&sd, b, l, 1e-12).unwrap().value;
                prop_assert!(m > 0.0);
                // zeta < U- < 1 so higher powers shrink the integrand.
                prop_assert!(m < prev);
                prev = m;
            }
        }
    }
}
