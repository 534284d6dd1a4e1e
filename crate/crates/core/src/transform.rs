//! Conditional Laplace transforms `E*_{n,b}(s)`.
//!
//! Level `b` is the generating function `E_b(s, u) = sum_n E*_{n,b}(s) u^n`.
//! It is sampled through the integral representation
//! `E_b(s, u) = E_b(s, q) + (u - q) F_b(s, u)`,
//! `F_b(s, u) = 1 / (u^b P(s, u)) int_u^{U-} [g_b(z) + (z - b (1 + rho + s)) E_b(s, q)] R(s, u; z)^b z^(b-1) dz`,
//! `g_b(z) = (z + b (1 - z)) / (1 - z)^2 + b E_{b-1}(s, z)`,
//! on a circle `|u| = r` with `U- < r < 1`, and converted to Taylor
//! coefficients by a discrete Fourier transform. On that circle the
//! prefactor `1 / u^b` does not amplify errors, and level `b` needs level
//! `b - 1` only inside the disc where its Taylor polynomial is accurate.

use std::f64::consts::PI;

use num_complex::Complex64 as C64;
use rayon::prelude::*;
use rustfft::FftPlanner;
use serde::Serialize;

use crate::boundary::{condition_coefficient, solve_triangular, BoundaryCoefficients, CoefficientSource};
use crate::error::{Error, Result};
use crate::kernels::MomentTable;
use crate::model::ModelParams;
use crate::quadrature::{integrate_endpoint_power, integrate_tanh_sinh, QuadOptions};
use crate::spectral::SpectralData;

#[derive(Debug, Clone, Copy, Serialize)]
pub struct TransformConfig {
    /// Sampling radius; defaults to `(1 + rho + q) / 2`.
    pub radius: Option<f64>,
    /// Number of circle nodes; defaults to the power of two at least
    /// `max(256, 4 n_max)`.
    pub nodes: Option<usize>,
    pub rel_tol: f64,
    /// Relative forward-error bound up to which the triangular solution is used.
    pub triangular_trust: f64,
    /// Direct evaluation is refused for `|u| < u_floor * U-`.
    pub u_floor: f64,
    /// Largest imaginary residue accepted in the extracted coefficients.
    pub imag_tol: f64,
    /// Multiplies `E_1(s, q)` before the levels are built; sensitivity checks only.
    pub perturb_e1: Option<f64>,
}

impl Default for TransformConfig {
    fn default() -> Self {
        TransformConfig {
            radius: None,
            nodes: None,
            rel_tol: 1e-13,
            triangular_trust: 1e-9,
            u_floor: 0.05,
            imag_tol: 1e-9,
            perturb_e1: None,
        }
    }
}

impl TransformConfig {
    pub fn radius_for(&self, params: &ModelParams) -> f64 {
        self.radius.unwrap_or(0.5 * (1.0 + params.rho + params.q))
    }

    pub fn nodes_for(&self, n_max: usize) -> usize {
        self.nodes.unwrap_or_else(|| (4 * n_max).max(256).next_power_of_two())
    }
}

/// One level `E_b(s, .)` as a Taylor polynomial valid on `|u| <= radius`.
///
/// The coefficients tend to `1 / s` as `n` grows, so evaluation uses
/// `E_b(s, u) = (1 / s) / (1 - u) + D(u)` where `D` has decaying
/// coefficients and can be truncated much earlier.
#[derive(Debug, Clone, Serialize)]
pub struct Level {
    pub b: usize,
    /// `E_b(s, q)`.
    pub e_q: f64,
    pub source: CoefficientSource,
    /// Value from the other route when both were computed.
    pub e_q_alternate: Option<f64>,
    /// `coeffs[n] = E*_{n,b}(s)`.
    pub coeffs: Vec<f64>,
    /// Limit of the coefficients, `1 / s`.
    limit: f64,
    /// Truncated `coeffs[n] - limit`.
    rest: Vec<f64>,
    /// Coefficients of `(D(u) - D(q)) / (u - q)`.
    f_rest: Vec<f64>,
    q: f64,
    pub radius: f64,
    pub imag_residue: f64,
    /// Size of the aliased principal part relative to the samples.
    pub principal_part: f64,
}

/// `sum_k c_k z^k` for real coefficients, by the second-order recurrence
/// on `z^2 = t z - m` with real `t = 2 Re z`, `m = |z|^2`.
fn poly_complex(c: &[f64], z: C64) -> C64 {
    if c.len() < 2 {
        return C64::new(c.first().copied().unwrap_or(0.0), 0.0);
    }
    let (t, m) = (2.0 * z.re, z.norm_sqr());
    let (mut b1, mut b2) = (0.0, 0.0);
    for &a in c[1..].iter().rev() {
        let b0 = a + t * b1 - m * b2;
        b2 = b1;
        b1 = b0;
    }
    z * b1 + (c[0] - m * b2)
}

fn poly_real(c: &[f64], u: f64) -> f64 {
    c.iter().rev().fold(0.0, |acc, &a| acc * u + a)
}

impl Level {
    pub fn eval(&self, u: C64) -> C64 {
        self.limit / (1.0 - u) + poly_complex(&self.rest, u)
    }

    pub fn eval_real(&self, u: f64) -> f64 {
        self.limit / (1.0 - u) + poly_real(&self.rest, u)
    }

    /// `F_b(s, u) = (E_b(s, u) - E_b(s, q)) / (u - q)`.
    pub fn eval_f(&self, u: C64) -> C64 {
        self.limit / ((1.0 - u) * (1.0 - self.q)) + poly_complex(&self.f_rest, u)
    }

    pub fn eval_f_real(&self, u: f64) -> f64 {
        self.limit / ((1.0 - u) * (1.0 - self.q)) + poly_real(&self.f_rest, u)
    }

    /// Number of terms kept in the decaying part.
    pub fn terms(&self) -> usize {
        self.rest.len()
    }

    fn from_samples(b: usize, e_q: f64, s: f64, q: f64, radius: f64, samples: Vec<C64>, imag_seen: f64) -> Self {
        let m = samples.len();
        let mut buf = samples;
        let fft = FftPlanner::<f64>::new().plan_fft_forward(m);
        fft.process(&mut buf);
        let scale = buf.iter().fold(0.0f64, |a, v| a.max(v.re.abs())) / m as f64;
        let mut coeffs = Vec::with_capacity(m);
        let mut imag = imag_seen;
        let mut rn = 1.0;
        for v in &buf {
            let c = *v / (m as f64 * rn);
            imag = imag.max((c.im * rn).abs() / scale.max(1e-300));
            coeffs.push(c.re);
            rn *= radius;
        }
        // A principal part of order <= b, such as an error in E_b(s, q)
        // leaves, aliases onto the top b coefficients.
        let keep = m - b.min(m / 4);
        let mut rn = radius.powi(keep as i32);
        let mut principal = 0.0f64;
        for c in &coeffs[keep..] {
            principal = principal.max((c * rn).abs() / scale.max(1e-300));
            rn *= radius;
        }
        coeffs.truncate(keep);
        let limit = 1.0 / s;
        let mut rest: Vec<f64> = coeffs.iter().map(|c| c - limit).collect();
        // Drop trailing terms while their total size on the circle stays
        // below 1e-14 of the sup norm there.
        let mut rn = radius.powi(keep as i32 - 1);
        let mut dropped = 0.0;
        while rest.len() > 1 {
            dropped += (rest[rest.len() - 1] * rn).abs();
            if dropped > 1e-14 * scale {
                break;
            }
            rest.pop();
            rn /= radius;
        }
        // Synthetic division by (u - q).
        let mut f_rest = vec![0.0; rest.len().saturating_sub(1).max(1)];
        let mut acc = 0.0;
        for k in (1..rest.len()).rev() {
            acc = rest[k] + q * acc;
            f_rest[k - 1] = acc;
        }
        Level {
            b,
            e_q,
            source: CoefficientSource::Condition,
            e_q_alternate: None,
            coeffs,
            limit,
            rest,
            f_rest,
            q,
            radius,
            imag_residue: imag,
            principal_part: principal,
        }
    }
}

/// All levels `1..=b_levels` at one value of `s`.
#[derive(Debug, Clone, Serialize)]
pub struct Transform {
    pub spectral: SpectralData,
    /// Solution of the triangular system alone.
    pub triangular: BoundaryCoefficients,
    /// Coefficients actually used, one route per order.
    pub boundary: BoundaryCoefficients,
    pub levels: Vec<Level>,
    pub config: TransformConfig,
}

impl Transform {
    pub fn build(params: &ModelParams, s: f64, b_levels: usize, config: &TransformConfig) -> Result<Self> {
        params.validate()?;
        if b_levels == 0 {
            return Err(Error::InvalidParameter("at least one level is required".into()));
        }
        let sd = SpectralData::new(params, s)?;
        let radius = config.radius_for(params);
        if !(radius > sd.u_minus && radius < 1.0) {
            return Err(Error::InvalidParameter(format!(
                "sampling radius {radius} must lie in (U-, 1) = ({}, 1)",
                sd.u_minus
            )));
        }
        let nodes = config.nodes_for(params.n_max);
        let table = MomentTable::compute(&sd, b_levels, config.rel_tol)?;
        let triangular = solve_triangular(&sd, &table, b_levels)?;
        let trusted = triangular.trusted_prefix(config.triangular_trust);

        let mut t = Transform {
            spectral: sd,
            boundary: triangular.clone(),
            triangular,
            levels: Vec::with_capacity(b_levels),
            config: *config,
        };
        for b in 1..=b_levels {
            let prev = t.levels.last();
            let (alt, alt_err) = condition_coefficient(
                &sd,
                b,
                |z| prev.map_or(0.0, |l| l.eval_real(z)),
                config.rel_tol,
            )?;
            let (mut e_q, source, other) = if b <= trusted {
                (t.triangular.get(b), CoefficientSource::Triangular, alt)
            } else {
                (alt, CoefficientSource::Condition, t.triangular.get(b))
            };
            if b == 1 {
                if let Some(f) = config.perturb_e1 {
                    e_q *= f;
                }
            }
            t.boundary.e[b - 1] = e_q;
            t.boundary.source[b - 1] = source;
            if source == CoefficientSource::Condition {
                t.boundary.error_bound[b - 1] = alt_err;
            }
            let level = t.build_level(b, e_q, radius, nodes)?;
            let level = Level {
                source,
                e_q_alternate: Some(other),
                ..level
            };
            t.levels.push(level);
        }
        Ok(t)
    }

    fn build_level(&self, b: usize, e_q: f64, radius: f64, m: usize) -> Result<Level> {
        let half = m / 2;
        let values: Vec<Result<C64>> = (0..=half)
            .into_par_iter()
            .map(|j| {
                let u = C64::from_polar(radius, 2.0 * PI * j as f64 / m as f64);
                self.eb_star_with(b, e_q, u)
            })
            .collect();
        let mut samples = vec![C64::new(0.0, 0.0); m];
        for (j, v) in values.into_iter().enumerate() {
            samples[j] = v?;
        }
        for j in half + 1..m {
            samples[j] = samples[m - j].conj();
        }
        let scale = samples.iter().fold(0.0f64, |a, v| a.max(v.norm()));
        // Nodes on the real axis must give real values, and one mirrored
        // pair must be conjugate.
        let mut imag = (samples[0].im.abs()).max(samples[half].im.abs()) / scale;
        let j = m / 4 + 1;
        let mirrored = self.eb_star_with(b, e_q, C64::from_polar(radius, -2.0 * PI * j as f64 / m as f64))?;
        imag = imag.max((mirrored - samples[j].conj()).norm() / scale);
        let level = Level::from_samples(b, e_q, self.spectral.s, self.spectral.q, radius, samples, imag);
        if level.imag_residue > self.config.imag_tol {
            return Err(Error::ImaginaryResidue {
                b,
                residue: level.imag_residue,
            });
        }
        Ok(level)
    }

    pub fn s(&self) -> f64 {
        self.spectral.s
    }

    pub fn b_levels(&self) -> usize {
        self.levels.len()
    }

    pub fn level(&self, b: usize) -> &Level {
        &self.levels[b - 1]
    }

    /// `F_b(s, u)` by direct quadrature along the segment from `u` to `U-`.
    pub fn fb_star(&self, b: usize, u: C64) -> Result<C64> {
        self.check_order(b)?;
        self.fb_star_with(b, self.boundary.get(b), u)
    }

    /// `E_b(s, u) = E_b(s, q) + (u - q) F_b(s, u)` by direct quadrature.
    pub fn eb_star(&self, b: usize, u: C64) -> Result<C64> {
        self.check_order(b)?;
        self.eb_star_with(b, self.boundary.get(b), u)
    }

    fn check_order(&self, b: usize) -> Result<()> {
        if b == 0 || b > self.levels.len() {
            return Err(Error::InvalidParameter(format!(
                "order {b} outside the built levels 1..={}",
                self.levels.len()
            )));
        }
        Ok(())
    }

    fn eb_star_with(&self, b: usize, e_q: f64, u: C64) -> Result<C64> {
        Ok(e_q + (u - self.spectral.q) * self.fb_star_with(b, e_q, u)?)
    }

    fn fb_star_with(&self, b: usize, e_q: f64, u: C64) -> Result<C64> {
        let sd = &self.spectral;
        let floor = self.config.u_floor * sd.u_minus;
        if u.norm() < floor {
            return Err(Error::NearOrigin {
                modulus: u.norm(),
                floor,
            });
        }
        if (u - sd.u_minus).norm() < 1e-12 {
            return Err(Error::InvalidParameter("u coincides with U-".into()));
        }
        let bf = b as f64;
        let c = sd.drift();
        let prev = if b > 1 { Some(&self.levels[b - 2]) } else { None };
        let span = C64::new(sd.u_minus, 0.0) - u;
        let one = C64::new(1.0, 0.0);
        let integrand = |t: f64| -> C64 {
            let z = u + t * span;
            let om = one - z;
            let mut g = (z + bf * om) / (om * om) + (z - bf * c) * e_q;
            if let Some(l) = prev {
                g += bf * l.eval(z);
            }
            g * sd.kernel_param(u, t, bf) * z.powi(b as i32 - 1)
        };
        let u_b = u.powi(b as i32);
        // The integral is of size |u^b P(u)| times F_b, F_b = O(1).
        let target = (u_b * sd.poly(u)).norm() * span.norm().min(1.0);
        let opts = QuadOptions::rel(self.config.rel_tol).with_abs(self.config.rel_tol * 1e-2 * target);
        let r = integrate_tanh_sinh(integrand, 0.0, 1.0, &opts)?;
        Ok(r.value * span / (u_b * sd.poly(u)))
    }

    /// `E*_{n,b}(s)` for `0 <= n <= n_max`.
    pub fn extract_coefficients(&self, b: usize, n_max: usize) -> Result<Vec<f64>> {
        self.check_order(b)?;
        let c = &self.level(b).coeffs;
        Ok((0..=n_max).map(|n| c.get(n).copied().unwrap_or(0.0)).collect())
    }

    /// `grid[n][b - 1] = E*_{n,b}(s)`.
    pub fn conditional_grid(&self, n_max: usize) -> Vec<Vec<f64>> {
        (0..=n_max)
            .map(|n| {
                self.levels
                    .iter()
                    .map(|l| l.coeffs.get(n).copied().unwrap_or(0.0))
                    .collect()
            })
            .collect()
    }

    /// Exponential generating function `F(u, v) = sum_b F_b(s, u) v^b / b!`
    /// through the characteristic integral
    /// `F(u, V) = e^{V/u} / P(u) int_u^{U-} exp(-(V/u) R(u; z)) L(z, (z/u) V R(u; z)) dz / z`.
    pub fn f_star(&self, u: f64, v: C64) -> Result<C64> {
        let sd = &self.spectral;
        if !(u > self.config.u_floor * sd.u_minus && u < sd.u_minus) {
            return Err(Error::InvalidParameter(format!("u = {u} must lie in (u_floor U-, U-)")));
        }
        let coeffs = &self.boundary;
        let w = v / u;
        let span = sd.u_minus - u;
        let uc = C64::new(u, 0.0);
        let mut failure: Option<Error> = None;
        let integrand = |t: f64| -> C64 {
            let z = u + t * span;
            let rk = sd.kernel_param(uc, t, 1.0).re;
            match coeffs.eval_l(C64::new(z, 0.0), z * w * rk) {
                Ok(l) => (-(w * rk)).exp() * l / z,
                Err(e) => {
                    failure.get_or_insert(e);
                    C64::new(0.0, 0.0)
                }
            }
        };
        let r = integrate_endpoint_power(
            integrand,
            0.0,
            1.0,
            sd.exp_minus(),
            &QuadOptions::rel(self.config.rel_tol.max(1e-12)).with_abs(1e-15 * v.norm()),
        );
        if let Some(e) = failure {
            return Err(e);
        }
        let r = r?;
        Ok(w.exp() * r.value * span / sd.poly_real(u))
    }

    /// Truncated generating function `sum_b F_b(s, u) v^b` from the levels.
    pub fn f_ordinary(&self, u: f64, v: f64) -> f64 {
        let mut acc = 0.0;
        let mut pw = 1.0;
        for l in &self.levels {
            pw *= v;
            acc += pw * l.eval_f_real(u);
        }
        acc
    }

    /// Truncated generating function `sum_b F_b(s, u) v^b / b!` from the levels.
    pub fn f_exponential(&self, u: f64, v: f64) -> f64 {
        let mut acc = 0.0;
        let mut pw = 1.0;
        for (i, l) in self.levels.iter().enumerate() {
            pw *= v / (i + 1) as f64;
            acc += pw * l.eval_f_real(u);
        }
        acc
    }

    /// Residuals of the first-order equations for the generating functions,
    /// with derivatives by fourth-order central differences of step `h`.
    pub fn pde_residuals(&self, form: GeneratingForm, points: &[(f64, f64)], h: f64) -> Result<Vec<PdeResidual>> {
        let sd = &self.spectral;
        let (q, c) = (sd.q, sd.drift());
        let p0 = sd.s * q + sd.rho + q;
        let d1 = |f: &dyn Fn(f64) -> f64, x: f64| {
            (f(x - 2.0 * h) - 8.0 * f(x - h) + 8.0 * f(x + h) - f(x + 2.0 * h)) / (12.0 * h)
        };
        points
            .iter()
            .map(|&(u, v)| {
                let uc = C64::new(u, 0.0);
                let p = sd.poly_real(u);
                let (f, l, dv_coef, phi, weight): (
                    Box<dyn Fn(f64, f64) -> f64 + '_>,
                    C64,
                    f64,
                    Box<dyn Fn(f64, f64) -> f64 + '_>,
                    Box<dyn Fn(f64) -> f64>,
                ) = match form {
                    GeneratingForm::Ordinary => (
                        Box::new(|a, b| self.f_ordinary(a, b)),
                        self.boundary.eval_l_ordinary(uc, C64::new(v, 0.0))?,
                        (u - q) * (v - c) + sd.rho * (1.0 - q),
                        Box::new(|a, b| sd.poly_real(a) * (1.0 - b) * self.f_ordinary(a, a * b)),
                        Box::new(|b| 1.0 - b),
                    ),
                    GeneratingForm::Exponential => (
                        Box::new(|a, b| self.f_exponential(a, b)),
                        self.boundary.eval_l(uc, C64::new(v, 0.0))?,
                        p0 - c * u,
                        Box::new(|a, b| sd.poly_real(a) * (-b).exp() * self.f_exponential(a, a * b)),
                        Box::new(|b| (-b).exp()),
                    ),
                };
                let fu = d1(&|x| f(x, v), u);
                let fv = d1(&|x| f(u, x), v);
                let val = f(u, v);
                let direct = u * p * fu + v * dv_coef * fv + (u * (u - c) + (u - q) * (u + v)) * val + l.re;
                // Characteristic form in the scaled variable w = v / u.
                let w = v / u;
                let phi_u = d1(&|x| phi(x, w), u);
                let mut phi_w = d1(&|x| phi(u, x), w);
                let lw = match form {
                    GeneratingForm::Ordinary => self.boundary.eval_l_ordinary(uc, C64::new(u * w, 0.0))?,
                    GeneratingForm::Exponential => self.boundary.eval_l(uc, C64::new(u * w, 0.0))?,
                };
                if let GeneratingForm::Ordinary = form {
                    phi_w *= 1.0 - w;
                }
                let characteristic = phi_u - (u - q) / p * w * phi_w + weight(w) * lw.re / u;
                let scale = l.norm().max(1.0);
                Ok(PdeResidual {
                    u,
                    v,
                    direct: direct.abs() / scale,
                    characteristic: characteristic.abs() / (lw.norm() / u).max(1.0),
                })
            })
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum GeneratingForm {
    Ordinary,
    Exponential,
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct PdeResidual {
    pub u: f64,
    pub v: f64,
    pub direct: f64,
    pub characteristic: f64,
}

/// Tensor grid of Chebyshev points in `(lo U-, hi U-) x (-v_max, v_max)`.
pub fn pde_points(sd: &SpectralData, per_axis: usize, lo: f64, hi: f64, v_max: f64) -> Vec<(f64, f64)> {
    let cheb = |k: usize| (PI * (2 * k + 1) as f64 / (2 * per_axis) as f64).cos();
    let mut pts = Vec::with_capacity(per_axis * per_axis);
    for i in 0..per_axis {
        let u = sd.u_minus * (0.5 * (lo + hi) + 0.5 * (hi - lo) * cheb(i));
        for j in 0..per_axis {
            pts.push((u, v_max * cheb(j)));
        }
    }
    pts
}

#[cfg(test)]
mod tests {
    use super::*;

    fn build(s: f64, b: usize) -> Transform {
        let p = ModelParams::new(0.5, 0.2).unwrap();
        Transform::build(&p, s, b, &TransformConfig::default()).unwrap()
    }

    #[test]
    fn two_term_recurrence_matches_horner() {
        let c: Vec<f64> = (0..40).map(|k| 1.0 / (1.0 + k as f64)).collect();
        for &z in &[C64::new(0.3, 0.4), C64::new(-0.8, 0.1), C64::new(0.5, 0.0), C64::new(0.0, -0.9)] {
            let h = c.iter().rev().fold(C64::new(0.0, 0.0), |acc, &a| acc * z + a);
            assert!((poly_complex(&c, z) - h).norm() < 1e-14 * h.norm().max(1.0));
        }
        assert_eq!(poly_complex(&[2.0], C64::new(0.5, 0.5)), C64::new(2.0, 0.0));
    }

    #[test]
    fn taylor_levels_match_direct_evaluation() {
        let t = build(1.0, 4);
        let pts = [C64::new(0.3, 0.0), C64::new(0.1, 0.5), C64::new(-0.6, 0.1), C64::new(0.05, -0.3)];
        for b in 1..=4 {
            for &u in &pts {
                let d = t.eb_star(b, u).unwrap();
                assert!((d - t.level(b).eval(u)).norm() < 1e-12, "b={b} u={u}");
                let f = t.fb_star(b, u).unwrap();
                assert!((f - t.level(b).eval_f(u)).norm() < 1e-11, "b={b} u={u}");
            }
        }
    }

    #[test]
    fn resummation_recovers_boundary_value() {
        let t = build(1.0, 20);
        for l in &t.levels {
            let resum: f64 = l.coeffs.iter().rev().fold(0.0, |a, &c| a * 0.2 + c);
            assert!((resum - l.e_q).abs() < 1e-8, "b={}", l.b);
            assert!(l.imag_residue < 1e-9);
        }
    }

    #[test]
    fn grid_bounds_and_monotonicity() {
        for &s in &[0.1, 1.0, 10.0] {
            let t = build(s, 8);
            let g = t.conditional_grid(40);
            for n in 0..=40 {
                for b in 1..=8 {
                    // s E tends to 1 with n; allow rounding at the top.
                    let v = s * g[n][b - 1];
                    assert!(v > 0.0 && v < 1.0 + 1e-12, "s={s} n={n} b={b}: {v}");
                    if n > 0 {
                        assert!(g[n][b - 1] >= g[n - 1][b - 1] - 1e-12);
                    }
                    if b > 1 {
                        assert!(g[n][b - 1] >= g[n][b - 2] - 1e-12);
                    }
                }
            }
            for b in 1..=8 {
                let e = t.boundary.get(b);
                assert!(e > 0.0 && s * e * 0.8 < 1.0);
            }
        }
    }

    #[test]
    fn boundary_value_and_derivative_at_q() {
        let t = build(1.0, 3);
        let q = C64::new(0.2, 0.0);
        for b in 1..=3 {
            assert!((t.eb_star(b, q).unwrap().re - t.boundary.get(b)).abs() < 1e-15);
            let d = (t.eb_star(b, C64::new(0.21, 0.0)).unwrap() - t.eb_star(b, C64::new(0.19, 0.0)).unwrap()) / 0.02;
            let f = t.fb_star(b, q).unwrap();
            assert!((d - f).norm() < 1e-3 * f.norm());
            let above = t.eb_star(b, C64::new(0.3, 0.0)).unwrap().re;
            assert!(above > t.boundary.get(b));
        }
        // Finite limit as u approaches U- from below.
        let um = t.spectral.u_minus;
        let a = t.fb_star(1, C64::new(um - 1e-4, 0.0)).unwrap();
        let b = t.fb_star(1, C64::new(um - 1e-6, 0.0)).unwrap();
        assert!(a.re.is_finite() && (a - b).norm() < 1e-3 * a.norm());
    }

    #[test]
    fn rejects_points_near_origin() {
        let t = build(1.0, 2);
        assert!(matches!(t.fb_star(2, C64::new(1e-3, 0.0)), Err(Error::NearOrigin { .. })));
    }

    #[test]
    fn bivariate_integral_matches_series() {
        let t = build(1.0, 20);
        let um = t.spectral.u_minus;
        for &u in &[0.3 * um, 0.6 * um, 0.9 * um] {
            assert_eq!(t.f_star(u, C64::new(0.0, 0.0)).unwrap(), C64::new(0.0, 0.0));
            for &v in &[0.05, 0.2, -0.3, 0.5] {
                let a = t.f_star(u, C64::new(v, 0.0)).unwrap();
                let b = t.f_exponential(u, v);
                assert!((a.re - b).abs() < 1e-6 * b.abs().max(1e-3), "u={u} v={v}: {a} vs {b}");
            }
        }
    }

    #[test]
    fn generating_function_equations_hold() {
        let t = build(1.0, 20);
        let pts = pde_points(&t.spectral, 5, 0.15, 0.85, 0.3);
        for form in [GeneratingForm::Ordinary, GeneratingForm::Exponential] {
            let r = t.pde_residuals(form, &pts, 1e-3).unwrap();
            let worst = r.iter().fold(0.0f64, |a, p| a.max(p.direct).max(p.characteristic));
            assert!(worst < 1e-5, "{form:?}: {worst:e}");
        }
    }

    #[test]
    fn first_coefficient_perturbation_is_a_pure_pole() {
        // A wrong E_1(s, q) adds kappa / u to the direct representation and
        // nothing to the Taylor coefficients.
        let p = ModelParams::new(0.5, 0.2).unwrap();
        let base = build(1.0, 3);
        let cfg = TransformConfig {
            perturb_e1: Some(1.01),
            ..Default::default()
        };
        let bad = Transform::build(&p, 1.0, 3, &cfg).unwrap();
        assert!((bad.boundary.get(1) / base.boundary.get(1) - 1.01).abs() < 1e-12);
        let kappa = |u: C64| (bad.eb_star(1, u).unwrap() - base.eb_star(1, u).unwrap()) * u;
        let k0 = kappa(C64::new(0.3, 0.0));
        assert!(k0.norm() > 1e-4);
        assert!((kappa(C64::new(-0.2, 0.4)) - k0).norm() < 1e-12);
        for (a, b) in bad.level(1).coeffs.iter().zip(&base.level(1).coeffs).take(30) {
            assert!((a - b).abs() < 1e-13);
        }
        let resum: f64 = bad.level(1).coeffs.iter().rev().fold(0.0, |a, &c| a * 0.2 + c);
        assert!((resum - bad.boundary.get(1)).abs() > 1e-3);
        // The pole shows up as an aliased principal part.
        assert!(base.levels.iter().all(|l| l.principal_part < 1e-12));
        assert!(bad.level(1).principal_part > 1e-6);
    }
}
