//! Direct integration of the truncated backward equations
//! `dE/dx = -(1 + rho) E + G E`, `E(0) = 1`, by an adaptive
//! Dormand-Prince 5(4) method.

use super::{BracketGrid, Chain};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy)]
pub struct OdeOptions {
    pub rtol: f64,
    pub atol: f64,
    pub max_steps: usize,
}

impl Default for OdeOptions {
    fn default() -> Self {
        OdeOptions {
            rtol: 1e-11,
            atol: 1e-13,
            max_steps: 1_000_000,
        }
    }
}

pub fn survival(chain: &Chain, xs: &[f64], opts: &OdeOptions) -> Result<Vec<BracketGrid>> {
    let lower = integrate(chain, 0.0, xs, opts)?;
    let upper = integrate(chain, 1.0, xs, opts)?;
    Ok(xs
        .iter()
        .zip(lower.into_iter().zip(upper))
        .map(|(&x, (lo, hi))| BracketGrid::new(x, chain, lo, hi))
        .collect())
}

// The system is autonomous, so the nodes c_i are not needed.
const A21: f64 = 1.0 / 5.0;
const A31: f64 = 3.0 / 40.0;
const A32: f64 = 9.0 / 40.0;
const A41: f64 = 44.0 / 45.0;
const A42: f64 = -56.0 / 15.0;
const A43: f64 = 32.0 / 9.0;
const A51: f64 = 19372.0 / 6561.0;
const A52: f64 = -25360.0 / 2187.0;
const A53: f64 = 64448.0 / 6561.0;
const A54: f64 = -212.0 / 729.0;
const A61: f64 = 9017.0 / 3168.0;
const A62: f64 = -355.0 / 33.0;
const A63: f64 = 46732.0 / 5247.0;
const A64: f64 = 49.0 / 176.0;
const A65: f64 = -5103.0 / 18656.0;
const B1: f64 = 35.0 / 384.0;
const B3: f64 = 500.0 / 1113.0;
const B4: f64 = 125.0 / 192.0;
const B5: f64 = -2187.0 / 6784.0;
const B6: f64 = 11.0 / 84.0;
// Fifth minus fourth order weights.
const E1: f64 = 71.0 / 57600.0;
const E3: f64 = -71.0 / 16695.0;
const E4: f64 = 71.0 / 1920.0;
const E5: f64 = -17253.0 / 339200.0;
const E6: f64 = 22.0 / 525.0;
const E7: f64 = -1.0 / 40.0;

fn integrate(chain: &Chain, closure: f64, xs: &[f64], opts: &OdeOptions) -> Result<Vec<Vec<f64>>> {
    if xs.windows(2).any(|w| w[1] < w[0]) || xs.iter().any(|&x| x < 0.0) {
        return Err(Error::InvalidParameter("output times must be sorted and non-negative".into()));
    }
    let n = chain.size();
    let lam = chain.rate();
    let rhs = |y: &[f64], out: &mut [f64]| {
        chain.apply(y, closure, out);
        for (o, v) in out.iter_mut().zip(y) {
            *o -= lam * v;
        }
    };
    let mut y = vec![1.0; n];
    let mut k: Vec<Vec<f64>> = vec![vec![0.0; n]; 7];
    let mut tmp = vec![0.0; n];
    let mut y5 = vec![0.0; n];
    let mut t = 0.0f64;
    let mut h = 0.05f64;
    let mut out = Vec::with_capacity(xs.len());
    let mut steps = 0usize;
    rhs(&y, &mut k[0]);
    for &target in xs {
        while t < target {
            if steps >= opts.max_steps {
                return Err(Error::InvalidParameter("ODE step limit reached".into()));
            }
            steps += 1;
            let hs = h.min(target - t);
            let stage = |coeffs: &[(usize, f64)], k: &[Vec<f64>], tmp: &mut [f64]| {
                for i in 0..n {
                    let mut acc = y[i];
                    for &(j, a) in coeffs {
                        acc += hs * a * k[j][i];
                    }
                    tmp[i] = acc;
                }
            };
            stage(&[(0, A21)], &k, &mut tmp);
            rhs(&tmp, &mut k[1]);
            stage(&[(0, A31), (1, A32)], &k, &mut tmp);
            rhs(&tmp, &mut k[2]);
            stage(&[(0, A41), (1, A42), (2, A43)], &k, &mut tmp);
            rhs(&tmp, &mut k[3]);
            stage(&[(0, A51), (1, A52), (2, A53), (3, A54)], &k, &mut tmp);
            rhs(&tmp, &mut k[4]);
            stage(&[(0, A61), (1, A62), (2, A63), (3, A64), (4, A65)], &k, &mut tmp);
            rhs(&tmp, &mut k[5]);
            stage(&[(0, B1), (2, B3), (3, B4), (4, B5), (5, B6)], &k, &mut y5);
            rhs(&y5, &mut k[6]);
            let mut err = 0.0f64;
            for i in 0..n {
                let e = hs
                    * (E1 * k[0][i] + E3 * k[2][i] + E4 * k[3][i] + E5 * k[4][i] + E6 * k[5][i] + E7 * k[6][i]);
                let sc = opts.atol + opts.rtol * y[i].abs().max(y5[i].abs());
                err = err.max((e / sc).abs());
            }
            if err <= 1.0 {
                t += hs;
                if target - t < 1e-14 * target.max(1.0) {
                    t = target;
                }
                std::mem::swap(&mut y, &mut y5);
                k.swap(0, 6);
                let grow = if err == 0.0 { 5.0 } else { (0.9 * err.powf(-0.2)).clamp(0.2, 5.0) };
                // Do not let a short final step shrink the step for the next interval.
                if hs == h || grow < 1.0 {
                    h = hs * grow;
                }
            } else {
                h = hs * (0.9 * err.powf(-0.2)).clamp(0.1, 1.0);
            }
        }
        out.push(y.clone());
    }
    Ok(out)
}
