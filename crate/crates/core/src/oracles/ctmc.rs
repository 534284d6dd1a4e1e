//! Uniformisation of the truncated chain.
//!
//! Every state leaves at total rate `1 + rho`, so with that uniformisation
//! rate the jump chain has no self loops and
//! `E(x) = sum_k Poisson(k; (1 + rho) x) V_k`, `V_{k+1} = G V_k / (1 + rho)`.

use super::{BracketGrid, Chain};
use crate::error::{Error, Result};

/// Poisson tail mass left out of the sum.
pub const POISSON_TAIL: f64 = 1e-14;

/// Brackets at every `x` in `xs` (all sharing the same iterates).
pub fn survival(chain: &Chain, xs: &[f64]) -> Result<Vec<BracketGrid>> {
    let lam = chain.rate();
    let x_max = xs.iter().copied().fold(0.0, f64::max);
    if xs.iter().any(|&x| !(x >= 0.0)) || lam * x_max > 700.0 {
        return Err(Error::InvalidParameter("x must be non-negative and (1 + rho) x <= 700".into()));
    }
    let size = chain.size();
    let mut lo = vec![1.0; size];
    let mut hi = vec![1.0; size];
    let mut next = vec![0.0; size];
    let mut acc_lo = vec![vec![0.0; size]; xs.len()];
    let mut acc_hi = vec![vec![0.0; size]; xs.len()];
    let mut weight: Vec<f64> = xs.iter().map(|&x| (-lam * x).exp()).collect();
    let mut mass = vec![0.0; xs.len()];
    let mut k = 0usize;
    loop {
        for (i, &x) in xs.iter().enumerate() {
            let w = weight[i];
            if w > 0.0 {
                for j in 0..size {
                    acc_lo[i][j] += w * lo[j];
                    acc_hi[i][j] += w * hi[j];
                }
            }
            mass[i] += w;
            weight[i] *= lam * x / (k + 1) as f64;
        }
        let done = mass
            .iter()
            .zip(xs)
            .all(|(m, &x)| 1.0 - m <= POISSON_TAIL && (k as f64) > lam * x);
        if done || k > 100_000 {
            break;
        }
        chain.apply(&lo, 0.0, &mut next);
        for j in 0..size {
            lo[j] = next[j] / lam;
        }
        chain.apply(&hi, 1.0, &mut next);
        for j in 0..size {
            hi[j] = next[j] / lam;
        }
        k += 1;
    }
    Ok(xs
        .iter()
        .enumerate()
        .map(|(i, &x)| {
            let tail = (1.0 - mass[i]).max(0.0);
            let upper = acc_hi[i].iter().map(|v| (v + tail).min(1.0)).collect();
            BracketGrid::new(x, chain, acc_lo[i].clone(), upper)
        })
        .collect())
}
