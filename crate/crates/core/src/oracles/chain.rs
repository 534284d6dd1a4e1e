//! Truncated backward generator shared by the deterministic oracles.

use crate::error::{Error, Result};
use crate::model::BatchDistribution;

#[derive(Debug, Clone)]
pub struct Chain {
    pub rho: f64,
    pub batch: BatchDistribution,
    pub n_trunc: usize,
    pub b_trunc: usize,
    pmf: Vec<f64>,
}

impl Chain {
    pub fn new(rho: f64, batch: BatchDistribution, n_trunc: usize, b_trunc: usize) -> Result<Self> {
        batch.validate(1e-12)?;
        if !(rho > 0.0) || n_trunc == 0 || b_trunc == 0 {
            return Err(Error::InvalidParameter("rho, n_trunc and b_trunc must be positive".into()));
        }
        let pmf = (1..=n_trunc).map(|m| batch.pmf(m)).collect();
        Ok(Chain {
            rho,
            batch,
            n_trunc,
            b_trunc,
            pmf,
        })
    }

    pub fn size(&self) -> usize {
        (self.n_trunc + 1) * self.b_trunc
    }

    pub fn index(&self, n: usize, b: usize) -> usize {
        n * self.b_trunc + (b - 1)
    }

    /// Total event rate out of every state.
    pub fn rate(&self) -> f64 {
        1.0 + self.rho
    }

    /// `out = G v`: the off-diagonal part of the backward generator, with
    /// `v` replaced by `closure` for states beyond `n_trunc`.
    pub fn apply(&self, v: &[f64], closure: f64, out: &mut [f64]) {
        let (nt, bt) = (self.n_trunc, self.b_trunc);
        let mut arrivals = vec![0.0; nt + 1];
        for b in 1..=bt {
            let col = |n: usize| v[n * bt + (b - 1)];
            match &self.batch {
                BatchDistribution::Geometric { q } => {
                    // T_n = sum_m q_m v_{n+m} = (1-q) v_{n+1} + q T_{n+1}
                    arrivals[nt] = closure;
                    for n in (0..nt).rev() {
                        arrivals[n] = (1.0 - q) * col(n + 1) + q * arrivals[n + 1];
                    }
                }
                BatchDistribution::Explicit { .. } => {
                    for (n, slot) in arrivals.iter_mut().enumerate() {
                        let mut acc = 0.0;
                        let mut inside = 0.0;
                        for (m, p) in self.pmf.iter().enumerate().take(nt - n) {
                            acc += p * col(n + m + 1);
                            inside += p;
                        }
                        *slot = acc + (1.0 - inside).max(0.0) * closure;
                    }
                }
            }
            for n in 0..=nt {
                let total = (n + b) as f64;
                let mut g = self.rho * arrivals[n];
                if b > 1 {
                    g += b as f64 / total * v[n * bt + (b - 2)];
                }
                if n > 0 {
                    g += n as f64 / total * v[(n - 1) * bt + (b - 1)];
                }
                out[n * bt + (b - 1)] = g;
            }
        }
    }
}
