//! Truncated solve of the transformed backward equations
//! `(s + 1 + rho) E*_{n,b} - [G E*]_{n,b} = 1`.
//!
//! For each `b` the unknowns couple to `n - 1` and to every larger `n`, so
//! the matrix is upper Hessenberg and strictly diagonally dominant; it is
//! eliminated without pivoting in `O(n_trunc^2)`.

use super::{BracketGrid, Chain};
use crate::error::{Error, Result};

pub fn transform(chain: &Chain, s: f64) -> Result<BracketGrid> {
    if !(s >= 0.0) {
        return Err(Error::InvalidParameter(format!("s = {s} must be non-negative")));
    }
    let lower = solve(chain, s, 0.0)?;
    let upper = if s > 0.0 {
        solve(chain, s, 1.0 / s)?
    } else {
        vec![f64::INFINITY; chain.size()]
    };
    Ok(BracketGrid::new(s, chain, lower, upper))
}

fn solve(chain: &Chain, s: f64, closure: f64) -> Result<Vec<f64>> {
    let (nt, bt) = (chain.n_trunc, chain.b_trunc);
    let rho = chain.rho;
    let pmf: Vec<f64> = (0..=nt).map(|m| chain.batch.pmf(m)).collect();
    let mut out = vec![0.0; chain.size()];
    let mut prev = vec![0.0; nt + 1];
    for b in 1..=bt {
        // Dense upper-Hessenberg matrix for this b.
        let dim = nt + 1;
        let mut a = vec![0.0; dim * dim];
        let mut rhs = vec![0.0; dim];
        for n in 0..dim {
            let total = (n + b) as f64;
            a[n * dim + n] = s + 1.0 + rho;
            if n > 0 {
                a[n * dim + n - 1] = -(n as f64) / total;
            }
            let mut inside = 0.0;
            for m in 1..dim - n {
                a[n * dim + n + m] -= rho * pmf[m];
                inside += pmf[m];
            }
            rhs[n] = 1.0 + rho * (1.0 - inside).max(0.0) * closure;
            if b > 1 {
                rhs[n] += b as f64 / total * prev[n];
            }
        }
        // Eliminate the subdiagonal.
        for n in 1..dim {
            let f = a[n * dim + n - 1] / a[(n - 1) * dim + n - 1];
            if f != 0.0 {
                for j in n..dim {
                    a[n * dim + j] -= f * a[(n - 1) * dim + j];
                }
                rhs[n] -= f * rhs[n - 1];
            }
        }
        let mut x = vec![0.0; dim];
        for n in (0..dim).rev() {
            let mut acc = rhs[n];
            for j in n + 1..dim {
                acc -= a[n * dim + j] * x[j];
            }
            x[n] = acc / a[n * dim + n];
        }
        for n in 0..dim {
            out[n * bt + (b - 1)] = x[n];
        }
        prev = x;
    }
    Ok(out)
}
