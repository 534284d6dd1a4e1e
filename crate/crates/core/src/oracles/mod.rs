//! Independent reference solutions for the conditional sojourn time.
//!
//! All deterministic oracles work on the backward equations of the chain
//! `(n, b)`: `n` other customers and `b` unfinished members of the tagged
//! batch. Truncating `n <= n_trunc` with the value beyond the boundary set
//! to 0 or to 1 gives a lower and an upper bracket, since the survival is
//! non-decreasing in `n`.

pub mod chain;
pub mod ctmc;
pub mod laplace;
pub mod ode;
pub mod sim;

use serde::Serialize;

pub use chain::Chain;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Bracket {
    pub lower: f64,
    pub upper: f64,
}

impl Bracket {
    pub fn width(&self) -> f64 {
        self.upper - self.lower
    }

    pub fn mid(&self) -> f64 {
        0.5 * (self.lower + self.upper)
    }

    pub fn contains(&self, v: f64, slack: f64) -> bool {
        v >= self.lower - slack && v <= self.upper + slack
    }
}

/// Values for every `n <= n_trunc`, `b <= b_trunc` at one time point.
#[derive(Debug, Clone, Serialize)]
pub struct BracketGrid {
    pub x: f64,
    pub n_trunc: usize,
    pub b_trunc: usize,
    lower: Vec<f64>,
    upper: Vec<f64>,
}

impl BracketGrid {
    pub(crate) fn new(x: f64, chain: &Chain, lower: Vec<f64>, upper: Vec<f64>) -> Self {
        BracketGrid {
            x,
            n_trunc: chain.n_trunc,
            b_trunc: chain.b_trunc,
            lower,
            upper,
        }
    }

    pub fn get(&self, n: usize, b: usize) -> Bracket {
        let i = n * self.b_trunc + (b - 1);
        Bracket {
            lower: self.lower[i],
            upper: self.upper[i],
        }
    }
}
