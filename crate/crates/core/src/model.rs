//! Model parameters, batch-size laws and the stationary occupancy.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const DEFAULT_N_MAX: usize = 64;
pub const DEFAULT_B_MAX: usize = 20;
pub const DEFAULT_TOL_MASS: f64 = 1e-10;

/// Scenario parameters. Time is measured in units of the mean service
/// requirement, so the service rate is one.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    /// Batch arrival rate.
    pub rho: f64,
    /// Parameter of the geometric batch-size law `q_b = (1 - q) q^(b-1)`.
    pub q: f64,
    #[serde(default = "default_n_max")]
    pub n_max: usize,
    #[serde(default = "default_b_max")]
    pub b_max: usize,
    /// Probability mass allowed outside the occupancy truncation.
    #[serde(default = "default_tol")]
    pub tol: f64,
}

fn default_n_max() -> usize {
    DEFAULT_N_MAX
}
fn default_b_max() -> usize {
    DEFAULT_B_MAX
}
fn default_tol() -> f64 {
    DEFAULT_TOL_MASS
}

impl ModelParams {
    pub fn new(rho: f64, q: f64) -> Result<Self> {
        let p = ModelParams {
            rho,
            q,
            n_max: DEFAULT_N_MAX,
            b_max: DEFAULT_B_MAX,
            tol: DEFAULT_TOL_MASS,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn with_truncation(mut self, n_max: usize, b_max: usize) -> Result<Self> {
        self.n_max = n_max;
        self.b_max = b_max;
        self.validate()?;
        Ok(self)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.q >= 0.0 && self.q < 1.0) {
            return Err(Error::InvalidParameter(format!("q = {} must lie in [0, 1)", self.q)));
        }
        if !(self.rho > 0.0 && self.rho.is_finite()) {
            return Err(Error::InvalidParameter(format!("rho = {} must be positive", self.rho)));
        }
        if self.rho >= 1.0 - self.q {
            return Err(Error::Unstable {
                rho: self.rho,
                q: self.q,
                bound: 1.0 - self.q,
            });
        }
        if self.n_max == 0 || self.b_max == 0 {
            return Err(Error::InvalidParameter("n_max and b_max must be positive".into()));
        }
        if !(self.tol > 0.0 && self.tol < 1.0) {
            return Err(Error::InvalidParameter(format!("tol = {} must lie in (0, 1)", self.tol)));
        }
        Ok(())
    }

    /// Offered load `rho / (1 - q)`.
    pub fn load(&self) -> f64 {
        self.rho / (1.0 - self.q)
    }

    pub fn batch(&self) -> BatchDistribution {
        BatchDistribution::Geometric { q: self.q }
    }
}

/// Batch-size law on `{1, 2, ...}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum BatchDistribution {
    Geometric { q: f64 },
    /// `probs[b - 1] = P(B = b)`.
    Explicit { probs: Vec<f64> },
}

impl BatchDistribution {
    pub fn validate(&self, tol: f64) -> Result<()> {
        match self {
            BatchDistribution::Geometric { q } => {
                if !(*q >= 0.0 && *q < 1.0) {
                    return Err(Error::InvalidDistribution(format!("geometric q = {q} outside [0, 1)")));
                }
            }
            BatchDistribution::Explicit { probs } => {
                if probs.is_empty() || probs.iter().any(|&p| !(p >= 0.0)) {
                    return Err(Error::InvalidDistribution("probabilities must be non-negative".into()));
                }
                let total: f64 = probs.iter().sum();
                if (total - 1.0).abs() > tol {
                    return Err(Error::InvalidDistribution(format!("probabilities sum to {total}")));
                }
            }
        }
        Ok(())
    }

    pub fn pmf(&self, b: usize) -> f64 {
        if b == 0 {
            return 0.0;
        }
        match self {
            BatchDistribution::Geometric { q } => (1.0 - q) * q.powi(b as i32 - 1),
            BatchDistribution::Explicit { probs } => probs.get(b - 1).copied().unwrap_or(0.0),
        }
    }

    /// `P(B > b)`.
    pub fn tail(&self, b: usize) -> f64 {
        match self {
            BatchDistribution::Geometric { q } => q.powi(b as i32),
            BatchDistribution::Explicit { probs } => {
                if b >= probs.len() {
                    0.0
                } else {
                    probs[b..].iter().sum::<f64>().max(0.0)
                }
            }
        }
    }

    pub fn mean(&self) -> f64 {
        match self {
            BatchDistribution::Geometric { q } => 1.0 / (1.0 - q),
            BatchDistribution::Explicit { probs } => {
                probs.iter().enumerate().map(|(i, p)| (i + 1) as f64 * p).sum()
            }
        }
    }

    /// Largest batch size with positive probability, if the support is finite.
    pub fn max_support(&self) -> Option<usize> {
        match self {
            BatchDistribution::Geometric { q } if *q == 0.0 => Some(1),
            BatchDistribution::Geometric { .. } => None,
            BatchDistribution::Explicit { probs } => probs.iter().rposition(|&p| p > 0.0).map(|i| i + 1),
        }
    }
}

/// Stationary number-in-system distribution seen by an arriving batch.
#[derive(Debug, Clone)]
pub struct StationaryOccupancy {
    pub pi: Vec<f64>,
    /// Mass outside `0..=n_max`.
    pub deficit: f64,
}

pub fn stationary_occupancy(params: &ModelParams) -> Result<StationaryOccupancy> {
    params.validate()?;
    stationary_occupancy_for(params.rho, &params.batch(), params.n_max, params.tol)
}

/// Solves the balance equations of the number-in-system chain on `0..=n_max`.
///
/// Flow balance across the cut between `n` and `n + 1` reads
/// `pi[n+1] = rho * sum_{k<=n} pi[k] P(B > n - k)`, and the empty
/// probability is fixed by the utilisation `1 - rho E[B]`. All terms are
/// non-negative so the forward recursion is stable.
pub fn stationary_occupancy_for(
    rho: f64,
    batch: &BatchDistribution,
    n_max: usize,
    tol_mass: f64,
) -> Result<StationaryOccupancy> {
    batch.validate(1e-12)?;
    let load = rho * batch.mean();
    if !(load < 1.0) {
        return Err(Error::Unstable {
            rho,
            q: match batch {
                BatchDistribution::Geometric { q } => *q,
                _ => f64::NAN,
            },
            bound: rho / load,
        });
    }
    let tails: Vec<f64> = (0..=n_max).map(|m| batch.tail(m)).collect();
    let mut pi = vec![0.0; n_max + 1];
    pi[0] = 1.0 - load;
    for n in 0..n_max {
        let up: f64 = (0..=n).map(|k| pi[k] * tails[n - k]).sum();
        pi[n + 1] = rho * up;
    }
    let deficit = (1.0 - pi.iter().sum::<f64>()).max(0.0);
    if deficit > tol_mass {
        return Err(Error::Truncation {
            deficit,
            tol: tol_mass,
            n_max,
        });
    }
    Ok(StationaryOccupancy { pi, deficit })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn closed_form(rho: f64, q: f64, n: usize) -> f64 {
        let load = rho / (1.0 - q);
        if n == 0 {
            1.0 - load
        } else {
            (1.0 - load) * rho * (q + rho).powi(n as i32 - 1)
        }
    }

    #[test]
    fn occupancy_matches_geometric_closed_form() {
        let p = ModelParams::new(0.5, 0.2).unwrap();
        let occ = stationary_occupancy(&p).unwrap();
        assert!((occ.pi[0] - 0.375).abs() < 1e-15);
        assert!((occ.pi[1] - 0.1875).abs() < 1e-15);
        for (n, &v) in occ.pi.iter().enumerate() {
            assert!((v - closed_form(0.5, 0.2, n)).abs() <= 1e-14 * closed_form(0.5, 0.2, n).max(1e-300) + 1e-300);
        }
        assert!(occ.deficit <= 1e-10);
    }

    #[test]
    fn rejects_unstable_and_reports_truncation() {
        assert!(matches!(ModelParams::new(0.85, 0.2), Err(Error::Unstable { .. })));
        let p = ModelParams::new(0.5, 0.2).unwrap().with_truncation(10, 20).unwrap();
        assert!(matches!(stationary_occupancy(&p), Err(Error::Truncation { .. })));
    }

    #[test]
    fn explicit_law_is_checked() {
        let bad = BatchDistribution::Explicit { probs: vec![0.5, 0.4] };
        assert!(bad.validate(1e-12).is_err());
        let good = BatchDistribution::Explicit { probs: vec![0.5, 0.5] };
        assert_eq!(good.mean(), 1.5);
        assert_eq!(good.tail(1), 0.5);
        assert_eq!(good.max_support(), Some(2));
    }

    proptest! {
        #[test]
        fn occupancy_is_a_probability_vector(q in 0.0..0.6f64, frac in 0.05..0.8f64) {
            let rho = frac * (1.0 - q);
            let p = ModelParams { rho, q, n_max: 400, b_max: 20, tol: 1e-8 };
            let occ = stationary_occupancy(&p).unwrap();
            prop_assert!(occ.pi.iter().all(|&x| x >= 0.0));
            let total: f64 = occ.pi.iter().sum();
            prop_assert!((total + occ.deficit - 1.0).abs() < 1e-12);
            for n in 0..30 {
                let exact = closed_form(rho, q, n);
                prop_assert!((occ.pi[n] - exact).abs() <= 1e-12 * exact + 1e-300);
            }
        }
    }
}
