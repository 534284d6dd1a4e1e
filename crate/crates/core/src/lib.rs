//! Batch sojourn time in the M^[X]/M/1 processor-sharing queue.
//!
//! The analytic route goes spectral data -> kernel integrals -> boundary
//! coefficients -> transform levels -> Laplace inversion. Independent
//! oracles (ODE, uniformised CTMC, truncated Laplace solve, simulation)
//! live under [`oracles`].

pub mod boundary;
pub mod error;
pub mod inversion;
pub mod kernels;
pub mod model;
pub mod oracles;
pub mod quadrature;
pub mod report;
pub mod special;
pub mod spectral;
pub mod transform;

pub use error::{Error, Result};
pub use model::{BatchDistribution, ModelParams};
