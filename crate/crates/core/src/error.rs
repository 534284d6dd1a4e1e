use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("unstable scenario: rho = {rho} must be below 1 - q = {bound}")]
    Unstable { rho: f64, q: f64, bound: f64 },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("invalid batch-size distribution: {0}")]
    InvalidDistribution(String),

    #[error("occupancy truncation insufficient: deficit {deficit:e} exceeds {tol:e} at n_max = {n_max}")]
    Truncation { deficit: f64, tol: f64, n_max: usize },

    #[error("quadrature did not converge: estimated error {error:e} above tolerance {tolerance:e}")]
    Quadrature { error: f64, tolerance: f64 },

    #[error("branch cut crossed: ratio {re} + {im}i lies on the negative real axis")]
    CutViolation { re: f64, im: f64 },

    #[error("near-singular diagonal at order {b}: |Q| = {value:e}")]
    SingularDiagonal { b: usize, value: f64 },

    #[error("hypergeometric series did not converge (z = {z})")]
    Hypergeometric { z: f64 },

    #[error("series truncation unreliable: tail bound {tail:e} exceeds {tol:e}")]
    SeriesTruncation { tail: f64, tol: f64 },

    #[error("|u| = {modulus} is below the floor {floor} near the origin")]
    NearOrigin { modulus: f64, floor: f64 },

    #[error("imaginary residue {residue:e} in extracted coefficients of order {b}")]
    ImaginaryResidue { b: usize, residue: f64 },

    #[error("inversion oscillates at x = {x}: successive orders differ by {spread:e}")]
    Oscillation { x: f64, spread: f64 },

    #[error("oracle bracket too wide: {width:e} exceeds {tol:e}")]
    BracketTooWide { width: f64, tol: f64 },

    #[error("extrapolation to s = 0 did not settle: spread {spread:e}")]
    Extrapolation { spread: f64 },
}

impl Error {
    /// True for errors caused by the caller's input rather than the computation.
    pub fn is_invalid_input(&self) -> bool {
        matches!(
            self,
            Error::Unstable { .. } | Error::InvalidParameter(_) | Error::InvalidDistribution(_)
        )
    }
}

pub type Result<T> = std::result::Result<T, Error>;
