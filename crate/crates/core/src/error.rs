//! Error types shared across the crate.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    /// Input outside the mathematical domain of an operation (log of a
    /// non-positive value, division by a zero-value jet, `t <= 0`, ...).
    #[error("domain error: {0}")]
    Domain(String),

    /// Evaluation failed somewhere inside a finite-difference stencil.
    #[error("stencil error at {point}: {reason}")]
    Stencil { point: String, reason: String },

    /// Finite-difference jets are only supported up to order 3.
    #[error("finite-difference jets support order <= 3, requested {0}")]
    OrderUnsupported(usize),

    /// The immersion is degenerate at the point (|det G| below threshold).
    #[error("degenerate immersion at {point}: |det G| = {det}")]
    Degenerate { point: String, det: String },

    /// The moving frame {f_1, ..., f_n, xi} is numerically singular.
    #[error("frame solve failed at {point}: condition number {cond}")]
    FrameSolve { point: String, cond: String },

    /// The affine support function vanishes; the position vector is not
    /// transversal and Z* = Z/rho cannot be formed.
    #[error("support function vanishes at {point} (rho = {rho})")]
    SupportZero { point: String, rho: String },

    /// Eigenvalue ratio r in {1, -1}, which contradicts quasi-umbilicity
    /// (or forces the multiple eigenvalue to vanish).
    #[error("invalid eigenvalue ratio: {0}")]
    InvalidRatio(String),

    /// The shape operator spectrum does not split into clusters {1, n-1}.
    #[error("surface is not quasi-umbilical: {0}")]
    NotQuasiUmbilical(String),

    /// Family parameters passed to the constructor of the other case.
    #[error("case mismatch: {0}")]
    CaseMismatch(String),

    /// The calibration solve failed (seed is not a proper hypersphere).
    #[error("calibration failed: {0}")]
    Calibration(String),

    /// Quadratic Monge-Ampere seed with det Q != 1.
    #[error("determinant constraint violated: {0}")]
    Determinant(String),

    /// Parameter point outside the chart domain of a seed parametrization.
    #[error("point outside chart domain: {0}")]
    Chart(String),

    /// Least-squares design matrix is rank deficient.
    #[error("rank-deficient system: {0}")]
    Rank(String),

    /// FamilyParams JSON did not validate.
    #[error("invalid parameters: {0}")]
    InvalidParams(String),
}

pub type Result<T> = std::result::Result<T, Error>;
