//! Error type shared by every module of the crate.

use thiserror::Error;

/// Convenience alias used throughout the crate.
pub type Result<T> = std::result::Result<T, SjaError>;

/// Every failure the library can report.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum SjaError {
    /// The requested order exceeds the recursion cap.
    #[error("recursion depth unsupported: order {order} exceeds cap {cap}")]
    RecursionDepthUnsupported { order: usize, cap: usize },

    /// A price lies outside `[0, r]` or is not finite.
    #[error("price {value} at position {index} outside [0, {order}]")]
    PriceOutOfRange { index: usize, value: f64, order: usize },

    /// A scalar parameter failed validation.
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    /// No defining polynomial is tabulated for this `(r, m)` pair.
    #[error("unsupported order: r={r}, m={m}")]
    UnsupportedOrder { r: usize, m: usize },

    /// The bisection bracket failed the sign test.
    #[error("no solution in bracket for order {r}: f(lo)={f_lo}, f(hi)={f_hi}")]
    NoSolutionInBracket { r: usize, f_lo: f64, f_hi: f64 },

    /// A solved quantity missed its requested tolerance.
    #[error("tolerance not met for order {r}: residual {residual} > {tol}")]
    ToleranceNotMet { r: usize, residual: f64, tol: f64 },

    /// A point or body has the wrong dimension.
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    /// A coordinate lies outside the valuation domain.
    #[error("domain violation: {0}")]
    DomainViolation(String),

    /// Exact revenue integration is limited to small item counts.
    #[error("exact method unsupported for m={m} (limit {limit}); use mc")]
    ExactUnsupported { m: usize, limit: usize },

    /// Exhaustive enumeration would exceed its configured bounds.
    #[error("search space too large: {0}")]
    SearchSpaceTooLarge(String),

    /// The certification grid does not align with `k = 1/(m+1)`.
    #[error("grid misaligned: N={n} is not a multiple of m+1={modulus}")]
    GridMisaligned { n: usize, modulus: usize },

    /// A side of the matching graph cannot be saturated.
    #[error("Hall violation on {side}: {size} nodes with only {neighbors} neighbors")]
    HallViolation {
        side: String,
        size: usize,
        neighbors: usize,
        witness: Vec<usize>,
    },

    /// A certificate check failed.
    #[error("certificate condition {condition} violated at cell {cell:?}: {value} > {bound}")]
    CertificateViolation {
        condition: String,
        cell: Vec<usize>,
        value: f64,
        bound: f64,
    },

    /// Myerson's dual needs a regular distribution.
    #[error("non-regular: use nonregular_demo")]
    NonRegular,

    /// A bracketed root search found no sign change.
    #[error("root bracketing failure: {0}")]
    RootBracketing(String),

    /// Serialization or I/O failure while exporting.
    #[error("export failure: {0}")]
    Export(String),
}
