//! Straight-Jacket Auction (SJA) prices for `m` i.i.d. uniform items,
//! the induced mechanism, and numerical certificates of its revenue
//! optimality built from discretized dual solutions.
//!
//! Modules:
//!
//! * [`volumes`]: sell-at-least-one volumes `v(p)` (exact and Monte Carlo)
//!   and the defining polynomials of the price parameters.
//! * [`pricing`]: solving the slice conditions `v(p_1..p_r) = r/(m+1)`.
//! * [`geometry`]: SIM-bodies, voxel bodies, deficiencies and the `chi` map.
//! * [`mechanism`]: utility, allocation and revenue of the priced mechanism.
//! * [`dual_cert`]: grid colorings via bipartite matching and their checks.
//! * [`distributions`]: single-item duality, regular and non-regular.

pub mod distributions;
pub mod dual_cert;
pub mod error;
pub mod geometry;
pub mod mc;
pub mod mechanism;
pub mod numeric;
pub mod pricing;
pub mod volumes;

pub use error::{Result, SjaError};
pub use mc::McEstimate;
pub use volumes::{
    appendix_polynomial, mc_sale_probability, slice_volume, AppendixPolynomial, PriceSeq,
    RootRule,
};
