//! Finite-alphabet workbench for rate-distortion-perception analysis.
//!
//! The crate is organized around five concerns:
//!
//! * [`prob`] — validated probability primitives (distributions, joint
//!   tables, channels, empirical types) and exact information measures,
//!   including total variation between n-fold product laws computed by
//!   type-class enumeration.
//! * [`solver`] — constrained minimization of conditional mutual information
//!   under distortion and output-marginal total-variation budgets, plus a
//!   grid-search oracle and rate-region membership checks.
//! * [`coding`] — operational simulation of randomized codebook schemes with
//!   a likelihood encoder, both by explicit message enumeration and by an
//!   exact codebook-averaged sampler, together with exact small-block law
//!   enumeration for diagnostic comparisons.
//! * [`soft_covering`] — distribution synthesis from finite codebooks and
//!   the rate threshold that governs whether the synthesized law converges.
//! * [`converse`] — exhaustive and sampled searches over small deterministic
//!   codes, checking each against the solver's single-letter bound.
//!
//! Every randomized routine derives its randomness from explicit seeds and
//! documents the derivation, so runs are reproducible bit for bit.

pub mod coding;
pub mod converse;
mod error;
pub mod prob;
pub(crate) mod rng;
pub mod soft_covering;
pub mod solver;

pub use error::{Error, Result};

/// Numeric tolerances shared across the crate.
///
/// These are contract values, not tuning knobs: tests pin behaviour at these
/// exact bounds.
pub mod tolerances {
    /// Probability vectors and table masses must sum to one within this.
    pub const NORMALIZATION: f64 = 1e-12;
    /// Exact information identities are asserted to this absolute precision.
    pub const EXACT: f64 = 1e-12;
    /// A factored scheme must reproduce its source joint within this bound.
    pub const FACTORIZATION: f64 = 1e-9;
    /// Rate-region inequalities are checked with this slack.
    pub const REGION: f64 = 1e-9;
    /// Default decision slack for the limit of n-fold product TV.
    pub const LIMIT_TV: f64 = 1e-9;
    /// Encoder weights below `exp(LOG_WEIGHT_FLOOR)` relative to the largest
    /// weight are treated as exactly zero.
    pub const LOG_WEIGHT_FLOOR: f64 = -700.0;
}
