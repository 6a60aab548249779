//! Membership queries against the achievable region.

use super::{solve_empirical_rdp, RdpProblem, SolverOptions};
use crate::{Error, Result};

#[derive(Debug, Clone)]
pub struct RegionReport {
    /// minimum rate the budgets demand, bits; infinite when no kernel
    /// satisfies them
    pub required_rate: f64,
    /// offered rate minus required rate
    pub margin: f64,
    pub inside: bool,
    /// whether the budget pair admits any kernel at all
    pub feasible: bool,
}

/// Decides whether a rate paired with distortion and perception budgets
/// lies in the achievable region, up to `tol` in rate.
pub fn check_region_membership(
    prob: &RdpProblem,
    rate: f64,
    delta: f64,
    pi: f64,
    tol: f64,
    opts: &SolverOptions,
) -> Result<RegionReport> {
    if !rate.is_finite() {
        return Err(Error::InvalidParameter(format!(
            "rate must be finite, got {rate}"
        )));
    }
    match solve_empirical_rdp(prob, delta, pi, opts) {
        Ok(sol) => {
            let margin = rate - sol.rate;
            Ok(RegionReport {
                required_rate: sol.rate,
                margin,
                inside: margin >= -tol,
                feasible: true,
            })
        }
        Err(Error::Infeasible(_)) => Ok(RegionReport {
            required_rate: f64::INFINITY,
            margin: f64::NEG_INFINITY,
            inside: false,
            feasible: false,
        }),
        Err(e) => Err(e),
    }
}
