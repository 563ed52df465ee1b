//! Numeric tolerances used across the crate, gathered in one record so that
//! tests, the CLI and the library agree on them.

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Tolerances {
    /// Relative tolerance for phase-1 product conservation.
    pub product_rel: f64,
    /// Relative agreement required between the closed-form and barrier solvers.
    pub solver_rel: f64,
    /// Absolute agreement (as a fraction of TVL) when TAP is close to zero.
    pub solver_abs_tvl: f64,
    /// Slack on the zero-size CEX straddle checks.
    pub straddle: f64,
    /// Largest cycle profit tolerated, as a fraction of the probe's input scale.
    pub cycle_profit: f64,
    /// Per-trade conservation slack in USD.
    pub conservation_usd: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Self {
            product_rel: 1e-12,
            solver_rel: 1e-6,
            solver_abs_tvl: 1e-8,
            straddle: 1e-9,
            cycle_profit: 1e-6,
            conservation_usd: 1e-6,
        }
    }
}

impl Tolerances {
    /// `true` when two TAP values agree under the relative-or-absolute rule.
    pub fn tap_agrees(&self, lhs: f64, rhs: f64, tvl: f64) -> bool {
        let diff = (lhs - rhs).abs();
        diff <= self.solver_rel * lhs.abs().max(rhs.abs()) || diff <= self.solver_abs_tvl * tvl
    }
}
