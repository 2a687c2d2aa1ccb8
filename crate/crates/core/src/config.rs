//! Shared tolerances and their defaults.

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, rename_all = "camelCase")]
pub struct Tolerances {
    /// Density threshold of the measure-theoretic classification.
    pub theta_tol: f64,
    /// Density of slit nodes.
    pub null_density: f64,
    /// Relative duality-gap target of the convex solvers.
    pub gap_tol: f64,
    /// Agreement threshold between successive trace averages.
    pub trace_tol: f64,
    /// Jump detection threshold as a fraction of the field's range.
    pub jump_frac: f64,
    /// Relative agreement required between the domain pipelines and the direct solvers.
    pub pipeline_tol: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Self { theta_tol: 0.05, null_density: 1e-9, gap_tol: 1e-3, trace_tol: 1e-2, jump_frac: 0.1, pipeline_tol: 0.03 }
    }
}

impl Tolerances {
    /// Allowed energy decrease before the least-gradient verifier fails a field.
    pub fn verifier_slack(&self) -> f64 {
        10.0 * self.gap_tol
    }
}
