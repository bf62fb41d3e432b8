use serde::{Deserialize, Serialize};

/// Numerical thresholds used across the pipeline. Every output document
/// echoes the effective values.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Tolerances {
    /// Relative singular-value threshold for rank and membership tests.
    pub rank: f64,
    /// Relative gap below which eigenvalues are merged into one group.
    pub eigen_group: f64,
    /// Trailing polynomial coefficients below this fraction of the largest are dropped.
    pub degree_drop: f64,
    /// Relative residual above which a root is rejected as spurious.
    pub spurious: f64,
    /// Relative residual required for an interior-real candidate.
    pub interior: f64,
    /// Log-likelihood gap within which boundary and interior are tied.
    pub tie: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Self {
            rank: 1e-8,
            eigen_group: 1e-9,
            degree_drop: 1e-12,
            spurious: 1e-6,
            interior: 1e-8,
            tie: 1e-10,
        }
    }
}
