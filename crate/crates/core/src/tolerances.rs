//! Numerical thresholds shared by every analysis.
//!
//! The defaults are the contract values; callers may override them per run
//! (the CLI exposes `--tol-transport`, `--tol-kernel`, `--max-order`,
//! `--grid`).

use serde::{Deserialize, Serialize};

/// Coefficient agreement for symbolic identities evaluated at sample points.
pub const IDENTITY_TOL: f64 = 1e-9;
/// Quasi-commutativity residual bound.
pub const QUASI_COMMUTATIVITY_TOL: f64 = 1e-8;
/// Minimum |det| for a metric to count as regular.
pub const REGULAR_DET_MIN: f64 = 1e-8;
/// Maximum condition number for a metric to count as regular.
pub const REGULAR_COND_MAX: f64 = 1e8;
/// Minimum |det| for a gauge transformation.
pub const GAUGE_DET_MIN: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", default)]
pub struct Tolerances {
    /// Relative singular-value cutoff for curvature-constraint kernels.
    pub kernel: f64,
    /// Path-independence bound for grid extensions.
    pub transport: f64,
    /// Relative singular-value cutoff for numerical rank.
    pub rank: f64,
    /// Bound for substitution checks of extended solutions.
    pub substitution: f64,
    /// Bound for the covariant derivative of a parallel witness.
    pub witness: f64,
    /// Highest covariant derivative of curvature used in prolongation.
    pub max_order: usize,
    /// Extension grid nodes per axis.
    pub grid: usize,
    /// RK4 steps per grid edge.
    pub steps_per_edge: usize,
    /// Random combinations tried in maximal-rank searches.
    pub rank_draws: usize,
}

impl Tolerances {
    /// RK4 steps per grid spacing for substitution checks. Staircase paths
    /// are long and the check differentiates them, so they get a finer
    /// discretization than the grid edges.
    pub fn substitution_steps(&self) -> usize {
        2 * self.steps_per_edge
    }
}

impl Default for Tolerances {
    fn default() -> Self {
        Tolerances {
            kernel: 1e-8,
            transport: 1e-7,
            rank: 1e-8,
            substitution: 1e-6,
            witness: 1e-7,
            max_order: 3,
            grid: 9,
            steps_per_edge: 64,
            rank_draws: 64,
        }
    }
}
