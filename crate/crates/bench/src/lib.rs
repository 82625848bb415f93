//! Shared inputs for the solver benchmarks.

use maxent_core::{make_grid, Grid, SchemeConfig};

/// Square grid `N = M = size` on `[0, 1] x [0, 1]`.
pub fn square_grid(size: usize) -> Grid {
    make_grid(size, size, 1.0).expect("benchmark grid sizes are valid")
}

/// Implicit scheme at the reference cap.
pub fn reference_scheme() -> SchemeConfig {
    SchemeConfig::default()
}
