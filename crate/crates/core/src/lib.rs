//! Numerical solvers for the maximum-entropy win-probability martingale:
//! the HJB value function, the logarithmic diffusion ladder, the forward
//! density of the optimally controlled process and a Monte Carlo cross-check.

// `!(x > 0.0)` style guards are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod checks;
pub mod density;
pub mod error;
pub mod grid;
pub mod hjb;
pub mod log_diffusion;
pub mod monte_carlo;
pub mod tridiag;

pub use checks::{check_theorem1, cross_solver_gap, decay_rate_check, CheckEntry, CheckReport, CheckStatus};
pub use density::{
    benchmark_entropy, benchmark_volatility, solve_forward_density, survival_probability, DensitySurface,
    MassSummary, VolatilityModel,
};
pub use error::{Error, Result};
pub use grid::{make_grid, stationary_entropy, Envelope, Field, Grid, PField, ValueSurface};
pub use hjb::{
    hamiltonian_capped, optimal_control_field, solve_hjb, solve_hjb_with_stats, ControlField, HjbSolution, Scheme,
    SchemeConfig, CONTROL_FLOOR,
};
pub use log_diffusion::{entropy_from_p, ladder_limit, solve_ladder, solve_log_diffusion, LadderConfig, DEFAULT_LADDER};
pub use monte_carlo::{
    quadratic_variation_check, simulate_paths, ConstantControl, ExitDetection, FeedbackControl, PathStats, QvReport,
    SimConfig,
};
