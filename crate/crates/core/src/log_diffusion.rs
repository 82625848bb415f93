//! Forward logarithmic diffusion `2 dt p = dxx log p` with `p = 1` on the
//! lateral boundaries and constant initial data `1/n`, and the integral
//! representation that rebuilds the entropy from `p`.
//!
//! Each time step is fully implicit in `p` and solved by damped Newton
//! iteration; the Jacobian of `A log p` is tridiagonal.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{Field, Grid, PField, ValueSurface};
use crate::tridiag;

/// Iterates are kept strictly above this value by damping.
const POSITIVITY_FLOOR: f64 = 1e-30;
/// Damping gives up after this many halvings.
const MAX_HALVINGS: u32 = 60;

/// Default regularisation ladder.
pub const DEFAULT_LADDER: [u32; 5] = [1, 2, 4, 8, 16];

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LadderConfig {
    /// Initial condition `p(0, x) = 1 / regularisation_n`.
    pub regularisation_n: u32,
    /// Tolerance on the scaled residual `p - p_old - (k/2) A log p`.
    pub newton_tol: f64,
    pub max_newton_iters: usize,
}

impl Default for LadderConfig {
    fn default() -> Self {
        Self {
            regularisation_n: 1,
            newton_tol: 1e-11,
            max_newton_iters: 50,
        }
    }
}

impl LadderConfig {
    pub fn with_n(regularisation_n: u32) -> Self {
        Self {
            regularisation_n,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.regularisation_n == 0 {
            return Err(Error::validation("regularisation_n", "must be at least 1"));
        }
        if !(self.newton_tol > 0.0) {
            return Err(Error::validation("newton_tol", "must be positive"));
        }
        if self.max_newton_iters == 0 {
            return Err(Error::validation("max_newton_iters", "must be at least 1"));
        }
        Ok(())
    }
}

struct NewtonWorkspace {
    log_p: Vec<f64>,
    trial: Vec<f64>,
    lower: Vec<f64>,
    diag: Vec<f64>,
    upper: Vec<f64>,
    delta: Vec<f64>,
    scratch: Vec<f64>,
}

impl NewtonWorkspace {
    fn new(grid: &Grid) -> Self {
        let interior = grid.intervals() - 1;
        Self {
            log_p: vec![0.0; grid.nodes()],
            trial: vec![0.0; grid.nodes()],
            lower: vec![0.0; interior],
            diag: vec![0.0; interior],
            upper: vec![0.0; interior],
            delta: vec![0.0; interior],
            scratch: vec![0.0; interior],
        }
    }
}

/// Scaled residual `r_n = p_n - old_n - c (log p_{n+1} - 2 log p_n + log p_{n-1})`,
/// `c = k / (2 h^2)`, written into `out` (interior only); returns its sup-norm.
fn residual(p: &[f64], old: &[f64], c: f64, log_p: &mut [f64], out: &mut [f64]) -> f64 {
    for (l, v) in log_p.iter_mut().zip(p) {
        *l = v.ln();
    }
    let mut sup = 0.0f64;
    for i in 0..out.len() {
        let n = i + 1;
        let r = p[n] - old[n] - c * (log_p[n + 1] - 2.0 * log_p[n] + log_p[n - 1]);
        out[i] = r;
        sup = sup.max(r.abs());
    }
    sup
}

/// Advances `p` (holding the previous row on entry) by one implicit step.
fn newton_step(p: &mut [f64], grid: &Grid, cfg: &LadderConfig, ws: &mut NewtonWorkspace, level: usize) -> Result<()> {
    let old = p.to_vec();
    let h2 = grid.h() * grid.h();
    let c = grid.k() / (2.0 * h2);
    let n_int = grid.intervals();
    p[0] = 1.0;
    p[n_int] = 1.0;

    let mut res = residual(p, &old, c, &mut ws.log_p, &mut ws.delta);
    for _ in 0..cfg.max_newton_iters {
        let log_scale = ws.log_p.iter().fold(0.0f64, |m, l| m.max(l.abs()));
        let floor = 16.0 * f64::EPSILON * (1.0 + 4.0 * c * log_scale);
        if res <= cfg.newton_tol.max(floor) {
            return Ok(());
        }
        for i in 0..n_int - 1 {
            let n = i + 1;
            jacobian_row(p, n, c, &mut ws.lower[i], &mut ws.diag[i], &mut ws.upper[i]);
            ws.delta[i] = -ws.delta[i];
        }
        tridiag::solve_in_place(&ws.lower, &ws.diag, &ws.upper, &mut ws.delta, &mut ws.scratch)?;

        let mut lambda = 1.0;
        let mut halvings = 0;
        loop {
            ws.trial.copy_from_slice(p);
            let mut positive = true;
            for i in 0..n_int - 1 {
                let v = p[i + 1] + lambda * ws.delta[i];
                positive &= v > POSITIVITY_FLOOR;
                ws.trial[i + 1] = v;
            }
            if positive {
                break;
            }
            halvings += 1;
            if halvings > MAX_HALVINGS {
                return Err(Error::DampingUnderflow { level });
            }
            lambda *= 0.5;
        }
        p.copy_from_slice(&ws.trial);
        res = residual(p, &old, c, &mut ws.log_p, &mut ws.delta);
    }
    let log_scale = ws.log_p.iter().fold(0.0f64, |m, l| m.max(l.abs()));
    let floor = 16.0 * f64::EPSILON * (1.0 + 4.0 * c * log_scale);
    if res <= cfg.newton_tol.max(floor) {
        return Ok(());
    }
    Err(Error::NoConvergence {
        solver: "Newton",
        iterations: cfg.max_newton_iters,
        level,
        residual: res,
    })
}

/// Row `n` of the Jacobian of the scaled residual.
#[inline]
fn jacobian_row(p: &[f64], n: usize, c: f64, lower: &mut f64, diag: &mut f64, upper: &mut f64) {
    *diag = 1.0 + 2.0 * c / p[n];
    // boundary values are fixed, so their columns drop out
    *lower = if n > 1 { -c / p[n - 1] } else { 0.0 };
    *upper = if n + 1 < p.len() - 1 { -c / p[n + 1] } else { 0.0 };
}

/// Solves the regularised forward problem on `grid`.
///
/// Row 0 is the constant `1/n` (boundaries included); rows `m >= 1` have
/// boundary value 1 and satisfy `2 (p_m - p_{m-1}) / k = A log p_m` inside.
pub fn solve_log_diffusion(grid: &Grid, cfg: &LadderConfig) -> Result<PField> {
    cfg.validate()?;
    let init = 1.0 / cfg.regularisation_n as f64;
    let mut field = Field::filled(*grid, init);
    let mut ws = NewtonWorkspace::new(grid);
    let mut p = vec![init; grid.nodes()];
    for m in 1..grid.levels() {
        newton_step(&mut p, grid, cfg, &mut ws, m)?;
        field.row_mut(m).copy_from_slice(&p);
    }
    Ok(PField::from_parts(field, cfg.regularisation_n))
}

/// Rebuilds the entropy from `p` through
///
/// ```text
/// e(t, x) = -int_0^x int_0^y p(T - t, z) dz dy + x int_0^1 int_0^y p(T - t, z) dz dy
/// ```
///
/// using nested cumulative trapezoidal sums; the lateral boundaries are zero.
pub fn entropy_from_p(p: &PField) -> ValueSurface {
    let grid = *p.grid();
    let h = grid.h();
    let big_m = grid.steps();
    let nodes = grid.nodes();
    let mut surface = ValueSurface::zeros(grid);
    let mut inner = vec![0.0; nodes];
    let mut outer = vec![0.0; nodes];
    for m in 0..grid.levels() {
        let row = p.row(big_m - m);
        for n in 1..nodes {
            inner[n] = inner[n - 1] + 0.5 * h * (row[n - 1] + row[n]);
            outer[n] = outer[n - 1] + 0.5 * h * (inner[n - 1] + inner[n]);
        }
        let total = outer[nodes - 1];
        let out = surface.row_mut(m);
        for n in 1..nodes - 1 {
            out[n] = grid.x(n) * total - outer[n];
        }
    }
    surface
}

/// Solves every member of the ladder (concurrently) on the same grid.
pub fn solve_ladder(grid: &Grid, n_values: &[u32], template: &LadderConfig) -> Result<Vec<PField>> {
    n_values
        .par_iter()
        .map(|&n| {
            solve_log_diffusion(
                grid,
                &LadderConfig {
                    regularisation_n: n,
                    ..*template
                },
            )
        })
        .collect()
}

/// Largest excess `upper - lower` over all nodes, with its location.
pub fn max_excess(upper: &Field, lower: &Field) -> (f64, usize, usize) {
    let w = upper.grid().nodes();
    upper
        .as_slice()
        .iter()
        .zip(lower.as_slice())
        .enumerate()
        .map(|(i, (u, l))| (u - l, i / w, i % w))
        .fold((f64::NEG_INFINITY, 0, 0), |best, cur| if cur.0 > best.0 { cur } else { best })
}

/// Solves the ladder for increasing `n_values`, checks that `p^n` is nodewise
/// non-increasing in `n` (within `tol`), and returns the last member.
pub fn ladder_limit(grid: &Grid, n_values: &[u32], tol: f64) -> Result<PField> {
    if n_values.len() < 2 {
        return Err(Error::validation("n_values", "need at least two ladder members"));
    }
    if n_values.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::validation("n_values", "must be strictly increasing"));
    }
    let members = solve_ladder(grid, n_values, &LadderConfig::default())?;
    for (pair, ns) in members.windows(2).zip(n_values.windows(2)) {
        let (excess, m, node) = max_excess(pair[1].field(), pair[0].field());
        if excess > tol {
            return Err(Error::LadderMonotonicity {
                lower: ns[0],
                upper: ns[1],
                m,
                node,
                excess,
            });
        }
    }
    Ok(members.into_iter().next_back().expect("at least two members"))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::make_grid;

    #[test]
    fn initial_row_and_bounds() {
        let g = make_grid(40, 40, 1.0).unwrap();
        let p = solve_log_diffusion(&g, &LadderConfig::with_n(4)).unwrap();
        assert!(p.row(0).iter().all(|&v| v == 0.25));
        for m in 1..=40 {
            let row = p.row(m);
            assert_eq!(row[0], 1.0);
            assert_eq!(row[40], 1.0);
            assert!(row.iter().all(|&v| v > 0.0 && v <= 1.0 + 1e-10), "row {m}");
        }
        assert_eq!(p.regularisation_n(), 4);
    }

    #[test]
    fn stationary_case_is_fixed() {
        let g = make_grid(30, 20, 1.0).unwrap();
        let p = solve_log_diffusion(&g, &LadderConfig::with_n(1)).unwrap();
        assert!(p.field().as_slice().iter().all(|&v| v == 1.0));
    }

    #[test]
    fn entropy_from_constant_fields() {
        let g = make_grid(50, 5, 1.0).unwrap();
        let e = entropy_from_p(&PField::ones(g));
        for m in 0..=5 {
            for n in 0..=50 {
                let x = g.x(n);
                assert!((e.get(m, n) - x * (1.0 - x) / 2.0).abs() < 1e-15);
            }
        }
        let e = entropy_from_p(&PField::constant(g, 0.0));
        assert!(e.field().as_slice().iter().all(|&v| v == 0.0));

        let wild = PField::from_parts(Field::from_fn(g, |m, n| 1.0 + ((m * 7 + n * 13) % 5) as f64), 1);
        let e = entropy_from_p(&wild);
        for m in 0..=5 {
            assert_eq!(e.get(m, 0), 0.0);
            assert_eq!(e.get(m, 50), 0.0);
        }
    }

    #[test]
    fn ladder_rejects_bad_sequences() {
        let g = make_grid(10, 10, 1.0).unwrap();
        assert!(ladder_limit(&g, &[1], 1e-9).is_err());
        assert!(ladder_limit(&g, &[2, 2], 1e-9).is_err());
        assert!(ladder_limit(&g, &[4, 2], 1e-9).is_err());
        let p = ladder_limit(&g, &[1, 2], 1e-9).unwrap();
        assert_eq!(p.regularisation_n(), 2);
    }

    #[test]
    fn non_convergence_is_reported() {
        let g = make_grid(20, 2, 1.0).unwrap();
        let cfg = LadderConfig {
            regularisation_n: 16,
            max_newton_iters: 1,
            ..LadderConfig::default()
        };
        assert!(matches!(solve_log_diffusion(&g, &cfg), Err(Error::NoConvergence { .. })));
        assert!(LadderConfig::with_n(0).validate().is_err());
    }
}
