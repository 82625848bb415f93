//! Backward solvers for the capped HJB problem
//!
//! ```text
//! 2 dt e = inf_{a in [1/e, d]} { -a dxx e - log a - 1 },   e(T, .) = e_T,  e(., 0) = e(., 1) = 0
//! ```
//!
//! with an explicit (CFL-restricted) scheme and an implicit scheme whose
//! nonlinear step is solved by policy iteration. The optimal feedback
//! diffusion coefficient is `a* = -1 / dxx e`, clamped to the control set.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{second_difference_unchecked, Field, Grid, ValueSurface};
use crate::tridiag;

/// Lower end of the control set, `1/e`. Smaller diffusion coefficients are never optimal.
pub const CONTROL_FLOOR: f64 = 0.367_879_441_171_442_33;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Scheme {
    Explicit,
    Implicit,
}

impl fmt::Display for Scheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Scheme::Explicit => "explicit",
            Scheme::Implicit => "implicit",
        })
    }
}

impl FromStr for Scheme {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "explicit" => Ok(Scheme::Explicit),
            "implicit" => Ok(Scheme::Implicit),
            other => Err(Error::validation("scheme", format!("unknown scheme `{other}`"))),
        }
    }
}

/// Control cap, scheme choice and policy-iteration stopping rule.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SchemeConfig {
    /// Upper end `d` of the control set `[1/e, d]`.
    pub cap_d: f64,
    pub scheme: Scheme,
    /// Sup-norm tolerance on both the iterate change and the nonlinear residual.
    pub policy_tol: f64,
    pub max_policy_iters: usize,
    /// When set, the terminal data is `e_inf / n` instead of zero.
    pub terminal_regularisation_n: Option<u32>,
}

impl Default for SchemeConfig {
    fn default() -> Self {
        Self {
            cap_d: 1e6,
            scheme: Scheme::Implicit,
            policy_tol: 1e-12,
            max_policy_iters: 50,
            terminal_regularisation_n: None,
        }
    }
}

impl SchemeConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.cap_d >= CONTROL_FLOOR) || !self.cap_d.is_finite() {
            return Err(Error::validation(
                "cap_d",
                format!("must be finite and at least 1/e, got {}", self.cap_d),
            ));
        }
        if !(self.policy_tol > 0.0) {
            return Err(Error::validation("policy_tol", "must be positive"));
        }
        if self.max_policy_iters == 0 {
            return Err(Error::validation("max_policy_iters", "must be at least 1"));
        }
        if self.terminal_regularisation_n == Some(0) {
            return Err(Error::validation("terminal_regularisation_n", "must be at least 1"));
        }
        Ok(())
    }
}

/// Minimiser of `-a q - log a - 1` over `[1/e, cap_d]`, without input checks.
#[inline]
pub(crate) fn optimal_control(q: f64, cap_d: f64) -> f64 {
    // -1/q >= cap_d  <=>  q >= -1/cap_d (for q < 0); q >= 0 also picks the cap
    if q >= -1.0 / cap_d {
        cap_d
    } else {
        (-1.0 / q).clamp(CONTROL_FLOOR, cap_d)
    }
}

#[inline]
fn hamiltonian_unchecked(q: f64, cap_d: f64) -> (f64, f64) {
    let a = optimal_control(q, cap_d);
    (-a * q - a.ln() - 1.0, a)
}

/// `min_{a in [1/e, cap_d]} { -a q - log a - 1 }` and its minimiser.
///
/// Equals `log(-q)` whenever `-1/q` lies inside the control set.
pub fn hamiltonian_capped(q: f64, cap_d: f64) -> Result<(f64, f64)> {
    if !q.is_finite() {
        return Err(Error::validation("q", format!("must be finite, got {q}")));
    }
    if !(cap_d >= CONTROL_FLOOR) || !cap_d.is_finite() {
        return Err(Error::validation("cap_d", format!("must be finite and at least 1/e, got {cap_d}")));
    }
    Ok(hamiltonian_unchecked(q, cap_d))
}

/// Weight `k a / (2 h^2)` of each neighbour in the explicit scheme.
pub fn transition_probability(a: f64, grid: &Grid) -> f64 {
    grid.k() * a / (2.0 * grid.h() * grid.h())
}

/// Fails unless `k d / h^2 <= 1`.
pub fn check_cfl(grid: &Grid, cap_d: f64) -> Result<()> {
    let h2 = grid.h() * grid.h();
    let ratio = grid.k() * cap_d / h2;
    // a few ulps of slack so that k = h^2 / d built from the same numbers passes
    if ratio > 1.0 + 4.0 * f64::EPSILON {
        return Err(Error::Cfl {
            k: grid.k(),
            h: grid.h(),
            cap_d,
            ratio,
            bound: h2 / cap_d,
        });
    }
    Ok(())
}

fn check_row(row: &[f64], grid: &Grid) -> Result<()> {
    if row.len() != grid.nodes() {
        return Err(Error::Shape {
            expected: grid.nodes(),
            actual: row.len(),
        });
    }
    Ok(())
}

/// One backward step of the explicit scheme.
///
/// Each interior node takes `v[n] + (k/2) max_a { a (A v)_n + log a + 1 }`,
/// which is the sup over the random-walk transition weights written in
/// closed form through [`hamiltonian_capped`].
pub fn explicit_step(v_next: &[f64], grid: &Grid, cfg: &SchemeConfig) -> Result<Vec<f64>> {
    cfg.validate()?;
    check_row(v_next, grid)?;
    check_cfl(grid, cfg.cap_d)?;
    let h2 = grid.h() * grid.h();
    let half_k = 0.5 * grid.k();
    let mut out = vec![0.0; v_next.len()];
    for n in 1..grid.intervals() {
        let q = second_difference_unchecked(v_next, n, h2);
        let (value, _) = hamiltonian_unchecked(q, cfg.cap_d);
        out[n] = v_next[n] - half_k * value;
    }
    Ok(out)
}

/// Per-node controls `min{-1/(A u)_n, d}` clamped to `[1/e, d]`.
///
/// Boundary entries carry the smooth-fit value 1.
pub fn policy_update(u: &[f64], grid: &Grid, cfg: &SchemeConfig) -> Result<Vec<f64>> {
    check_row(u, grid)?;
    let mut a = vec![1.0; u.len()];
    fill_policy(u, grid, cfg.cap_d, &mut a);
    Ok(a)
}

fn fill_policy(u: &[f64], grid: &Grid, cap_d: f64, a: &mut [f64]) {
    let h2 = grid.h() * grid.h();
    for n in 1..grid.intervals() {
        a[n] = optimal_control(second_difference_unchecked(u, n, h2), cap_d);
    }
}

/// Scratch buffers reused across the backward sweep.
struct ImplicitWorkspace {
    u: Vec<f64>,
    a: Vec<f64>,
    lower: Vec<f64>,
    diag: Vec<f64>,
    upper: Vec<f64>,
    rhs: Vec<f64>,
    scratch: Vec<f64>,
}

impl ImplicitWorkspace {
    fn new(grid: &Grid) -> Self {
        let interior = grid.intervals() - 1;
        Self {
            u: vec![0.0; grid.nodes()],
            a: vec![1.0; grid.nodes()],
            lower: vec![0.0; interior],
            diag: vec![0.0; interior],
            upper: vec![0.0; interior],
            rhs: vec![0.0; interior],
            scratch: vec![0.0; interior],
        }
    }

    /// Policy iteration for one implicit step; leaves the solution in `self.u`.
    fn step(&mut self, v_next: &[f64], grid: &Grid, cfg: &SchemeConfig, level: usize) -> Result<usize> {
        let n_int = grid.intervals();
        let h2 = grid.h() * grid.h();
        let k = grid.k();
        let coef = k / (2.0 * h2);
        let v_scale = v_next.iter().fold(0.0f64, |m, v| m.max(v.abs()));

        self.u.copy_from_slice(v_next);
        let mut residual = f64::INFINITY;
        for iter in 1..=cfg.max_policy_iters {
            fill_policy(&self.u, grid, cfg.cap_d, &mut self.a);
            for i in 0..n_int - 1 {
                let a = self.a[i + 1];
                let c = coef * a;
                self.lower[i] = -c;
                self.diag[i] = 1.0 + 2.0 * c;
                self.upper[i] = -c;
                self.rhs[i] = v_next[i + 1] + 0.5 * k * (a.ln() + 1.0);
            }
            tridiag::solve_in_place(&self.lower, &self.diag, &self.upper, &mut self.rhs, &mut self.scratch)?;

            let mut change = 0.0f64;
            for i in 0..n_int - 1 {
                change = change.max((self.rhs[i] - self.u[i + 1]).abs());
                self.u[i + 1] = self.rhs[i];
            }

            let mut a_max = 0.0f64;
            let mut u_scale = 0.0f64;
            residual = 0.0;
            for n in 1..n_int {
                let q = second_difference_unchecked(&self.u, n, h2);
                let (value, a) = hamiltonian_unchecked(q, cfg.cap_d);
                residual = residual.max((self.u[n] + 0.5 * k * value - v_next[n]).abs());
                a_max = a_max.max(a);
                u_scale = u_scale.max(self.u[n].abs());
            }
            // Round-off in (A u) is amplified by k a / h^2; below this floor the
            // residual carries no information.
            let floor = 16.0
                * f64::EPSILON
                * (u_scale + v_scale + 4.0 * coef * a_max * u_scale + k * (a_max.ln().abs() + 1.0));
            let tol = cfg.policy_tol.max(floor);
            if change <= tol && residual <= tol {
                return Ok(iter);
            }
        }
        Err(Error::NoConvergence {
            solver: "policy iteration",
            iterations: cfg.max_policy_iters,
            level,
            residual,
        })
    }
}

/// One backward step of the implicit scheme, solved by policy iteration
/// warm-started from `v_next`. Returns the new row and the number of linear solves.
pub fn implicit_step(v_next: &[f64], grid: &Grid, cfg: &SchemeConfig) -> Result<(Vec<f64>, usize)> {
    cfg.validate()?;
    check_row(v_next, grid)?;
    let mut ws = ImplicitWorkspace::new(grid);
    let iterations = ws.step(v_next, grid, cfg, 0)?;
    Ok((ws.u, iterations))
}

/// Value surface plus per-step policy-iteration counts (empty for the explicit scheme).
#[derive(Debug, Clone)]
pub struct HjbSolution {
    pub surface: ValueSurface,
    /// `iterations[m]` is the count for the step producing row `m`.
    pub iterations: Vec<usize>,
}

impl HjbSolution {
    pub fn median_iterations(&self) -> Option<f64> {
        if self.iterations.is_empty() {
            return None;
        }
        let mut v = self.iterations.clone();
        v.sort_unstable();
        let mid = v.len() / 2;
        Some(if v.len() % 2 == 0 {
            (v[mid - 1] + v[mid]) as f64 / 2.0
        } else {
            v[mid] as f64
        })
    }
}

/// Full backward sweep from the terminal row.
pub fn solve_hjb(grid: &Grid, cfg: &SchemeConfig) -> Result<ValueSurface> {
    solve_hjb_with_stats(grid, cfg).map(|s| s.surface)
}

pub fn solve_hjb_with_stats(grid: &Grid, cfg: &SchemeConfig) -> Result<HjbSolution> {
    cfg.validate()?;
    if cfg.scheme == Scheme::Explicit {
        check_cfl(grid, cfg.cap_d)?;
    }
    let mut surface = ValueSurface::zeros(*grid);
    if let Some(n) = cfg.terminal_regularisation_n {
        let scale = 1.0 / (2.0 * n as f64);
        let row = surface.row_mut(grid.steps());
        for (i, v) in row.iter_mut().enumerate().take(grid.intervals()).skip(1) {
            let x = grid.x(i);
            *v = x * (1.0 - x) * scale;
        }
    }

    let mut iterations = Vec::new();
    match cfg.scheme {
        Scheme::Explicit => {
            for m in (0..grid.steps()).rev() {
                let next = explicit_step(surface.row(m + 1), grid, cfg)?;
                surface.row_mut(m).copy_from_slice(&next);
            }
        }
        Scheme::Implicit => {
            iterations = vec![0; grid.steps()];
            let mut ws = ImplicitWorkspace::new(grid);
            let mut next = surface.row(grid.steps()).to_vec();
            for m in (0..grid.steps()).rev() {
                iterations[m] = ws.step(&next, grid, cfg, m)?;
                surface.row_mut(m).copy_from_slice(&ws.u);
                next.copy_from_slice(&ws.u);
            }
        }
    }
    Ok(HjbSolution { surface, iterations })
}

/// Optimal diffusion coefficient `a*` and volatility `sigma* = sqrt(a*)` on the grid.
#[derive(Debug, Clone, PartialEq)]
pub struct ControlField {
    a_star: Field,
    sigma_star: Field,
    cap_d: f64,
}

impl ControlField {
    /// Wraps a diffusion-coefficient field; entries must lie in `[1/e, cap_d]`.
    pub fn from_diffusion(a_star: Field, cap_d: f64) -> Result<Self> {
        if let Some((i, v)) = a_star
            .as_slice()
            .iter()
            .enumerate()
            .find(|(_, v)| !(**v >= CONTROL_FLOOR * (1.0 - 1e-15) && **v <= cap_d))
        {
            let w = a_star.grid().nodes();
            return Err(Error::validation(
                "a_star",
                format!("{v} at (m = {}, n = {}) outside [1/e, {cap_d}]", i / w, i % w),
            ));
        }
        let grid = *a_star.grid();
        let sigma_star = Field::from_fn(grid, |m, n| a_star.get(m, n).sqrt());
        Ok(Self {
            a_star,
            sigma_star,
            cap_d,
        })
    }

    pub fn grid(&self) -> &Grid {
        self.a_star.grid()
    }

    pub fn cap_d(&self) -> f64 {
        self.cap_d
    }

    pub fn a_star(&self) -> &Field {
        &self.a_star
    }

    pub fn sigma_star(&self) -> &Field {
        &self.sigma_star
    }

    /// Bilinear interpolation of `a*` at `(t, x)`.
    pub fn diffusion_at(&self, t: f64, x: f64) -> Result<f64> {
        let g = self.grid();
        if !(0.0..=g.horizon()).contains(&t) || !(0.0..=1.0).contains(&x) {
            return Err(Error::OutOfDomain { t, x });
        }
        let tm = t / g.k();
        let m0 = (tm.floor() as usize).min(g.steps() - 1);
        let wt = (tm - m0 as f64).clamp(0.0, 1.0);
        let xn = x * g.intervals() as f64;
        let n0 = (xn.floor() as usize).min(g.intervals() - 1);
        let wx = (xn - n0 as f64).clamp(0.0, 1.0);
        let f = &self.a_star;
        let lo = (1.0 - wx) * f.get(m0, n0) + wx * f.get(m0, n0 + 1);
        if wt == 0.0 {
            return Ok(lo);
        }
        let hi = (1.0 - wx) * f.get(m0 + 1, n0) + wx * f.get(m0 + 1, n0 + 1);
        Ok((1.0 - wt) * lo + wt * hi)
    }
}

/// `a*[m][n] = clamp(-1 / (A v_m)_n, 1/e, d)` inside, 1 on the lateral boundaries.
pub fn optimal_control_field(surface: &ValueSurface, cfg: &SchemeConfig) -> ControlField {
    let grid = *surface.grid();
    let h2 = grid.h() * grid.h();
    let last = grid.intervals();
    let a_star = Field::from_fn(grid, |m, n| {
        if n == 0 || n == last {
            1.0
        } else {
            optimal_control(second_difference_unchecked(surface.row(m), n, h2), cfg.cap_d)
        }
    });
    let sigma_star = Field::from_fn(grid, |m, n| a_star.get(m, n).sqrt());
    ControlField {
        a_star,
        sigma_star,
        cap_d: cfg.cap_d,
    }
}

/// Row of discrete second derivatives `(A v_m)_n`; boundary entries use the
/// smooth-fit value `-1`.
pub fn second_derivative_row(surface: &ValueSurface, m: usize) -> Vec<f64> {
    let grid = surface.grid();
    let h2 = grid.h() * grid.h();
    let row = surface.row(m);
    (0..grid.nodes())
        .map(|n| {
            if n == 0 || n == grid.intervals() {
                -1.0
            } else {
                second_difference_unchecked(row, n, h2)
            }
        })
        .collect()
}
