//! Structural checks on solved value surfaces, collected into a report.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{second_difference_unchecked, stationary_entropy, ValueSurface};
use crate::hjb::{hamiltonian_capped, SchemeConfig};

pub const BOUNDS_TOL: f64 = 1e-10;
pub const MONOTONICITY_TOL: f64 = 1e-10;
pub const SYMMETRY_TOL: f64 = 1e-9;
pub const CONCAVITY_TOL: f64 = 1e-8;
/// Slack on the ordering of decay distances, which reach round-off for large T.
pub const DECAY_ORDER_TOL: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CheckStatus {
    Pass,
    Fail,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckEntry {
    pub name: String,
    pub status: CheckStatus,
    /// Largest violation found, zero when the property holds exactly.
    pub worst_violation: f64,
    pub tolerance: f64,
    /// `(m, n)` of the worst violation.
    pub location: Option<(usize, usize)>,
    /// Check-specific measured quantity, e.g. a sup-norm distance.
    pub measured: Option<f64>,
}

impl CheckEntry {
    pub fn new(name: impl Into<String>, worst: f64, tolerance: f64, location: Option<(usize, usize)>) -> Self {
        let worst_violation = if worst.is_nan() { f64::INFINITY } else { worst.max(0.0) };
        Self {
            name: name.into(),
            status: if worst_violation > tolerance {
                CheckStatus::Fail
            } else {
                CheckStatus::Pass
            },
            worst_violation,
            tolerance,
            location,
            measured: None,
        }
    }

    pub fn passed(&self) -> bool {
        self.status == CheckStatus::Pass
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct CheckReport {
    pub checks: Vec<CheckEntry>,
    pub passed: usize,
    pub failed: usize,
}

impl CheckReport {
    pub fn push(&mut self, entry: CheckEntry) {
        if entry.passed() {
            self.passed += 1;
        } else {
            self.failed += 1;
        }
        self.checks.push(entry);
    }

    pub fn extend(&mut self, other: CheckReport) {
        for entry in other.checks {
            self.push(entry);
        }
    }

    pub fn all_passed(&self) -> bool {
        self.failed == 0
    }

    pub fn get(&self, name: &str) -> Option<&CheckEntry> {
        self.checks.iter().find(|c| c.name == name)
    }
}

impl fmt::Display for CheckReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "{:<32} {:<6} {:>12} {:>10} {:>12}", "check", "status", "worst", "tol", "at (m,n)")?;
        for c in &self.checks {
            let at = c.location.map(|(m, n)| format!("({m},{n})")).unwrap_or_else(|| "-".into());
            let status = if c.passed() { "pass" } else { "FAIL" };
            writeln!(
                f,
                "{:<32} {:<6} {:>12.3e} {:>10.1e} {:>12}",
                c.name, status, c.worst_violation, c.tolerance, at
            )?;
        }
        write!(f, "{} passed, {} failed", self.passed, self.failed)
    }
}

/// Running maximum with its location.
struct Worst {
    value: f64,
    at: Option<(usize, usize)>,
}

impl Worst {
    fn new() -> Self {
        Self {
            value: f64::NEG_INFINITY,
            at: None,
        }
    }

    fn offer(&mut self, value: f64, m: usize, n: usize) {
        if value > self.value || (value.is_nan() && !self.value.is_nan()) {
            self.value = value;
            self.at = Some((m, n));
        }
    }

    fn entry(self, name: &str, tol: f64) -> CheckEntry {
        let value = if self.at.is_none() { 0.0 } else { self.value };
        CheckEntry::new(name, value, tol, self.at)
    }
}

/// Bounds, backward time-monotonicity, symmetry and concavity of a value surface.
pub fn check_theorem1(surface: &ValueSurface) -> CheckReport {
    let grid = surface.grid();
    let big_n = grid.intervals();
    let h2 = grid.h() * grid.h();
    let e_inf: Vec<f64> = (0..grid.nodes()).map(|n| stationary_entropy(grid.x(n)).unwrap_or(0.0)).collect();

    let mut bounds = Worst::new();
    let mut monotone = Worst::new();
    let mut symmetry = Worst::new();
    let mut concavity = Worst::new();
    for m in 0..grid.levels() {
        let row = surface.row(m);
        for n in 0..=big_n {
            let v = row[n];
            bounds.offer((-v).max(v - e_inf[n]), m, n);
            symmetry.offer((v - row[big_n - n]).abs(), m, n);
            if m > 0 {
                monotone.offer(v - surface.get(m - 1, n), m, n);
            }
            if n > 0 && n < big_n {
                concavity.offer(second_difference_unchecked(row, n, h2), m, n);
            }
        }
    }

    let mut report = CheckReport::default();
    report.push(bounds.entry("bounds", BOUNDS_TOL));
    report.push(monotone.entry("time_monotonicity", MONOTONICITY_TOL));
    report.push(symmetry.entry("symmetry", SYMMETRY_TOL));
    report.push(concavity.entry("concavity", CONCAVITY_TOL));
    report
}

/// Sup-norm distance between the HJB surface and the surface rebuilt from `p`.
pub fn cross_solver_gap(hjb: &ValueSurface, represented: &ValueSurface) -> Result<f64> {
    hjb.sup_distance(represented)
}

/// Rate `(alpha - 1) / (pi alpha^2)` of the decay envelope.
pub fn decay_rate_constant(alpha: u32) -> Result<f64> {
    if alpha < 2 || alpha % 2 != 0 {
        return Err(Error::validation("alpha", format!("must be an even integer >= 2, got {alpha}")));
    }
    let a = f64::from(alpha);
    Ok((a - 1.0) / (std::f64::consts::PI * a * a))
}

/// Envelope `x (1 - x) exp(-rate (T - t))` on `|e^T(t, x) - e_inf(x)|`.
pub fn decay_bound(x: f64, time_to_go: f64, alpha: u32) -> Result<f64> {
    Ok(x * (1.0 - x) * (-decay_rate_constant(alpha)? * time_to_go).exp())
}

/// Solves one surface per horizon in `horizons` via `solver` and checks the
/// decay envelope at `t = 0` nodewise, with slack `10 (k + h^2)`. A final
/// entry checks that the sup-norm distance to `e_inf` does not grow with `T`.
pub fn decay_rate_check<F>(solver: F, horizons: &[f64], alpha: u32) -> Result<CheckReport>
where
    F: Fn(f64) -> Result<ValueSurface>,
{
    let rate = decay_rate_constant(alpha)?;
    let mut report = CheckReport::default();
    let mut distances = Vec::with_capacity(horizons.len());
    for &horizon in horizons {
        let surface = solver(horizon)?;
        let grid = surface.grid();
        let slack = 10.0 * (grid.k() + grid.h() * grid.h());
        let mut worst = Worst::new();
        let mut distance = 0.0f64;
        for n in 0..grid.nodes() {
            let x = grid.x(n);
            let gap = (surface.get(0, n) - stationary_entropy(x)?).abs();
            distance = distance.max(gap);
            worst.offer(gap - x * (1.0 - x) * (-rate * horizon).exp(), 0, n);
        }
        let mut entry = worst.entry(&format!("decay_T={horizon}"), slack);
        entry.measured = Some(distance);
        report.push(entry);
        distances.push(distance);
    }
    let mut order = Worst::new();
    for (i, w) in distances.windows(2).enumerate() {
        order.offer(w[1] - w[0], i + 1, 0);
    }
    report.push(order.entry("decay_distance_monotone", DECAY_ORDER_TOL));
    Ok(report)
}

/// Largest residual `|u + (k/2) H(A u) - v_next|` of the implicit HJB step
/// over consecutive rows `(u, v_next) = (row m, row m + 1)`, with its location.
pub fn hamiltonian_residual(surface: &ValueSurface, cfg: &SchemeConfig) -> Result<(f64, usize, usize)> {
    let grid = surface.grid();
    let h2 = grid.h() * grid.h();
    let half_k = 0.5 * grid.k();
    let mut worst = Worst::new();
    for m in 0..grid.steps() {
        let u = surface.row(m);
        let v_next = surface.row(m + 1);
        for n in 1..grid.intervals() {
            let (ham, _) = hamiltonian_capped(second_difference_unchecked(u, n, h2), cfg.cap_d)?;
            worst.offer((u[n] + half_k * ham - v_next[n]).abs(), m, n);
        }
    }
    let (m, n) = worst.at.unwrap_or((0, 0));
    Ok((worst.value.max(0.0), m, n))
}

/// Finite-difference residual `2 (e(t + k, x) - e(t, x)) / k - log(-e_xx(t, x))`
/// of the unconstrained entropy equation, with a centred second difference of
/// width `h`.
pub fn log_pde_residual<F: Fn(f64, f64) -> Result<f64>>(e: F, t: f64, x: f64, k: f64, h: f64) -> Result<f64> {
    let time = 2.0 * (e(t + k, x)? - e(t, x)?) / k;
    let exx = (e(t, x - h)? - 2.0 * e(t, x)? + e(t, x + h)?) / (h * h);
    if exx >= 0.0 {
        return Err(Error::validation("e", format!("second difference {exx} is not negative at ({t}, {x})")));
    }
    Ok(time - (-exx).ln())
}
