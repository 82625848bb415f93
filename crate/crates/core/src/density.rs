//! Kolmogorov forward equation for the match's win-probability density,
//!
//! ```text
//! dt q = 1/2 dxx (sigma^2(t, x) q),   q(t, 0) = q(t, 1) = 0,
//! ```
//!
//! with mass leaving through the absorbing boundaries tracked separately.
//! Also hosts the closed-form full-length benchmark (volatility and entropy).

use std::f64::consts::PI;
use std::io::{self, Write};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{Field, Grid};
use crate::hjb::ControlField;
use crate::tridiag;

/// Most negative density value accepted as round-off.
pub const NEGATIVITY_TOL: f64 = 1e-12;

/// `sigma*(t, x) = sin(pi x) / (pi sqrt(T - t))`, the full-length benchmark volatility.
pub fn benchmark_volatility(t: f64, x: f64, horizon: f64) -> Result<f64> {
    if !(0.0..=1.0).contains(&x) {
        return Err(Error::validation("x", format!("{x} is outside [0, 1]")));
    }
    if !(t >= 0.0 && t < horizon) {
        return Err(Error::validation("t", format!("need 0 <= t < T = {horizon}, got {t}")));
    }
    Ok((PI * x).sin() / (PI * (horizon - t).sqrt()))
}

/// Entropy of the full-length benchmark,
/// `(T - t) (log(sin(pi x) / (pi sqrt(T - t))) + 1/2)`, zero at `t = T`.
pub fn benchmark_entropy(t: f64, x: f64, horizon: f64) -> Result<f64> {
    if !(t >= 0.0 && t <= horizon) {
        return Err(Error::validation("t", format!("need 0 <= t <= T = {horizon}, got {t}")));
    }
    if t == horizon {
        if !(x > 0.0 && x < 1.0) {
            return Err(Error::validation("x", format!("{x} is outside (0, 1)")));
        }
        return Ok(0.0);
    }
    if !(x > 0.0 && x < 1.0) {
        return Err(Error::validation("x", format!("entropy is unbounded at x = {x} for t < T")));
    }
    let tau = horizon - t;
    let sigma = (PI * x).sin() / (PI * tau.sqrt());
    Ok(tau * (sigma.ln() + 0.5))
}

/// Feedback volatility driving the forward equation.
#[derive(Debug, Clone, Copy)]
pub enum VolatilityModel<'a> {
    /// Optimal control of the match that may end early, `sigma^2 = a*`.
    EarlyTermination(&'a ControlField),
    /// Closed-form benchmark of the match that always runs to `horizon`.
    FullLength { horizon: f64 },
}

impl VolatilityModel<'_> {
    pub fn horizon(&self) -> f64 {
        match self {
            VolatilityModel::EarlyTermination(c) => c.grid().horizon(),
            VolatilityModel::FullLength { horizon } => *horizon,
        }
    }

    /// `sigma^2(t, x)`.
    pub fn diffusion(&self, t: f64, x: f64) -> Result<f64> {
        match self {
            VolatilityModel::EarlyTermination(c) => c.diffusion_at(t, x),
            VolatilityModel::FullLength { horizon } => {
                let s = benchmark_volatility(t, x, *horizon)?;
                Ok(s * s)
            }
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            VolatilityModel::EarlyTermination(_) => "early_termination",
            VolatilityModel::FullLength { .. } => "full_length",
        }
    }
}

/// Sub-probability density on the grid plus the cumulative absorbed masses.
#[derive(Debug, Clone, PartialEq)]
pub struct DensitySurface {
    values: Field,
    absorbed_left: Vec<f64>,
    absorbed_right: Vec<f64>,
}

/// Plot-ready mass ledger, one entry per time level.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MassSummary {
    pub times: Vec<f64>,
    pub interior_mass: Vec<f64>,
    pub absorbed_left: Vec<f64>,
    pub absorbed_right: Vec<f64>,
}

impl DensitySurface {
    pub fn grid(&self) -> &Grid {
        self.values.grid()
    }

    pub fn values(&self) -> &Field {
        &self.values
    }

    pub fn absorbed_left(&self) -> &[f64] {
        &self.absorbed_left
    }

    pub fn absorbed_right(&self) -> &[f64] {
        &self.absorbed_right
    }

    /// Trapezoidal integral of row `m` over `[0, 1]`.
    pub fn interior_mass(&self, m: usize) -> f64 {
        trapezoid(self.values.row(m), self.grid().h())
    }

    /// Interior plus absorbed mass at level `m`; 1 up to round-off.
    pub fn total_mass(&self, m: usize) -> f64 {
        self.interior_mass(m) + self.absorbed_left[m] + self.absorbed_right[m]
    }

    /// Probability that the match is over by level `m`.
    pub fn absorbed(&self, m: usize) -> f64 {
        self.absorbed_left[m] + self.absorbed_right[m]
    }

    /// Distribution function of `X_{t_m}` at the nodes, atoms included:
    /// `F(x_n) = absorbed_left + int_0^{x_n} q`, with `F(1)` adding the right atom.
    pub fn cdf(&self, m: usize) -> Vec<f64> {
        let row = self.values.row(m);
        let h = self.grid().h();
        let mut out = Vec::with_capacity(row.len());
        let mut acc = self.absorbed_left[m];
        out.push(acc);
        for n in 1..row.len() {
            acc += 0.5 * h * (row[n - 1] + row[n]);
            out.push(acc);
        }
        if let Some(last) = out.last_mut() {
            *last += self.absorbed_right[m];
        }
        out
    }

    pub fn summary(&self) -> MassSummary {
        let g = self.grid();
        MassSummary {
            times: (0..g.levels()).map(|m| g.t(m)).collect(),
            interior_mass: (0..g.levels()).map(|m| self.interior_mass(m)).collect(),
            absorbed_left: self.absorbed_left.clone(),
            absorbed_right: self.absorbed_right.clone(),
        }
    }

    pub fn write_csv<W: Write>(&self, w: W, stride: usize) -> io::Result<()> {
        self.values.write_csv(w, "q", stride)
    }
}

pub(crate) fn trapezoid(row: &[f64], h: f64) -> f64 {
    let n = row.len();
    h * (row[1..n - 1].iter().sum::<f64>() + 0.5 * (row[0] + row[n - 1]))
}

/// Integral of the density at time `t`, which must be a grid level.
pub fn survival_probability(density: &DensitySurface, t: f64) -> Result<f64> {
    let m = density.grid().level_of(t)?;
    Ok(density.interior_mass(m))
}

/// Propagates a unit mass started at the node nearest `x0`.
///
/// Each step `t_m -> t_{m+1}` is implicit in `q` with `sigma^2` frozen at
/// `t_m`, the discrete adjoint of the backward HJB step. The boundary flux of
/// every step is added to the absorbed masses, so interior plus absorbed
/// mass stays 1 to round-off. For the full-length model the coefficient is
/// singular at `T`; the last level instead splits the remaining mass into the
/// two terminal atoms by the martingale rule (mass at `x` goes to 1 with
/// probability `x`).
pub fn solve_forward_density(model: VolatilityModel<'_>, grid: &Grid, x0: f64) -> Result<DensitySurface> {
    if !(x0 > 0.0 && x0 < 1.0) {
        return Err(Error::validation("x0", format!("{x0} must lie strictly inside (0, 1)")));
    }
    let n_int = grid.intervals();
    let start = (x0 * n_int as f64).round() as usize;
    if start == 0 || start == n_int {
        return Err(Error::validation("x0", format!("{x0} rounds to a boundary node at N = {n_int}")));
    }
    match model {
        VolatilityModel::EarlyTermination(c) => c.grid().ensure_same(grid)?,
        VolatilityModel::FullLength { horizon } => {
            if horizon != grid.horizon() {
                return Err(Error::GridMismatch(format!(
                    "model horizon {horizon} vs grid horizon {}",
                    grid.horizon()
                )));
            }
        }
    }

    let h = grid.h();
    let c = grid.k() / (2.0 * h * h);
    let flux = grid.k() / (2.0 * h);
    let mut values = Field::zeros(*grid);
    values.row_mut(0)[start] = 1.0 / h;
    let mut left = vec![0.0; grid.levels()];
    let mut right = vec![0.0; grid.levels()];

    let interior = n_int - 1;
    let mut sig2 = vec![0.0; grid.nodes()];
    let mut lower = vec![0.0; interior];
    let mut diag = vec![0.0; interior];
    let mut upper = vec![0.0; interior];
    let mut rhs = vec![0.0; interior];
    let mut scratch = vec![0.0; interior];

    let full_length = matches!(model, VolatilityModel::FullLength { .. });
    for m in 0..grid.steps() {
        if full_length && m + 1 == grid.steps() {
            let prev = values.row(m);
            let to_right: f64 = h * (1..n_int).map(|n| grid.x(n) * prev[n]).sum::<f64>();
            let to_left: f64 = h * (1..n_int).map(|n| (1.0 - grid.x(n)) * prev[n]).sum::<f64>();
            left[m + 1] = left[m] + to_left;
            right[m + 1] = right[m] + to_right;
            break;
        }

        let t = grid.t(m);
        for (n, s) in sig2.iter_mut().enumerate().take(n_int).skip(1) {
            *s = match model {
                VolatilityModel::EarlyTermination(cf) => cf.a_star().get(m, n),
                VolatilityModel::FullLength { .. } => model.diffusion(t, grid.x(n))?,
            };
        }
        for i in 0..interior {
            let n = i + 1;
            lower[i] = if n > 1 { -c * sig2[n - 1] } else { 0.0 };
            diag[i] = 1.0 + 2.0 * c * sig2[n];
            upper[i] = if n + 1 < n_int { -c * sig2[n + 1] } else { 0.0 };
            rhs[i] = values.get(m, n);
        }
        tridiag::solve_in_place(&lower, &diag, &upper, &mut rhs, &mut scratch)?;

        let next = values.row_mut(m + 1);
        next[1..n_int].copy_from_slice(&rhs);
        if let Some((i, &v)) = rhs.iter().enumerate().find(|(_, v)| **v < -NEGATIVITY_TOL) {
            return Err(Error::NegativeDensity { m: m + 1, n: i + 1, value: v });
        }
        left[m + 1] = left[m] + flux * sig2[1] * rhs[0];
        right[m + 1] = right[m] + flux * sig2[n_int - 1] * rhs[interior - 1];
    }

    Ok(DensitySurface {
        values,
        absorbed_left: left,
        absorbed_right: right,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::make_grid;
    use crate::hjb::{optimal_control_field, solve_hjb, SchemeConfig};

    #[test]
    fn benchmark_volatility_values() {
        assert!((benchmark_volatility(0.0, 0.5, 1.0).unwrap() - 1.0 / PI).abs() < 1e-15);
        assert!((benchmark_volatility(0.0, 0.5, 1.0).unwrap() - std::f64::consts::FRAC_1_PI).abs() < 1e-5);
        assert_eq!(benchmark_volatility(0.3, 0.0, 1.0).unwrap(), 0.0);
        assert!((benchmark_volatility(0.75, 0.5, 1.0).unwrap() - std::f64::consts::FRAC_2_PI).abs() < 1e-5);
        assert!(benchmark_volatility(1.0, 0.5, 1.0).is_err());
        assert!(benchmark_volatility(0.2, 1.5, 1.0).is_err());
    }

    #[test]
    fn benchmark_entropy_values() {
        assert_eq!(benchmark_entropy(1.0, 0.3, 1.0).unwrap(), 0.0);
        let v = benchmark_entropy(0.5, 0.5, 1.0).unwrap();
        let expected = 0.5 * ((1.0 / (PI * 0.5f64.sqrt())).ln() + 0.5);
        assert!((v - expected).abs() < 1e-15);
        assert!((v + 0.14908).abs() < 1e-5);
        assert!(benchmark_entropy(0.5, 0.0, 1.0).is_err());
        assert!(benchmark_entropy(0.5, 1.0, 1.0).is_err());
    }

    #[test]
    fn benchmark_entropy_second_derivative_matches_volatility() {
        // dxx e* = -1 / sigma*^2
        let (t, x, horizon, h) = (0.3, 0.37, 1.0, 1e-4);
        let e = |x| benchmark_entropy(t, x, horizon).unwrap();
        let dxx = (e(x + h) - 2.0 * e(x) + e(x - h)) / (h * h);
        let s = benchmark_volatility(t, x, horizon).unwrap();
        assert!((dxx + 1.0 / (s * s)).abs() < 1e-5, "{dxx}");
    }

    #[test]
    fn rejects_bad_start() {
        let g = make_grid(10, 10, 1.0).unwrap();
        let model = VolatilityModel::FullLength { horizon: 1.0 };
        assert!(solve_forward_density(model, &g, 0.0).is_err());
        assert!(solve_forward_density(model, &g, 1.0).is_err());
        assert!(solve_forward_density(model, &g, 0.01).is_err());
        let other = VolatilityModel::FullLength { horizon: 2.0 };
        assert!(matches!(solve_forward_density(other, &g, 0.5), Err(Error::GridMismatch(_))));
    }

    #[test]
    fn mass_ledger_and_symmetry() {
        let g = make_grid(40, 40, 1.0).unwrap();
        let cfg = SchemeConfig::default();
        let cf = optimal_control_field(&solve_hjb(&g, &cfg).unwrap(), &cfg);
        let d = solve_forward_density(VolatilityModel::EarlyTermination(&cf), &g, 0.5).unwrap();
        assert!((survival_probability(&d, 0.0).unwrap() - 1.0).abs() < 1e-15);
        for m in 0..=40 {
            assert!((d.total_mass(m) - 1.0).abs() < 1e-12, "m = {m}");
            assert!((d.absorbed_left()[m] - d.absorbed_right()[m]).abs() < 1e-12);
            for n in 0..=40 {
                assert!(d.values().get(m, n) >= -NEGATIVITY_TOL);
                assert!((d.values().get(m, n) - d.values().get(m, 40 - n)).abs() < 1e-9);
            }
            let cdf = d.cdf(m);
            assert!((cdf[40] - 1.0).abs() < 1e-12);
            assert!(cdf.windows(2).all(|w| w[1] >= w[0] - 1e-15));
        }
        assert!(survival_probability(&d, 0.0125).is_err());
    }

    #[test]
    fn full_length_terminal_atoms() {
        let g = make_grid(100, 200, 1.0).unwrap();
        let d = solve_forward_density(VolatilityModel::FullLength { horizon: 1.0 }, &g, 0.5).unwrap();
        assert!(d.interior_mass(200).abs() < 1e-15);
        assert!((d.absorbed_left()[200] - 0.5).abs() < 1e-9);
        assert!((d.absorbed_right()[200] - 0.5).abs() < 1e-9);
        for m in 0..=200 {
            assert!((d.total_mass(m) - 1.0).abs() < 1e-12);
        }
    }
}
